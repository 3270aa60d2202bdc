use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Guards the denominator when both prediction and label are empty.
pub const BCD_EPS: f64 = 1e-7;

/// `sum|x - y| / (sum x + sum y + eps)` over every element of the batch.
pub fn bcd_loss<T: Real>(g: &mut Graph<T>, pred: Var, label: Var) -> Result<Var> {
    if g.shape(pred) != g.shape(label) {
        return Err(Error::shape("bcd loss", g.shape(pred), g.shape(label)));
    }
    let diff = g.sub(pred, label)?;
    let diff = g.abs(diff);
    let num = g.sum(diff);
    let sp = g.sum(pred);
    let sl = g.sum(label);
    let den = g.add(sp, sl)?;
    let den = g.add_scalar(den, T::lit(BCD_EPS));
    g.div(num, den)
}

/// The loss on plain tensors, accumulated in f64.
pub fn bcd_loss_value<T: Real>(pred: &Tensor<T>, label: &Tensor<T>) -> Result<f64> {
    if pred.shape() != label.shape() {
        return Err(Error::shape("bcd loss", pred.shape(), label.shape()));
    }
    let (mut num, mut den) = (0.0f64, BCD_EPS);
    for (&x, &y) in pred.data().iter().zip(label.data()) {
        let (x, y) = (x.to_f64().unwrap_or(f64::NAN), y.to_f64().unwrap_or(f64::NAN));
        num += (x - y).abs();
        den += x + y;
    }
    Ok(num / den)
}
