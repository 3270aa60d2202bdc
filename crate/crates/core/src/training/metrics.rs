use std::fmt;
use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::imgproc::BinaryMask;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Masks from `(N, 1, H, W)` probabilities; a pixel is on iff `p > threshold`.
pub fn binarize(probs: &Tensor<f32>, threshold: f32) -> Result<Vec<BinaryMask>> {
    let (n, c, h, w) = probs.dims4()?;
    if c != 1 {
        return Err(Error::invalid(format!("expected one probability channel, got {c}")));
    }
    let plane = h * w;
    (0..n)
        .map(|i| {
            let px = probs.data()[i * plane..(i + 1) * plane]
                .iter()
                .map(|&p| u8::from(p > threshold))
                .collect();
            BinaryMask::new(w, h, px)
        })
        .collect()
}

pub fn confusion(pred: &BinaryMask, label: &BinaryMask) -> Result<ConfusionCounts> {
    if (pred.width(), pred.height()) != (label.width(), label.height()) {
        return Err(Error::shape(
            "confusion",
            &[pred.height(), pred.width()],
            &[label.height(), label.width()],
        ));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &l) in pred.pixels().iter().zip(label.pixels()) {
        match (p != 0, l != 0) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Which ratios had a zero denominator and were reported as 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Degenerate {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
    pub degenerate: Degenerate,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metrics(counts: ConfusionCounts) -> MetricsReport {
    let ConfusionCounts { tp, tn, fp, fn_ } = counts;
    let (accuracy, _) = ratio(tp + tn, counts.total());
    let (precision, dp) = ratio(tp, tp + fp);
    let (recall, dr) = ratio(tp, tp + fn_);
    let (f1, df) = if precision + recall == 0.0 {
        (0.0, true)
    } else {
        (2.0 * precision * recall / (precision + recall), false)
    };
    MetricsReport {
        accuracy,
        precision,
        recall,
        f1,
        counts,
        degenerate: Degenerate {
            precision: dp,
            recall: dr,
            f1: df,
        },
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "accuracy={:.4} precision={:.4} recall={:.4} f1={:.4}",
            self.accuracy, self.precision, self.recall, self.f1
        )
    }
}
