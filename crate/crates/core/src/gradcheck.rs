//! Finite-difference gradient verification in 64-bit precision, using the
//! fourth-order central stencil `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`.
//! Checked points must lie at least `2h` from any kink of `f`.

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative error between one analytic and one numeric partial derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn eval<F>(f: &F, point: Tensor<f64>) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.leaf(point, false);
    let y = f(&mut g, x)?;
    g.value(y).item()
}

/// Maximum relative error of the analytic gradient of `f` at `point`,
/// over every coordinate.
pub fn grad_check<F>(f: F, point: &Tensor<f64>, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..point.numel()).collect();
    grad_check_coords(f, point, epsilon, &coords)
}

/// Like [`grad_check`], restricted to the listed flat coordinates.
pub fn grad_check_coords<F>(f: F, point: &Tensor<f64>, epsilon: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    if !(epsilon > 0.0) {
        return Err(Error::invalid("grad_check epsilon must be positive"));
    }
    let mut g = Graph::new();
    let x = g.leaf(point.clone(), true);
    let y = f(&mut g, x)?;
    g.backward(y)?;
    let analytic = g
        .grad(x)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; point.numel()]);

    let mut worst = 0.0f64;
    for &i in coords {
        if i >= point.numel() {
            return Err(Error::invalid(format!("coordinate {i} out of range")));
        }
        let at = |offset: f64| {
            let mut p = point.clone();
            p.data_mut()[i] += offset;
            eval(&f, p)
        };
        let (h, h2) = (epsilon, 2.0 * epsilon);
        let numeric = (8.0 * (at(h)? - at(-h)?) - (at(h2)? - at(-h2)?)) / (12.0 * epsilon);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_has_unit_gradient() {
        let p = Tensor::from_fn(vec![5], |i| i as f64 - 2.0);
        let err = grad_check(|g, x| Ok(g.sum(x)), &p, 1e-6).unwrap();
        assert!(err <= 1e-7, "{err}");
    }

    #[test]
    fn stencil_is_exact_for_quartics() {
        // the fourth-order stencil has no truncation error up to degree 4
        let p = Tensor::from_fn(vec![3], |i| 0.3 * i as f64 + 0.1);
        let err = grad_check(
            |g, x| {
                let x2 = g.mul(x, x)?;
                let x4 = g.mul(x2, x2)?;
                Ok(g.sum(x4))
            },
            &p,
            1e-2,
        )
        .unwrap();
        assert!(err <= 1e-12, "{err}");
    }

    #[test]
    fn catches_a_wrong_gradient() {
        // relu evaluated exactly at its kink: analytic 0, numeric 0.5
        let p = Tensor::zeros(vec![1]);
        let err = grad_check(
            |g, x| {
                let r = g.relu(x);
                Ok(g.sum(r))
            },
            &p,
            1e-6,
        )
        .unwrap();
        assert!(err > 0.5);
    }
}
