//! The two prior-driven blocks and the change head.

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{Real, Tensor};

/// Threshold applied to the normalized FD-map inside the edge block.
pub const EC_STEP_THRESHOLD: f64 = 0.5;

/// Feature-difference attention: `x1 * sigmoid(conv_a(fd)) + conv_b(fd)`,
/// both convolutions 1x1, `conv_b` without bias. `fd` must already share
/// `x1`'s spatial size.
pub fn fda_module<T: Real>(
    g: &mut Graph<T>,
    x1: Var,
    fd: Var,
    conv_a_weight: Var,
    conv_a_bias: Var,
    conv_b_weight: Var,
) -> Result<Var> {
    let (n, _, h, w) = g.value(x1).dims4()?;
    let (nf, _, hf, wf) = g.value(fd).dims4()?;
    if (n, h, w) != (nf, hf, wf) {
        return Err(Error::shape("fda_module: x1 vs fd", g.shape(x1), g.shape(fd)));
    }
    let logits = g.conv2d(fd, conv_a_weight, Some(conv_a_bias), 1, 0)?;
    let gate = g.sigmoid(logits);
    let weighted = g.mul(x1, gate)?;
    let enrich = g.conv2d(fd, conv_b_weight, None, 1, 0)?;
    g.add(weighted, enrich)
}

/// Edge modulation mask `ed * step(minmax(resize(mean_c(fd))), 0.5)`,
/// normalized per sample. `ed` is `(N, 1, H, W)`, `fd` is `(N, C, h, w)`.
pub fn ec_modulation_mask<T: Real>(ed: &Tensor<T>, fd: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, ce, h, w) = ed.dims4()?;
    let (nf, _, _, _) = fd.dims4()?;
    if ce != 1 || n != nf {
        return Err(Error::shape("ec mask: ed vs fd", ed.shape(), fd.shape()));
    }
    let mean = crate::autograd::mean_channels(fd)?;
    let up = kernels::resize_bilinear(&mean, h, w)?;
    let tau = T::lit(EC_STEP_THRESHOLD);
    let plane = h * w;
    let coarse = mean.numel() / n;
    let mut out = vec![T::zero(); n * plane];
    for s in 0..n {
        // bilinear rounding can fake a range out of a flat map
        let m = &mean.data()[s * coarse..(s + 1) * coarse];
        if m.iter().all(|&v| v == m[0]) {
            continue;
        }
        let src = &up.data()[s * plane..(s + 1) * plane];
        let (lo, hi) = src
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        if !(span > T::zero()) {
            continue;
        }
        for p in 0..plane {
            let normalized = (src[p] - lo) / span;
            let edge = ed.data()[s * plane + p];
            out[s * plane + p] = if normalized > tau && edge > T::zero() {
                T::one()
            } else {
                T::zero()
            };
        }
    }
    Tensor::new(vec![n, 1, h, w], out)
}

/// Edge compensation: `x2 + conv_e(mask)` with a bias-free 1x1 `conv_e`.
/// Returns `x2` itself when the mask is empty.
pub fn ec_module<T: Real>(g: &mut Graph<T>, x2: Var, ed: Var, fd: Var, conv_e_weight: Var) -> Result<Var> {
    let (n, _, h, w) = g.value(x2).dims4()?;
    let (ne, _, he, we) = g.value(ed).dims4()?;
    if (n, h, w) != (ne, he, we) {
        return Err(Error::shape("ec_module: x2 vs ed", g.shape(x2), g.shape(ed)));
    }
    let mask = ec_modulation_mask(g.value(ed), g.value(fd))?;
    if mask.data().iter().all(|&v| v == T::zero()) {
        return Ok(x2);
    }
    let m = g.constant(mask);
    let comp = g.conv2d(m, conv_e_weight, None, 1, 0)?;
    g.add(x2, comp)
}

/// Pre-sigmoid output of the change head: split channels in half, subtract
/// (first minus second), project to one channel with a 1x1 convolution.
pub fn head_logits<T: Real>(g: &mut Graph<T>, f: Var, weight: Var, bias: Var) -> Result<Var> {
    let (first, second) = g.split_channels_half(f)?;
    let d = g.sub(first, second)?;
    g.conv2d(d, weight, Some(bias), 1, 0)
}

pub fn split_subtract_head<T: Real>(g: &mut Graph<T>, f: Var, weight: Var, bias: Var) -> Result<Var> {
    let logits = head_logits(g, f, weight, bias)?;
    Ok(g.sigmoid(logits))
}
