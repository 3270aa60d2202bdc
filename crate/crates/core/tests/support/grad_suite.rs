//! Finite-difference gradient checks for every differentiable operation,
//! the two prior blocks, the head, the loss and the full model. Shared by
//! the core test suite and the acceptance target.

#![allow(dead_code)]

use idan_core::autograd::{Graph, Var};
use idan_core::gradcheck::{grad_check, grad_check_coords};
use idan_core::model::{
    ec_modulation_mask, fda_module, head_logits, ec_module, ForwardInputs, IdanModel, ModelConfig, UNetConfig,
};
use idan_core::training::bcd_loss;
use idan_core::{Result, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stencil step for the operation suite; the stencil spans `2 * EPS`,
/// well inside `KINK_GAP`.
pub const EPS: f64 = 2e-4;
/// Smaller step for the whole network, whose relu kinks are not controlled.
pub const EPS_MODEL: f64 = 1e-5;
/// Tolerance for smooth elementwise operations.
pub const TOL_ELEMENTWISE: f64 = 1e-5;
/// Tolerance for kinked, structural and composed operations.
pub const TOL_COMPOSED: f64 = 1e-4;
/// Tolerance for the whole network.
pub const TOL_MODEL: f64 = 1e-3;
/// Minimum distance of checked points from a relu/abs kink.
pub const KINK_GAP: f64 = 1e-3;
pub const SIDE: usize = 16;

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub name: String,
    pub tol: f64,
    pub worst: f64,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.worst <= self.tol
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

/// Moves every coordinate at least `KINK_GAP` away from zero.
pub fn off_kink(t: Tensor<f64>) -> Tensor<f64> {
    t.map(|v| if v.abs() < KINK_GAP { v.signum() * KINK_GAP * 2.0 + v } else { v })
}

/// Reduces to a scalar through fixed, positive, non-uniform weights. Positive
/// weights keep aggregated gradients (biases, upsampled pixels) away from
/// exact cancellation, where the relative error is all noise.
pub fn project(g: &mut Graph<f64>, y: Var) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    let w = Tensor::from_fn(shape, |i| 0.5 + ((i * 7919) % 13) as f64 / 13.0);
    let w = g.constant(w);
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

fn case<F>(out: &mut Vec<CaseResult>, name: &str, tol: f64, point: &Tensor<f64>, f: F)
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let worst = grad_check(f, point, EPS).unwrap_or_else(|e| panic!("{name}: {e}"));
    out.push(CaseResult {
        name: name.to_string(),
        tol,
        worst,
    });
}

/// Every operation and block checked at one seed on a `(2, 2, 16, 16)` instance.
pub fn op_cases(seed: u64) -> Vec<CaseResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [2, 2, SIDE, SIDE];
    let x = uniform(&mut rng, &shape, -2.0, 2.0);
    let c = uniform(&mut rng, &shape, -2.0, 2.0);
    let c_away = off_kink(uniform(&mut rng, &shape, -2.0, 2.0)).map(|v| if v.abs() < 0.5 { v.signum() * 0.5 + v } else { v });
    let x_away = off_kink(x.clone());
    let x_div = x.map(|v| if v.abs() < 0.5 { v.signum() * 0.5 + v } else { v });
    // distinct values about 2e-3 apart, so no pooling window holds a near tie
    let mut grid: Vec<f64> = (0..x.numel()).map(|i| -2.0 + 4.0 * i as f64 / x.numel() as f64).collect();
    grid.shuffle(&mut rng);
    let x_pool = Tensor::new(shape.to_vec(), grid).expect("shape");
    let mut out = Vec::new();
    let e = TOL_ELEMENTWISE;
    let k = TOL_COMPOSED;

    case(&mut out, "add", e, &x, |g, x| {
        let c = g.constant(c.clone());
        let y = g.add(x, c)?;
        project(g, y)
    });
    case(&mut out, "sub", e, &x, |g, x| {
        let c = g.constant(c.clone());
        let y = g.sub(c, x)?;
        project(g, y)
    });
    case(&mut out, "mul", e, &x_div, |g, x| {
        let c = g.constant(c.clone());
        let y = g.mul(x, c)?;
        project(g, y)
    });
    case(&mut out, "mul_self", e, &x_div, |g, x| {
        let y = g.mul(x, x)?;
        project(g, y)
    });
    case(&mut out, "div_numerator", e, &x, |g, x| {
        let c = g.constant(c_away.clone());
        let y = g.div(x, c)?;
        project(g, y)
    });
    case(&mut out, "div_denominator", e, &x_div, |g, x| {
        let c = g.constant(c.clone());
        let y = g.div(c, x)?;
        project(g, y)
    });
    case(&mut out, "add_scalar", e, &x, |g, x| {
        let y = g.add_scalar(x, 0.75);
        project(g, y)
    });
    case(&mut out, "sigmoid", e, &x, |g, x| {
        let y = g.sigmoid(x);
        project(g, y)
    });
    case(&mut out, "sum", e, &x, |g, x| {
        let y = g.sum(x);
        let y = g.mul(y, y)?;
        Ok(g.sum(y))
    });
    case(&mut out, "mean_channels", e, &x, |g, x| {
        let y = g.mean_channels(x)?;
        project(g, y)
    });
    case(&mut out, "relu", k, &x_away, |g, x| {
        let y = g.relu(x);
        project(g, y)
    });
    case(&mut out, "abs", k, &x_away, |g, x| {
        let y = g.abs(x);
        project(g, y)
    });
    case(&mut out, "concat_channels", k, &x, |g, x| {
        let c = g.constant(c.clone());
        let y = g.concat_channels(c, x)?;
        project(g, y)
    });
    case(&mut out, "slice_channels", k, &x, |g, x| {
        let y = g.slice_channels(x, 1, 1)?;
        project(g, y)
    });
    case(&mut out, "split_channels_half", k, &x, |g, x| {
        let (a, b) = g.split_channels_half(x)?;
        let y = g.sub(a, b)?;
        project(g, y)
    });

    let weight = uniform(&mut rng, &[3, 2, 3, 3], -0.5, 0.5);
    let bias = uniform(&mut rng, &[3], -0.5, 0.5);
    for (stride, pad) in [(1, 1), (2, 0), (2, 1)] {
        case(&mut out, &format!("conv2d_input_s{stride}p{pad}"), k, &x, |g, x| {
            let w = g.constant(weight.clone());
            let b = g.constant(bias.clone());
            let y = g.conv2d(x, w, Some(b), stride, pad)?;
            project(g, y)
        });
        case(&mut out, &format!("conv2d_weight_s{stride}p{pad}"), k, &weight, |g, w| {
            let xi = g.constant(x.clone());
            let b = g.constant(bias.clone());
            let y = g.conv2d(xi, w, Some(b), stride, pad)?;
            project(g, y)
        });
    }
    case(&mut out, "conv2d_bias", k, &bias, |g, b| {
        let xi = g.constant(x.clone());
        let w = g.constant(weight.clone());
        let y = g.conv2d(xi, w, Some(b), 1, 1)?;
        project(g, y)
    });
    let pointwise = uniform(&mut rng, &[5, 2, 1, 1], -0.5, 0.5);
    case(&mut out, "conv2d_1x1_input", k, &x, |g, x| {
        let w = g.constant(pointwise.clone());
        let y = g.conv2d(x, w, None, 1, 0)?;
        project(g, y)
    });
    case(&mut out, "conv2d_1x1_weight", k, &pointwise, |g, w| {
        let xi = g.constant(x.clone());
        let y = g.conv2d(xi, w, None, 1, 0)?;
        project(g, y)
    });
    case(&mut out, "max_pool2d", k, &x_pool, |g, x| {
        let y = g.max_pool2d(x)?;
        project(g, y)
    });
    case(&mut out, "upsample_bilinear", k, &x, |g, x| {
        let y = g.upsample_bilinear(x, 2)?;
        project(g, y)
    });
    case(&mut out, "resize_bilinear_up", k, &x, |g, x| {
        let y = g.resize_bilinear(x, 23, 37)?;
        project(g, y)
    });
    case(&mut out, "resize_bilinear_down", k, &x, |g, x| {
        let y = g.resize_bilinear(x, 5, 7)?;
        project(g, y)
    });

    out.extend(module_cases(&mut rng));
    out.push(bcd_case(&mut rng));
    out
}

fn module_cases(rng: &mut ChaCha8Rng) -> Vec<CaseResult> {
    let k = TOL_COMPOSED;
    let mut out = Vec::new();
    let (n, c, cp) = (2, 4, 2);
    let x1 = uniform(rng, &[n, c, SIDE, SIDE], -2.0, 2.0);
    let fd = uniform(rng, &[n, cp, SIDE, SIDE], 0.0, 2.0);
    let wa = uniform(rng, &[c, cp, 1, 1], -1.0, 1.0);
    let ba = uniform(rng, &[c], -1.0, 1.0);
    let wb = uniform(rng, &[c, cp, 1, 1], -1.0, 1.0);
    let fda = |g: &mut Graph<f64>, slot: usize, v: Var| -> Result<Var> {
        let mut vars = [x1.clone(), fd.clone(), wa.clone(), ba.clone(), wb.clone()].map(|t| g.constant(t));
        vars[slot] = v;
        let y = fda_module(g, vars[0], vars[1], vars[2], vars[3], vars[4])?;
        project(g, y)
    };
    for (slot, (name, point)) in [("x1", &x1), ("fd", &fd), ("conv_a.weight", &wa), ("conv_a.bias", &ba), ("conv_b.weight", &wb)]
        .into_iter()
        .enumerate()
    {
        case(&mut out, &format!("fda_module_{name}"), k, point, |g, v| fda(g, slot, v));
    }

    let x2 = uniform(rng, &[n, c, SIDE, SIDE], -2.0, 2.0);
    let ed = Tensor::from_fn(vec![n, 1, SIDE, SIDE], |_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 });
    let fd_small = uniform(rng, &[n, cp, SIDE / 8, SIDE / 8], 0.0, 2.0);
    let we = uniform(rng, &[c, 1, 1, 1], -1.0, 1.0);
    let mask = ec_modulation_mask(&ed, &fd_small).expect("mask");
    assert!(mask.data().iter().any(|&v| v > 0.0), "fixture must exercise the edge path");
    let ec = |g: &mut Graph<f64>, slot: usize, v: Var| -> Result<Var> {
        let mut vars = [x2.clone(), we.clone()].map(|t| g.constant(t));
        vars[slot] = v;
        let e = g.constant(ed.clone());
        let f = g.constant(fd_small.clone());
        let y = ec_module(g, vars[0], e, f, vars[1])?;
        project(g, y)
    };
    case(&mut out, "ec_module_x2", k, &x2, |g, v| ec(g, 0, v));
    case(&mut out, "ec_module_conv_e.weight", k, &we, |g, v| ec(g, 1, v));

    let f = uniform(rng, &[n, 4, SIDE, SIDE], -2.0, 2.0);
    let hw = uniform(rng, &[1, 2, 1, 1], -1.0, 1.0);
    let hb = uniform(rng, &[1], -1.0, 1.0);
    let head = |g: &mut Graph<f64>, slot: usize, v: Var| -> Result<Var> {
        let mut vars = [f.clone(), hw.clone(), hb.clone()].map(|t| g.constant(t));
        vars[slot] = v;
        let y = head_logits(g, vars[0], vars[1], vars[2])?;
        let y = g.sigmoid(y);
        project(g, y)
    };
    case(&mut out, "head_features", k, &f, |g, v| head(g, 0, v));
    case(&mut out, "head_weight", k, &hw, |g, v| head(g, 1, v));
    case(&mut out, "head_bias", k, &hb, |g, v| head(g, 2, v));
    out
}

fn bcd_case(rng: &mut ChaCha8Rng) -> CaseResult {
    let shape = [2, 1, SIDE, SIDE];
    let y = Tensor::from_fn(shape.to_vec(), |_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 });
    // predictions in (0, 1), never within the kink gap of the label
    let x = Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(0.01..0.99));
    let mut out = Vec::new();
    case(&mut out, "bcd_loss", TOL_COMPOSED, &x, |g, x| {
        let yv = g.constant(y.clone());
        bcd_loss(g, x, yv)
    });
    out.pop().expect("one case")
}

/// Loss of the whole model w.r.t. sampled coordinates of every parameter
/// tensor, on a 16x16 desk instance.
pub fn model_cases(seed: u64, coords_per_tensor: usize) -> Vec<CaseResult> {
    let cfg = ModelConfig::idan(UNetConfig::desk(), 8);
    let model: IdanModel<f64> = IdanModel::<f32>::new(cfg, seed).expect("model").cast();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let a = uniform(&mut rng, &[1, 3, SIDE, SIDE], 0.0, 1.0);
    let b = uniform(&mut rng, &[1, 3, SIDE, SIDE], 0.0, 1.0);
    let fd = uniform(&mut rng, &[1, 8, SIDE / 8, SIDE / 8], 0.0, 1.0);
    let ed = Tensor::from_fn(vec![1, 1, SIDE, SIDE], |_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 });
    let label = Tensor::from_fn(vec![1, 1, SIDE, SIDE], |_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 });

    model
        .params()
        .iter()
        .enumerate()
        .map(|(idx, p)| {
            let numel = p.tensor.numel();
            let coords: Vec<usize> = (0..coords_per_tensor.min(numel)).map(|_| rng.gen_range(0..numel)).collect();
            let f = |g: &mut Graph<f64>, x: Var| -> Result<Var> {
                let mut bound: Vec<Var> = model.params().iter().map(|q| g.constant(q.tensor.clone())).collect();
                bound[idx] = x;
                let inputs = ForwardInputs {
                    img_a: g.constant(a.clone()),
                    img_b: g.constant(b.clone()),
                    fd: Some(g.constant(fd.clone())),
                    ed: Some(g.constant(ed.clone())),
                };
                let pred = model.forward(g, &bound, &inputs)?;
                let y = g.constant(label.clone());
                bcd_loss(g, pred, y)
            };
            let worst = grad_check_coords(f, &p.tensor, EPS_MODEL, &coords).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            CaseResult {
                name: format!("model_{}", p.name),
                tol: TOL_MODEL,
                worst,
            }
        })
        .collect()
}
