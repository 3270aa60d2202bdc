//! Analytic operation counts.
//!
//! A convolution costs `2 * K^2 * C_in * C_out * H_out * W_out` (one multiply
//! and one add per tap); pooling, activations, upsampling and elementwise
//! arithmetic cost one operation per output element. Bias adds and channel
//! concatenation are free.

use std::fmt;

use super::ModelConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        kernel: usize,
        c_in: usize,
        c_out: usize,
        out_h: usize,
        out_w: usize,
    },
    Pool,
    Activation,
    Upsample,
    Elementwise,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerFlops {
    pub name: String,
    pub kind: LayerKind,
    pub flops: u64,
}

impl LayerFlops {
    pub fn conv(name: impl Into<String>, kernel: usize, c_in: usize, c_out: usize, out_h: usize, out_w: usize) -> Self {
        let flops = 2 * (kernel * kernel * c_in * c_out * out_h * out_w) as u64;
        Self {
            name: name.into(),
            kind: LayerKind::Conv {
                kernel,
                c_in,
                c_out,
                out_h,
                out_w,
            },
            flops,
        }
    }

    /// A layer costing one operation per output element.
    pub fn per_element(name: impl Into<String>, kind: LayerKind, channels: usize, out_h: usize, out_w: usize) -> Self {
        Self {
            name: name.into(),
            kind,
            flops: (channels * out_h * out_w) as u64,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlopReport {
    pub layers: Vec<LayerFlops>,
}

impl FlopReport {
    pub fn total(&self) -> u64 {
        self.layers.iter().map(|l| l.flops).sum()
    }

    pub fn gflops(&self) -> f64 {
        self.total() as f64 / 1e9
    }

    fn push(&mut self, layer: LayerFlops) {
        self.layers.push(layer);
    }
}

impl fmt::Display for FlopReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.layers {
            writeln!(f, "{:<24} {:>16}", l.name, l.flops)?;
        }
        write!(f, "total_gflops={:.4}", self.gflops())
    }
}

/// Per-layer operation counts of a full forward pass at `input_hw`.
pub fn flop_count(config: &ModelConfig, input_hw: (usize, usize)) -> Result<FlopReport> {
    config.validate()?;
    let u = config.unet;
    let (h, w) = input_hw;
    let m = u.input_multiple();
    if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
        return Err(Error::invalid(format!("input {h}x{w} must be a positive multiple of {m}")));
    }
    let mut r = FlopReport::default();
    let double = |r: &mut FlopReport, prefix: &str, c_in: usize, c_mid: usize, c_out: usize, lh: usize, lw: usize| {
        r.push(LayerFlops::conv(format!("{prefix}.conv1"), 3, c_in, c_mid, lh, lw));
        r.push(LayerFlops::per_element(format!("{prefix}.relu1"), LayerKind::Activation, c_mid, lh, lw));
        r.push(LayerFlops::conv(format!("{prefix}.conv2"), 3, c_mid, c_out, lh, lw));
        r.push(LayerFlops::per_element(format!("{prefix}.relu2"), LayerKind::Activation, c_out, lh, lw));
    };

    for level in 0..u.depth {
        let (lh, lw) = (h >> level, w >> level);
        let c_in = if level == 0 { u.in_channels } else { u.width(level - 1) };
        let c = u.width(level);
        double(&mut r, &format!("enc{level}"), c_in, c, c, lh, lw);
        r.push(LayerFlops::per_element(format!("enc{level}.pool"), LayerKind::Pool, c, lh / 2, lw / 2));
    }
    let (bh, bw) = (h >> u.depth, w >> u.depth);
    let bottom = u.width(u.depth);
    double(&mut r, "mid", u.width(u.depth - 1), bottom, bottom, bh, bw);

    if config.fda {
        let cp = config.fd_channels;
        r.push(LayerFlops::conv("fda.conv_a", 1, cp, bottom, bh, bw));
        r.push(LayerFlops::per_element("fda.sigmoid", LayerKind::Activation, bottom, bh, bw));
        r.push(LayerFlops::per_element("fda.mul", LayerKind::Elementwise, bottom, bh, bw));
        r.push(LayerFlops::conv("fda.conv_b", 1, cp, bottom, bh, bw));
        r.push(LayerFlops::per_element("fda.add", LayerKind::Elementwise, bottom, bh, bw));
    }

    for level in (0..u.depth).rev() {
        let (lh, lw) = (h >> level, w >> level);
        let c = u.width(level);
        let out = if level == 0 { u.head_channels } else { c };
        r.push(LayerFlops::per_element(format!("dec{level}.upsample"), LayerKind::Upsample, u.width(level + 1), lh, lw));
        r.push(LayerFlops::conv(format!("dec{level}.up"), 3, u.width(level + 1), c, lh, lw));
        double(&mut r, &format!("dec{level}"), 2 * c, c, out, lh, lw);
    }

    if config.ec {
        r.push(LayerFlops::conv("ec.conv_e", 1, 1, u.head_channels, h, w));
        r.push(LayerFlops::per_element("ec.add", LayerKind::Elementwise, u.head_channels, h, w));
    }
    let half = u.head_channels / 2;
    r.push(LayerFlops::per_element("head.sub", LayerKind::Elementwise, half, h, w));
    r.push(LayerFlops::conv("head.conv", 1, half, 1, h, w));
    r.push(LayerFlops::per_element("head.sigmoid", LayerKind::Activation, 1, h, w));
    Ok(r)
}
