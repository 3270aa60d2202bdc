//! The change-detection network: a U-net backbone over the channel-stacked
//! image pair, feature-difference attention at the bottleneck, edge
//! compensation after the last decoder stage, and a split/subtract head.

mod checkpoint;
mod flops;
mod modules;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use flops::{flop_count, FlopReport, LayerFlops, LayerKind};
pub use modules::{
    ec_modulation_mask, ec_module, fda_module, head_logits, split_subtract_head, EC_STEP_THRESHOLD,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::diffmap::FEATURE_DOWNSAMPLE;
use crate::error::{Error, Result};
use crate::optim::{Init, ParamStore};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub head_channels: usize,
}

impl UNetConfig {
    /// Base 8, depth 3.
    pub fn desk() -> Self {
        Self {
            in_channels: 6,
            base_channels: 8,
            depth: 3,
            head_channels: 8,
        }
    }

    /// Base 64, depth 4: the classic U-net widths.
    pub fn full_scale() -> Self {
        Self {
            in_channels: 6,
            base_channels: 64,
            depth: 4,
            head_channels: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.base_channels == 0 || self.depth == 0 {
            return Err(Error::invalid("in_channels, base_channels and depth must be positive"));
        }
        if self.head_channels == 0 || !self.head_channels.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "head_channels must be even and positive, got {}",
                self.head_channels
            )));
        }
        Ok(())
    }

    /// Channel width of encoder level `level` (the bottleneck is `depth`).
    pub fn width(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn input_multiple(&self) -> usize {
        1 << self.depth
    }
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub unet: UNetConfig,
    /// Feature-difference attention at the bottleneck.
    pub fda: bool,
    /// Edge compensation after the last decoder stage.
    pub ec: bool,
    /// Channel count `c_p` of the FD-map.
    pub fd_channels: usize,
}

impl ModelConfig {
    pub fn idan(unet: UNetConfig, fd_channels: usize) -> Self {
        Self {
            unet,
            fda: true,
            ec: true,
            fd_channels,
        }
    }

    /// The bare backbone with both prior blocks disabled.
    pub fn plain(unet: UNetConfig) -> Self {
        Self {
            unet,
            fda: false,
            ec: false,
            fd_channels: 0,
        }
    }

    pub fn uses_priors(&self) -> bool {
        self.fda || self.ec
    }

    pub fn validate(&self) -> Result<()> {
        self.unet.validate()?;
        if self.uses_priors() && self.fd_channels == 0 {
            return Err(Error::invalid("fd_channels must be positive when a prior block is enabled"));
        }
        Ok(())
    }
}

/// Tensors of one forward pass. `fd` is `(N, c_p, H/8, W/8)`; `ed` is the
/// `(N, 1, H, W)` edge-difference mask.
#[derive(Clone, Copy, Debug)]
pub struct ForwardInputs {
    pub img_a: Var,
    pub img_b: Var,
    pub fd: Option<Var>,
    pub ed: Option<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdanModel<T = f32> {
    config: ModelConfig,
    params: ParamStore<T>,
}

fn conv_param<T: Real>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    c_in: usize,
    c_out: usize,
    k: usize,
    bias: bool,
) -> Result<()> {
    store.init(format!("{name}.weight"), &[c_out, c_in, k, k], Init::KaimingUniform, rng)?;
    if bias {
        store.init(format!("{name}.bias"), &[c_out], Init::Zeros, rng)?;
    }
    Ok(())
}

impl<T: Real> IdanModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let u = config.unet;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        for level in 0..u.depth {
            let c_in = if level == 0 { u.in_channels } else { u.width(level - 1) };
            conv_param(&mut p, &mut rng, &format!("enc{level}.conv1"), c_in, u.width(level), 3, true)?;
            conv_param(&mut p, &mut rng, &format!("enc{level}.conv2"), u.width(level), u.width(level), 3, true)?;
        }
        let bottom = u.width(u.depth);
        conv_param(&mut p, &mut rng, "mid.conv1", u.width(u.depth - 1), bottom, 3, true)?;
        conv_param(&mut p, &mut rng, "mid.conv2", bottom, bottom, 3, true)?;
        if config.fda {
            conv_param(&mut p, &mut rng, "fda.conv_a", config.fd_channels, bottom, 1, true)?;
            conv_param(&mut p, &mut rng, "fda.conv_b", config.fd_channels, bottom, 1, false)?;
        }
        for level in (0..u.depth).rev() {
            let c = u.width(level);
            let out = if level == 0 { u.head_channels } else { c };
            conv_param(&mut p, &mut rng, &format!("dec{level}.up"), u.width(level + 1), c, 3, true)?;
            conv_param(&mut p, &mut rng, &format!("dec{level}.conv1"), 2 * c, c, 3, true)?;
            conv_param(&mut p, &mut rng, &format!("dec{level}.conv2"), c, out, 3, true)?;
        }
        if config.ec {
            conv_param(&mut p, &mut rng, "ec.conv_e", 1, u.head_channels, 1, false)?;
        }
        conv_param(&mut p, &mut rng, "head", u.head_channels / 2, 1, 1, true)?;
        Ok(Self { config, params: p })
    }

    /// Rebuilds a model from named tensors, checking names and shapes
    /// against `config`.
    pub fn from_named(config: ModelConfig, entries: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if entries.len() != model.params.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} tensors, model expects {}",
                entries.len(),
                model.params.len()
            )));
        }
        for (name, t) in entries {
            let p = model
                .params
                .get_mut(&name)
                .ok_or_else(|| Error::Data(format!("unexpected parameter {name:?}")))?;
            if p.tensor.shape() != t.shape() {
                return Err(Error::shape("checkpoint parameter", p.tensor.shape(), t.shape()));
            }
            p.tensor = t.with_requires_grad(true);
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> IdanModel<U> {
        IdanModel {
            config: self.config,
            params: self.params.cast(),
        }
    }

    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.params.bind(g)
    }

    fn p(&self, bound: &[Var], name: &str) -> Var {
        let idx = self
            .params
            .index_of(name)
            .unwrap_or_else(|| panic!("parameter {name} missing from model"));
        bound[idx]
    }

    fn conv_relu(&self, g: &mut Graph<T>, bound: &[Var], x: Var, name: &str) -> Result<Var> {
        let w = self.p(bound, &format!("{name}.weight"));
        let b = self.p(bound, &format!("{name}.bias"));
        let y = g.conv2d(x, w, Some(b), 1, 1).map_err(|e| e.at_stage(name))?;
        Ok(g.relu(y))
    }

    fn check_inputs(&self, g: &Graph<T>, inputs: &ForwardInputs) -> Result<(usize, usize, usize)> {
        let (n, c, h, w) = g.value(inputs.img_a).dims4().map_err(|e| e.at_stage("input"))?;
        if g.shape(inputs.img_a) != g.shape(inputs.img_b) {
            return Err(Error::shape("input: image pair", g.shape(inputs.img_a), g.shape(inputs.img_b)));
        }
        if 2 * c != self.config.unet.in_channels {
            return Err(Error::invalid(format!(
                "input: pair has {} channels, backbone expects {}",
                2 * c,
                self.config.unet.in_channels
            )));
        }
        let m = self.config.unet.input_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::invalid(format!(
                "input: spatial size {h}x{w} must be divisible by {m}"
            )));
        }
        if self.config.uses_priors() {
            let fd = inputs.fd.ok_or_else(|| Error::invalid("input: model needs an FD-map"))?;
            let (nf, cf, hf, wf) = g.value(fd).dims4().map_err(|e| e.at_stage("fd"))?;
            if nf != n || cf != self.config.fd_channels || hf * FEATURE_DOWNSAMPLE != h || wf * FEATURE_DOWNSAMPLE != w {
                return Err(Error::shape("fd: expected (N, c_p, H/8, W/8)", g.shape(fd), &[n, self.config.fd_channels, h / FEATURE_DOWNSAMPLE, w / FEATURE_DOWNSAMPLE]));
            }
        }
        if self.config.ec {
            let ed = inputs.ed.ok_or_else(|| Error::invalid("input: model needs an ED-map"))?;
            if g.shape(ed) != [n, 1, h, w] {
                return Err(Error::shape("ed: expected (N, 1, H, W)", g.shape(ed), &[n, 1, h, w]));
            }
        }
        Ok((n, h, w))
    }

    /// Change probabilities `(N, 1, H, W)`, every value in `(0, 1)`.
    pub fn forward(&self, g: &mut Graph<T>, bound: &[Var], inputs: &ForwardInputs) -> Result<Var> {
        let logits = self.forward_logits(g, bound, inputs)?;
        Ok(g.sigmoid(logits))
    }

    pub fn forward_logits(&self, g: &mut Graph<T>, bound: &[Var], inputs: &ForwardInputs) -> Result<Var> {
        if bound.len() != self.params.len() {
            return Err(Error::invalid("bound parameters do not belong to this model"));
        }
        self.check_inputs(g, inputs)?;
        let u = self.config.unet;

        let mut h = g.concat_channels(inputs.img_a, inputs.img_b)?;
        let mut skips = Vec::with_capacity(u.depth);
        for level in 0..u.depth {
            h = self.conv_relu(g, bound, h, &format!("enc{level}.conv1"))?;
            h = self.conv_relu(g, bound, h, &format!("enc{level}.conv2"))?;
            skips.push(h);
            h = g.max_pool2d(h).map_err(|e| e.at_stage(format!("enc{level}.pool")))?;
        }
        h = self.conv_relu(g, bound, h, "mid.conv1")?;
        h = self.conv_relu(g, bound, h, "mid.conv2")?;

        if self.config.fda {
            let fd = inputs.fd.expect("checked");
            let (_, _, bh, bw) = g.value(h).dims4()?;
            let (_, _, fh, fw) = g.value(fd).dims4()?;
            let fd = if (fh, fw) == (bh, bw) {
                fd
            } else {
                g.resize_bilinear(fd, bh, bw)?
            };
            h = fda_module(
                g,
                h,
                fd,
                self.p(bound, "fda.conv_a.weight"),
                self.p(bound, "fda.conv_a.bias"),
                self.p(bound, "fda.conv_b.weight"),
            )
            .map_err(|e| e.at_stage("fda"))?;
        }

        for level in (0..u.depth).rev() {
            let up = g.upsample_bilinear(h, 2)?;
            let name = format!("dec{level}.up");
            let w = self.p(bound, &format!("{name}.weight"));
            let b = self.p(bound, &format!("{name}.bias"));
            let up = g.conv2d(up, w, Some(b), 1, 1).map_err(|e| e.at_stage(&name))?;
            h = g
                .concat_channels(up, skips[level])
                .map_err(|e| e.at_stage(format!("dec{level}.skip")))?;
            h = self.conv_relu(g, bound, h, &format!("dec{level}.conv1"))?;
            h = self.conv_relu(g, bound, h, &format!("dec{level}.conv2"))?;
        }

        if self.config.ec {
            h = ec_module(
                g,
                h,
                inputs.ed.expect("checked"),
                inputs.fd.expect("checked"),
                self.p(bound, "ec.conv_e.weight"),
            )
            .map_err(|e| e.at_stage("ec"))?;
        }
        head_logits(g, h, self.p(bound, "head.weight"), self.p(bound, "head.bias"))
            .map_err(|e| e.at_stage("head"))
    }

    /// Convenience inference on plain tensors; no gradient is kept.
    pub fn predict(
        &self,
        img_a: &Tensor<T>,
        img_b: &Tensor<T>,
        fd: Option<&Tensor<T>>,
        ed: Option<&Tensor<T>>,
    ) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bound: Vec<Var> = self.params.iter().map(|p| g.constant(p.tensor.clone())).collect();
        let inputs = ForwardInputs {
            img_a: g.constant(img_a.clone()),
            img_b: g.constant(img_b.clone()),
            fd: fd.map(|t| g.constant(t.clone())),
            ed: ed.map(|t| g.constant(t.clone())),
        };
        let out = self.forward(&mut g, &bound, &inputs)?;
        Ok(g.value(out).clone().with_requires_grad(false))
    }
}
