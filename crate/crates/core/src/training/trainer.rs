use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bcd_loss, binarize, confusion, metrics, prepare, ConfusionCounts, MetricsReport, PreparedSample, PriorBuilder};
use crate::autograd::Graph;
use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::imgproc::BinaryMask;
use crate::model::{save_checkpoint, ForwardInputs, IdanModel};
use crate::optim::{Optimizer, OptimizerKind};
use crate::tensor::{FlushDenormals, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Probability threshold used when scoring.
    pub threshold: f32,
    /// Where the final parameters are written, if anywhere.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 4,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            threshold: 0.5,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        Optimizer::<f32>::new(self.optimizer, self.learning_rate).map(|_| ())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Sample-weighted mean of the batch losses.
    pub loss: f64,
    pub validation: Option<MetricsReport>,
    pub seconds: f64,
}

impl std::fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "epoch={} loss={:.6}", self.epoch, self.loss)?;
        if let Some(v) = &self.validation {
            write!(f, " f1={:.4}", v.f1)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

struct Batch {
    img_a: Tensor<f32>,
    img_b: Tensor<f32>,
    label: Tensor<f32>,
    fd: Option<Tensor<f32>>,
    ed: Option<Tensor<f32>>,
}

fn stack_opt(items: &[&PreparedSample], pick: impl Fn(&PreparedSample) -> Option<&Tensor<f32>>) -> Result<Option<Tensor<f32>>> {
    let parts: Option<Vec<&Tensor<f32>>> = items.iter().map(|s| pick(s)).collect();
    parts.map(|p| Tensor::stack(&p)).transpose()
}

fn make_batch(items: &[&PreparedSample]) -> Result<Batch> {
    let stack = |pick: fn(&PreparedSample) -> &Tensor<f32>| {
        Tensor::stack(&items.iter().map(|s| pick(s)).collect::<Vec<_>>())
    };
    Ok(Batch {
        img_a: stack(|s| &s.img_a)?,
        img_b: stack(|s| &s.img_b)?,
        label: stack(|s| &s.label)?,
        fd: stack_opt(items, |s| s.fd.as_ref())?,
        ed: stack_opt(items, |s| s.ed.as_ref())?,
    })
}

fn check_priors(model: &IdanModel<f32>, data: &[PreparedSample]) -> Result<()> {
    let cfg = model.config();
    let missing = |s: &PreparedSample| (cfg.uses_priors() && s.fd.is_none()) || (cfg.ec && s.ed.is_none());
    if data.iter().any(missing) {
        return Err(Error::invalid("model needs FD/ED priors but the prepared samples lack them"));
    }
    Ok(())
}

fn batch_inputs(model: &IdanModel<f32>, g: &mut Graph<f32>, b: &Batch) -> ForwardInputs {
    let cfg = *model.config();
    ForwardInputs {
        img_a: g.constant(b.img_a.clone()),
        img_b: g.constant(b.img_b.clone()),
        fd: b.fd.as_ref().filter(|_| cfg.uses_priors()).map(|t| g.constant(t.clone())),
        ed: b.ed.as_ref().filter(|_| cfg.ec).map(|t| g.constant(t.clone())),
    }
}

/// Builds the priors the model needs, then trains.
pub fn train(
    model: &mut IdanModel<f32>,
    samples: &[SamplePair],
    priors: Option<&PriorBuilder>,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    let priors = priors.filter(|_| model.config().uses_priors());
    let data = prepare(samples, priors)?;
    train_prepared(model, &data, cfg, None, &mut |_| {})
}

/// Mini-batch training on cached samples. Each epoch reshuffles with a
/// generator seeded from `cfg.seed`; `on_epoch` sees every record as it
/// completes. A non-finite loss aborts with [`Error::NonFinite`].
pub fn train_prepared(
    model: &mut IdanModel<f32>,
    data: &[PreparedSample],
    cfg: &TrainConfig,
    validation: Option<&[PreparedSample]>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    check_priors(model, data)?;
    let _ftz = FlushDenormals::enable();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let items: Vec<&PreparedSample> = chunk.iter().map(|&i| &data[i]).collect();
            let batch = make_batch(&items)?;
            let mut g = Graph::new();
            let bound = model.bind(&mut g);
            let inputs = batch_inputs(model, &mut g, &batch);
            let pred = model.forward(&mut g, &bound, &inputs)?;
            let label = g.constant(batch.label);
            let loss = bcd_loss(&mut g, pred, label)?;
            let value = g.value(loss).item()?;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("loss {value} in epoch {epoch}")));
            }
            g.backward(loss)?;
            model.params_mut().absorb_grads(&g, &bound)?;
            opt.step(model.params_mut())?;
            weighted += value as f64 * chunk.len() as f64;
        }
        let validation = validation.map(|v| evaluate(model, v, cfg.threshold, cfg.batch_size)).transpose()?;
        let record = EpochRecord {
            epoch,
            loss: weighted / data.len() as f64,
            validation,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("{record}");
        on_epoch(&record);
        log.epochs.push(record);
    }
    if let Some(path) = &cfg.checkpoint {
        save_checkpoint(model.params(), path)?;
    }
    Ok(log)
}

/// Binary change masks for every sample, in order.
pub fn predict_masks(
    model: &IdanModel<f32>,
    data: &[PreparedSample],
    threshold: f32,
    batch_size: usize,
) -> Result<Vec<BinaryMask>> {
    check_priors(model, data)?;
    let _ftz = FlushDenormals::enable();
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(batch_size.max(1)) {
        let items: Vec<&PreparedSample> = chunk.iter().collect();
        let b = make_batch(&items)?;
        let cfg = model.config();
        let fd = b.fd.as_ref().filter(|_| cfg.uses_priors());
        let ed = b.ed.as_ref().filter(|_| cfg.ec);
        let probs = model.predict(&b.img_a, &b.img_b, fd, ed)?;
        out.extend(binarize(&probs, threshold)?);
    }
    Ok(out)
}

/// Metrics from confusion counts pooled over the whole set.
pub fn evaluate(model: &IdanModel<f32>, data: &[PreparedSample], threshold: f32, batch_size: usize) -> Result<MetricsReport> {
    let masks = predict_masks(model, data, threshold, batch_size)?;
    let mut total = ConfusionCounts::default();
    for (m, s) in masks.iter().zip(data) {
        total += confusion(m, &s.label_mask)?;
    }
    Ok(metrics(total))
}
