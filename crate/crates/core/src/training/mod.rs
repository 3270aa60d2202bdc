//! Loss, metrics and the optimisation loop.

mod loss;
mod metrics;
mod prepare;
mod trainer;

pub use loss::{bcd_loss, bcd_loss_value, BCD_EPS};
pub use metrics::{binarize, confusion, metrics, ConfusionCounts, Degenerate, MetricsReport};
pub use prepare::{prepare, PreparedSample, PriorBuilder};
pub use trainer::{evaluate, predict_masks, train, train_prepared, EpochRecord, TrainConfig, TrainLog};
