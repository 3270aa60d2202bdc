//! Bi-temporal change detection: a U-net backbone steered by a
//! feature-difference map at the bottleneck and an edge-difference map at
//! the output, built on a small tape-based autograd engine.
// `!(x > 0.0)` is used on purpose to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autograd;
pub mod data;
pub mod diffmap;
pub mod error;
pub mod gradcheck;
pub mod imgproc;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod training;

pub use autograd::{Graph, Var};
pub use data::{Origin, SamplePair};
pub use diffmap::{EdMap, EdgeOperator, FdMap, FeatureExtractor};
pub use error::{Error, Result};
pub use imgproc::{BinaryMask, GrayImage, RgbImage};
pub use model::{IdanModel, ModelConfig, UNetConfig};
pub use optim::{Optimizer, OptimizerKind, ParamStore};
pub use tensor::{Real, Tensor};
pub use training::{MetricsReport, TrainConfig};
