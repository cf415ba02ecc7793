//! WeatherNet: four independent residual-CNN classifiers (time of day,
//! glare, precipitation, fog) whose outputs fuse into one scene label.
//!
//! Everything below the model layer is built here from scratch: dense
//! tensors, a reverse-mode autodiff tape, convolution / batch-norm /
//! pooling kernels, Adam, an image pipeline and the evaluation metrics.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod param;
pub mod tensor;

pub use autodiff::{Graph, Var};
pub use error::{Error, Result};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use model::{ClassifierSpec, Model, SceneLabel, Task};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::{Real, Tensor};
