use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("axis {axis} out of range for tensor of rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("trainable parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor `{0}` is missing")]
    MissingTensor(String),
    #[error("model file rejected at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("training diverged at epoch {epoch} (last good epoch: {last_good:?})")]
    Diverged {
        epoch: usize,
        last_good: Option<usize>,
    },
    #[error("{head}: {source}")]
    Head {
        head: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
