//! Dense tensors, a reverse-mode tape, parameter storage and optimizers.

mod params;
mod tape;
mod tensor;

pub use params::{optimizer_step, Optimizer, ParamGrads, ParamGroup, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward needs a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("unknown parameter key `{0}`")]
    UnknownKey(String),
}
