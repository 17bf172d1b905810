//! Learning diagrams: compile a diagram of data spaces and models into a
//! composite loss over its parallel paths, and train it.
//!
//! The numeric core is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the common choices. File formats and the CLI use
//! `f64`.
pub mod autodiff;
pub mod cli;
pub mod compiler;
pub mod compose;
pub mod demos;
pub mod graph;
pub mod io;
pub mod paths;
pub mod scalar;
pub mod semantics;

pub type Diagram = semantics::LearningDiagram<f64>;
pub type Diagram32 = semantics::LearningDiagram<f32>;
pub type Compiled = compiler::CompiledLoss<f64>;
pub type Compiled32 = compiler::CompiledLoss<f32>;
pub type Params = autodiff::ParamStore<f64>;
pub type Params32 = autodiff::ParamStore<f32>;
pub type Tensor = autodiff::Tensor<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
