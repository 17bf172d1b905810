//! Vertex spaces, edge maps and the diagrams that bind them to a graph.

mod dataset;
mod diagram;
mod metric;
mod model;
mod shape;

pub use dataset::{Column, Dataset};
pub use diagram::{assign_semantics, eval_path, eval_path_rows, LearningDiagram, Space, VertexData};
pub use metric::{metric_eval, CustomMetric, MetricSpec};
pub use model::{EdgeKind, EdgeModel, ModelSpec, ParamBinder, ProjectionKey, PureFn};
pub use shape::Shape;

pub(crate) use model::ColumnNames;

use crate::autodiff::AutodiffError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SemanticsError {
    #[error("missing assignment for {0}")]
    MissingAssignment(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("vertex `{0}` is non-indexing but carries a dataset")]
    DatasetOnNonIndexing(String),
    #[error("indexing vertex `{0}` has no dataset")]
    NoDatasetOnIndexing(String),
    #[error("parameter key `{0}` is used with different model specs")]
    SharedKeySpecMismatch(String),
    #[error("parameters for key `{0}` are missing or malformed")]
    MissingParams(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
