//! The graph DSL and the JSON interchange documents.

pub mod dsl;
pub mod interchange;

pub use dsl::{format_graph, parse_graph, parse_graph_spec, DslError, Location};
pub use interchange::{
    diagram_from_json, diagram_to_json, load_diagram, load_span, read_diagram, read_span,
    save_diagram, save_span, write_diagram, DiagramDoc, LegDoc, SpanDoc,
};

use crate::compose::CompositionError;
use crate::graph::GraphError;
use crate::semantics::SemanticsError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IoError {
    #[error("{0}")]
    Io(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Composition(#[from] CompositionError),
}
