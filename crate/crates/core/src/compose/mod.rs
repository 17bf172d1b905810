//! Homomorphisms, pattern edits and pushout gluing of diagrams.

mod edit;
mod hom;
mod pushout;

pub use edit::{apply_on_image, EdgeAction, VertexAction};
pub use hom::{check_hom, find_monomorphisms, DiagramHom, HomViolation, PartialAssignment};
pub use pushout::{iterate_pushouts, pushout, Attachment, IteratedPushout, Pushout, Span};

use crate::semantics::SemanticsError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompositionError {
    #[error("not a homomorphism: {}", .0.join("; "))]
    NotAHom(Vec<String>),
    #[error("homomorphism does not target this diagram's graph")]
    HomTargetMismatch,
    #[error("semantic mismatch: {0}")]
    SemanticMismatch(String),
    #[error("gluing creates a cycle through {0:?}")]
    CycleCreated(Vec<String>),
    #[error("gluing breaks polarity on edges {0:?}")]
    PolarityViolation(Vec<String>),
    #[error("action does not fit: {0}")]
    ActionShapeMismatch(String),
    #[error("{0}")]
    UnknownLabel(String),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}
