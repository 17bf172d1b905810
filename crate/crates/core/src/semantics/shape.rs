use std::fmt;

use serde::{Deserialize, Serialize};

/// Shape of the points of a space. Product spaces are tuples of shapes and
/// are laid out flat, component after component.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shape {
    Dims(Vec<usize>),
    Tuple(Vec<Shape>),
}

impl Shape {
    pub fn vector(n: usize) -> Self {
        Shape::Dims(vec![n])
    }

    pub fn flat_len(&self) -> usize {
        match self {
            Shape::Dims(d) => d.iter().product(),
            Shape::Tuple(parts) => parts.iter().map(Shape::flat_len).sum(),
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            Shape::Dims(d) => !d.is_empty() && d.iter().all(|&x| x > 0),
            Shape::Tuple(parts) => !parts.is_empty() && parts.iter().all(Shape::is_valid),
        }
    }

    /// Offset and shape of a tuple component.
    pub fn component(&self, index: usize) -> Option<(usize, &Shape)> {
        match self {
            Shape::Dims(_) => None,
            Shape::Tuple(parts) => {
                let part = parts.get(index)?;
                let offset = parts[..index].iter().map(Shape::flat_len).sum();
                Some((offset, part))
            }
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Dims(d) => {
                let s: Vec<String> = d.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", s.join(","))
            }
            Shape::Tuple(parts) => {
                let s: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "{}", s.join(" x "))
            }
        }
    }
}
