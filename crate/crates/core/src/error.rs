use std::path::PathBuf;

use thiserror::Error;

use crate::kernels::ShapeClass;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bandwidth d = {d} gives a zero weight sum for this kernel")]
    DegenerateBandwidth { d: usize },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("window (d = {d}, i = {i}) does not fit inside [0, 1] for n = {n}")]
    WindowOutOfRange { n: usize, d: usize, i: usize },

    #[error("no admissible (bandwidth, location) pair for n = {n}")]
    NoAdmissiblePairs { n: usize },

    #[error("function violates the {shape} constraint at grid index {index}")]
    InvalidShape { shape: ShapeClass, index: usize },

    #[error("operation requires shape {expected}, got {actual}")]
    ShapeMismatch {
        expected: ShapeClass,
        actual: ShapeClass,
    },

    #[error("closed-form sums are only defined for rescaled kernels")]
    NotRescaled,

    #[error("invalid observations: {0}")]
    InvalidData(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("table format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
