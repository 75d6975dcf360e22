use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("row {row} has zero norm; cosine similarity is undefined")]
    ZeroNorm { row: usize },

    #[error("centroid of cluster {cluster} is the zero vector")]
    ZeroCentroid { cluster: usize },

    #[error("no labeled (non-noise) points")]
    NoLabeledPoints,

    #[error("label {label} out of range for {n_categories} categories")]
    LabelOutOfRange { label: usize, n_categories: usize },

    #[error("set is empty")]
    EmptySet,

    #[error("loss became non-finite at step {step}")]
    Divergence { step: usize },

    #[error("allocation of {requested_bytes} bytes exceeds cap of {cap_bytes} bytes")]
    Capacity {
        requested_bytes: usize,
        cap_bytes: usize,
    },

    #[error("malformed header (expected `{expected}`): {line:?}")]
    MalformedHeader { expected: &'static str, line: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
