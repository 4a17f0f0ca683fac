use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("line {line}: malformed line: {msg}")]
    MalformedLine { line: usize, msg: String },

    #[error("line {line}: embedding dimension mismatch: expected {expected}, got {got}")]
    EmbeddingDim {
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("invalid tag label {label:?} at position {pos}: expected O, B-X or I-X")]
    BadLabel { label: String, pos: usize },

    #[error("BIO violation(s): {0:?}")]
    BioViolation(Vec<crate::corpus::BioViolation>),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("sequence length mismatch: gold {gold} vs predicted {pred}")]
    LengthMismatch { gold: usize, pred: usize },

    #[error("negative entry {value} at index {index} passed to normalize")]
    NegativeEntry { index: usize, value: f64 },

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {diagnostics}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        diagnostics: String,
    },

    #[error("checkpoint version mismatch: expected {expected:?}, found {found:?}")]
    CkptVersion { expected: String, found: String },

    #[error("checkpoint truncated while reading {section}")]
    CkptTruncated { section: String },

    #[error("checkpoint checksum failure in section {section}")]
    CkptChecksum { section: String },

    #[error("checkpoint malformed: {0}")]
    CkptMalformed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
