use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its mathematical domain (angle out of range,
    /// K too large for the covariance dimension, non-Hermitian input, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A structurally invalid configuration, named after the violated constraint.
    #[error("configuration error: {0}")]
    Config(String),

    /// Matrix/vector shapes do not line up.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },

    /// The stacked reconstruction operator does not determine the unknowns.
    #[error(
        "identifiability error: numerical rank {rank} < {required} required \
         (condition estimate {condition:.3e})"
    )]
    Identifiability {
        rank: usize,
        required: usize,
        condition: f64,
    },

    /// The spectrum exposed fewer local maxima than requested sources.
    #[error("peak deficit: found {found} local maxima, requested {requested}")]
    PeakDeficit { found: usize, requested: usize },

    /// The snapshot source ran dry mid-scan.
    #[error("scan underrun: snapshot source exhausted after {slots_delivered} slots")]
    ScanUnderrun { slots_delivered: usize },

    /// Not enough stacked frames for the virtual-array estimator.
    #[error("insufficient frames: have {have}, need at least {need}")]
    InsufficientFrames { have: usize, need: usize },

    /// Config-file syntax or semantic error with a line reference.
    #[error("config error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
