use thiserror::Error;

/// Errors raised by the simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {0} (must be 1, 2 or 3)")]
    UnsupportedDimension(usize),

    #[error("radius {radius} exceeds the wrap radius {limit} of the torus")]
    WrapRadius { radius: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("time {t} precedes the state time {t_now}")]
    TimeOrder { t: f64, t_now: f64 },

    #[error("population cap of {cap} births exceeded")]
    PopulationCap { cap: usize },

    #[error("root finding did not converge ({0})")]
    RootFinding(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("argument {value} outside the tabulated range [{lo}, {hi}]")]
    OutOfGrid { value: f64, lo: f64, hi: f64 },

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error("snapshot hash mismatch (stored {stored:016x}, computed {computed:016x})")]
    HashMismatch { stored: u64, computed: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Resource exhaustion as opposed to misconfiguration.
    pub fn is_resource(&self) -> bool {
        matches!(self, Error::PopulationCap { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
