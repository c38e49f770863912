use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("{what} index {index} out of range 1..={len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("distance must be strictly positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("invalid phase schedule: {0}")]
    Schedule(String),

    /// The stacked observation cannot identify the channel.
    #[error("channel not estimable: {0}")]
    Estimability(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is materially non-PSD: clamped eigenvalue mass {clamped:.3e} vs trace {trace:.3e}")]
    NotPsd { clamped: f64, trace: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pilot book requires tau_p >= K (tau_p = {tau_p}, K = {users})")]
    PilotLength { tau_p: usize, users: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
