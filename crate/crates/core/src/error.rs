use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("multichannel unsupported ({0} channels)")]
    MultichannelUnsupported(u16),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("degenerate emission at frame {0}")]
    DegenerateEmission(usize),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid autocorrelation: r[0] = {0}")]
    InvalidAutocorrelation(f64),

    #[error("no voiced overlap")]
    NoVoicedOverlap,

    #[error("invalid excitation distribution at frame {frame}, sample {sample}")]
    InvalidDistribution { frame: usize, sample: usize },

    #[error("alignment infeasible: {0}")]
    Alignment(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
