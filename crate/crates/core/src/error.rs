use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{function}: argument {x} outside the domain ({requirement})")]
    Domain {
        function: &'static str,
        x: f64,
        requirement: &'static str,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("svd did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    SvdConvergence { sweeps: usize, off_norm: f64 },

    #[error("singular system: largest singular value is zero")]
    SingularSystem,

    #[error("stability ratio undefined: zero denominator")]
    ZeroDenominator,

    #[error("measurement is identically zero")]
    ZeroData,

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no training samples left after filtering for network {0}")]
    EmptyDataset(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
