use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum PacsError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("d not binary: row {row} has value {value}")]
    NotBinary { row: usize, value: String },
    #[error("row {row}, column `{column}`: cannot parse {value:?} as a number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("{0} group empty")]
    EmptyArm(&'static str),
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("complete or quasi-complete separation detected (|alpha|_inf = {norm:.3e} after {iterations} iterations)")]
    Separation { norm: f64, iterations: usize },
    #[error("rank-deficient weighted design; dependent columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("{arm} arm has {size} units, need more than {needed}")]
    ArmTooSmall {
        arm: &'static str,
        size: usize,
        needed: usize,
    },
    #[error("coordinate descent did not converge after {sweeps} sweeps (last max change {last_change:.3e}, kkt violation {kkt:.3e})")]
    NotConverged {
        sweeps: usize,
        last_change: f64,
        kkt: f64,
    },
    #[error("cross-validation fold {fold} has no rows")]
    EmptyFold { fold: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, PacsError>;
