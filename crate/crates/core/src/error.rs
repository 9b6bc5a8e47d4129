use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("binomial C({n}, {k}) overflows usize")]
    Overflow { n: usize, k: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown system `{0}` (expected lorenz, rossler or hyperchaos)")]
    UnknownSystem(String),

    #[error("integration blew up at step {step}: state norm {norm:e}")]
    BlowUp { step: usize, norm: f64 },

    #[error("trajectory too short: need at least {needed} samples, have {have}")]
    TooShort { needed: usize, have: usize },

    #[error("corruption fraction {target} unreachable: minimum bandwidth {b_min} exceeds {m} rows")]
    FractionUnreachable { target: f64, b_min: usize, m: usize },

    #[error("dictionary is rank deficient: rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("solver diverged at iteration {iteration}: non-finite iterate")]
    Diverged { iteration: usize },

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("no feasible outlier support of size <= {0}")]
    NoFeasibleSupport(usize),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
