use thiserror::Error;

use crate::grid::SubdomainId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("index {index:?} out of range for level {level} with {dims:?} nodes per axis")]
    IndexOutOfRange {
        level: usize,
        index: [usize; 3],
        dims: [usize; 3],
    },

    #[error("level {0} does not exist")]
    NoSuchLevel(usize),

    #[error("levels {fine} and {coarse} are not adjacent")]
    LevelMismatch { fine: usize, coarse: usize },

    #[error("subdomain {id} out of range ({count} subdomains)")]
    InvalidSubdomain { id: SubdomainId, count: usize },

    #[error("every subdomain is faulty; no healthy region remains")]
    NoHealthyRegion,

    #[error("interface node {node} on level {level} has no surviving redundant copy")]
    UnrecoverableInterface { level: usize, node: usize },

    #[error("region on level {0} has no interior unknowns")]
    EmptyRegion(usize),

    #[error("Neumann region requires interface flux data")]
    MissingFlux,

    #[error("dense assembly refused: {unknowns} unknowns exceeds the limit of {limit}")]
    TooLarge { unknowns: usize, limit: usize },

    #[error("conjugate gradient breakdown at iteration {iteration}: p'Ap = {curvature:e}")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("fault at cycle {after_cycle} fires before the previous recovery finished (ends at {busy_until})")]
    ScheduleConflict { after_cycle: usize, busy_until: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("cycle advantage undefined for k_F = 0")]
    ZeroFaultCycle,

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("worker pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Json(_))
    }
}
