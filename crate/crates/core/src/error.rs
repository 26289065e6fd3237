use thiserror::Error;

use crate::qoe::{Resolution, VideoType};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rate {rate} kbps hits the pole of the satisfaction curve (offset {offset})")]
    Singularity { rate: f64, offset: f64 },

    #[error("rate must be positive, got {0}")]
    InvalidRate(f64),

    #[error("satisfaction {target} is unreachable (curve asymptote {asymptote})")]
    UnreachableTarget { target: f64, asymptote: f64 },

    #[error("satisfaction {target} lies below the curve at zero rate")]
    TargetBelowCurve { target: f64 },

    #[error("no reachable satisfaction level for {video} at {resolution}")]
    EmptyGrid { video: VideoType, resolution: Resolution },

    #[error("no satisfaction parameters for {video} displayed at {display}, encoded at {encoded}")]
    MissingParams { video: VideoType, display: Resolution, encoded: Resolution },

    #[error("invalid satisfaction table: {0}")]
    InvalidTable(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("only {available} eligible users, {requested} requested")]
    Shortfall { requested: usize, available: usize },

    #[error("users with no representation in their window: {0:?}")]
    UnservableUsers(Vec<u32>),

    #[error("instance too large for enumeration: {triples} triples, {users} users")]
    TooLarge { triples: usize, users: usize },

    #[error("linear program backend failed: {0}")]
    Backend(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
