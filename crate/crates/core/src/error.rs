use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite {0} input")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("budget {wealth} cannot purchase the survival floor costing {floor_cost}")]
    InfeasibleBudget { wealth: f64, floor_cost: f64 },

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("no feasible point satisfies the constraints")]
    Infeasible,

    #[error("agent {agent}: transfer problem unbounded along activity {activity}")]
    UnboundedActivity { agent: usize, activity: usize },

    #[error("agent {agent}: activity plan consumes more of good {good} than is available")]
    TransferExceedsEndowment { agent: usize, good: usize },

    #[error("agent {agent}: progressive hedging stopped after {iterations} iterations with residual {residual:e}")]
    HedgingMaxIter {
        agent: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("phase II found no improving point in {evals} evaluations")]
    Phase2Stalled { evals: usize },

    #[error("invalid economy: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidEconomy(Vec<Violation>),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },

    #[error("cannot write output: {0}")]
    Write(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
