use thiserror::Error;

use crate::mdp::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("invalid model: {0}")]
    Invalid(ValidationReport),

    #[error("value function has {len} entries but transition targets state {target}")]
    MissingValue { target: usize, len: usize },

    #[error("action {action} is not feasible at state {state}")]
    InfeasibleAction { state: usize, action: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value iteration did not converge at alpha={alpha} after {iterations} iterations (last gap {gap:e})")]
    NonConvergence {
        alpha: f64,
        iterations: usize,
        gap: f64,
    },

    #[error("w* = +inf assumption violated: m_alpha is infinite at alpha={alpha}")]
    InfiniteOptimalAverage { alpha: f64 },

    #[error("state {state} has infinite u; a finite relative value is required")]
    InfiniteRelativeValue { state: usize },

    #[error("stage {stage} is not representable in double precision (1 - alpha = {gap:e})")]
    DegenerateStage { stage: usize, gap: f64 },

    #[error("state budget {budget} is too small for stage 1 ({needed} states needed)")]
    BudgetTooSmall { budget: usize, needed: u64 },

    #[error("sup scan for m_alpha at alpha={alpha} hit the stage cap {cap}; partial supremum {partial:e}, tail bound {tail_bound:e}")]
    StageCap {
        alpha: f64,
        cap: usize,
        partial: f64,
        tail_bound: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
