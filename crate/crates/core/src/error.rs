use thiserror::Error;

use crate::exprs::ExprError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix {matrix}[{row}][{col}]: {source}")]
    Expr {
        matrix: &'static str,
        row: usize,
        col: usize,
        #[source]
        source: ExprError,
    },
    #[error("alignment failure at s = {time}: generator {generator} of -E(s)D {reason}")]
    Alignment {
        time: f64,
        generator: usize,
        reason: String,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("level {gamma} is below the minimum {minimum} of the cost")]
    LevelInfeasible { gamma: f64, minimum: f64 },
    #[error("non-finite state for tuple (k = {level}, i = {index}) at node {node}")]
    NonFinite {
        level: usize,
        index: usize,
        node: usize,
    },
    #[error("non-finite derivative at s = {time}")]
    NonFiniteDerivative { time: f64 },
    #[error("half-space conversion needs n <= 3 for a full-dimensional hull (n = {n})")]
    UnsupportedDimension { n: usize },
    #[error("half-space representation is infeasible (violation {violation:e})")]
    InfeasibleRep { violation: f64 },
    #[error("time {t} outside the grid [{t0}, {t_final}]")]
    TimeOutOfRange { t: f64, t0: f64, t_final: f64 },
    #[error("sandwich violation at t = {t}: lower {lower} > upper {upper}")]
    SandwichViolation { t: f64, lower: f64, upper: f64 },
    #[error("bundle version {found} is not supported (expected {expected})")]
    BundleVersion { found: u32, expected: u32 },
    #[error("bundle checksum mismatch or truncated file")]
    BundleChecksum,
    #[error("malformed bundle: {0}")]
    BundleFormat(String),
    #[error("grid of {nodes} nodes exceeds the budget of {budget}")]
    MemoryBudget { nodes: usize, budget: usize },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by bad user input (config, assumptions) rather than by a
    /// failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Expr { .. }
                | Error::Alignment { .. }
                | Error::Invalid(_)
                | Error::LevelInfeasible { .. }
                | Error::TimeOutOfRange { .. }
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
