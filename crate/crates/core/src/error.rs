use thiserror::Error;

use crate::game::{Player, StateId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("transition undefined at state {state} for actions ({action1}, {action2})")]
    UndefinedTransition {
        state: StateId,
        action1: usize,
        action2: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e}, tolerance {tol:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("state {state} has no available action for {player:?} in the restricted game")]
    DeadState { state: StateId, player: Player },

    #[error("strategy has no distribution at visited state {0}")]
    UndefinedStrategy(StateId),

    #[error("region mismatch: {0}")]
    RegionMismatch(String),

    #[error("almost-sure containment violated at state {0}: solver inconsistency")]
    ContainmentViolation(StateId),

    #[error("observation {from} -> {to} (P2 action {action2}) is impossible under both hypotheses")]
    ImpossibleObservation {
        from: StateId,
        action2: usize,
        to: StateId,
    },

    #[error("state {0} lies in an almost-sure winning region")]
    OutOfScope(StateId),

    #[error("not a grid game")]
    NotGrid,

    #[error("{0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
