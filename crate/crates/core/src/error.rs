use thiserror::Error;

use crate::mdp::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("state-action pair ({state}, {action}) is out of range for a {n_states}x{n_actions} model")]
    PairOutOfRange {
        state: usize,
        action: usize,
        n_states: usize,
        n_actions: usize,
    },

    #[error("policy picks action {action} at state {state}, but the model has {n_actions} actions")]
    InvalidPolicy {
        state: usize,
        action: usize,
        n_actions: usize,
    },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("model violates {} invariant(s); first: {}", .0.len(), .0[0])]
    InvalidModel(Vec<Violation>),

    #[error("the oracle has no discount factor (it was built from a finite-horizon model)")]
    MissingDiscount,

    #[error("malformed MDP file: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}
