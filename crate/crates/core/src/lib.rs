//! Solvers for discounted and finite-horizon Markov decision processes that
//! only see the transition kernel through a generative sampling oracle.
//!
//! The centerpiece is [`vrqvi`]: a variance-reduced Q-value iteration that
//! keeps its value estimates monotone (every iterate is a certified lower
//! bound on the value of its own policy) and halves the optimality gap per
//! call. [`vrqvi::solve`] chains those calls into an ε-optimal policy.
//!
//! Supporting modules:
//!
//! - [`mdp`]: tabular models, validation, instance generators, JSON files.
//! - [`oracle`]: alias-table generative model with per-(s,a) counter-based
//!   streams and exact sample accounting.
//! - [`exact`]: full-model Bellman operators, value/policy iteration and
//!   backward induction; these are the ground truth for every check.
//! - [`variance`]: one-step and total variance, plus the square-root and
//!   variance-bound inequalities as computable diagnostics.
//! - [`sparsified`]: the empirical-model baseline.
//! - [`finite_horizon`]: the H-stage halving routine and its meta loop.

pub mod alias;
pub mod error;
pub mod exact;
pub mod finite_horizon;
pub mod linalg;
pub mod mdp;
pub mod oracle;
pub mod sparsified;
pub mod variance;
pub mod vrqvi;

#[cfg(any(test, feature = "oracles"))]
pub mod oracles;

pub use error::{Error, Result};
pub use mdp::{Dmdp, FiniteHorizonMdp, NonStationaryPolicy, Policy, QTable, TabularModel};
pub use oracle::{Execution, GenerativeOracle, SampleCount};
pub use vrqvi::VqviConstants;
