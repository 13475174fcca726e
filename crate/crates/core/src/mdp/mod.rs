//! Tabular MDP data model.
//!
//! Transition tensors are stored dense and row-major: the distribution over
//! next states for `(s, a)` is the contiguous slice at
//! `(s * n_actions + a) * n_states`. Rewards are deterministic per `(s, a)`
//! and live in `[0, 1]`.

mod generate;
mod io;

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{generate_chain, generate_random, RandomSpec};
pub use io::{from_json_str, load, save, to_json_string};

/// Row sums must be within this distance of one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Read access shared by every tabular model (discounted, finite horizon,
/// densified empirical models).
pub trait TabularModel {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Distribution over next states for `(s, a)`.
    fn transition_row(&self, state: usize, action: usize) -> &[f64];
    fn reward(&self, state: usize, action: usize) -> f64;

    fn n_pairs(&self) -> usize {
        self.n_states() * self.n_actions()
    }

    /// `P_{s,a}ᵀ v`.
    fn expectation(&self, state: usize, action: usize, values: &[f64]) -> f64 {
        dot(self.transition_row(state, action), values)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// A single broken model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptySpace { n_states: usize, n_actions: usize },
    Shape { what: &'static str, expected: usize, got: usize },
    Gamma(f64),
    Horizon(usize),
    NonFiniteProbability { state: usize, action: usize, next: usize },
    NegativeProbability { state: usize, action: usize, next: usize, value: f64 },
    RowSum { state: usize, action: usize, sum: f64 },
    NonFiniteReward { state: usize, action: usize },
    RewardOutOfRange { state: usize, action: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::EmptySpace { n_states, n_actions } => {
                write!(f, "empty model ({n_states} states, {n_actions} actions)")
            }
            Violation::Shape { what, expected, got } => {
                write!(f, "{what} has length {got}, expected {expected}")
            }
            Violation::Gamma(g) => write!(f, "gamma {g} outside (0,1)"),
            Violation::Horizon(h) => write!(f, "horizon {h} must be at least 1"),
            Violation::NonFiniteProbability { state, action, next } => {
                write!(f, "probability ({state},{action})->{next} is not finite")
            }
            Violation::NegativeProbability { state, action, next, value } => {
                write!(f, "probability ({state},{action})->{next} is negative ({value})")
            }
            Violation::RowSum { state, action, sum } => {
                write!(f, "row ({state},{action}) sums to {sum}")
            }
            Violation::NonFiniteReward { state, action } => {
                write!(f, "reward ({state},{action}) is not finite")
            }
            Violation::RewardOutOfRange { state, action, value } => {
                write!(f, "reward ({state},{action}) outside [0,1] ({value})")
            }
        }
    }
}

fn check_kernel(
    n_states: usize,
    n_actions: usize,
    reward: &[f64],
    transition: &[f64],
    out: &mut Vec<Violation>,
) {
    if n_states == 0 || n_actions == 0 {
        out.push(Violation::EmptySpace { n_states, n_actions });
        return;
    }
    let pairs = n_states * n_actions;
    let mut shape_ok = true;
    if reward.len() != pairs {
        out.push(Violation::Shape { what: "reward", expected: pairs, got: reward.len() });
        shape_ok = false;
    }
    if transition.len() != pairs * n_states {
        out.push(Violation::Shape {
            what: "transition",
            expected: pairs * n_states,
            got: transition.len(),
        });
        shape_ok = false;
    }
    if !shape_ok {
        return;
    }
    for s in 0..n_states {
        for a in 0..n_actions {
            let pair = s * n_actions + a;
            let row = &transition[pair * n_states..(pair + 1) * n_states];
            let mut finite = true;
            for (next, &p) in row.iter().enumerate() {
                if !p.is_finite() {
                    out.push(Violation::NonFiniteProbability { state: s, action: a, next });
                    finite = false;
                } else if p < 0.0 {
                    out.push(Violation::NegativeProbability { state: s, action: a, next, value: p });
                }
            }
            if finite {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    out.push(Violation::RowSum { state: s, action: a, sum });
                }
            }
            let r = reward[pair];
            if !r.is_finite() {
                out.push(Violation::NonFiniteReward { state: s, action: a });
            } else if !(0.0..=1.0).contains(&r) {
                out.push(Violation::RewardOutOfRange { state: s, action: a, value: r });
            }
        }
    }
}

/// Discounted MDP `(S, A, P, r, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dmdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    reward: Vec<f64>,
    transition: Vec<f64>,
}

impl Dmdp {
    /// Builds a model from flat row-major storage, rejecting anything that
    /// fails [`Dmdp::validate`].
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        reward: Vec<f64>,
        transition: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self::new_unchecked(n_states, n_actions, gamma, reward, transition);
        let violations = mdp.validate();
        if violations.is_empty() {
            Ok(mdp)
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    /// Builds a model without checking invariants. Call [`Dmdp::validate`]
    /// before handing the result to a solver.
    pub fn new_unchecked(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        reward: Vec<f64>,
        transition: Vec<f64>,
    ) -> Self {
        Self { n_states, n_actions, gamma, reward, transition }
    }

    /// Builds a model from `reward[s][a]` and `transition[s][a][s']`.
    pub fn from_nested(
        gamma: f64,
        reward: &[Vec<f64>],
        transition: &[Vec<Vec<f64>>],
    ) -> Result<Self> {
        let (n_states, n_actions, reward, transition) = flatten(reward, transition)?;
        Self::new(n_states, n_actions, gamma, reward, transition)
    }

    /// Every violated invariant; empty iff the model is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_kernel(self.n_states, self.n_actions, &self.reward, &self.transition, &mut out);
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            out.push(Violation::Gamma(self.gamma));
        }
        out
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `(1 − γ)⁻¹`, the largest possible value.
    pub fn horizon_scale(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    /// Same kernel and rewards, different discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, gamma, self.reward.clone(), self.transition.clone())
    }

    /// Same kernel and rewards read as an undiscounted `horizon`-stage problem.
    pub fn with_horizon(&self, horizon: usize) -> Result<FiniteHorizonMdp> {
        FiniteHorizonMdp::new(
            self.n_states,
            self.n_actions,
            horizon,
            self.reward.clone(),
            self.transition.clone(),
        )
    }
}

impl TabularModel for Dmdp {
    fn n_states(&self) -> usize {
        self.n_states
    }
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.n_actions + action) * self.n_states;
        &self.transition[start..start + self.n_states]
    }
    fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.n_actions + action]
    }
}

/// Undiscounted `H`-stage MDP with a time-homogeneous kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonMdp {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    reward: Vec<f64>,
    transition: Vec<f64>,
}

impl FiniteHorizonMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        reward: Vec<f64>,
        transition: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self { n_states, n_actions, horizon, reward, transition };
        let violations = mdp.validate();
        if violations.is_empty() {
            Ok(mdp)
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    pub fn from_nested(
        horizon: usize,
        reward: &[Vec<f64>],
        transition: &[Vec<Vec<f64>>],
    ) -> Result<Self> {
        let (n_states, n_actions, reward, transition) = flatten(reward, transition)?;
        Self::new(n_states, n_actions, horizon, reward, transition)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_kernel(self.n_states, self.n_actions, &self.reward, &self.transition, &mut out);
        if self.horizon == 0 {
            out.push(Violation::Horizon(0));
        }
        out
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }
}

impl TabularModel for FiniteHorizonMdp {
    fn n_states(&self) -> usize {
        self.n_states
    }
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.n_actions + action) * self.n_states;
        &self.transition[start..start + self.n_states]
    }
    fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.n_actions + action]
    }
}

type Flat = (usize, usize, Vec<f64>, Vec<f64>);

fn flatten(reward: &[Vec<f64>], transition: &[Vec<Vec<f64>>]) -> Result<Flat> {
    let n_states = reward.len();
    let n_actions = reward.first().map_or(0, Vec::len);
    if transition.len() != n_states {
        return Err(Error::Dimension { what: "transition states", expected: n_states, got: transition.len() });
    }
    let mut flat_r = Vec::with_capacity(n_states * n_actions);
    let mut flat_p = Vec::with_capacity(n_states * n_actions * n_states);
    for (r_row, p_rows) in reward.iter().zip(transition) {
        if r_row.len() != n_actions {
            return Err(Error::Dimension { what: "reward actions", expected: n_actions, got: r_row.len() });
        }
        if p_rows.len() != n_actions {
            return Err(Error::Dimension { what: "transition actions", expected: n_actions, got: p_rows.len() });
        }
        flat_r.extend_from_slice(r_row);
        for p in p_rows {
            if p.len() != n_states {
                return Err(Error::Dimension { what: "transition row", expected: n_states, got: p.len() });
            }
            flat_p.extend_from_slice(p);
        }
    }
    Ok((n_states, n_actions, flat_r, flat_p))
}

/// A deterministic stationary policy `π : S → A`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Policy(actions)
    }

    /// Every state takes `action`.
    pub fn constant(n_states: usize, action: usize) -> Self {
        Policy(vec![action; n_states])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    /// Checks that the policy covers `n_states` states with in-range actions.
    pub fn check(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.0.len() != n_states {
            return Err(Error::Dimension { what: "policy", expected: n_states, got: self.0.len() });
        }
        match self.0.iter().position(|&a| a >= n_actions) {
            Some(state) => Err(Error::InvalidPolicy { state, action: self.0[state], n_actions }),
            None => Ok(()),
        }
    }
}

impl Index<usize> for Policy {
    type Output = usize;
    fn index(&self, state: usize) -> &usize {
        &self.0[state]
    }
}

impl IndexMut<usize> for Policy {
    fn index_mut(&mut self, state: usize) -> &mut usize {
        &mut self.0[state]
    }
}

/// A time-indexed policy for an `H`-stage problem. Stage `k` (0-based)
/// decides the action taken with `H − k` steps to go.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NonStationaryPolicy(Vec<Policy>);

impl NonStationaryPolicy {
    pub fn new(stages: Vec<Policy>) -> Self {
        NonStationaryPolicy(stages)
    }

    pub fn constant(n_states: usize, horizon: usize, action: usize) -> Self {
        NonStationaryPolicy(vec![Policy::constant(n_states, action); horizon])
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    pub fn stage(&self, stage: usize) -> &Policy {
        &self.0[stage]
    }

    pub fn stage_mut(&mut self, stage: usize) -> &mut Policy {
        &mut self.0[stage]
    }

    pub fn action(&self, state: usize, stage: usize) -> usize {
        self.0[stage][state]
    }

    pub fn stages(&self) -> &[Policy] {
        &self.0
    }

    pub fn check(&self, n_states: usize, n_actions: usize, horizon: usize) -> Result<()> {
        if self.0.len() != horizon {
            return Err(Error::Dimension { what: "policy stages", expected: horizon, got: self.0.len() });
        }
        self.0.iter().try_for_each(|p| p.check(n_states, n_actions))
    }
}

/// An `S × A` table of reals: Q-functions, variance tables, estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    data: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self { n_states, n_actions, data: vec![value; n_states * n_actions] }
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                data.push(f(s, a));
            }
        }
        Self { n_states, n_actions, data }
    }

    /// Wraps pair-major data (`s * n_actions + a`).
    pub fn from_vec(n_states: usize, n_actions: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_states * n_actions {
            return Err(Error::Dimension { what: "table", expected: n_states * n_actions, got: data.len() });
        }
        Ok(Self { n_states, n_actions, data })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.data[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `v(Q)` and `π(Q)`: row maxima, lowest action index on ties.
    pub fn greedy(&self) -> (Vec<f64>, Policy) {
        let mut values = Vec::with_capacity(self.n_states);
        let mut actions = Vec::with_capacity(self.n_states);
        for s in 0..self.n_states {
            let (a, q) = argmax(self.row(s));
            values.push(q);
            actions.push(a);
        }
        (values, Policy(actions))
    }

    /// Entry-wise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> QTable {
        QTable { n_states: self.n_states, n_actions: self.n_actions, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

impl Index<(usize, usize)> for QTable {
    type Output = f64;
    fn index(&self, (s, a): (usize, usize)) -> &f64 {
        &self.data[s * self.n_actions + a]
    }
}

impl IndexMut<(usize, usize)> for QTable {
    fn index_mut(&mut self, (s, a): (usize, usize)) -> &mut f64 {
        &mut self.data[s * self.n_actions + a]
    }
}

/// Index and value of the maximum; the first index wins ties.
pub fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (a, &q) in row.iter().enumerate().skip(1) {
        if q > row[best] {
            best = a;
        }
    }
    (best, row[best])
}
