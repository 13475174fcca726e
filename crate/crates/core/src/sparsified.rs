//! The empirical-model baseline: draw `m` samples per pair, keep the
//! empirical next-state frequencies as a sparse model, and solve that model
//! exactly.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{exact_value_iteration, greedy_policy};
use crate::mdp::{to_json_string, Dmdp, Policy};
use crate::oracle::GenerativeOracle;
use crate::vrqvi::{check_delta, check_epsilon, check_gamma, sample_count};

/// Empirical model with rows stored as `(next_state, count)` pairs; the
/// probability of an entry is `count / m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsifiedMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    samples_per_pair: u64,
    reward: Vec<f64>,
    rows: Vec<Vec<(usize, u64)>>,
}

impl SparsifiedMdp {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn samples_per_pair(&self) -> u64 {
        self.samples_per_pair
    }

    /// Support of `P̂_{s,a}` in increasing state order, with counts.
    pub fn row(&self, state: usize, action: usize) -> &[(usize, u64)] {
        &self.rows[state * self.n_actions + action]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> Dmdp {
        let (n, k) = (self.n_states, self.n_actions);
        let m = self.samples_per_pair as f64;
        let mut transition = vec![0.0; n * k * n];
        for (pair, row) in self.rows.iter().enumerate() {
            for &(next, count) in row {
                transition[pair * n + next] = count as f64 / m;
            }
        }
        Dmdp::new(n, k, self.gamma, self.reward.clone(), transition).expect("empirical rows are stochastic")
    }

    /// The dense expansion in the MDP file format.
    pub fn to_json_string(&self) -> String {
        to_json_string(&self.to_dense())
    }
}

/// Draws exactly `m` samples per pair and records their frequencies.
pub fn sparsify(oracle: &mut GenerativeOracle, m: u64) -> Result<SparsifiedMdp> {
    let gamma = oracle.gamma().ok_or(Error::MissingDiscount)?;
    if m == 0 {
        return Err(Error::param("m", 0.0, "must be at least 1"));
    }
    let rows = oracle.map_pairs(|p| {
        p.counts(m).into_iter().enumerate().filter(|&(_, c)| c > 0).collect::<Vec<_>>()
    });
    Ok(SparsifiedMdp {
        n_states: oracle.n_states(),
        n_actions: oracle.n_actions(),
        gamma,
        samples_per_pair: m,
        reward: oracle.reward_table().as_slice().to_vec(),
        rows,
    })
}

/// `⌈c (1 − γ)^{-3} ε^{-2} ln(|S||A| / δ)⌉`.
pub fn schedule_m(gamma: f64, epsilon: f64, delta: f64, n_states: usize, n_actions: usize, c_sparse: f64) -> Result<u64> {
    check_gamma(gamma)?;
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    if !(c_sparse > 0.0 && c_sparse.is_finite()) {
        return Err(Error::param("c_sparse", c_sparse, "must be positive and finite"));
    }
    let sa = (n_states * n_actions) as f64;
    sample_count("m", c_sparse * (1.0 - gamma).powi(-3) * (sa / delta).ln() / (epsilon * epsilon))
}

#[derive(Debug, Clone, Serialize)]
pub struct SparsifiedReport {
    pub samples_per_pair: u64,
    pub nnz: usize,
    pub vi_iterations: usize,
    pub total_samples: u64,
}

#[derive(Debug, Clone)]
pub struct SparsifiedOutput {
    pub values: Vec<f64>,
    pub policy: Policy,
    pub model: SparsifiedMdp,
    pub report: SparsifiedReport,
}

/// Solves the empirical model built from `m` samples per pair to within `tol`.
pub fn solve_with_samples(oracle: &mut GenerativeOracle, m: u64, tol: f64) -> Result<SparsifiedOutput> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::param("tol", tol, "must be positive and finite"));
    }
    let before = oracle.total_samples();
    let model = sparsify(oracle, m)?;
    let dense = model.to_dense();
    let (values, vi_iterations) = exact_value_iteration(&dense, tol);
    let policy = greedy_policy(&dense, &values);
    let report = SparsifiedReport {
        samples_per_pair: m,
        nnz: model.nnz(),
        vi_iterations,
        total_samples: oracle.total_samples() - before,
    };
    Ok(SparsifiedOutput { values, policy, model, report })
}

/// [`solve_with_samples`] with `m` from [`schedule_m`].
pub fn solve_via_sparsified(
    oracle: &mut GenerativeOracle,
    epsilon: f64,
    delta: f64,
    c_sparse: f64,
    tol: f64,
) -> Result<SparsifiedOutput> {
    let gamma = oracle.gamma().ok_or(Error::MissingDiscount)?;
    let m = schedule_m(gamma, epsilon, delta, oracle.n_states(), oracle.n_actions(), c_sparse)?;
    solve_with_samples(oracle, m, tol)
}
