//! The halving routine for `H`-stage problems and its meta loop.
//!
//! Stages are 0-based throughout: stage `k` of a value list holds the
//! value-to-go with `H − k` steps remaining, and the value after the last
//! stage is zero. Estimates for stage `k` target the continuation
//! `P v_{k+1}`, so `Q_k = r + w_k + g_k ≈ r + P v_{k+1}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{max_abs, FiniteHorizonMdp, NonStationaryPolicy, Policy, QTable, TabularModel};
use crate::oracle::GenerativeOracle;
use crate::variance::{one_step_variance, BoundCheck};
use crate::vrqvi::{
    check_delta, check_epsilon, count_mean, meta_rounds, moments, sample_count, shifted_estimate, MonotoneCheck,
    VqviConstants,
};

/// Which input stage the coarse estimate `w_k` is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum StagePairing {
    /// `w_k ≈ P v⁰_{k+1}`, matching the correction term `g_k`.
    #[default]
    Continuation,
    /// `w_k ≈ P v⁰_k`.
    SameStage,
}

/// How the initialization samples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum InitSampling {
    /// One batch of `m1` samples per pair serves every stage.
    #[default]
    Shared,
    /// A fresh batch of `m1` samples per pair for each stage.
    PerStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct FhOptions {
    pub pairing: StagePairing,
    pub init: InitSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FhSchedule {
    pub horizon: usize,
    pub u: f64,
    pub delta: f64,
    pub m1: u64,
    pub m2: u64,
    pub alpha1: f64,
}

impl FhSchedule {
    /// Samples one call draws in total.
    pub fn samples(&self, n_pairs: usize, init: InitSampling) -> u64 {
        let h = self.horizon as u64;
        let init_batches = match init {
            InitSampling::Shared => 1,
            InitSampling::PerStage => h,
        };
        n_pairs as u64 * (init_batches * self.m1 + h * self.m2)
    }
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::param("horizon", 0.0, "must be at least 1"));
    }
    Ok(())
}

/// `m1 = ⌈κ c2 H³ u⁻² ln(8|S||A|/δ)⌉`, `m2 = ⌈κ c3 H² ln(2H|S||A|/δ)⌉`.
pub fn fh_derive_schedule(
    horizon: usize,
    u: f64,
    delta: f64,
    n_states: usize,
    n_actions: usize,
    consts: &VqviConstants,
) -> Result<FhSchedule> {
    check_horizon(horizon)?;
    check_delta(delta)?;
    consts.validate()?;
    let h = horizon as f64;
    if !(u > 0.0 && u <= h) {
        return Err(Error::param("u", u, "must lie in (0, H]"));
    }
    let sa = (n_states * n_actions) as f64;
    let l1 = (8.0 * sa / delta).ln();
    let m1 = sample_count("m1", consts.kappa * consts.c2 * h.powi(3) * l1 / (u * u))?;
    let m2 = sample_count("m2", consts.kappa * consts.c3 * h * h * (2.0 * h * sa / delta).ln())?;
    Ok(FhSchedule { horizon, u, delta, m1, m2, alpha1: l1 / m1 as f64 })
}

#[derive(Debug, Clone, Serialize)]
pub struct FhStageRecord {
    pub w_tilde: QTable,
    pub sigma_hat: QTable,
    pub w: QTable,
    pub g: QTable,
    pub q: QTable,
    /// Greedy values of `Q_k` before the fallback to the input stage.
    pub shadow_values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FhHalfErrDiagnostics {
    pub schedule: FhSchedule,
    pub options: FhOptions,
    /// Indexed by stage.
    pub stages: Vec<FhStageRecord>,
    pub samples_drawn: u64,
}

#[derive(Debug, Clone)]
pub struct FhHalfErrOutput {
    pub values: Vec<Vec<f64>>,
    pub policy: NonStationaryPolicy,
    pub diagnostics: FhHalfErrDiagnostics,
}

/// Stage list padded with the terminal zero vector.
fn with_terminal(stages: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut out = stages.to_vec();
    out.push(vec![0.0; n]);
    out
}

/// One halving call on an `H`-stage problem. Needs
/// `v⁰_k ≤ r_{π⁰(·,k)} + P_{π⁰(·,k)} v⁰_{k+1}` and `v*_k − v⁰_k ≤ u` for
/// every stage.
pub fn fh_half_err(
    oracle: &mut GenerativeOracle,
    v0: &[Vec<f64>],
    pi0: &NonStationaryPolicy,
    u: f64,
    delta: f64,
    consts: &VqviConstants,
    options: FhOptions,
) -> Result<FhHalfErrOutput> {
    let (n, k) = (oracle.n_states(), oracle.n_actions());
    let horizon = v0.len();
    check_horizon(horizon)?;
    for stage in v0 {
        if stage.len() != n {
            return Err(Error::Dimension { what: "stage values", expected: n, got: stage.len() });
        }
        if let Some(&x) = stage.iter().find(|x| !x.is_finite()) {
            return Err(Error::param("initial value", x, "must be finite"));
        }
    }
    pi0.check(n, k, horizon)?;
    let schedule = fh_derive_schedule(horizon, u, delta, n, k, consts)?;
    let before = oracle.total_samples();

    let padded0 = with_terminal(v0, n);
    let targets: Vec<&[f64]> = (0..horizon)
        .map(|h| match options.pairing {
            StagePairing::Continuation => padded0[h + 1].as_slice(),
            StagePairing::SameStage => padded0[h].as_slice(),
        })
        .collect();
    let squares: Vec<Vec<f64>> = targets.iter().map(|t| t.iter().map(|x| x * x).collect()).collect();
    let (m1, alpha1) = (schedule.m1, schedule.alpha1);

    // moments[h][pair]
    let stage_moments: Vec<Vec<(f64, f64)>> = match options.init {
        InitSampling::Shared => {
            let per_pair = oracle.map_pairs(|p| {
                let counts = p.counts(m1);
                (0..horizon).map(|h| moments(&counts, m1, targets[h], &squares[h])).collect::<Vec<_>>()
            });
            (0..horizon).map(|h| per_pair.iter().map(|m| m[h]).collect()).collect()
        }
        InitSampling::PerStage => (0..horizon)
            .map(|h| oracle.map_pairs(|p| moments(&p.counts(m1), m1, targets[h], &squares[h])))
            .collect(),
    };

    let reward = oracle.reward_table();
    let shift = u / (8.0 * horizon as f64);
    let m2 = schedule.m2;
    let mut values = vec![Vec::new(); horizon];
    let mut stages_pi = vec![Policy::constant(n, 0); horizon];
    let mut records = Vec::with_capacity(horizon);
    let mut next = vec![0.0; n];
    for h in (0..horizon).rev() {
        let mom = &stage_moments[h];
        let scale = max_abs(targets[h]);
        let w_tilde = QTable::from_vec(n, k, mom.iter().map(|m| m.0).collect())?;
        let sigma_hat = QTable::from_vec(n, k, mom.iter().map(|m| m.1).collect())?;
        let w = QTable::from_vec(n, k, mom.iter().map(|&(m, s)| shifted_estimate(m, s, alpha1, scale)).collect())?;

        let diff: Vec<f64> = next.iter().zip(&padded0[h + 1]).map(|(v, b)| v - b).collect();
        let g = QTable::from_vec(n, k, oracle.map_pairs(|p| count_mean(&p.counts(m2), m2, &diff) - shift))?;
        let q = QTable::from_fn(n, k, |s, a| reward[(s, a)] + w[(s, a)] + g[(s, a)]);
        let (shadow_values, shadow_pi) = q.greedy();
        let mut v = v0[h].clone();
        let mut pi = pi0.stage(h).clone();
        for s in 0..n {
            if shadow_values[s] > v[s] {
                v[s] = shadow_values[s];
                pi[s] = shadow_pi[s];
            }
        }
        next = v.clone();
        values[h] = v;
        stages_pi[h] = pi;
        records.push(FhStageRecord { w_tilde, sigma_hat, w, g, q, shadow_values });
    }
    records.reverse();

    let diagnostics = FhHalfErrDiagnostics {
        schedule,
        options,
        stages: records,
        samples_drawn: oracle.total_samples() - before,
    };
    Ok(FhHalfErrOutput { values, policy: NonStationaryPolicy::new(stages_pi), diagnostics })
}

#[derive(Debug, Clone, Serialize)]
pub struct FhSolveReport {
    pub horizon: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub delta_per_call: f64,
    pub constants: VqviConstants,
    pub calls: Vec<FhHalfErrDiagnostics>,
    pub total_samples: u64,
}

impl FhSolveReport {
    pub fn meta_rounds(&self) -> usize {
        self.calls.len()
    }
}

#[derive(Debug, Clone)]
pub struct FhSolveOutput {
    pub values: Vec<Vec<f64>>,
    pub policy: NonStationaryPolicy,
    pub report: FhSolveReport,
}

/// Halving loop from zero values with `u = H, H/2, …`,
/// `max(1, ⌈log₂(H/ε)⌉)` calls, each with fresh samples.
pub fn fh_solve(
    oracle: &mut GenerativeOracle,
    horizon: usize,
    epsilon: f64,
    delta: f64,
    consts: &VqviConstants,
    options: FhOptions,
) -> Result<FhSolveOutput> {
    check_horizon(horizon)?;
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    consts.validate()?;
    let h = horizon as f64;
    let rounds = meta_rounds(h, epsilon);
    let delta_call = delta / rounds as f64;
    let before = oracle.total_samples();
    let n = oracle.n_states();

    let mut values = vec![vec![0.0; n]; horizon];
    let mut policy = NonStationaryPolicy::constant(n, horizon, 0);
    let mut calls = Vec::with_capacity(rounds);
    let mut u = h;
    for _ in 0..rounds {
        let out = fh_half_err(oracle, &values, &policy, u, delta_call, consts, options)?;
        values = out.values;
        policy = out.policy;
        calls.push(out.diagnostics);
        u /= 2.0;
    }
    let report = FhSolveReport {
        horizon,
        epsilon,
        delta,
        delta_per_call: delta_call,
        constants: *consts,
        calls,
        total_samples: oracle.total_samples() - before,
    };
    Ok(FhSolveOutput { values, policy, report })
}

/// Stage values of a non-stationary policy by backward recursion.
pub fn fh_policy_evaluation(mdp: &FiniteHorizonMdp, policy: &NonStationaryPolicy) -> Result<Vec<Vec<f64>>> {
    let (n, horizon) = (mdp.n_states(), mdp.horizon());
    policy.check(n, mdp.n_actions(), horizon)?;
    let mut values = vec![Vec::new(); horizon];
    let mut next = vec![0.0; n];
    for h in (0..horizon).rev() {
        let v: Vec<f64> = (0..n)
            .map(|s| {
                let a = policy.action(s, h);
                mdp.reward(s, a) + mdp.expectation(s, a, &next)
            })
            .collect();
        next = v.clone();
        values[h] = v;
    }
    Ok(values)
}

/// Whether `v_k ≤ r_{π(·,k)} + P_{π(·,k)} v_{k+1}` for every stage, within `1e-9`.
pub fn fh_check_monotone(
    mdp: &FiniteHorizonMdp,
    values: &[Vec<f64>],
    policy: &NonStationaryPolicy,
) -> Result<MonotoneCheck> {
    let (n, horizon) = (mdp.n_states(), mdp.horizon());
    policy.check(n, mdp.n_actions(), horizon)?;
    if values.len() != horizon {
        return Err(Error::Dimension { what: "stages", expected: horizon, got: values.len() });
    }
    let padded = with_terminal(values, n);
    let mut worst = f64::INFINITY;
    for h in 0..horizon {
        for s in 0..n {
            let a = policy.action(s, h);
            worst = worst.min(mdp.reward(s, a) + mdp.expectation(s, a, &padded[h + 1]) - padded[h][s]);
        }
    }
    Ok(MonotoneCheck { holds: worst >= -1e-9, worst_slack: worst })
}

/// Accumulated one-step deviations of a non-stationary policy:
/// `X_k = √σ_{v^π_{k+1}} + P^π_{k+1} X_{k+1}` over `S × A`, with `X` zero
/// past the last stage. `lhs` is the largest entry over all stages and
/// `rhs = H^{3/2}`.
pub fn fh_variance_sum(mdp: &FiniteHorizonMdp, policy: &NonStationaryPolicy) -> Result<BoundCheck> {
    let (n, k, horizon) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let values = with_terminal(&fh_policy_evaluation(mdp, policy)?, n);
    let mut x = QTable::zeros(n, k);
    let mut worst = 0.0_f64;
    for h in (0..horizon).rev() {
        let root = one_step_variance(mdp, &values[h + 1]).map(f64::sqrt);
        let carried: Vec<f64> = if h + 1 < horizon {
            (0..n).map(|s| x[(s, policy.action(s, h + 1))]).collect()
        } else {
            vec![0.0; n]
        };
        x = QTable::from_fn(n, k, |s, a| root[(s, a)] + mdp.expectation(s, a, &carried));
        worst = worst.max(x.max_abs());
    }
    Ok(BoundCheck::new(worst, (horizon as f64).powf(1.5)))
}
