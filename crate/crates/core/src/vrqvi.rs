//! Variance-reduced Q-value iteration.
//!
//! [`half_err`] takes a value/policy pair whose optimality gap is at most `u`
//! and returns one with gap at most `u / 2`. It estimates `P v⁰` once with
//! many samples and then, on every iteration, only the small-range
//! correction `P (v^(i) − v⁰)` with few samples. Both estimates are shifted
//! down so they underestimate their targets, and a state's value is only
//! replaced when the new estimate improves it. Together these keep
//! `v^(i) ≤ T_{π^(i)} v^(i)`, so every iterate is a lower bound on the value
//! of its own policy.
//!
//! [`solve`] starts from zero and calls [`half_err`] with
//! `u = β, β/2, β/4, …` until the gap is below ε.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::bellman_apply_policy;
use crate::mdp::{max_abs, Dmdp, Policy, QTable, TabularModel};
use crate::oracle::GenerativeOracle;

/// Constants of the sample schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VqviConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Multiplier applied to `m1` and `m2` before rounding up.
    pub kappa: f64,
}

impl Default for VqviConstants {
    fn default() -> Self {
        Self { c1: 4.0, c2: 8192.0, c3: 128.0, kappa: 1.0 }
    }
}

impl VqviConstants {
    pub fn with_kappa(self, kappa: f64) -> Self {
        Self { kappa, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3), ("kappa", self.kappa)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::param(name, x, "must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Scalars fixed at the start of a [`half_err`] call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    pub beta: f64,
    pub u: f64,
    pub delta: f64,
    /// Number of iterations `R`.
    pub rounds: usize,
    /// Initialization samples per pair.
    pub m1: u64,
    /// Samples per pair per iteration.
    pub m2: u64,
    pub alpha1: f64,
}

impl Schedule {
    /// Samples one call draws in total.
    pub fn samples(&self, n_pairs: usize) -> u64 {
        n_pairs as u64 * (self.m1 + self.rounds as u64 * self.m2)
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param("delta", delta, "must lie in (0,1)"));
    }
    Ok(())
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param("gamma", gamma, "must lie in (0,1)"));
    }
    Ok(())
}

/// `⌈x⌉` as a sample count, refusing counts that do not fit.
pub(crate) fn sample_count(name: &'static str, x: f64) -> Result<u64> {
    let c = x.ceil();
    if !(c.is_finite() && c >= 1.0 && c < u64::MAX as f64) {
        return Err(Error::param(name, x, "sample count out of range"));
    }
    Ok(c as u64)
}

pub fn derive_schedule(
    gamma: f64,
    u: f64,
    delta: f64,
    n_states: usize,
    n_actions: usize,
    consts: &VqviConstants,
) -> Result<Schedule> {
    check_gamma(gamma)?;
    check_delta(delta)?;
    consts.validate()?;
    let beta = 1.0 / (1.0 - gamma);
    if !(u > 0.0 && u <= beta) {
        return Err(Error::param("u", u, "must lie in (0, 1/(1-gamma)]"));
    }
    let sa = (n_states * n_actions) as f64;
    // The c1 formula vanishes at u = β, where the contraction argument still
    // needs ⌈β ln(4β/u)⌉ + 1 rounds to shrink the initial bias below u/4.
    let nominal = (consts.c1 * beta * (beta / u).ln()).ceil() as usize;
    let required = (beta * (4.0 * beta / u).ln()).ceil() as usize + 1;
    let rounds = nominal.max(required);
    let l1 = (8.0 * sa / delta).ln();
    let m1 = sample_count("m1", consts.kappa * consts.c2 * beta.powi(3) * l1 / (u * u))?;
    let l2 = (2.0 * rounds as f64 * sa / delta).ln();
    let m2 = sample_count("m2", consts.kappa * consts.c3 * beta * beta * l2)?;
    Ok(Schedule { beta, u, delta, rounds, m1, m2, alpha1: l1 / m1 as f64 })
}

/// `Σ_{s'} counts(s') f(s') / n`.
pub(crate) fn count_mean(counts: &[u64], n: u64, f: &[f64]) -> f64 {
    let sum: f64 = counts.iter().zip(f).map(|(&c, &x)| c as f64 * x).sum();
    sum / n as f64
}

/// Empirical mean and clamped variance of `v(s')` from `m` samples.
pub(crate) fn moments(counts: &[u64], m: u64, v: &[f64], v_sq: &[f64]) -> (f64, f64) {
    let mean = count_mean(counts, m, v);
    (mean, (count_mean(counts, m, v_sq) - mean * mean).max(0.0))
}

/// `w̃ − √(2α₁σ̂) − 4α₁^{3/4}‖v⁰‖∞ − (2/3)α₁‖v⁰‖∞`, clipped to `[0, ‖v⁰‖∞]`.
pub(crate) fn shifted_estimate(mean: f64, var: f64, alpha1: f64, scale: f64) -> f64 {
    let w = mean - (2.0 * alpha1 * var).sqrt() - 4.0 * alpha1.powf(0.75) * scale - (2.0 / 3.0) * alpha1 * scale;
    w.clamp(0.0, scale)
}

/// State of one iteration `i ≥ 1`.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    /// `v^(i)` after the monotone fallback.
    pub values: Vec<f64>,
    pub policy: Policy,
    /// Unfiltered greedy values and actions of `Q^(i−1)`; never used for
    /// control.
    pub shadow_values: Vec<f64>,
    pub shadow_policy: Policy,
    /// `g^(i)`.
    pub g: QTable,
    /// `‖v^(i) − v^(i−1)‖∞`.
    pub step: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HalfErrDiagnostics {
    pub schedule: Schedule,
    pub w_tilde: QTable,
    pub sigma_hat: QTable,
    pub w: QTable,
    pub iterations: Vec<IterationRecord>,
    pub samples_drawn: u64,
}

#[derive(Debug, Clone)]
pub struct HalfErrOutput {
    pub values: Vec<f64>,
    pub policy: Policy,
    pub diagnostics: HalfErrDiagnostics,
}

fn check_inputs(oracle: &GenerativeOracle, v0: &[f64], pi0: &Policy) -> Result<()> {
    if v0.len() != oracle.n_states() {
        return Err(Error::Dimension { what: "initial values", expected: oracle.n_states(), got: v0.len() });
    }
    if let Some(&x) = v0.iter().find(|x| !x.is_finite()) {
        return Err(Error::param("initial value", x, "must be finite"));
    }
    pi0.check(oracle.n_states(), oracle.n_actions())
}

/// One halving call. The caller must supply `v⁰ ≤ T_{π⁰} v⁰` and
/// `v* − v⁰ ≤ u`; under those the output gap is at most `u / 2` with
/// probability at least `1 − δ`.
pub fn half_err(
    oracle: &mut GenerativeOracle,
    v0: &[f64],
    pi0: &Policy,
    u: f64,
    delta: f64,
    consts: &VqviConstants,
) -> Result<HalfErrOutput> {
    let gamma = oracle.gamma().ok_or(Error::MissingDiscount)?;
    check_inputs(oracle, v0, pi0)?;
    let (n, k) = (oracle.n_states(), oracle.n_actions());
    let schedule = derive_schedule(gamma, u, delta, n, k, consts)?;
    let before = oracle.total_samples();

    let scale = max_abs(v0);
    let v0_sq: Vec<f64> = v0.iter().map(|x| x * x).collect();
    let (m1, alpha1) = (schedule.m1, schedule.alpha1);
    let init = oracle.map_pairs(|p| moments(&p.counts(m1), m1, v0, &v0_sq));
    let w_tilde = QTable::from_vec(n, k, init.iter().map(|m| m.0).collect())?;
    let sigma_hat = QTable::from_vec(n, k, init.iter().map(|m| m.1).collect())?;
    let w = QTable::from_vec(n, k, init.iter().map(|&(m, s)| shifted_estimate(m, s, alpha1, scale)).collect())?;

    let reward = oracle.reward_table();
    let mut q = QTable::from_fn(n, k, |s, a| reward[(s, a)] + gamma * w[(s, a)]);
    let mut values = v0.to_vec();
    let mut policy = pi0.clone();
    let shift = (1.0 - gamma) * u / 8.0;
    let m2 = schedule.m2;
    let mut iterations = Vec::with_capacity(schedule.rounds);

    for _ in 0..schedule.rounds {
        let (shadow_values, shadow_policy) = q.greedy();
        let mut step = 0.0_f64;
        for s in 0..n {
            if shadow_values[s] > values[s] {
                step = step.max(shadow_values[s] - values[s]);
                values[s] = shadow_values[s];
                policy[s] = shadow_policy[s];
            }
        }
        let diff: Vec<f64> = values.iter().zip(v0).map(|(v, b)| v - b).collect();
        let g = oracle.map_pairs(|p| count_mean(&p.counts(m2), m2, &diff) - shift);
        let g = QTable::from_vec(n, k, g)?;
        q = QTable::from_fn(n, k, |s, a| reward[(s, a)] + gamma * (w[(s, a)] + g[(s, a)]));
        iterations.push(IterationRecord {
            values: values.clone(),
            policy: policy.clone(),
            shadow_values,
            shadow_policy,
            g,
            step,
        });
    }

    let diagnostics = HalfErrDiagnostics {
        schedule,
        w_tilde,
        sigma_hat,
        w,
        iterations,
        samples_drawn: oracle.total_samples() - before,
    };
    Ok(HalfErrOutput { values, policy, diagnostics })
}

/// `max(1, ⌈log₂(scale / ε)⌉)`.
pub(crate) fn meta_rounds(scale: f64, epsilon: f64) -> usize {
    ((scale / epsilon).log2().ceil().max(1.0)) as usize
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::param("epsilon", epsilon, "must be positive and finite"));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub epsilon: f64,
    pub delta: f64,
    /// Failure budget of each call, `δ / R_meta`.
    pub delta_per_call: f64,
    pub constants: VqviConstants,
    pub calls: Vec<HalfErrDiagnostics>,
    pub total_samples: u64,
}

impl SolveReport {
    pub fn meta_rounds(&self) -> usize {
        self.calls.len()
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub values: Vec<f64>,
    pub policy: Policy,
    pub report: SolveReport,
}

/// Halving loop from `v = 0`, `π = 0`. Each call draws fresh samples.
pub fn solve(oracle: &mut GenerativeOracle, epsilon: f64, delta: f64, consts: &VqviConstants) -> Result<SolveOutput> {
    let gamma = oracle.gamma().ok_or(Error::MissingDiscount)?;
    check_gamma(gamma)?;
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    consts.validate()?;
    let beta = 1.0 / (1.0 - gamma);
    let rounds = meta_rounds(beta, epsilon);
    let delta_call = delta / rounds as f64;
    let before = oracle.total_samples();

    let mut values = vec![0.0; oracle.n_states()];
    let mut policy = Policy::constant(oracle.n_states(), 0);
    let mut calls = Vec::with_capacity(rounds);
    let mut u = beta;
    for _ in 0..rounds {
        let out = half_err(oracle, &values, &policy, u, delta_call, consts)?;
        values = out.values;
        policy = out.policy;
        calls.push(out.diagnostics);
        u /= 2.0;
    }
    let report = SolveReport {
        epsilon,
        delta,
        delta_per_call: delta_call,
        constants: *consts,
        calls,
        total_samples: oracle.total_samples() - before,
    };
    Ok(SolveOutput { values, policy, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotoneCheck {
    pub holds: bool,
    /// `min_s [T_π(v)(s) − v(s)]`.
    pub worst_slack: f64,
}

/// Whether `v ≤ T_π(v)` within `1e-9`.
pub fn check_monotone_condition(mdp: &Dmdp, values: &[f64], policy: &Policy) -> Result<MonotoneCheck> {
    if values.len() != mdp.n_states() {
        return Err(Error::Dimension { what: "values", expected: mdp.n_states(), got: values.len() });
    }
    let tv = bellman_apply_policy(mdp, policy, values)?;
    let worst_slack = tv.iter().zip(values).map(|(t, v)| t - v).fold(f64::INFINITY, f64::min);
    Ok(MonotoneCheck { holds: worst_slack >= -1e-9, worst_slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{policy_evaluation, policy_iteration};
    use crate::mdp::{generate_chain, generate_random, RandomSpec};
    use crate::oracle::Execution;
    use proptest::prelude::*;

    fn one_state(r: f64, gamma: f64) -> Dmdp {
        Dmdp::new(1, 1, gamma, vec![r], vec![1.0]).unwrap()
    }

    #[test]
    fn schedule_reference_values() {
        let s = derive_schedule(0.9, 1.0, 0.1, 10, 2, &VqviConstants::default()).unwrap();
        assert!((s.beta - 10.0).abs() < 1e-12);
        assert_eq!(s.rounds, 93);
        let l1 = 1600f64.ln();
        assert_eq!(s.m1, (8192.0 * 1000.0 * l1).ceil() as u64);
        assert_eq!(s.m2, (128.0 * 100.0 * (2.0 * 93.0 * 20.0 / 0.1f64).ln()).ceil() as u64);
        assert!((s.alpha1 - l1 / s.m1 as f64).abs() < 1e-18);
    }

    #[test]
    fn schedule_kappa_scaling() {
        let base = derive_schedule(0.9, 1.0, 0.1, 10, 2, &VqviConstants::default()).unwrap();
        let small = derive_schedule(0.9, 1.0, 0.1, 10, 2, &VqviConstants::default().with_kappa(0.001)).unwrap();
        let ratio = base.m1 as f64 / small.m1 as f64;
        assert!((ratio - 1000.0).abs() < 1.0, "{ratio}");
        assert!(small.alpha1 > base.alpha1 * 999.0);
        assert_eq!(small.rounds, base.rounds);
    }

    #[test]
    fn schedule_boundaries() {
        let c = VqviConstants::default();
        // ⌈2 ln 4⌉ + 1
        assert_eq!(derive_schedule(0.5, 2.0, 0.1, 2, 2, &c).unwrap().rounds, 4);
        // ⌈4·10·ln 1.25⌉ = 9 < ⌈10 ln 5⌉ + 1 = 18
        assert_eq!(derive_schedule(0.9, 8.0, 0.1, 2, 2, &c).unwrap().rounds, 18);
        assert!(derive_schedule(0.5, 0.0, 0.1, 2, 2, &c).is_err());
        assert!(derive_schedule(0.5, 2.0001, 0.1, 2, 2, &c).is_err());
        assert!(derive_schedule(0.5, 1.0, 1.0, 2, 2, &c).is_err());
        assert!(derive_schedule(1.0, 1.0, 0.1, 2, 2, &c).is_err());
        assert!(derive_schedule(0.5, 1.0, 0.1, 2, 2, &c.with_kappa(0.0)).is_err());
    }

    #[test]
    fn one_state_half_err() {
        let m = one_state(1.0, 0.5);
        let mut oracle = GenerativeOracle::new(&m, 1).unwrap();
        let out = half_err(&mut oracle, &[0.0], &Policy::constant(1, 0), 2.0, 0.1, &VqviConstants::default()).unwrap();
        assert!(out.values[0] >= 1.0 && out.values[0] <= 2.0, "{:?}", out.values);
    }

    #[test]
    fn deterministic_chain_is_monotone() {
        let m = generate_chain(2, 0.5, 0.0).unwrap();
        let mut oracle = GenerativeOracle::new(&m, 9).unwrap();
        let out = half_err(&mut oracle, &[0.0; 2], &Policy::constant(2, 0), 2.0, 0.1, &VqviConstants::default()).unwrap();
        let mut prev = vec![0.0; 2];
        for it in &out.diagnostics.iterations {
            assert!(it.values.iter().zip(&prev).all(|(a, b)| a >= b));
            prev = it.values.clone();
        }
        assert_eq!(prev, out.values);
    }

    #[test]
    fn sample_accounting_matches_schedule() {
        let m = generate_random(&RandomSpec { n_states: 3, n_actions: 2, gamma: 0.7, concentration: 1.0, seed: 4 }).unwrap();
        let consts = VqviConstants::default().with_kappa(0.001);
        let mut oracle = GenerativeOracle::new(&m, 5).unwrap();
        let out = solve(&mut oracle, 0.3, 0.1, &consts).unwrap();
        let expected: u64 = out.report.calls.iter().map(|c| c.schedule.samples(6)).sum();
        assert_eq!(out.report.total_samples, expected);
        assert_eq!(oracle.total_samples(), expected);
        for c in &out.report.calls {
            assert_eq!(c.samples_drawn, c.schedule.samples(6));
        }
    }

    #[test]
    fn meta_round_count() {
        assert_eq!(meta_rounds(2.0, 5.0), 1);
        assert_eq!(meta_rounds(2.0, 2.0), 1);
        assert_eq!(meta_rounds(2.0, 0.25), 3);
        assert_eq!(meta_rounds(5.0, 0.2), 5);
    }

    #[test]
    fn large_epsilon_single_call() {
        let m = one_state(0.3, 0.8);
        let mut oracle = GenerativeOracle::new(&m, 0).unwrap();
        let out = solve(&mut oracle, 10.0, 0.1, &VqviConstants::default().with_kappa(0.01)).unwrap();
        assert_eq!(out.report.meta_rounds(), 1);
    }

    #[test]
    fn one_state_solve_is_close() {
        let m = one_state(0.6, 0.5);
        let mut oracle = GenerativeOracle::new(&m, 2).unwrap();
        let out = solve(&mut oracle, 0.1, 0.1, &VqviConstants::default()).unwrap();
        assert!((out.values[0] - 1.2).abs() <= 0.1, "{:?}", out.values);
    }

    #[test]
    fn execution_modes_agree() {
        let m = generate_random(&RandomSpec { n_states: 5, n_actions: 3, gamma: 0.8, concentration: 0.5, seed: 21 }).unwrap();
        let consts = VqviConstants::default().with_kappa(0.002);
        let run = |e| {
            let mut o = GenerativeOracle::new(&m, 77).unwrap().with_execution(e);
            let out = solve(&mut o, 0.5, 0.1, &consts).unwrap();
            (out.values, out.policy, o.sample_count())
        };
        assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
    }

    #[test]
    fn monotone_condition_examples() {
        let m = generate_random(&RandomSpec { n_states: 6, n_actions: 2, gamma: 0.9, concentration: 1.0, seed: 5 }).unwrap();
        let pi = Policy::new(vec![0, 1, 1, 0, 1, 0]);
        assert!(check_monotone_condition(&m, &[0.0; 6], &pi).unwrap().holds);
        let v_pi = policy_evaluation(&m, &pi).unwrap();
        let c = check_monotone_condition(&m, &v_pi, &pi).unwrap();
        assert!(c.holds && c.worst_slack.abs() < 1e-9);
        let (_, v_star) = policy_iteration(&m);
        let above: Vec<f64> = v_star.iter().map(|x| x + 1.0).collect();
        assert!(!check_monotone_condition(&m, &above, &pi).unwrap().holds);
    }

    #[test]
    fn shifted_estimate_is_clipped() {
        assert_eq!(shifted_estimate(5.0, 0.0, 0.0, 3.0), 3.0);
        assert_eq!(shifted_estimate(0.1, 1.0, 0.5, 3.0), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        // Monotone iterates and w within [0, ‖v0‖∞] hold by construction,
        // whatever the schedule.
        #[test]
        fn construction_invariants(seed: u64, kappa in 1e-4f64..1e-2) {
            let m = generate_random(&RandomSpec { n_states: 4, n_actions: 2, gamma: 0.75, concentration: 1.0, seed }).unwrap();
            let mut oracle = GenerativeOracle::new(&m, seed ^ 1).unwrap();
            let out = solve(&mut oracle, 0.5, 0.1, &VqviConstants::default().with_kappa(kappa)).unwrap();
            let mut prev = vec![0.0; 4];
            for call in &out.report.calls {
                let v0 = prev.clone();
                let scale = max_abs(&v0);
                prop_assert!(call.w.as_slice().iter().all(|&x| (0.0..=scale).contains(&x)));
                prop_assert!(call.sigma_hat.min() >= 0.0);
                for it in &call.iterations {
                    prop_assert!(it.values.iter().zip(&prev).all(|(a, b)| a >= b));
                    prev = it.values.clone();
                }
            }
            prop_assert_eq!(&prev, &out.values);
            prop_assert!(out.values.iter().all(|&x| x >= 0.0));
        }
    }
}
