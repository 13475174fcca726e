//! Variance quantities of a tabular model and the inequalities that keep
//! the accumulated estimation error of variance-reduced value iteration at
//! `(1 − γ)^{-3/2}` instead of `(1 − γ)^{-2}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{lifted_residual, policy_evaluation, solve_lifted};
use crate::linalg::solve_resolvent;
use crate::mdp::{max_abs, Dmdp, Policy, QTable, TabularModel};

/// `σ_v(s,a)`, the variance of `v(s')` under `s' ~ P_{s,a}`.
pub type VarianceTable = QTable;

/// `Σ^π(s,a)`, the variance of the discounted return from `(s,a)` under `π`.
pub type TotalVarianceTable = QTable;

/// Absolute slack allowed by every inequality check.
pub const CHECK_SLACK: f64 = 1e-9;

/// Both sides of an inequality `lhs ≤ rhs`, evaluated exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl BoundCheck {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, holds: lhs <= rhs + CHECK_SLACK }
    }
}

/// `σ_v = P v² − (P v)²`, clamped at zero.
pub fn one_step_variance(model: &impl TabularModel, values: &[f64]) -> VarianceTable {
    let squares: Vec<f64> = values.iter().map(|x| x * x).collect();
    QTable::from_fn(model.n_states(), model.n_actions(), |s, a| {
        let mean = model.expectation(s, a, values);
        (model.expectation(s, a, &squares) - mean * mean).max(0.0)
    })
}

/// Solves `Σ = γ² σ_{v^π} + γ² P^π Σ` directly.
pub fn total_variance(mdp: &Dmdp, policy: &Policy) -> Result<TotalVarianceTable> {
    let v = policy_evaluation(mdp, policy)?;
    let g2 = mdp.gamma() * mdp.gamma();
    let source = one_step_variance(mdp, &v).map(|x| g2 * x);
    solve_lifted(mdp, policy, g2, &source)
}

/// `‖Σ − γ² σ_{v^π} − γ² P^π Σ‖∞`.
pub fn total_variance_residual(mdp: &Dmdp, policy: &Policy, sigma: &TotalVarianceTable) -> Result<f64> {
    let v = policy_evaluation(mdp, policy)?;
    let g2 = mdp.gamma() * mdp.gamma();
    let source = one_step_variance(mdp, &v).map(|x| g2 * x);
    Ok(lifted_residual(mdp, policy, g2, sigma, &source))
}

/// `‖(I − γ P^π)^{-1} √σ_{v^π}‖∞² ≤ (1 + γ) / (γ² (1 − γ)³)`.
pub fn check_variance_bound(mdp: &Dmdp, policy: &Policy) -> Result<BoundCheck> {
    let g = mdp.gamma();
    let v = policy_evaluation(mdp, policy)?;
    let root = one_step_variance(mdp, &v).map(f64::sqrt);
    let x = solve_lifted(mdp, policy, g, &root)?;
    let lhs = x.max_abs().powi(2);
    let rhs = (1.0 + g) / (g * g * (1.0 - g).powi(3));
    Ok(BoundCheck::new(lhs, rhs))
}

/// For non-negative `P` with row ℓ₁ norms at most one and `v ≥ 0`:
/// `‖(I − γP)^{-1} √v‖∞ ≤ √(‖(I − γP)^{-1} v‖∞ / (1 − γ))`.
pub fn check_sqrt_inequality(matrix: &[Vec<f64>], values: &[f64], gamma: f64) -> Result<BoundCheck> {
    let n = values.len();
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param("gamma", gamma, "must lie in (0,1)"));
    }
    if matrix.len() != n {
        return Err(Error::Dimension { what: "matrix rows", expected: n, got: matrix.len() });
    }
    for row in matrix {
        if row.len() != n {
            return Err(Error::Dimension { what: "matrix columns", expected: n, got: row.len() });
        }
        if let Some(&p) = row.iter().find(|&&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::param("matrix entry", p, "must be finite and non-negative"));
        }
        let l1: f64 = row.iter().sum();
        if l1 > 1.0 + 1e-12 {
            return Err(Error::param("row l1 norm", l1, "must be at most 1"));
        }
    }
    if let Some(&x) = values.iter().find(|&&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::param("vector entry", x, "must be finite and non-negative"));
    }
    let roots: Vec<f64> = values.iter().map(|x| x.sqrt()).collect();
    let rows = |i: usize| matrix[i].as_slice();
    let left = solve_resolvent(n, gamma, rows, &roots).expect("nonsingular");
    let right = solve_resolvent(n, gamma, rows, values).expect("nonsingular");
    Ok(BoundCheck::new(max_abs(&left), (max_abs(&right) / (1.0 - gamma)).sqrt()))
}

/// `√σ_v ≤ √σ_{v*} + ‖v − v*‖∞`: `lhs` is the largest entry of
/// `√σ_v − √σ_{v*}`, `rhs` the sup distance.
pub fn check_variance_triangle(model: &impl TabularModel, values: &[f64], reference: &[f64]) -> BoundCheck {
    let a = one_step_variance(model, values);
    let b = one_step_variance(model, reference);
    let gap = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.sqrt() - y.sqrt())
        .fold(f64::NEG_INFINITY, f64::max);
    let eps = values.iter().zip(reference).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    BoundCheck::new(gap, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::policy_iteration;
    use crate::mdp::{generate_chain, generate_random, RandomSpec};
    use crate::oracles::rollout_return_stats;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, k: usize, gamma: f64, seed: u64) -> Dmdp {
        generate_random(&RandomSpec { n_states: n, n_actions: k, gamma, concentration: 1.0, seed }).unwrap()
    }

    #[test]
    fn one_step_examples() {
        let det = generate_chain(4, 0.9, 0.0).unwrap();
        assert!(one_step_variance(&det, &[0.3, 1.0, 5.0, 2.0]).as_slice().iter().all(|&x| x == 0.0));

        let coin = Dmdp::new(2, 1, 0.9, vec![0.0, 0.0], vec![0.5, 0.5, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(one_step_variance(&coin, &[0.0, 2.0])[(0, 0)], 1.0, epsilon = 1e-15);

        let m = random(5, 2, 0.9, 3);
        assert!(one_step_variance(&m, &[1.7; 5]).as_slice().iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn total_variance_vanishes_without_noise() {
        let det = generate_chain(5, 0.8, 0.0).unwrap();
        let pi = Policy::new(vec![0, 1, 0, 1, 0]);
        assert!(total_variance(&det, &pi).unwrap().max_abs() < 1e-12);
        let one = Dmdp::new(1, 1, 0.6, vec![0.7], vec![1.0]).unwrap();
        assert!(total_variance(&one, &Policy::constant(1, 0)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn total_variance_fixed_point_and_cap() {
        for seed in 0..20 {
            let m = random(8, 3, 0.9, seed);
            let pi = Policy::new((0..8).map(|s| (s + seed as usize) % 3).collect());
            let sigma = total_variance(&m, &pi).unwrap();
            assert!(total_variance_residual(&m, &pi, &sigma).unwrap() <= 1e-9);
            assert!(sigma.min() >= 0.0);
            assert!(sigma.max_abs() <= m.horizon_scale().powi(2));
        }
    }

    #[test]
    fn total_variance_matches_rollouts() {
        // Rollouts are truncated where the discounted tail is below 1e-6 of
        // the value scale, far under the standard error at 10^5 rollouts.
        let m = random(3, 2, 0.7, 12);
        let (pi, _) = policy_iteration(&m);
        let sigma = total_variance(&m, &pi).unwrap();
        for s in 0..3 {
            let stats = rollout_return_stats(&m, &pi, s, pi[s], 100_000, 1000 + s as u64);
            let z = (stats.variance - sigma[(s, pi[s])]).abs() / stats.variance_stderr;
            assert!(z < 5.0, "state {s}: rollout {} vs exact {}", stats.variance, sigma[(s, pi[s])]);
        }
    }

    #[test]
    fn variance_bound_examples() {
        let det = generate_chain(4, 0.9, 0.0).unwrap();
        let c = check_variance_bound(&det, &Policy::constant(4, 0)).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.holds);

        let m = random(10, 5, 0.9, 8);
        let pi = Policy::new((0..10).map(|s| s % 5).collect());
        assert!(check_variance_bound(&m, &pi).unwrap().holds);

        let base = random(6, 2, 0.5, 31);
        for gamma in [0.5, 0.8, 0.9, 0.95, 0.97, 0.99] {
            let m = base.with_gamma(gamma).unwrap();
            let (pi, _) = policy_iteration(&m);
            let c = check_variance_bound(&m, &pi).unwrap();
            assert!(c.holds, "gamma {gamma}: {c:?}");
        }
    }

    #[test]
    fn sqrt_inequality_examples() {
        let zero = vec![vec![0.0; 3]; 3];
        let c = check_sqrt_inequality(&zero, &[0.0; 3], 0.9).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        let v = [4.0, 1.0, 9.0];
        let c = check_sqrt_inequality(&zero, &v, 0.75).unwrap();
        assert_abs_diff_eq!(c.lhs, 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.rhs, (9.0f64 / 0.25).sqrt(), epsilon = 1e-12);
        assert!(c.holds);
    }

    #[test]
    fn sqrt_inequality_rejects_bad_inputs() {
        let p = vec![vec![0.7, 0.6], vec![0.0, 0.0]];
        assert!(check_sqrt_inequality(&p, &[1.0, 1.0], 0.5).is_err());
        let p = vec![vec![0.5, 0.5], vec![-0.1, 0.0]];
        assert!(check_sqrt_inequality(&p, &[1.0, 1.0], 0.5).is_err());
        let p = vec![vec![0.5, 0.5], vec![0.0, 0.0]];
        assert!(check_sqrt_inequality(&p, &[1.0, -1.0], 0.5).is_err());
        assert!(check_sqrt_inequality(&p, &[1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn sqrt_inequality_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let n = rng.random_range(1..8);
            let p: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                    let mass = rng.random::<f64>() / raw.iter().sum::<f64>();
                    raw.into_iter().map(|x| x * mass).collect()
                })
                .collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
            let gamma = rng.random_range(0.01..0.999);
            assert!(check_sqrt_inequality(&p, &v, gamma).unwrap().holds);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn variance_triangle_holds(seed: u64, eps in 0.0f64..2.0, noise in prop::collection::vec(-1.0f64..1.0, 6)) {
            let m = random(6, 3, 0.9, seed);
            let (_, v_star) = policy_iteration(&m);
            let v: Vec<f64> = v_star.iter().zip(&noise).map(|(x, d)| x + eps * d).collect();
            prop_assert!(check_variance_triangle(&m, &v, &v_star).holds);
        }
    }
}
