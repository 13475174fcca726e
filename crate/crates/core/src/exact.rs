//! Full-model solvers. These see the whole transition tensor and serve as
//! ground truth for everything that only samples.

use crate::error::Result;
use crate::linalg::{resolvent_residual, solve_resolvent};
use crate::mdp::{argmax, Dmdp, FiniteHorizonMdp, NonStationaryPolicy, Policy, QTable, TabularModel};

/// `r + γ P v` as an `S × A` table.
pub fn q_values(mdp: &Dmdp, values: &[f64]) -> QTable {
    let g = mdp.gamma();
    QTable::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| mdp.reward(s, a) + g * mdp.expectation(s, a, values))
}

/// Bellman optimality operator `T(v)_s = max_a [r + γ P_{s,a}ᵀ v]`.
pub fn bellman_apply(mdp: &Dmdp, values: &[f64]) -> Vec<f64> {
    q_values(mdp, values).greedy().0
}

/// `T_π(v)_s = r_{s,π(s)} + γ P_{s,π(s)}ᵀ v`.
pub fn bellman_apply_policy(mdp: &Dmdp, policy: &Policy, values: &[f64]) -> Result<Vec<f64>> {
    policy.check(mdp.n_states(), mdp.n_actions())?;
    let g = mdp.gamma();
    Ok((0..mdp.n_states())
        .map(|s| {
            let a = policy[s];
            mdp.reward(s, a) + g * mdp.expectation(s, a, values)
        })
        .collect())
}

/// Greedy policy with respect to `v`, lowest action index on ties.
pub fn greedy_policy(mdp: &Dmdp, values: &[f64]) -> Policy {
    q_values(mdp, values).greedy().1
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Value iteration from zero. Stops once successive iterates are within
/// `tol (1 − γ) / (2γ)`, which puts the returned vector within `tol / 2`
/// of `v*`. Returns the values and the number of Bellman applications.
pub fn exact_value_iteration(mdp: &Dmdp, tol: f64) -> (Vec<f64>, usize) {
    assert!(tol > 0.0, "tolerance must be positive");
    let g = mdp.gamma();
    let step = tol * (1.0 - g) / (2.0 * g);
    let mut v = vec![0.0; mdp.n_states()];
    let mut iterations = 0;
    loop {
        let next = bellman_apply(mdp, &v);
        iterations += 1;
        let diff = sup_distance(&next, &v);
        // Below a few ulps the iterates can cycle instead of settling.
        let floor = 8.0 * f64::EPSILON * (1.0 + crate::mdp::max_abs(&next));
        v = next;
        if diff <= step.max(floor) {
            return (v, iterations);
        }
    }
}

/// Rows of `P_π`.
fn policy_rows<'a>(mdp: &'a impl TabularModel, policy: &'a Policy) -> impl Fn(usize) -> &'a [f64] {
    move |s| mdp.transition_row(s, policy[s])
}

/// `v^π` from `(I − γ P_π) v = r_π` by a direct solve.
pub fn policy_evaluation(mdp: &Dmdp, policy: &Policy) -> Result<Vec<f64>> {
    policy.check(mdp.n_states(), mdp.n_actions())?;
    let r_pi: Vec<f64> = (0..mdp.n_states()).map(|s| mdp.reward(s, policy[s])).collect();
    Ok(solve_resolvent(mdp.n_states(), mdp.gamma(), policy_rows(mdp, policy), &r_pi)
        .expect("I - γP_π is nonsingular for γ < 1"))
}

/// Solves `x = b + discount · P^π x` over `S × A`, where
/// `(P^π x)(s,a) = Σ_{s'} P_{s,a}(s') x(s', π(s'))`.
///
/// The system is reduced to the `S`-dimensional chain on `y(s) = x(s, π(s))`
/// and lifted back with one application of `P`.
pub fn solve_lifted(
    model: &impl TabularModel,
    policy: &Policy,
    discount: f64,
    b: &QTable,
) -> Result<QTable> {
    let (n, k) = (model.n_states(), model.n_actions());
    policy.check(n, k)?;
    let b_pi: Vec<f64> = (0..n).map(|s| b[(s, policy[s])]).collect();
    let y = solve_resolvent(n, discount, policy_rows(model, policy), &b_pi)
        .expect("resolvent of a substochastic matrix is nonsingular");
    Ok(QTable::from_fn(n, k, |s, a| b[(s, a)] + discount * model.expectation(s, a, &y)))
}

/// `‖x − b − discount · P^π x‖∞` over `S × A`.
pub fn lifted_residual(model: &impl TabularModel, policy: &Policy, discount: f64, x: &QTable, b: &QTable) -> f64 {
    let y: Vec<f64> = (0..model.n_states()).map(|s| x[(s, policy[s])]).collect();
    let mut worst = 0.0_f64;
    for s in 0..model.n_states() {
        for a in 0..model.n_actions() {
            let r = x[(s, a)] - b[(s, a)] - discount * model.expectation(s, a, &y);
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Residual of a policy-evaluation solution.
pub fn policy_evaluation_residual(mdp: &Dmdp, policy: &Policy, values: &[f64]) -> f64 {
    let r_pi: Vec<f64> = (0..mdp.n_states()).map(|s| mdp.reward(s, policy[s])).collect();
    resolvent_residual(mdp.n_states(), mdp.gamma(), policy_rows(mdp, policy), values, &r_pi)
}

/// Howard policy iteration from the all-zeros policy. An action is replaced
/// only on strict improvement beyond rounding noise, so the loop cannot
/// cycle between tied actions.
pub fn policy_iteration(mdp: &Dmdp) -> (Policy, Vec<f64>) {
    let mut policy = Policy::constant(mdp.n_states(), 0);
    loop {
        let v = policy_evaluation(mdp, &policy).expect("policy is valid");
        let q = q_values(mdp, &v);
        let slack = 1e-12 * (1.0 + crate::mdp::max_abs(&v));
        let mut changed = false;
        for s in 0..mdp.n_states() {
            let (best, q_best) = argmax(q.row(s));
            if q_best > q[(s, policy[s])] + slack {
                policy[s] = best;
                changed = true;
            }
        }
        if !changed {
            return (policy, v);
        }
    }
}

/// Backward induction for an `H`-stage problem. Stage `k` of the output
/// (0-based) holds `v*_{k+1}`; the terminal `v_{H+1} = 0` is implicit.
pub fn fh_backward_induction(mdp: &FiniteHorizonMdp) -> (Vec<Vec<f64>>, NonStationaryPolicy) {
    let (n, k, horizon) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut values = vec![Vec::new(); horizon];
    let mut stages = vec![Policy::constant(n, 0); horizon];
    let mut next = vec![0.0; n];
    for h in (0..horizon).rev() {
        let q = QTable::from_fn(n, k, |s, a| mdp.reward(s, a) + mdp.expectation(s, a, &next));
        let (v, pi) = q.greedy();
        values[h] = v.clone();
        stages[h] = pi;
        next = v;
    }
    (values, NonStationaryPolicy::new(stages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{generate_chain, generate_random, RandomSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn one_state(r: f64, gamma: f64) -> Dmdp {
        Dmdp::new(1, 1, gamma, vec![r], vec![1.0]).unwrap()
    }

    fn cycle() -> Dmdp {
        Dmdp::new(2, 1, 0.5, vec![1.0, 0.0], vec![0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    fn random(n: usize, k: usize, gamma: f64, seed: u64) -> Dmdp {
        generate_random(&RandomSpec { n_states: n, n_actions: k, gamma, concentration: 1.0, seed }).unwrap()
    }

    #[test]
    fn bellman_examples() {
        let m = one_state(1.0, 0.9);
        assert_eq!(bellman_apply(&m, &[0.0]), vec![1.0]);
        assert_abs_diff_eq!(bellman_apply(&m, &[10.0])[0], 10.0, epsilon = 1e-14);
        let chain = generate_chain(2, 0.5, 0.0).unwrap();
        assert_eq!(bellman_apply(&chain, &[0.0, 0.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn chain_closed_forms() {
        let chain = generate_chain(2, 0.5, 0.0).unwrap();
        let v = policy_evaluation(&chain, &Policy::constant(2, 0)).unwrap();
        assert_abs_diff_eq!(v[1], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn value_iteration_closed_forms() {
        let (v, _) = exact_value_iteration(&one_state(1.0, 0.9), 1e-10);
        assert_abs_diff_eq!(v[0], 10.0, epsilon = 1e-10);
        let (v, _) = exact_value_iteration(&cycle(), 1e-10);
        assert_abs_diff_eq!(v[0], 4.0 / 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(v[1], 2.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn value_iteration_residual() {
        let m = random(10, 5, 0.9, 4);
        let tol = 1e-8;
        let (v, iters) = exact_value_iteration(&m, tol);
        assert!(iters > 1);
        assert!(sup_distance(&bellman_apply(&m, &v), &v) <= 2.0 * tol);
    }

    #[test]
    fn evaluation_examples() {
        let v = policy_evaluation(&one_state(0.3, 0.75), &Policy::constant(1, 0)).unwrap();
        assert_abs_diff_eq!(v[0], 0.3 / 0.25, epsilon = 1e-14);
        let v = policy_evaluation(&cycle(), &Policy::constant(2, 0)).unwrap();
        assert_abs_diff_eq!(v[0], 4.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[1], 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn evaluation_residual_and_fixed_point() {
        let m = random(12, 3, 0.95, 17);
        let pi = Policy::new((0..12).map(|s| s % 3).collect());
        let v = policy_evaluation(&m, &pi).unwrap();
        assert!(policy_evaluation_residual(&m, &pi, &v) <= 1e-10);
        assert!(sup_distance(&bellman_apply_policy(&m, &pi, &v).unwrap(), &v) <= 1e-10);
        let (v_star, _) = exact_value_iteration(&m, 1e-11);
        assert!(v.iter().zip(&v_star).all(|(x, y)| *x <= y + 1e-9));
    }

    #[test]
    fn invalid_policy_is_rejected() {
        let m = random(3, 2, 0.9, 1);
        assert!(bellman_apply_policy(&m, &Policy::new(vec![0, 2, 0]), &[0.0; 3]).is_err());
        assert!(policy_evaluation(&m, &Policy::new(vec![0, 0])).is_err());
    }

    #[test]
    fn policy_iteration_examples() {
        let (pi, v) = policy_iteration(&one_state(0.4, 0.8));
        assert_eq!(pi.actions(), &[0]);
        assert_abs_diff_eq!(v[0], 2.0, epsilon = 1e-12);
        let (pi, _) = policy_iteration(&generate_chain(5, 0.9, 0.0).unwrap());
        assert_eq!(pi.actions(), &[0, 0, 0, 0, 0]);
    }

    #[test]
    fn chain_with_slip_matches_value_iteration() {
        let m = generate_chain(5, 0.9, 0.2).unwrap();
        let (_, v_pi) = policy_iteration(&m);
        let (v_vi, _) = exact_value_iteration(&m, 1e-10);
        assert!(sup_distance(&v_pi, &v_vi) <= 1e-10);
    }

    #[test]
    fn greedy_examples() {
        let m = random(6, 3, 0.9, 5);
        let (_, v_star) = policy_iteration(&m);
        let greedy = greedy_policy(&m, &v_star);
        let v_greedy = policy_evaluation(&m, &greedy).unwrap();
        assert!(sup_distance(&v_greedy, &v_star) <= 1e-10);

        let flat = Dmdp::new(1, 3, 0.9, vec![0.5, 0.5, 0.5], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(greedy_policy(&flat, &[3.0]).actions(), &[0]);

        let g0 = greedy_policy(&m, &[0.0; 6]);
        for s in 0..6 {
            let best = (0..3).map(|a| m.reward(s, a)).fold(f64::MIN, f64::max);
            assert_eq!(m.reward(s, g0[s]), best);
        }
    }

    #[test]
    fn lifted_solve_matches_definition() {
        let m = random(5, 3, 0.9, 21);
        let pi = Policy::new(vec![2, 0, 1, 1, 0]);
        let b = QTable::from_fn(5, 3, |s, a| (s * 3 + a) as f64 * 0.1);
        let x = solve_lifted(&m, &pi, 0.9, &b).unwrap();
        assert!(lifted_residual(&m, &pi, 0.9, &x, &b) <= 1e-12);
    }

    #[test]
    fn backward_induction_examples() {
        let m = random(4, 3, 0.9, 2).with_horizon(1).unwrap();
        let (v, _) = fh_backward_induction(&m);
        for (s, &x) in v[0].iter().enumerate() {
            let best = (0..3).map(|a| m.reward(s, a)).fold(f64::MIN, f64::max);
            assert_eq!(x, best);
        }
        let one = FiniteHorizonMdp::new(1, 1, 2, vec![0.5], vec![1.0]).unwrap();
        assert_eq!(fh_backward_induction(&one).0[0], vec![1.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn bellman_is_a_monotone_contraction(
            seed: u64,
            gamma in 0.05f64..0.99,
            base in prop::collection::vec(-5.0f64..5.0, 6),
            bump in prop::collection::vec(0.0f64..3.0, 6),
        ) {
            let m = random(6, 3, gamma, seed);
            let hi: Vec<f64> = base.iter().zip(&bump).map(|(x, d)| x + d).collect();
            let t_lo = bellman_apply(&m, &base);
            let t_hi = bellman_apply(&m, &hi);
            prop_assert!(sup_distance(&t_lo, &t_hi) <= gamma * sup_distance(&base, &hi) + 1e-12);
            prop_assert!(t_lo.iter().zip(&t_hi).all(|(a, b)| a <= b));

            let pi = Policy::new((0..6).map(|s| (seed as usize + s) % 3).collect());
            let p_lo = bellman_apply_policy(&m, &pi, &base).unwrap();
            let p_hi = bellman_apply_policy(&m, &pi, &hi).unwrap();
            prop_assert!(p_lo.iter().zip(&p_hi).all(|(a, b)| a <= b));
        }

        #[test]
        fn every_policy_is_dominated(seed: u64, gamma in 0.1f64..0.95, raw in prop::collection::vec(0usize..3, 7)) {
            let m = random(7, 3, gamma, seed);
            let (_, v_star) = policy_iteration(&m);
            let (v_vi, _) = exact_value_iteration(&m, 1e-11);
            prop_assert!(sup_distance(&v_star, &v_vi) <= 1e-9);
            let v = policy_evaluation(&m, &Policy::new(raw)).unwrap();
            prop_assert!(v.iter().zip(&v_star).all(|(x, y)| x - y <= 1e-9));
        }
    }
}
