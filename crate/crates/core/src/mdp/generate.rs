//! Instance generators. Both are pure functions of their arguments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::Dmdp;
use crate::error::{Error, Result};

/// Parameters for [`generate_random`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    /// Symmetric Dirichlet concentration for every transition row.
    pub concentration: f64,
    pub seed: u64,
}

/// Random MDP: each row `P[s][a]` is a symmetric Dirichlet draw, rewards are
/// uniform on `[0, 1)`.
pub fn generate_random(spec: &RandomSpec) -> Result<Dmdp> {
    if spec.n_states == 0 {
        return Err(Error::param("n_states", 0.0, "must be positive"));
    }
    if spec.n_actions == 0 {
        return Err(Error::param("n_actions", 0.0, "must be positive"));
    }
    if !(spec.gamma > 0.0 && spec.gamma < 1.0) {
        return Err(Error::param("gamma", spec.gamma, "must lie in (0,1)"));
    }
    if !(spec.concentration > 0.0 && spec.concentration.is_finite()) {
        return Err(Error::param("concentration", spec.concentration, "must be positive"));
    }
    let n = spec.n_states;
    let pairs = n * spec.n_actions;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gamma_dist = Gamma::new(spec.concentration, 1.0)
        .map_err(|_| Error::param("concentration", spec.concentration, "must be positive"))?;

    let mut transition = Vec::with_capacity(pairs * n);
    let mut row = vec![0.0; n];
    for _ in 0..pairs {
        for x in row.iter_mut() {
            *x = gamma_dist.sample(&mut rng);
        }
        let total: f64 = row.iter().sum();
        if total > 0.0 && total.is_finite() {
            row.iter_mut().for_each(|x| *x /= total);
        } else {
            // Every gamma draw underflowed; fall back to the simplex centre.
            row.iter_mut().for_each(|x| *x = 1.0 / n as f64);
        }
        transition.extend_from_slice(&row);
    }
    let reward: Vec<f64> = (0..pairs).map(|_| rng.random::<f64>()).collect();
    Dmdp::new(n, spec.n_actions, spec.gamma, reward, transition)
}

/// Two-action birth-death chain. Action 0 moves right with probability
/// `1 − slip` (else stays), action 1 moves left likewise; moves off either
/// end stay put. Reward is 1 in the last state and 0 elsewhere.
pub fn generate_chain(n_states: usize, gamma: f64, slip: f64) -> Result<Dmdp> {
    if n_states < 2 {
        return Err(Error::param("n_states", n_states as f64, "a chain needs at least 2 states"));
    }
    if !(0.0..1.0).contains(&slip) {
        return Err(Error::param("slip", slip, "must lie in [0,1)"));
    }
    let n = n_states;
    let mut transition = vec![0.0; n * 2 * n];
    let mut reward = vec![0.0; n * 2];
    for s in 0..n {
        let right = (s + 1).min(n - 1);
        let left = s.saturating_sub(1);
        for (a, target) in [(0, right), (1, left)] {
            let row = &mut transition[(s * 2 + a) * n..(s * 2 + a + 1) * n];
            row[target] += 1.0 - slip;
            row[s] += slip;
        }
    }
    reward[(n - 1) * 2] = 1.0;
    reward[(n - 1) * 2 + 1] = 1.0;
    Dmdp::new(n, 2, gamma, reward, transition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TabularModel;

    fn spec(n_states: usize, n_actions: usize, concentration: f64, seed: u64) -> RandomSpec {
        RandomSpec { n_states, n_actions, gamma: 0.9, concentration, seed }
    }

    #[test]
    fn single_state_is_point_mass() {
        let m = generate_random(&spec(1, 1, 1.0, 7)).unwrap();
        assert_eq!(m.transitions(), &[1.0]);
    }

    #[test]
    fn same_seed_same_model() {
        let a = generate_random(&spec(4, 2, 1.0, 42)).unwrap();
        let b = generate_random(&spec(4, 2, 1.0, 42)).unwrap();
        assert_eq!(a, b);
        let c = generate_random(&spec(4, 2, 1.0, 43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sparse_concentration_rows_are_stochastic() {
        let m = generate_random(&spec(10, 5, 0.1, 1)).unwrap();
        assert!(m.validate().is_empty());
        for s in 0..10 {
            for a in 0..5 {
                let sum: f64 = m.transition_row(s, a).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(generate_random(&spec(3, 2, 0.0, 1)).is_err());
        assert!(generate_random(&RandomSpec { gamma: 1.0, ..spec(3, 2, 1.0, 1) }).is_err());
        assert!(generate_chain(1, 0.9, 0.0).is_err());
        assert!(generate_chain(3, 0.9, 1.0).is_err());
    }

    #[test]
    fn chain_layout() {
        let m = generate_chain(3, 0.5, 0.25).unwrap();
        assert_eq!(m.transition_row(0, 0), &[0.25, 0.75, 0.0]);
        assert_eq!(m.transition_row(0, 1), &[1.0, 0.0, 0.0]);
        assert_eq!(m.transition_row(2, 0), &[0.0, 0.0, 1.0]);
        assert_eq!(m.transition_row(2, 1), &[0.0, 0.75, 0.25]);
        assert_eq!(m.rewards(), &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }
}
