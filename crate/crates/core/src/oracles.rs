//! Independent reference computations for tests: exhaustive policy
//! enumeration and Monte-Carlo rollouts. None of these share code paths
//! with the solvers they check beyond the model accessors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exact::policy_evaluation;
use crate::finite_horizon::fh_policy_evaluation;
use crate::mdp::{Dmdp, FiniteHorizonMdp, NonStationaryPolicy, Policy, TabularModel};

/// Largest policy space the enumerators will walk.
pub const ENUMERATION_CAP: u64 = 1_000_000;

fn decode(mut code: u64, base: usize, len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push((code % base as u64) as usize);
        code /= base as u64;
    }
    out
}

fn space_size(base: usize, len: usize) -> Option<u64> {
    (base as u64).checked_pow(len as u32).filter(|&n| n <= ENUMERATION_CAP)
}

/// `v*` as the entrywise maximum of `v^π` over all `|A|^|S|` deterministic
/// policies. `None` if the space exceeds [`ENUMERATION_CAP`].
pub fn enumerate_optimal_values(mdp: &Dmdp) -> Option<Vec<f64>> {
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    let count = space_size(k, n)?;
    let mut best = vec![f64::NEG_INFINITY; n];
    for code in 0..count {
        let v = policy_evaluation(mdp, &Policy::new(decode(code, k, n))).expect("valid policy");
        for (b, x) in best.iter_mut().zip(v) {
            *b = b.max(x);
        }
    }
    Some(best)
}

/// Optimal stage values by enumerating all `|A|^{|S|·H}` non-stationary policies.
pub fn enumerate_fh_optimal_values(mdp: &FiniteHorizonMdp) -> Option<Vec<Vec<f64>>> {
    let (n, k, h) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let count = space_size(k, n * h)?;
    let mut best = vec![vec![f64::NEG_INFINITY; n]; h];
    for code in 0..count {
        let flat = decode(code, k, n * h);
        let pi = NonStationaryPolicy::new(flat.chunks(n).map(|c| Policy::new(c.to_vec())).collect());
        let v = fh_policy_evaluation(mdp, &pi).expect("valid policy");
        for (b_stage, v_stage) in best.iter_mut().zip(v) {
            for (b, x) in b_stage.iter_mut().zip(v_stage) {
                *b = b.max(x);
            }
        }
    }
    Some(best)
}

/// Sample moments of a rollout return estimate.
#[derive(Debug, Clone, Copy)]
pub struct ReturnStats {
    pub mean: f64,
    pub variance: f64,
    /// Standard error of `variance`, from the fourth central moment.
    pub variance_stderr: f64,
}

/// Rollout horizon at which the discounted tail drops below `1e-6` of the
/// total value scale.
pub fn truncation_horizon(gamma: f64) -> usize {
    ((1e6f64).ln() / (1.0 - gamma)).ceil() as usize
}

fn inverse_cdf(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Discounted returns from `(state, action)` then following `policy`,
/// simulated by inverse-CDF sampling and truncated at
/// [`truncation_horizon`]. The truncation biases the mean by at most
/// `γ^T/(1−γ) ≤ 1e-6/(1−γ)`.
pub fn rollout_return_stats(
    mdp: &Dmdp,
    policy: &Policy,
    state: usize,
    action: usize,
    rollouts: usize,
    seed: u64,
) -> ReturnStats {
    let gamma = mdp.gamma();
    let horizon = truncation_horizon(gamma);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(rollouts);
    for _ in 0..rollouts {
        let (mut s, mut a) = (state, action);
        let mut discount = 1.0;
        let mut total = 0.0;
        for _ in 0..horizon {
            total += discount * mdp.reward(s, a);
            discount *= gamma;
            s = inverse_cdf(mdp.transition_row(s, a), rng.random::<f64>());
            a = policy[s];
        }
        returns.push(total);
    }
    let n = rollouts as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let m2 = returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = returns.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    ReturnStats {
        mean,
        variance: m2 * n / (n - 1.0),
        variance_stderr: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
    }
}
