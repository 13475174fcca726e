use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vqvi_core::exact::{fh_backward_induction, greedy_policy, policy_evaluation, policy_iteration};
use vqvi_core::finite_horizon::fh_variance_sum;
use vqvi_core::variance::{
    check_sqrt_inequality, check_variance_bound, check_variance_triangle, one_step_variance, total_variance,
    total_variance_residual, BoundCheck, CHECK_SLACK,
};
use vqvi_core::vrqvi::check_monotone_condition;
use vqvi_core::{Dmdp, NonStationaryPolicy, Policy, TabularModel};

use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl CheckRow {
    fn from_bound(name: impl Into<String>, c: BoundCheck) -> Self {
        Self { name: name.into(), lhs: c.lhs, rhs: c.rhs, holds: c.holds }
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyInputs {
    pub policy: Option<Policy>,
    pub values: Option<Vec<f64>>,
    pub horizon: Option<usize>,
    pub random_policies: usize,
    pub seed: u64,
}

fn random_policy(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Policy {
    Policy::new((0..n).map(|_| rng.random_range(0..k)).collect())
}

/// Keeps the row with the largest `lhs − rhs`.
fn worst_of(name: String, checks: impl IntoIterator<Item = BoundCheck>) -> Option<CheckRow> {
    checks
        .into_iter()
        .max_by(|a, b| (a.lhs - a.rhs).total_cmp(&(b.lhs - b.rhs)))
        .map(|c| CheckRow::from_bound(name, c))
}

/// Evaluates the monotone condition and the variance inequalities on `mdp`.
pub fn run_checks(mdp: &Dmdp, inputs: &VerifyInputs) -> CliResult<Vec<CheckRow>> {
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    let (pi_star, v_star) = policy_iteration(mdp);
    let policy = match (&inputs.policy, &inputs.values) {
        (Some(p), _) => p.clone(),
        (None, Some(v)) => greedy_policy(mdp, v),
        (None, None) => pi_star.clone(),
    };
    policy.check(n, k)?;
    let v_pi = policy_evaluation(mdp, &policy)?;
    let values = inputs.values.clone().unwrap_or_else(|| v_pi.clone());
    let mut rows = Vec::new();

    let mono = check_monotone_condition(mdp, &values, &policy)?;
    // `+ 0.0` turns a negative zero into zero.
    rows.push(CheckRow { name: "monotone".into(), lhs: -mono.worst_slack + 0.0, rhs: CHECK_SLACK, holds: mono.holds });

    rows.push(CheckRow::from_bound("variance_bound", check_variance_bound(mdp, &policy)?));
    let mut rng = ChaCha8Rng::seed_from_u64(inputs.seed);
    let randoms: Vec<Policy> = (0..inputs.random_policies).map(|_| random_policy(&mut rng, n, k)).collect();
    let bounds = randoms.iter().map(|p| check_variance_bound(mdp, p)).collect::<Result<Vec<_>, _>>()?;
    rows.extend(worst_of(format!("variance_bound[random x{}]", randoms.len()), bounds));

    let sigma = total_variance(mdp, &policy)?;
    let residual = total_variance_residual(mdp, &policy, &sigma)?;
    rows.push(CheckRow { name: "total_variance_residual".into(), lhs: residual, rhs: CHECK_SLACK, holds: residual <= CHECK_SLACK });
    let beta = mdp.horizon_scale();
    rows.push(CheckRow::from_bound("total_variance_cap", BoundCheck::new(sigma.max_abs(), beta * beta)));

    let p_pi: Vec<Vec<f64>> = (0..n).map(|s| mdp.transition_row(s, policy[s]).to_vec()).collect();
    let sigma_pi = one_step_variance(mdp, &v_pi);
    let sigma_vec: Vec<f64> = (0..n).map(|s| sigma_pi[(s, policy[s])]).collect();
    rows.push(CheckRow::from_bound("sqrt_inequality", check_sqrt_inequality(&p_pi, &sigma_vec, mdp.gamma())?));

    rows.push(CheckRow::from_bound("variance_triangle", check_variance_triangle(mdp, &values, &v_star)));

    if let Some(h) = inputs.horizon {
        let fh = mdp.with_horizon(h)?;
        let (_, pi_h) = fh_backward_induction(&fh);
        rows.push(CheckRow::from_bound("fh_variance_bound", fh_variance_sum(&fh, &pi_h)?));
        let mut checks = Vec::with_capacity(inputs.random_policies);
        for _ in 0..inputs.random_policies {
            let stages = (0..h).map(|_| random_policy(&mut rng, n, k)).collect();
            checks.push(fh_variance_sum(&fh, &NonStationaryPolicy::new(stages))?);
        }
        rows.extend(worst_of(format!("fh_variance_bound[random x{}]", checks.len()), checks));
    }
    Ok(rows)
}

/// Aligned table; `color` adds ANSI green/red to the verdict column.
pub fn write_table(rows: &[CheckRow], color: bool, mut out: impl Write) -> std::io::Result<()> {
    let width = rows.iter().map(|r| r.name.len()).chain([5]).max().unwrap_or(5);
    writeln!(out, "{:<width$}  {:>14}  {:>14}  holds", "check", "lhs", "rhs")?;
    for r in rows {
        let verdict = match (r.holds, color) {
            (true, true) => "\x1b[32mok\x1b[0m",
            (false, true) => "\x1b[31mFAIL\x1b[0m",
            (true, false) => "ok",
            (false, false) => "FAIL",
        };
        writeln!(out, "{:<width$}  {:>14.6e}  {:>14.6e}  {verdict}", r.name, r.lhs, r.rhs)?;
    }
    Ok(())
}
