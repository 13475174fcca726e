use std::time::Instant;

use clap::ValueEnum;
use serde::Serialize;
use vqvi_core::exact::{
    exact_value_iteration, fh_backward_induction, greedy_policy, policy_evaluation, policy_iteration, sup_distance,
};
use vqvi_core::finite_horizon::{fh_policy_evaluation, fh_solve, FhOptions};
use vqvi_core::sparsified::{schedule_m, solve_with_samples};
use vqvi_core::vrqvi::solve;
use vqvi_core::{Dmdp, Execution, GenerativeOracle, Policy, SampleCount, TabularModel, VqviConstants};

use crate::error::{CliError, CliResult};
use crate::report::{Constants, ExperimentReport, SampleSummary};

/// Target error of the exact solvers when none is given.
pub const EXACT_TARGET: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Vqvi,
    Sparsified,
    FhVqvi,
    ExactVi,
    ExactPi,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Vqvi => "vqvi",
            Solver::Sparsified => "sparsified",
            Solver::FhVqvi => "fh-vqvi",
            Solver::ExactVi => "exact-vi",
            Solver::ExactPi => "exact-pi",
        }
    }

    pub fn samples(self) -> bool {
        matches!(self, Solver::Vqvi | Solver::Sparsified | Solver::FhVqvi)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub solver: Solver,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub constants: VqviConstants,
    pub c_sparse: f64,
    pub horizon: Option<usize>,
    pub seed: u64,
    /// Stopping tolerance of value iteration (exact-vi and sparsified).
    pub tol: f64,
    pub timing: bool,
    pub execution: Execution,
    pub fh_options: FhOptions,
}

impl RunConfig {
    pub fn new(solver: Solver) -> Self {
        Self {
            solver,
            epsilon: None,
            delta: 0.1,
            constants: VqviConstants::default(),
            c_sparse: 1.0,
            horizon: None,
            seed: 0,
            tol: 1e-10,
            timing: true,
            execution: Execution::default(),
            fh_options: FhOptions::default(),
        }
    }

    pub fn run_id(&self, mdp: &Dmdp) -> String {
        let shape = format!("S{}A{}", mdp.n_states(), mdp.n_actions());
        let model = match self.horizon {
            Some(h) if self.solver == Solver::FhVqvi => format!("H{h}"),
            _ => format!("g{}", mdp.gamma()),
        };
        let eps = self.epsilon.map_or_else(|| "exact".to_string(), |e| format!("eps{e}"));
        format!("{}-{shape}-{model}-{eps}-seed{}", self.solver.name(), self.seed)
    }
}

fn summary(count: &SampleCount) -> SampleSummary {
    let (min, median, max) = count.summary();
    SampleSummary { min, median, max }
}

fn policy_gap(mdp: &Dmdp, v_star: &[f64], policy: &Policy) -> CliResult<f64> {
    Ok(sup_distance(v_star, &policy_evaluation(mdp, policy)?))
}

/// Runs one solver on `mdp` and scores its policy against the exact optimum.
pub fn run_solver(mdp: &Dmdp, cfg: &RunConfig) -> CliResult<ExperimentReport> {
    if cfg.solver.samples() && cfg.epsilon.is_none() {
        return Err(CliError::usage(format!("--epsilon is required for solver {}", cfg.solver.name())));
    }
    if cfg.solver == Solver::FhVqvi && cfg.horizon.is_none() {
        return Err(CliError::usage("--horizon is required for solver fh-vqvi"));
    }
    let target = cfg.epsilon.unwrap_or(EXACT_TARGET);
    let mut oracle = match cfg.solver {
        Solver::FhVqvi => {
            let fh = mdp.with_horizon(cfg.horizon.unwrap_or(1))?;
            GenerativeOracle::for_finite_horizon(&fh, cfg.seed)?
        }
        _ => GenerativeOracle::new(mdp, cfg.seed)?,
    }
    .with_execution(cfg.execution);

    let start = Instant::now();
    let achieved = match cfg.solver {
        Solver::Vqvi => {
            let out = solve(&mut oracle, target, cfg.delta, &cfg.constants)?;
            let (_, v_star) = policy_iteration(mdp);
            policy_gap(mdp, &v_star, &out.policy)?
        }
        Solver::Sparsified => {
            let m = schedule_m(mdp.gamma(), target, cfg.delta, mdp.n_states(), mdp.n_actions(), cfg.c_sparse)?;
            let out = solve_with_samples(&mut oracle, m, cfg.tol)?;
            let (_, v_star) = policy_iteration(mdp);
            policy_gap(mdp, &v_star, &out.policy)?
        }
        Solver::FhVqvi => {
            let h = cfg.horizon.unwrap_or(1);
            let fh = mdp.with_horizon(h)?;
            let out = fh_solve(&mut oracle, h, target, cfg.delta, &cfg.constants, cfg.fh_options)?;
            let (v_star, _) = fh_backward_induction(&fh);
            let v_pi = fh_policy_evaluation(&fh, &out.policy)?;
            v_star.iter().zip(&v_pi).map(|(a, b)| sup_distance(a, b)).fold(0.0, f64::max)
        }
        Solver::ExactVi => {
            if !(cfg.tol > 0.0 && cfg.tol.is_finite()) {
                return Err(CliError::usage("--tol must be positive"));
            }
            let (v, _) = exact_value_iteration(mdp, cfg.tol);
            let (_, v_star) = policy_iteration(mdp);
            policy_gap(mdp, &v_star, &greedy_policy(mdp, &v))?
        }
        Solver::ExactPi => {
            let (pi, v_star) = policy_iteration(mdp);
            policy_gap(mdp, &v_star, &pi)?
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    let count = oracle.sample_count();
    let c = cfg.constants;
    Ok(ExperimentReport {
        run_id: cfg.run_id(mdp),
        solver: cfg.solver.name().to_string(),
        states: mdp.n_states(),
        actions: mdp.n_actions(),
        gamma: (cfg.solver != Solver::FhVqvi).then(|| mdp.gamma()),
        horizon: cfg.horizon.filter(|_| cfg.solver == Solver::FhVqvi),
        seed: cfg.seed,
        epsilon: target,
        delta: cfg.delta,
        kappa: c.kappa,
        constants: Constants { c1: c.c1, c2: c.c2, c3: c.c3 },
        c_sparse: (cfg.solver == Solver::Sparsified).then_some(cfg.c_sparse),
        total_samples: count.total,
        per_sa_samples: summary(&count),
        achieved_error: achieved,
        wall_time_seconds: cfg.timing.then_some(elapsed),
        success: achieved <= target,
    })
}
