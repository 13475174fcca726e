use std::io::Write;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use vqvi_core::mdp::{generate_random, RandomSpec};
#[cfg(feature = "parallel")]
use vqvi_core::Execution;
use vqvi_core::{Dmdp, TabularModel};

use crate::error::{CliError, CliResult};
use crate::report::{BenchRow, ExperimentReport};
use crate::runner::{run_solver, RunConfig, Solver};

/// Where the grid's MDPs come from.
#[derive(Debug, Clone)]
pub enum InstanceSource {
    File(Dmdp),
    Random { states: Vec<usize>, actions: Vec<usize>, concentration: f64, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub source: InstanceSource,
    /// Overrides the file's discount; required for generated instances
    /// unless the solver is finite-horizon.
    pub gammas: Vec<f64>,
    pub horizons: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub seeds: u64,
    pub base_seed: u64,
    /// Template for every run; `seed`, `epsilon` and `horizon` are set per
    /// grid point.
    pub config: RunConfig,
}

struct Job {
    mdp: Dmdp,
    config: RunConfig,
}

fn grid(plan: &BenchPlan) -> CliResult<Vec<Job>> {
    let fh = plan.config.solver == Solver::FhVqvi;
    if fh && plan.horizons.is_empty() {
        return Err(CliError::usage("--horizons is required for solver fh-vqvi"));
    }
    if !fh && !plan.horizons.is_empty() {
        return Err(CliError::usage("--horizons only applies to solver fh-vqvi"));
    }
    if plan.epsilons.is_empty() {
        return Err(CliError::usage("--epsilons needs at least one value"));
    }
    let shapes: Vec<(usize, usize)> = match &plan.source {
        InstanceSource::File(m) => vec![(m.n_states(), m.n_actions())],
        InstanceSource::Random { states, actions, .. } => {
            if states.is_empty() || actions.is_empty() {
                return Err(CliError::usage("--states and --actions need at least one value each"));
            }
            states.iter().flat_map(|&s| actions.iter().map(move |&a| (s, a))).collect()
        }
    };
    let gammas: Vec<f64> = match (&plan.source, plan.gammas.is_empty()) {
        (_, false) => plan.gammas.clone(),
        (InstanceSource::File(m), true) => vec![m.gamma()],
        // The discount is unused by finite-horizon runs.
        (InstanceSource::Random { .. }, true) if fh => vec![0.5],
        (InstanceSource::Random { .. }, true) => return Err(CliError::usage("--gammas is required for generated instances")),
    };
    let horizons: Vec<Option<usize>> = if fh { plan.horizons.iter().map(|&h| Some(h)).collect() } else { vec![None] };

    let mut jobs = Vec::new();
    for &(states, actions) in &shapes {
        for &gamma in &gammas {
            let mdp = match &plan.source {
                InstanceSource::File(m) => m.with_gamma(gamma)?,
                InstanceSource::Random { concentration, seed, .. } => generate_random(&RandomSpec {
                    n_states: states,
                    n_actions: actions,
                    gamma,
                    concentration: *concentration,
                    seed: *seed,
                })?,
            };
            for &horizon in &horizons {
                for &epsilon in &plan.epsilons {
                    for k in 0..plan.seeds {
                        let mut config = plan.config.clone();
                        config.seed = plan.base_seed.wrapping_add(k);
                        config.epsilon = Some(epsilon);
                        config.horizon = horizon;
                        jobs.push(Job { mdp: mdp.clone(), config });
                    }
                }
            }
        }
    }
    Ok(jobs)
}

/// Runs every grid point and returns reports in grid order
/// (shape, γ, H, ε, then seed).
pub fn run_grid(plan: &BenchPlan) -> CliResult<Vec<ExperimentReport>> {
    let jobs = grid(plan)?;
    let run = |job: &Job| run_solver(&job.mdp, &job.config);
    #[cfg(feature = "parallel")]
    let results: Vec<CliResult<ExperimentReport>> = if plan.config.execution == Execution::Parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<CliResult<ExperimentReport>> = jobs.iter().map(run).collect();
    results.into_iter().collect()
}

pub fn write_csv(reports: &[ExperimentReport], out: impl Write) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "run_id",
        "solver",
        "states",
        "actions",
        "gamma",
        "H",
        "epsilon",
        "delta",
        "kappa",
        "seed",
        "total_samples",
        "achieved_error",
        "success",
        "wall_time_seconds",
    ])?;
    for r in reports {
        w.serialize(BenchRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON report per line.
pub fn write_json_lines(reports: &[ExperimentReport], mut out: impl Write) -> CliResult<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r).map_err(|e| CliError::Runtime(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads rows written by [`write_csv`].
pub fn read_csv(input: impl std::io::Read) -> CliResult<Vec<BenchRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(CliError::from)).collect()
}
