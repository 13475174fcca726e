use std::ffi::OsString;
use std::fs;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use vqvi_core::finite_horizon::{FhOptions, InitSampling, StagePairing};
use vqvi_core::mdp::{generate_chain, generate_random, load, to_json_string, RandomSpec};
use vqvi_core::{Dmdp, Execution, Policy, TabularModel, VqviConstants};

use crate::bench::{run_grid, write_csv, write_json_lines, BenchPlan, InstanceSource};
use crate::error::{CliError, CliResult};
use crate::runner::{run_solver, RunConfig, Solver};
use crate::verify::{run_checks, write_table, VerifyInputs};

#[derive(Debug, Parser)]
#[command(name = "vqvi", version, about = "Sampling-based MDP solvers, sweeps and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a random or chain MDP file.
    Generate(GenerateArgs),
    /// Run one solver and print its report.
    Solve(SolveArgs),
    /// Run a parameter sweep and write one row per run.
    Bench(BenchArgs),
    /// Check the monotone condition and variance inequalities.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Random,
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitArg {
    Shared,
    PerStage,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PairingArg {
    Continuation,
    SameStage,
}

fn parse_open_unit(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x > 0.0 && x < 1.0 {
        Ok(x)
    } else {
        Err(format!("{x} is not in (0,1)"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("{x} is not positive"))
    }
}

fn parse_count(s: &str) -> Result<usize, String> {
    let x: usize = s.parse().map_err(|e| format!("{e}"))?;
    if x >= 1 {
        Ok(x)
    } else {
        Err("must be at least 1".into())
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "random")]
    kind: Kind,
    #[arg(long, value_parser = parse_count)]
    states: usize,
    /// Ignored for chains, which always have two actions.
    #[arg(long, value_parser = parse_count, default_value = "2")]
    actions: usize,
    #[arg(long, value_parser = parse_open_unit)]
    gamma: f64,
    /// Dirichlet concentration of each transition row.
    #[arg(long, value_parser = parse_positive, default_value = "1.0")]
    concentration: f64,
    /// Chance that a chain move stays in place.
    #[arg(long, default_value = "0.0")]
    slip: f64,
    #[arg(long, default_value = "0")]
    seed: u64,
    /// Output file; the model goes to stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, value_parser = parse_open_unit, default_value = "0.1")]
    delta: f64,
    #[arg(long, value_parser = parse_positive)]
    kappa: Option<f64>,
    #[arg(long, value_parser = parse_positive)]
    c1: Option<f64>,
    #[arg(long, value_parser = parse_positive)]
    c2: Option<f64>,
    #[arg(long, value_parser = parse_positive)]
    c3: Option<f64>,
    /// Constant of the empirical-model sample size.
    #[arg(long, value_parser = parse_positive, default_value = "1.0")]
    c_sparse: f64,
    /// Value-iteration tolerance for exact-vi and sparsified.
    #[arg(long, value_parser = parse_positive, default_value = "1e-10")]
    tol: f64,
    /// Leave wall_time_seconds empty so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
    /// Run per-pair sampling passes on one thread.
    #[arg(long)]
    sequential: bool,
    #[arg(long, value_enum, default_value = "shared")]
    init_sampling: InitArg,
    #[arg(long, value_enum, default_value = "continuation")]
    stage_pairing: PairingArg,
}

impl ModelArgs {
    fn config(&self, solver: Solver, default_kappa: f64) -> RunConfig {
        let d = VqviConstants::default();
        let mut cfg = RunConfig::new(solver);
        cfg.delta = self.delta;
        cfg.constants = VqviConstants {
            c1: self.c1.unwrap_or(d.c1),
            c2: self.c2.unwrap_or(d.c2),
            c3: self.c3.unwrap_or(d.c3),
            kappa: self.kappa.unwrap_or(default_kappa),
        };
        cfg.c_sparse = self.c_sparse;
        cfg.tol = self.tol;
        cfg.timing = !self.no_timing;
        cfg.execution = if self.sequential { Execution::Sequential } else { Execution::Parallel };
        cfg.fh_options = FhOptions {
            init: match self.init_sampling {
                InitArg::Shared => InitSampling::Shared,
                InitArg::PerStage => InitSampling::PerStage,
            },
            pairing: match self.stage_pairing {
                PairingArg::Continuation => StagePairing::Continuation,
                PairingArg::SameStage => StagePairing::SameStage,
            },
        };
        cfg
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// MDP file.
    mdp: PathBuf,
    #[arg(long, value_enum)]
    solver: Solver,
    /// Target sup-norm error of the returned policy.
    #[arg(long, value_parser = parse_positive)]
    epsilon: Option<f64>,
    #[arg(long, value_parser = parse_count)]
    horizon: Option<usize>,
    #[arg(long, default_value = "0")]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "vqvi")]
    solver: Solver,
    /// Fixed MDP file; otherwise instances are generated from --states and --actions.
    #[arg(long, conflicts_with_all = ["states", "actions"])]
    mdp: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_count)]
    states: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_count)]
    actions: Vec<usize>,
    #[arg(long, value_parser = parse_positive, default_value = "1.0")]
    concentration: f64,
    /// Seed of the generated instances (shared by every grid point).
    #[arg(long, default_value = "0")]
    instance_seed: u64,
    #[arg(long, value_delimiter = ',', value_parser = parse_open_unit)]
    gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_parser = parse_count)]
    horizons: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_positive, required = true)]
    epsilons: Vec<f64>,
    /// Runs per grid point, with seeds base, base+1, ...
    #[arg(long, default_value = "10")]
    seeds: u64,
    /// First run seed.
    #[arg(long, default_value = "0")]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// MDP file.
    mdp: PathBuf,
    /// JSON array of actions; defaults to the greedy policy of --values, or an optimal one.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// JSON array of state values to test for the monotone condition.
    #[arg(long)]
    values: Option<PathBuf>,
    /// Also check the finite-horizon variance bound at this horizon.
    #[arg(long, value_parser = parse_count)]
    horizon: Option<usize>,
    #[arg(long, default_value = "0")]
    random_policies: usize,
    /// Seed for the random policies.
    #[arg(long, default_value = "0")]
    seed: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn emit(out: &Option<PathBuf>, stdout: &mut dyn Write, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display()))),
        None => Ok(stdout.write_all(bytes)?),
    }
}

fn load_mdp(path: &Path) -> CliResult<Dmdp> {
    load(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn cmd_generate(args: GenerateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<i32> {
    let mdp = match args.kind {
        Kind::Random => generate_random(&RandomSpec {
            n_states: args.states,
            n_actions: args.actions,
            gamma: args.gamma,
            concentration: args.concentration,
            seed: args.seed,
        })?,
        Kind::Chain => generate_chain(args.states, args.gamma, args.slip)?,
    };
    let violations = mdp.validate();
    let status = if violations.is_empty() { "valid".to_string() } else { format!("{} violations", violations.len()) };
    let text = to_json_string(&mdp) + "\n";
    emit(&args.out, stdout, text.as_bytes())?;
    match &args.out {
        Some(path) => writeln!(stdout, "{}: {status}", path.display())?,
        None => writeln!(stderr, "{status}")?,
    }
    Ok(0)
}

fn cmd_solve(args: SolveArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let mdp = load_mdp(&args.mdp)?;
    let mut cfg = args.model.config(args.solver, 1.0);
    cfg.epsilon = args.epsilon;
    cfg.horizon = args.horizon;
    cfg.seed = args.seed;
    let report = run_solver(&mdp, &cfg)?;
    let mut buf = Vec::new();
    match args.format {
        Format::Json => write_json_lines(std::slice::from_ref(&report), &mut buf)?,
        Format::Csv => write_csv(std::slice::from_ref(&report), &mut buf)?,
    }
    emit(&args.out, stdout, &buf)?;
    Ok(if report.success { 0 } else { 1 })
}

fn cmd_bench(args: BenchArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let source = match &args.mdp {
        Some(path) => InstanceSource::File(load_mdp(path)?),
        None => InstanceSource::Random {
            states: args.states.clone(),
            actions: args.actions.clone(),
            concentration: args.concentration,
            seed: args.instance_seed,
        },
    };
    let plan = BenchPlan {
        source,
        gammas: args.gammas.clone(),
        horizons: args.horizons.clone(),
        epsilons: args.epsilons.clone(),
        seeds: args.seeds,
        base_seed: args.seed,
        config: args.model.config(args.solver, 0.01),
    };
    let reports = run_grid(&plan)?;
    let mut buf = Vec::new();
    match args.format {
        Format::Csv => write_csv(&reports, &mut buf)?,
        Format::Json => write_json_lines(&reports, &mut buf)?,
    }
    emit(&args.out, stdout, &buf)?;
    Ok(0)
}

fn cmd_verify(args: VerifyArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let mdp = load_mdp(&args.mdp)?;
    let inputs = VerifyInputs {
        policy: args.policy.as_deref().map(read_json::<Vec<usize>>).transpose()?.map(Policy::new),
        values: args.values.as_deref().map(read_json::<Vec<f64>>).transpose()?,
        horizon: args.horizon,
        random_policies: args.random_policies,
        seed: args.seed,
    };
    if let Some(v) = &inputs.values {
        if v.len() != mdp.n_states() {
            return Err(CliError::usage(format!("--values has {} entries, expected {}", v.len(), mdp.n_states())));
        }
    }
    let rows = run_checks(&mdp, &inputs)?;
    let color = args.out.is_none() && std::env::var_os("NO_COLOR").is_none() && std::io::stdout().is_terminal();
    let mut buf = Vec::new();
    write_table(&rows, color, &mut buf)?;
    emit(&args.out, stdout, &buf)?;
    Ok(if rows.iter().all(|r| r.holds) { 0 } else { 1 })
}


/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 solver or check failure, 2 usage error.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                return 2;
            }
            let _ = write!(stdout, "{text}");
            return 0;
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a, stdout, stderr),
        Command::Solve(a) => cmd_solve(a, stdout),
        Command::Bench(a) => cmd_bench(a, stdout),
        Command::Verify(a) => cmd_verify(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
