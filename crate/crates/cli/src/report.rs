use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub min: u64,
    pub median: u64,
    pub max: u64,
}

/// One solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub run_id: String,
    pub solver: String,
    pub states: usize,
    pub actions: usize,
    pub gamma: Option<f64>,
    pub horizon: Option<usize>,
    pub seed: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub kappa: f64,
    pub constants: Constants,
    pub c_sparse: Option<f64>,
    pub total_samples: u64,
    pub per_sa_samples: SampleSummary,
    /// `‖v* − v^π‖∞` against the exact optimum; the maximum over stages for
    /// finite-horizon runs.
    pub achieved_error: f64,
    pub wall_time_seconds: Option<f64>,
    pub success: bool,
}

/// The flat CSV row written by `bench`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub run_id: String,
    pub solver: String,
    pub states: usize,
    pub actions: usize,
    pub gamma: Option<f64>,
    #[serde(rename = "H")]
    pub horizon: Option<usize>,
    pub epsilon: f64,
    pub delta: f64,
    pub kappa: f64,
    pub seed: u64,
    pub total_samples: u64,
    pub achieved_error: f64,
    pub success: bool,
    pub wall_time_seconds: Option<f64>,
}

impl From<&ExperimentReport> for BenchRow {
    fn from(r: &ExperimentReport) -> Self {
        Self {
            run_id: r.run_id.clone(),
            solver: r.solver.clone(),
            states: r.states,
            actions: r.actions,
            gamma: r.gamma,
            horizon: r.horizon,
            epsilon: r.epsilon,
            delta: r.delta,
            kappa: r.kappa,
            seed: r.seed,
            total_samples: r.total_samples,
            achieved_error: r.achieved_error,
            success: r.success,
            wall_time_seconds: r.wall_time_seconds,
        }
    }
}
