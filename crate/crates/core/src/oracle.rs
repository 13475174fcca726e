//! The generative model: `O(1)` draws of `s' ~ P_{s,a}` for any queried
//! pair, with exact per-pair sample counters.
//!
//! Every pair owns an independent ChaCha8 stream keyed by a 64-bit mix of
//! `(master_seed, s, a)`, so the samples a pair produces depend only on how
//! many samples were drawn from that same pair before. Passes over all pairs
//! can therefore run in parallel and still reproduce sequential output bit
//! for bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::alias::AliasTable;
use crate::error::{Error, Result};
use crate::mdp::{Dmdp, FiniteHorizonMdp, QTable, TabularModel};

/// How [`GenerativeOracle::map_pairs`] schedules per-pair work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon work-stealing across pairs. Runs sequentially when the crate
    /// is built without the `parallel` feature.
    #[default]
    Parallel,
}

#[derive(Debug, Clone)]
struct PairStream {
    rng: ChaCha8Rng,
    drawn: u64,
}

/// Sampling handle for a single `(s, a)` pair, borrowed from the oracle.
pub struct PairSampler<'a> {
    state: usize,
    action: usize,
    table: &'a AliasTable,
    stream: &'a mut PairStream,
}

impl PairSampler<'_> {
    pub fn state(&self) -> usize {
        self.state
    }

    pub fn action(&self) -> usize {
        self.action
    }

    #[inline]
    pub fn sample(&mut self) -> usize {
        self.stream.drawn += 1;
        self.table.sample_with(self.stream.rng.next_u64())
    }

    /// Draws `n` samples, feeding each to `f` without materializing them.
    #[inline]
    pub fn for_each_sample(&mut self, n: u64, mut f: impl FnMut(usize)) {
        self.stream.drawn += n;
        for _ in 0..n {
            f(self.table.sample_with(self.stream.rng.next_u64()));
        }
    }

    pub fn sample_batch(&mut self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        self.for_each_sample(n as u64, |s| out.push(s));
        out
    }

    /// Occurrence counts of each next state over `n` fresh samples.
    pub fn counts(&mut self, n: u64) -> Vec<u64> {
        let mut hist = vec![0u64; self.table.len()];
        self.for_each_sample(n, |s| hist[s] += 1);
        hist
    }

    /// Mean of `f(s')` over `n` fresh samples (zero when `n == 0`).
    pub fn mean_of(&mut self, n: u64, f: impl Fn(usize) -> f64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let mut sum = 0.0;
        self.for_each_sample(n, |s| sum += f(s));
        sum / n as f64
    }
}

/// Exact sample counts since construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleCount {
    pub n_states: usize,
    pub n_actions: usize,
    /// Pair-major counts (`s * n_actions + a`).
    pub per_sa: Vec<u64>,
    pub total: u64,
}

impl SampleCount {
    pub fn get(&self, state: usize, action: usize) -> u64 {
        self.per_sa[state * self.n_actions + action]
    }

    /// `(min, median, max)` of the per-pair counts. The median of an even
    /// number of pairs is the lower middle element.
    pub fn summary(&self) -> (u64, u64, u64) {
        let mut sorted = self.per_sa.clone();
        sorted.sort_unstable();
        let n = sorted.len();
        (sorted[0], sorted[(n - 1) / 2], sorted[n - 1])
    }
}

/// Sampling access to an MDP with known rewards.
#[derive(Debug, Clone)]
pub struct GenerativeOracle {
    n_states: usize,
    n_actions: usize,
    gamma: Option<f64>,
    reward: Vec<f64>,
    master_seed: u64,
    tables: Vec<AliasTable>,
    streams: Vec<PairStream>,
    execution: Execution,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the stream serving `(state, action)`.
pub fn stream_seed(master_seed: u64, state: usize, action: usize) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut h = mix64(master_seed.wrapping_add(GOLDEN));
    h = mix64(h ^ (state as u64).wrapping_mul(GOLDEN).wrapping_add(1));
    mix64(h ^ (action as u64).wrapping_mul(GOLDEN).wrapping_add(2))
}

impl GenerativeOracle {
    /// Oracle for a discounted model.
    pub fn new(mdp: &Dmdp, master_seed: u64) -> Result<Self> {
        let violations = mdp.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }
        Ok(Self::build(mdp, Some(mdp.gamma()), master_seed))
    }

    /// Oracle for a finite-horizon model; [`GenerativeOracle::gamma`] is `None`.
    pub fn for_finite_horizon(mdp: &FiniteHorizonMdp, master_seed: u64) -> Result<Self> {
        let violations = mdp.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }
        Ok(Self::build(mdp, None, master_seed))
    }

    /// Oracle for any validated tabular model.
    pub fn from_model(model: &impl TabularModel, gamma: Option<f64>, master_seed: u64) -> Self {
        Self::build(model, gamma, master_seed)
    }

    fn build(model: &impl TabularModel, gamma: Option<f64>, master_seed: u64) -> Self {
        let (n, k) = (model.n_states(), model.n_actions());
        let mut tables = Vec::with_capacity(n * k);
        let mut streams = Vec::with_capacity(n * k);
        let mut reward = Vec::with_capacity(n * k);
        for s in 0..n {
            for a in 0..k {
                tables.push(AliasTable::new(model.transition_row(s, a)));
                streams.push(PairStream {
                    rng: ChaCha8Rng::seed_from_u64(stream_seed(master_seed, s, a)),
                    drawn: 0,
                });
                reward.push(model.reward(s, a));
            }
        }
        Self {
            n_states: n,
            n_actions: k,
            gamma,
            reward,
            master_seed,
            tables,
            streams,
            execution: Execution::default(),
        }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn set_execution(&mut self, execution: Execution) {
        self.execution = execution;
    }

    pub fn execution(&self) -> Execution {
        self.execution
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.n_actions + action]
    }

    /// Rewards as an `S × A` table.
    pub fn reward_table(&self) -> QTable {
        QTable::from_vec(self.n_states, self.n_actions, self.reward.clone()).expect("shape")
    }

    fn check_pair(&self, state: usize, action: usize) -> Result<()> {
        if state >= self.n_states || action >= self.n_actions {
            return Err(Error::PairOutOfRange {
                state,
                action,
                n_states: self.n_states,
                n_actions: self.n_actions,
            });
        }
        Ok(())
    }

    pub fn pair(&mut self, state: usize, action: usize) -> Result<PairSampler<'_>> {
        self.check_pair(state, action)?;
        let idx = state * self.n_actions + action;
        Ok(PairSampler {
            state,
            action,
            table: &self.tables[idx],
            stream: &mut self.streams[idx],
        })
    }

    /// `n` i.i.d. draws from `P_{s,a}`.
    pub fn sample_batch(&mut self, state: usize, action: usize, n: usize) -> Result<Vec<usize>> {
        Ok(self.pair(state, action)?.sample_batch(n))
    }

    pub fn sample_count(&self) -> SampleCount {
        let per_sa: Vec<u64> = self.streams.iter().map(|s| s.drawn).collect();
        let total = per_sa.iter().sum();
        SampleCount { n_states: self.n_states, n_actions: self.n_actions, per_sa, total }
    }

    pub fn total_samples(&self) -> u64 {
        self.streams.iter().map(|s| s.drawn).sum()
    }

    /// Runs `f` once per pair and returns the results in pair-major order.
    /// Each call gets exclusive use of its own pair's stream, so results do
    /// not depend on the [`Execution`] mode.
    pub fn map_pairs<T, F>(&mut self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut PairSampler<'_>) -> T + Sync + Send,
    {
        let k = self.n_actions;
        let tables = &self.tables;
        let run = |(idx, stream): (usize, &mut PairStream)| {
            let mut sampler = PairSampler { state: idx / k, action: idx % k, table: &tables[idx], stream };
            f(&mut sampler)
        };
        match self.execution {
            #[cfg(feature = "parallel")]
            Execution::Parallel => self.streams.par_iter_mut().enumerate().map(run).collect(),
            _ => self.streams.iter_mut().enumerate().map(run).collect(),
        }
    }
}
