//! Trial simulation and ensemble averaging.
//!
//! Seeding rules (fixed, relied on for reproducibility):
//! - initial conditions: `ChaCha8Rng::seed_from_u64(ic_seed)`, stream 0, drawing
//!   all `R_i`, then all `B_i`, then all `Δr_i`;
//! - trial `t` (0-based): `ChaCha8Rng::seed_from_u64(master_seed)` on stream
//!   `t + 1`, one uniform per node per step in node order.
//!
//! Trial streams depend only on the master seed and the trial index, so every
//! strategy case of a suite sees the same random numbers. Ensemble sums are
//! accumulated in trial order, so results do not depend on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Centrality, Graph};
use crate::strategy::{Strategy, StrategyError, StrategyInput};
use crate::urn::{InitialCondition, NetworkState, StateError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("initial condition rejected: {0}")]
    InitialCondition(#[source] StateError),
    #[error("strategy {strategy} failed at step {step}: {source}")]
    Strategy {
        strategy: &'static str,
        step: usize,
        #[source]
        source: StrategyError,
    },
    #[error("engine rejected step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: StateError,
    },
    #[error("invalid ensemble setting {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// How the per-step budget `B` is chosen. Serialised as a number or the
/// string `"sum_delta_r"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBudget", into = "RawBudget")]
pub enum BudgetRule {
    Fixed(f64),
    /// `Σ_i Δr_i(t)` at each step.
    SumDeltaR,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawBudget {
    Number(f64),
    Text(String),
}

impl TryFrom<RawBudget> for BudgetRule {
    type Error = String;

    fn try_from(raw: RawBudget) -> Result<Self, Self::Error> {
        match raw {
            RawBudget::Number(b) => Ok(BudgetRule::Fixed(b)),
            RawBudget::Text(s) if s == "sum_delta_r" => Ok(BudgetRule::SumDeltaR),
            RawBudget::Text(s) => Err(format!("expected a number or \"sum_delta_r\", got {s:?}")),
        }
    }
}

impl From<BudgetRule> for RawBudget {
    fn from(b: BudgetRule) -> Self {
        match b {
            BudgetRule::Fixed(v) => RawBudget::Number(v),
            BudgetRule::SumDeltaR => RawBudget::Text("sum_delta_r".into()),
        }
    }
}

impl BudgetRule {
    /// Budget for step `step` (1-based).
    pub fn resolve(&self, ic: &InitialCondition, step: usize) -> f64 {
        match *self {
            BudgetRule::Fixed(b) => b,
            BudgetRule::SumDeltaR => ic.red_increment.at(step).iter().sum(),
        }
    }
}

/// `R_i`, `B_i`, `Δr_i` i.i.d. uniform on `{1, ..., 10}`, `Δr` constant in time.
pub fn generate_ic(graph: &Graph, seed: u64) -> InitialCondition {
    let n = graph.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(1..=10u32) as f64).collect()
    };
    let red = draw(&mut rng);
    let black = draw(&mut rng);
    let delta_r = draw(&mut rng);
    InitialCondition::new(red, black, delta_r)
}

/// RNG for trial `trial` of an ensemble.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial + 1);
    rng
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialOptions {
    /// Steps (0 = initial state) at which per-node `U`, `S` are captured.
    pub snapshot_steps: Vec<usize>,
    pub record_draws: bool,
    pub record_allocations: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub step: usize,
    pub u: Vec<f64>,
    pub s: Vec<f64>,
}

/// Per-step series are indexed by `step - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub nodes: usize,
    /// Row-major `steps × nodes` draws, when requested.
    pub draws: Option<Vec<bool>>,
    pub infected: Vec<u32>,
    /// `Σ_i Δb_i(t)`.
    pub spend: Vec<f64>,
    /// `Σ_i Δb_i(t) Z_{i,t}`.
    pub waste: Vec<f64>,
    /// `Ũ_t`, `S̃_t` after each step.
    pub susceptibility: Vec<f64>,
    pub exposure: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub allocations: Option<Vec<Vec<f64>>>,
}

impl TrialRecord {
    pub fn steps(&self) -> usize {
        self.spend.len()
    }

    pub fn draw(&self, step: usize, node: usize) -> Option<bool> {
        self.draws
            .as_ref()
            .map(|d| d[(step - 1) * self.nodes + node])
    }
}

/// Everything a trial needs besides its RNG.
#[derive(Debug, Clone, Copy)]
pub struct TrialSetup<'a> {
    pub graph: &'a Graph,
    pub centrality: &'a Centrality,
    pub ic: &'a InitialCondition,
    pub strategy: &'a Strategy,
    pub budget: BudgetRule,
    pub steps: usize,
}

pub fn run_trial<R: Rng + ?Sized>(
    setup: &TrialSetup<'_>,
    rng: &mut R,
    opts: &TrialOptions,
) -> Result<TrialRecord, HarnessError> {
    let n = setup.graph.node_count();
    let k = setup.steps;
    let mut state = NetworkState::new(setup.graph, setup.ic).map_err(HarnessError::InitialCondition)?;
    let mut record = TrialRecord {
        nodes: n,
        draws: opts.record_draws.then(|| Vec::with_capacity(k * n)),
        infected: Vec::with_capacity(k),
        spend: Vec::with_capacity(k),
        waste: Vec::with_capacity(k),
        susceptibility: Vec::with_capacity(k),
        exposure: Vec::with_capacity(k),
        snapshots: Vec::new(),
        allocations: opts.record_allocations.then(|| Vec::with_capacity(k)),
    };
    let snapshot = |state: &NetworkState<'_>, record: &mut TrialRecord| {
        if opts.snapshot_steps.contains(&state.time()) {
            record.snapshots.push(Snapshot {
                step: state.time(),
                u: state.individual_proportions(),
                s: state.super_urn_proportions(),
            });
        }
    };
    snapshot(&state, &mut record);

    for step in 1..=k {
        let delta_r = setup.ic.red_increment.at(step);
        let budget = setup.budget.resolve(setup.ic, step);
        let input = StrategyInput::new(&state, delta_r, budget, setup.centrality);
        let alloc = setup
            .strategy
            .allocate(&input)
            .map_err(|source| HarnessError::Strategy {
                strategy: setup.strategy.id(),
                step,
                source,
            })?;
        let out = state
            .step(delta_r, &alloc.delta_b, rng)
            .map_err(|source| HarnessError::Step { step, source })?;

        let waste = alloc
            .delta_b
            .iter()
            .zip(&out.z)
            .filter(|(_, &z)| z)
            .map(|(db, _)| db)
            .sum();
        record.infected.push(out.infected() as u32);
        record.spend.push(alloc.spend());
        record.waste.push(waste);
        record.susceptibility.push(state.susceptibility());
        record.exposure.push(state.exposure());
        if let Some(d) = record.draws.as_mut() {
            d.extend_from_slice(&out.z);
        }
        if let Some(a) = record.allocations.as_mut() {
            a.push(alloc.delta_b);
        }
        snapshot(&state, &mut record);
    }
    Ok(record)
}

/// Thread usage for ensembles. Without the `parallel` feature every variant
/// runs sequentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon global pool.
    #[default]
    Parallel,
    /// Dedicated pool with this many threads.
    Workers(usize),
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec<'a> {
    pub setup: TrialSetup<'a>,
    pub trials: usize,
    pub master_seed: u64,
    pub snapshot_steps: Vec<usize>,
    /// Keep trial 0's per-step allocation vectors.
    pub record_allocations: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub strategy: String,
    pub trials: usize,
    pub steps: usize,
    pub rho: f64,
    /// `Î_t`: mean of `Z_{i,t}` over trials and nodes.
    pub infection_rate: Vec<f64>,
    /// Standard error of `Î_t` across trials.
    pub infection_stderr: Vec<f64>,
    pub susceptibility: Vec<f64>,
    pub exposure: Vec<f64>,
    /// Mean per-step spend.
    pub usage: Vec<f64>,
    /// Mean cumulative waste.
    pub waste: Vec<f64>,
    /// Trial-mean per-node `U`, `S` at the requested steps.
    pub snapshots: Vec<Snapshot>,
    pub allocations: Option<Vec<Vec<f64>>>,
}

const CHUNK: usize = 64;

struct Accumulator {
    frac: Vec<f64>,
    frac_sq: Vec<f64>,
    susceptibility: Vec<f64>,
    exposure: Vec<f64>,
    spend: Vec<f64>,
    waste: Vec<f64>,
    snapshots: Vec<Snapshot>,
}

impl Accumulator {
    fn new(steps: usize) -> Self {
        Self {
            frac: vec![0.0; steps],
            frac_sq: vec![0.0; steps],
            susceptibility: vec![0.0; steps],
            exposure: vec![0.0; steps],
            spend: vec![0.0; steps],
            waste: vec![0.0; steps],
            snapshots: Vec::new(),
        }
    }

    fn add(&mut self, r: &TrialRecord) {
        let n = r.nodes as f64;
        for t in 0..r.steps() {
            let f = r.infected[t] as f64 / n;
            self.frac[t] += f;
            self.frac_sq[t] += f * f;
            self.susceptibility[t] += r.susceptibility[t];
            self.exposure[t] += r.exposure[t];
            self.spend[t] += r.spend[t];
            self.waste[t] += r.waste[t];
        }
        if self.snapshots.is_empty() {
            self.snapshots = r
                .snapshots
                .iter()
                .map(|s| Snapshot {
                    step: s.step,
                    u: vec![0.0; s.u.len()],
                    s: vec![0.0; s.s.len()],
                })
                .collect();
        }
        for (acc, s) in self.snapshots.iter_mut().zip(&r.snapshots) {
            add_into(&mut acc.u, &s.u);
            add_into(&mut acc.s, &s.s);
        }
    }
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += x;
    }
}

pub fn run_ensemble(spec: &EnsembleSpec<'_>, exec: Execution) -> Result<EnsembleResult, HarnessError> {
    let setup = &spec.setup;
    if spec.trials == 0 {
        return Err(HarnessError::Invalid {
            field: "trials",
            reason: "must be at least 1".into(),
        });
    }
    if setup.steps == 0 {
        return Err(HarnessError::Invalid {
            field: "steps",
            reason: "must be at least 1".into(),
        });
    }
    if let BudgetRule::Fixed(b) = setup.budget {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(HarnessError::Invalid {
                field: "budget",
                reason: format!("must be non-negative, got {b}"),
            });
        }
    }
    setup.strategy.validate().map_err(|source| HarnessError::Strategy {
        strategy: setup.strategy.id(),
        step: 0,
        source,
    })?;
    setup
        .ic
        .validate(setup.graph.node_count())
        .map_err(HarnessError::InitialCondition)?;

    let opts = TrialOptions {
        snapshot_steps: spec.snapshot_steps.clone(),
        record_draws: false,
        record_allocations: false,
    };
    let run_one = |trial: usize| -> Result<TrialRecord, HarnessError> {
        let mut rng = trial_rng(spec.master_seed, trial as u64);
        let mut o = opts.clone();
        o.record_allocations = spec.record_allocations && trial == 0;
        run_trial(setup, &mut rng, &o)
    };

    let mut acc = Accumulator::new(setup.steps);
    let mut allocations = None;
    let mut start = 0;
    while start < spec.trials {
        let end = (start + CHUNK).min(spec.trials);
        let records = run_chunk(start..end, &run_one, exec)?;
        for mut r in records {
            if r.allocations.is_some() {
                allocations = r.allocations.take();
            }
            acc.add(&r);
        }
        start = end;
    }
    Ok(finish(spec, acc, allocations))
}

fn run_chunk<F>(
    range: std::ops::Range<usize>,
    run_one: &F,
    exec: Execution,
) -> Result<Vec<TrialRecord>, HarnessError>
where
    F: Fn(usize) -> Result<TrialRecord, HarnessError> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match exec {
            Execution::Sequential => {}
            Execution::Parallel => return range.into_par_iter().map(run_one).collect(),
            Execution::Workers(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w.max(1))
                    .build()
                    .map_err(|e| HarnessError::Invalid {
                        field: "workers",
                        reason: e.to_string(),
                    })?;
                return pool.install(|| range.into_par_iter().map(run_one).collect());
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = exec;
    range.map(run_one).collect()
}

fn finish(spec: &EnsembleSpec<'_>, acc: Accumulator, allocations: Option<Vec<Vec<f64>>>) -> EnsembleResult {
    let t = spec.trials as f64;
    let mean = |v: Vec<f64>| v.into_iter().map(|x| x / t).collect::<Vec<_>>();
    let infection_rate = mean(acc.frac);
    let infection_stderr = infection_rate
        .iter()
        .zip(&acc.frac_sq)
        .map(|(m, sq)| {
            if spec.trials < 2 {
                return 0.0;
            }
            let var = ((sq / t - m * m) * t / (t - 1.0)).max(0.0);
            (var / t).sqrt()
        })
        .collect();
    let mut cumulative = 0.0;
    let waste = acc
        .waste
        .iter()
        .map(|w| {
            cumulative += w / t;
            cumulative
        })
        .collect();
    let snapshots = acc
        .snapshots
        .into_iter()
        .map(|s| Snapshot {
            step: s.step,
            u: mean(s.u),
            s: mean(s.s),
        })
        .collect();
    EnsembleResult {
        strategy: spec.setup.strategy.id().to_string(),
        trials: spec.trials,
        steps: spec.setup.steps,
        rho: spec.setup.ic.rho(),
        infection_rate,
        infection_stderr,
        susceptibility: mean(acc.susceptibility),
        exposure: mean(acc.exposure),
        usage: mean(acc.spend),
        waste,
        snapshots,
        allocations,
    }
}
