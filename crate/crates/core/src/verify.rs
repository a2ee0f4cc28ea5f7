//! Self-checks on small built-in fixtures, reported one line per property.
//!
//! Gating properties decide the verdict. `Info` lines report quantities that
//! are printed for inspection but do not gate, such as how often the exact
//! one-step mean of `U` or `S` moves against the sign its mass-weighted drift
//! predicts.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::experiment::ExperimentError;
use crate::graph::{Centrality, Graph};
use crate::harness::{generate_ic, run_ensemble, BudgetRule, EnsembleSpec, Execution, TrialSetup};
use crate::optimizer::{frank_wolfe, ExposureObjective};
use crate::strategy::{
    exact_one_step_expectation, individual_bound, mass_weighted_drift, super_urn_bound, uniform, Extreme, Strategy,
    DEFAULT_STRICT_MARGIN,
};
use crate::urn::{exact_infection_rate, InitialCondition, NetworkState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Pass,
    /// Holds with equality where strict inequality was asked for.
    Boundary,
    Fail,
    Info,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Boundary => "PASS (equality boundary, non-strict)",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<28} {}  {}", self.name, self.status, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub properties: Vec<PropertyReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.status != Status::Fail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Margin applied to the super-urn bounds.
    pub epsilon: f64,
    /// Random states per drift / expectation property.
    pub states: usize,
    /// Random points for the gradient and convexity checks.
    pub points: usize,
    /// Monte-Carlo trials for the estimator check.
    pub trials: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            epsilon: DEFAULT_STRICT_MARGIN,
            states: 200,
            points: 100,
            trials: 20_000,
        }
    }
}

impl VerifyConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ExperimentError::Parse {
            path: path.to_path_buf(),
            source: Box::new(source),
        })
    }
}

/// Gradient used by the finite-difference check; swappable for mutation tests.
pub type GradientFn = fn(&ExposureObjective<'_>, &[f64]) -> Vec<f64>;

pub fn run_verify(cfg: &VerifyConfig) -> VerifyReport {
    run_verify_with(cfg, |obj, x| obj.gradient(x))
}

pub fn run_verify_with(cfg: &VerifyConfig, gradient: GradientFn) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let graphs: Vec<Graph> = (0..8)
        .map(|k| Graph::barabasi_albert(10, 1 + k % 3, rng.random()).expect("valid generator"))
        .collect();
    let mut properties = vec![
        individual_drift(&graphs, cfg, &mut rng),
        exact_symmetric_martingale(),
    ];
    properties.push(individual_exact(&graphs, cfg, &mut rng));
    properties.push(super_urn_drift(&graphs, cfg, &mut rng, Extreme::Max));
    properties.push(super_urn_drift(&graphs, cfg, &mut rng, Extreme::Min));
    properties.push(super_urn_exact(&graphs, cfg, &mut rng));
    properties.extend(gradient_checks(cfg, &mut rng, gradient));
    properties.push(frank_wolfe_vs_grid());
    properties.push(enumeration_vs_monte_carlo(cfg));
    VerifyReport { properties }
}

/// A state reached from a uniform-1-10 start after a few steps under random
/// black additions, together with a fresh `Δr`.
pub fn random_reachable_state<'g>(graph: &'g Graph, rng: &mut ChaCha8Rng) -> (NetworkState<'g>, Vec<f64>) {
    let ic = generate_ic(graph, rng.random());
    let mut state = NetworkState::new(graph, &ic).expect("generated IC is valid");
    let n = graph.node_count();
    let delta_r = ic.red_increment.at(1).to_vec();
    for _ in 0..rng.random_range(0..6) {
        let db: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        state.step(&delta_r, &db, rng).expect("valid step");
    }
    (state, delta_r)
}

fn with_states<F>(graphs: &[Graph], count: usize, rng: &mut ChaCha8Rng, mut f: F)
where
    F: FnMut(&NetworkState<'_>, &[f64]),
{
    for k in 0..count {
        let (state, dr) = random_reachable_state(&graphs[k % graphs.len()], rng);
        f(&state, &dr);
    }
}

fn individual_drift(graphs: &[Graph], cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> PropertyReport {
    let mut worst: f64 = 0.0;
    with_states(graphs, cfg.states, rng, |st, dr| {
        let db = individual_bound(&st.individual_proportions(), &st.super_urn_proportions(), dr);
        let (du, _) = mass_weighted_drift(st, dr, &db);
        let s = st.super_urn_proportions();
        for i in 0..st.node_count() {
            worst = worst.max((du[i] / (dr[i] * s[i])).abs());
        }
    });
    gate(
        "individual-drift-zero",
        worst <= 1e-10,
        format!("mass-weighted U drift at the individual bound, max relative {worst:.2e}"),
    )
}

fn exact_symmetric_martingale() -> PropertyReport {
    // every node at the same red fraction, so U = S and Δb = Δr is the bound
    let g = Graph::barabasi_albert(8, 2, 4).expect("valid generator");
    let total: Vec<f64> = (0..8).map(|i| 4.0 + i as f64).collect();
    let red: Vec<f64> = total.iter().map(|t| 0.375 * t).collect();
    let st = NetworkState::from_masses(&g, red, total, 0);
    let dr: Vec<f64> = (0..8).map(|i| 1.0 + (i % 3) as f64).collect();
    let db = individual_bound(&st.individual_proportions(), &st.super_urn_proportions(), &dr);
    let (eu, es) = exact_one_step_expectation(&st, &dr, &db).expect("small neighbourhoods");
    let worst = eu
        .iter()
        .chain(&es)
        .map(|e| (e - 0.375).abs())
        .fold(0.0, f64::max);
    gate(
        "exact-martingale-symmetric",
        worst <= 1e-12,
        format!("U = S fixture, max |E[.] - 0.375| = {worst:.2e}"),
    )
}

fn individual_exact(graphs: &[Graph], cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> PropertyReport {
    let (mut off, mut nodes, mut worst) = (0usize, 0usize, 0.0f64);
    with_states(graphs, cfg.states, rng, |st, dr| {
        let u = st.individual_proportions();
        let db = individual_bound(&u, &st.super_urn_proportions(), dr);
        let (eu, _) = exact_one_step_expectation(st, dr, &db).expect("small neighbourhoods");
        for i in 0..st.node_count() {
            let d = (eu[i] - u[i]).abs();
            nodes += 1;
            if d > 1e-10 {
                off += 1;
            }
            worst = worst.max(d);
        }
    });
    PropertyReport {
        name: "individual-exact-mean",
        status: Status::Info,
        detail: format!("exact E[U|F] != U beyond 1e-10 at {off}/{nodes} nodes, max gap {worst:.2e}"),
    }
}

fn super_urn_drift(graphs: &[Graph], cfg: &VerifyConfig, rng: &mut ChaCha8Rng, ext: Extreme) -> PropertyReport {
    let eps = cfg.epsilon;
    let (scale, name, sign) = match ext {
        Extreme::Max => (1.0 + eps, "super-urn-drift-strict", -1.0),
        Extreme::Min => (1.0 - eps, "super-urn-drift-sub", 1.0),
    };
    // sign * drift must be > 0 (strict) or >= -tol (eps = 0)
    let mut least = f64::INFINITY;
    with_states(graphs, cfg.states, rng, |st, dr| {
        let s = st.super_urn_proportions();
        let db = super_urn_bound(st.graph(), &s, dr, ext, scale);
        let (_, ds) = mass_weighted_drift(st, dr, &db);
        for (i, d) in ds.iter().enumerate() {
            least = least.min(sign * d / st.hood_total(i));
        }
    });
    let detail = format!("epsilon {eps}, min signed drift / super-urn mass {least:.3e}");
    if eps > 0.0 {
        gate(name, least > 0.0, detail)
    } else if least >= -1e-12 {
        PropertyReport {
            name,
            status: Status::Boundary,
            detail,
        }
    } else {
        gate(name, false, detail)
    }
}

fn super_urn_exact(graphs: &[Graph], cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> PropertyReport {
    let eps = cfg.epsilon;
    let (mut up, mut down, mut nodes) = (0usize, 0usize, 0usize);
    with_states(graphs, cfg.states, rng, |st, dr| {
        let s = st.super_urn_proportions();
        let hi = super_urn_bound(st.graph(), &s, dr, Extreme::Max, 1.0 + eps);
        let lo = super_urn_bound(st.graph(), &s, dr, Extreme::Min, 1.0 - eps);
        let (_, e_hi) = exact_one_step_expectation(st, dr, &hi).expect("small neighbourhoods");
        let (_, e_lo) = exact_one_step_expectation(st, dr, &lo).expect("small neighbourhoods");
        for i in 0..st.node_count() {
            nodes += 1;
            up += usize::from(e_hi[i] >= s[i]);
            down += usize::from(e_lo[i] <= s[i]);
        }
    });
    PropertyReport {
        name: "super-urn-exact-mean",
        status: Status::Info,
        detail: format!(
            "exact E[S|F] >= S under the upper bound at {up}/{nodes} nodes; <= S under the lower bound at {down}/{nodes}"
        ),
    }
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize, budget: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().ln()).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|r| budget * r / sum).collect()
}

fn gradient_checks(cfg: &VerifyConfig, rng: &mut ChaCha8Rng, gradient: GradientFn) -> Vec<PropertyReport> {
    let (mut fd_err, mut max_partial, mut convex_slack) = (0.0f64, f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..cfg.points {
        let g = Graph::barabasi_albert(20, 1 + k % 3, rng.random()).expect("valid generator");
        let (st, dr) = random_reachable_state(&g, rng);
        let obj = ExposureObjective::build(&st, &dr);
        let budget: f64 = dr.iter().sum();
        let x = random_simplex(rng, 20, budget);
        let grad = gradient(&obj, &x);
        let h = 1e-6 * budget;
        for j in 0..20 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let fd = (obj.evaluate(&xp) - obj.evaluate(&xm)) / (2.0 * h);
            fd_err = fd_err.max((grad[j] - fd).abs() / fd.abs().max(1e-300));
            max_partial = max_partial.max(grad[j]);
        }
        let y = random_simplex(rng, 20, budget);
        let lambda: f64 = rng.random();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        let chord = lambda * obj.evaluate(&x) + (1.0 - lambda) * obj.evaluate(&y);
        convex_slack = convex_slack.min(chord - obj.evaluate(&mix));
    }
    vec![
        gate(
            "gradient-finite-difference",
            fd_err <= 1e-6,
            format!("max relative error {fd_err:.2e} over {} points", cfg.points),
        ),
        gate(
            "gradient-nonpositive",
            max_partial <= 0.0,
            format!("largest partial {max_partial:.3e}"),
        ),
        gate(
            "objective-convexity",
            convex_slack >= -1e-12,
            format!("min chord - value {convex_slack:.3e}"),
        ),
    ]
}

fn frank_wolfe_vs_grid() -> PropertyReport {
    let g = Graph::from_edges(3, [(0, 1), (1, 2)]).expect("path");
    // the optimum here splits the budget between nodes 0 and 1
    let st = NetworkState::from_masses(&g, vec![2.0, 1.0, 9.5], vec![4.0, 4.0, 13.5], 0);
    let dr = [2.5, 1.0, 0.5];
    let obj = ExposureObjective::build(&st, &dr);
    let budget = 3.0;
    let res = frank_wolfe(&obj, budget, 200, 100);
    let best = grid_minimum(&obj, budget, 200);
    let value = *res.objective_trace.last().expect("non-empty trace");
    let monotone = res.objective_trace.windows(2).all(|w| w[1] <= w[0]);
    gate(
        "frank-wolfe-vs-grid",
        (value - best).abs() <= 1e-4 && monotone,
        format!("gap {:.2e}, trace monotone: {monotone}", (value - best).abs()),
    )
}

/// Exhaustive minimum of a 3-node objective over the simplex grid with
/// `steps` divisions.
pub fn grid_minimum(obj: &ExposureObjective<'_>, budget: f64, steps: usize) -> f64 {
    let h = budget / steps as f64;
    let mut best = f64::INFINITY;
    for a in 0..=steps {
        for b in 0..=(steps - a) {
            let x = [a as f64 * h, b as f64 * h, (steps - a - b) as f64 * h];
            best = best.min(obj.evaluate(&x));
        }
    }
    best
}

fn enumeration_vs_monte_carlo(cfg: &VerifyConfig) -> PropertyReport {
    let fixtures = [
        (
            Graph::from_edges(2, [(0, 1)]).expect("k2"),
            InitialCondition::new(vec![2.0, 1.0], vec![3.0, 4.0], vec![2.0, 1.0]),
        ),
        (
            Graph::from_edges(3, [(0, 1), (1, 2)]).expect("path"),
            InitialCondition::new(vec![1.0, 3.0, 2.0], vec![2.0, 2.0, 5.0], vec![1.0, 2.0, 3.0]),
        ),
    ];
    let steps = 3;
    let budget = 2.0;
    let mut worst_z: f64 = 0.0;
    for (g, ic) in &fixtures {
        let n = g.node_count();
        let exact = exact_infection_rate(g, ic, steps, |_| uniform(n, budget)).expect("tiny fixture");
        let centrality = Centrality::compute(g);
        let spec = EnsembleSpec {
            setup: TrialSetup {
                graph: g,
                centrality: &centrality,
                ic,
                strategy: &Strategy::Uniform,
                budget: BudgetRule::Fixed(budget),
                steps,
            },
            trials: cfg.trials,
            master_seed: cfg.seed,
            snapshot_steps: Vec::new(),
            record_allocations: false,
        };
        let mc = run_ensemble(&spec, Execution::default()).expect("valid ensemble");
        for (p, est) in exact.iter().zip(&mc.infection_rate) {
            let se = (p * (1.0 - p) / cfg.trials as f64).sqrt();
            worst_z = worst_z.max((est - p).abs() / se);
        }
    }
    gate(
        "enumeration-vs-monte-carlo",
        worst_z <= 4.0,
        format!("max deviation {worst_z:.2} binomial standard errors ({} trials)", cfg.trials),
    )
}

fn gate(name: &'static str, ok: bool, detail: String) -> PropertyReport {
    PropertyReport {
        name,
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}
