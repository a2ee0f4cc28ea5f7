//! Strategy suites: TOML configuration, execution, and CSV/JSON artifacts.
//!
//! ```toml
//! [graph]
//! generator = "ba:100:1:seed=7"   # or: path = "edges.txt"
//!
//! [run]
//! trials = 1000
//! steps = 1000
//! seed = 7
//! budget = "sum_delta_r"
//!
//! [initial]
//! rule = "uniform-1-10"
//!
//! [[case]]
//! strategy = "iv"
//! ```
//!
//! Every case of a suite shares the graph, the initial condition and the
//! per-trial random streams.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Centrality, Graph, GraphError};
use crate::harness::{generate_ic, run_ensemble, BudgetRule, EnsembleResult, EnsembleSpec, Execution, HarnessError, TrialSetup};
use crate::strategy::{Strategy, DEFAULT_GRANULARITY, DEFAULT_ITERATIONS, DEFAULT_STRICT_MARGIN};
use crate::urn::InitialCondition;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("graph {path}: {source}")]
    Graph {
        path: String,
        #[source]
        source: GraphError,
    },
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("case {case}: {source}")]
    Case {
        case: String,
        #[source]
        source: HarnessError,
    },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ExperimentError {
    ExperimentError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// `ba:N:M` or `ba:N:M:seed=S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub nodes: usize,
    pub attach: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<Graph, GraphError> {
        Graph::barabasi_albert(self.nodes, self.attach, self.seed)
    }
}

impl FromStr for GeneratorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() < 3 || parts.len() > 4 || parts[0] != "ba" {
            return Err(format!("expected ba:N:M[:seed=S], got {s:?}"));
        }
        let nodes: usize = parts[1].parse().map_err(|_| format!("bad node count {:?}", parts[1]))?;
        let attach: usize = parts[2].parse().map_err(|_| format!("bad attachment count {:?}", parts[2]))?;
        let seed = match parts.get(3) {
            None => 0,
            Some(p) => p
                .strip_prefix("seed=")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| format!("bad seed field {p:?}"))?,
        };
        if attach == 0 || nodes <= attach {
            return Err(format!("need N > M >= 1, got N={nodes}, M={attach}"));
        }
        Ok(GeneratorSpec { nodes, attach, seed })
    }
}

impl std::fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ba:{}:{}:seed={}", self.nodes, self.attach, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    /// Edge list, relative to the config file.
    pub path: Option<String>,
    pub generator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trials: usize,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `seed`.
    pub ic_seed: Option<u64>,
    pub budget: BudgetRule,
    /// Defaults to `[0, steps]`.
    pub snapshot_steps: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub rule: Option<String>,
    pub red: Option<Vec<f64>>,
    pub black: Option<Vec<f64>>,
    pub delta_r: Option<Vec<f64>>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            rule: Some(UNIFORM_RULE.into()),
            red: None,
            black: None,
            delta_r: None,
        }
    }
}

const UNIFORM_RULE: &str = "uniform-1-10";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub strategy: String,
    /// Output file stem; defaults to the strategy id.
    pub name: Option<String>,
    /// Strategy ii: use the strict bound with margin `epsilon`.
    #[serde(default)]
    pub strict: bool,
    pub epsilon: Option<f64>,
    /// Strategies i, ii: rescale to spend exactly the budget.
    #[serde(default)]
    pub clamp: bool,
    pub iterations: Option<usize>,
    pub granularity: Option<usize>,
    /// Strategy b2 scale in (0, 1).
    pub factor: Option<f64>,
    /// Write trial 0's per-step allocation.
    #[serde(default)]
    pub log_allocation: bool,
}

impl CaseConfig {
    pub fn new(strategy: &str) -> Self {
        Self {
            strategy: strategy.into(),
            name: None,
            strict: false,
            epsilon: None,
            clamp: false,
            iterations: None,
            granularity: None,
            factor: None,
            log_allocation: false,
        }
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.strategy)
    }

    pub fn to_strategy(&self, index: usize) -> Result<Strategy, ExperimentError> {
        let field = |key: &str| format!("case[{index}].{key}");
        let strategy = match self.strategy.as_str() {
            "i" => Strategy::IndividualBound { clamp: self.clamp },
            "ii" => {
                let margin = match (self.strict, self.epsilon) {
                    (_, Some(e)) => e,
                    (true, None) => DEFAULT_STRICT_MARGIN,
                    (false, None) => 0.0,
                };
                Strategy::SuperUrnBound {
                    margin,
                    clamp: self.clamp,
                }
            }
            "iii" => Strategy::Gradient {
                iterations: self.iterations.unwrap_or(DEFAULT_ITERATIONS),
                granularity: self.granularity.unwrap_or(DEFAULT_GRANULARITY),
            },
            "iv" => Strategy::CentralityRatio,
            "v" => Strategy::Uniform,
            "b2" => Strategy::SubmartingaleBound {
                factor: self.factor.unwrap_or(1.0 - DEFAULT_STRICT_MARGIN),
            },
            other => {
                return Err(invalid(
                    field("strategy"),
                    format!("unknown strategy {other:?} (expected i, ii, iii, iv, v or b2)"),
                ))
            }
        };
        strategy.validate().map_err(|e| match e {
            crate::strategy::StrategyError::InvalidParameter { name, reason } => invalid(field(name), reason),
            other => invalid(field("strategy"), other.to_string()),
        })?;
        Ok(strategy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub graph: GraphConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(rename = "case")]
    pub cases: Vec<CaseConfig>,
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|source| ExperimentError::Parse {
            path: path.to_path_buf(),
            source: Box::new(source),
        })
    }

    pub fn ic_seed(&self) -> u64 {
        self.run.ic_seed.unwrap_or(self.run.seed)
    }

    pub fn snapshot_steps(&self) -> Vec<usize> {
        match &self.run.snapshot_steps {
            Some(s) => s.clone(),
            None => vec![0, self.run.steps],
        }
    }

    /// Checks everything that does not need the graph.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        match (&self.graph.path, &self.graph.generator) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(invalid("graph", "set exactly one of path or generator"));
            }
            (None, Some(g)) => {
                g.parse::<GeneratorSpec>().map_err(|r| invalid("graph.generator", r))?;
            }
            _ => {}
        }
        if self.run.trials < 1 {
            return Err(invalid("run.trials", "must be at least 1"));
        }
        if self.run.steps < 1 {
            return Err(invalid("run.steps", "must be at least 1"));
        }
        if let BudgetRule::Fixed(b) = self.run.budget {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(invalid("run.budget", format!("must be non-negative, got {b}")));
            }
        }
        if let Some(&k) = self.snapshot_steps().iter().find(|&&k| k > self.run.steps) {
            return Err(invalid("run.snapshot_steps", format!("step {k} exceeds run.steps")));
        }
        let ic = &self.initial;
        let explicit = [&ic.red, &ic.black, &ic.delta_r].iter().filter(|v| v.is_some()).count();
        match (&ic.rule, explicit) {
            (Some(r), 0) if r == UNIFORM_RULE => {}
            (Some(r), 0) => {
                return Err(invalid("initial.rule", format!("unknown rule {r:?} (expected {UNIFORM_RULE:?})")));
            }
            (None, 3) => {}
            _ => {
                return Err(invalid(
                    "initial",
                    format!("give either rule = {UNIFORM_RULE:?} or all of red, black, delta_r"),
                ))
            }
        }
        if self.cases.is_empty() {
            return Err(invalid("case", "at least one [[case]] is required"));
        }
        let mut names = BTreeSet::new();
        for (k, case) in self.cases.iter().enumerate() {
            case.to_strategy(k)?;
            let name = case.name();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(invalid(
                    format!("case[{k}].name"),
                    format!("{name:?} must be non-empty and use only letters, digits, '_' or '-'"),
                ));
            }
            if !names.insert(name.to_string()) {
                return Err(invalid(format!("case[{k}].name"), format!("duplicate case name {name:?}")));
            }
        }
        Ok(())
    }
}

/// A validated suite with its graph and initial condition materialised.
#[derive(Debug, Clone)]
pub struct Suite {
    pub config: SuiteConfig,
    pub graph: Graph,
    pub centrality: Centrality,
    pub ic: InitialCondition,
    strategies: Vec<Strategy>,
}

impl Suite {
    /// Relative graph paths resolve against `base_dir`.
    pub fn prepare(config: SuiteConfig, base_dir: &Path) -> Result<Self, ExperimentError> {
        config.validate()?;
        let graph = match (&config.graph.path, &config.graph.generator) {
            (Some(p), _) => {
                let path = base_dir.join(p);
                let file = fs::File::open(&path).map_err(|source| ExperimentError::Read {
                    path: path.clone(),
                    source,
                })?;
                Graph::parse_edge_list(BufReader::new(file)).map_err(|source| ExperimentError::Graph {
                    path: path.display().to_string(),
                    source,
                })?
            }
            (None, Some(g)) => {
                let spec: GeneratorSpec = g.parse().map_err(|r| invalid("graph.generator", r))?;
                spec.build().map_err(|source| ExperimentError::Graph {
                    path: g.clone(),
                    source,
                })?
            }
            (None, None) => unreachable!("validated"),
        };
        let n = graph.node_count();
        let ic = match &config.initial {
            InitialConfig {
                red: Some(r),
                black: Some(b),
                delta_r: Some(d),
                ..
            } => InitialCondition::new(r.clone(), b.clone(), d.clone()),
            _ => generate_ic(&graph, config.ic_seed()),
        };
        ic.validate(n).map_err(|e| invalid("initial", e.to_string()))?;
        let strategies = config
            .cases
            .iter()
            .enumerate()
            .map(|(k, c)| c.to_strategy(k))
            .collect::<Result<_, _>>()?;
        let centrality = Centrality::compute(&graph);
        Ok(Self {
            config,
            graph,
            centrality,
            ic,
            strategies,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let config = SuiteConfig::load(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::prepare(config, base)
    }

    pub fn run(&self, exec: Execution) -> Result<SuiteResult, ExperimentError> {
        let cfg = &self.config;
        let mut cases = Vec::with_capacity(cfg.cases.len());
        for (case, strategy) in cfg.cases.iter().zip(&self.strategies) {
            let spec = EnsembleSpec {
                setup: TrialSetup {
                    graph: &self.graph,
                    centrality: &self.centrality,
                    ic: &self.ic,
                    strategy,
                    budget: cfg.run.budget,
                    steps: cfg.run.steps,
                },
                trials: cfg.run.trials,
                master_seed: cfg.run.seed,
                snapshot_steps: cfg.snapshot_steps(),
                record_allocations: case.log_allocation,
            };
            let result = run_ensemble(&spec, exec).map_err(|source| ExperimentError::Case {
                case: case.name().to_string(),
                source,
            })?;
            cases.push((case.name().to_string(), result));
        }
        Ok(SuiteResult { cases })
    }

    pub fn manifest(&self, result: &SuiteResult) -> Manifest {
        Manifest {
            config: self.config.clone(),
            master_seed: self.config.run.seed,
            ic_seed: self.config.ic_seed(),
            graph_hash: self.graph.content_hash(),
            nodes: self.graph.node_count(),
            edges: self.graph.edge_count(),
            rho: self.ic.rho(),
            cases: result.cases.iter().map(|(name, r)| (name.clone(), r.strategy.clone())).collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    /// `(case name, result)` in config order.
    pub cases: Vec<(String, EnsembleResult)>,
}

impl SuiteResult {
    pub fn get(&self, name: &str) -> Option<&EnsembleResult> {
        self.cases.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config: SuiteConfig,
    pub master_seed: u64,
    pub ic_seed: u64,
    /// SHA-256 of the sorted label edge list.
    pub graph_hash: String,
    pub nodes: usize,
    pub edges: usize,
    pub rho: f64,
    pub cases: Vec<(String, String)>,
    pub version: String,
}

pub struct SummaryRow<'a> {
    pub case: &'a str,
    pub strategy: &'a str,
    pub final_infection_rate: f64,
    pub total_waste: f64,
    pub mean_usage: f64,
}

pub fn summary_rows(result: &SuiteResult) -> Vec<SummaryRow<'_>> {
    result
        .cases
        .iter()
        .map(|(name, r)| SummaryRow {
            case: name,
            strategy: &r.strategy,
            final_infection_rate: r.infection_rate.last().copied().unwrap_or(f64::NAN),
            total_waste: r.waste.last().copied().unwrap_or(0.0),
            mean_usage: r.usage.iter().sum::<f64>() / r.usage.len() as f64,
        })
        .collect()
}

/// Writes every artifact of `result` into `dir`; returns the files written
/// in order.
///
/// Files per case `<c>`: `infection_rate_<c>.csv`, `infection_stderr_<c>.csv`,
/// `susceptibility_<c>.csv`, `exposure_<c>.csv`, `usage_<c>.csv`,
/// `waste_<c>.csv` (all `step,value`), `snapshot_<c>_step<k>.csv`
/// (`node_id,U,S`), and `allocation_<c>.csv` (`step,node_id,delta_b`) when
/// logged. Once per suite: `summary.csv` and `manifest.json`.
pub fn write_artifacts(suite: &Suite, result: &SuiteResult, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<(), ExperimentError> {
        let path = dir.join(name);
        write_file(&path, body.as_bytes())?;
        written.push(path);
        Ok(())
    };
    for (name, r) in &result.cases {
        for (metric, series) in [
            ("infection_rate", &r.infection_rate),
            ("infection_stderr", &r.infection_stderr),
            ("susceptibility", &r.susceptibility),
            ("exposure", &r.exposure),
            ("usage", &r.usage),
            ("waste", &r.waste),
        ] {
            put(format!("{metric}_{name}.csv"), series_csv(series))?;
        }
        for snap in &r.snapshots {
            let mut body = String::from("node_id,U,S\n");
            for (i, (u, s)) in snap.u.iter().zip(&snap.s).enumerate() {
                writeln!(body, "{},{u},{s}", suite.graph.label(i)).unwrap();
            }
            put(format!("snapshot_{name}_step{}.csv", snap.step), body)?;
        }
        if let Some(alloc) = &r.allocations {
            let mut body = String::from("step,node_id,delta_b\n");
            for (t, row) in alloc.iter().enumerate() {
                for (i, db) in row.iter().enumerate() {
                    writeln!(body, "{},{},{db}", t + 1, suite.graph.label(i)).unwrap();
                }
            }
            put(format!("allocation_{name}.csv"), body)?;
        }
    }
    let mut summary = String::from("case,strategy,final_infection_rate,total_waste,mean_usage\n");
    for row in summary_rows(result) {
        writeln!(
            summary,
            "{},{},{},{},{}",
            row.case, row.strategy, row.final_infection_rate, row.total_waste, row.mean_usage
        )
        .unwrap();
    }
    put("summary.csv".into(), summary)?;
    let manifest = serde_json::to_string_pretty(&suite.manifest(result)).expect("manifest serialises");
    put("manifest.json".into(), manifest + "\n")?;
    Ok(written)
}

fn series_csv(series: &[f64]) -> String {
    let mut body = String::from("step,value\n");
    for (t, v) in series.iter().enumerate() {
        writeln!(body, "{},{v}", t + 1).unwrap();
    }
    body
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let wrap = |source| ExperimentError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(wrap)?;
    f.write_all(bytes).map_err(wrap)
}
