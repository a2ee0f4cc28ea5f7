//! The network Polya contagion process.
//!
//! Every node owns an urn of red (infection) and black (health) mass. A node
//! draws from its *super urn*, the union of its own urn and its neighbours'
//! urns, so the probability that node `i` draws red at step `n` is the red
//! fraction `S_{i,n-1}` of that super urn. After the draw, `Δr_i(n)` red mass is
//! added if red came up, `Δb_i(n)` black mass otherwise.
//!
//! Masses are reals: curing policies produce fractional black additions.

mod classical;
mod enumerate;

pub use classical::ClassicalUrn;
pub use enumerate::{exact_infection_rate, joint_probability, MAX_ENUM_NODES, MAX_ENUM_STEPS};

use rand::Rng;
use thiserror::Error;

use crate::graph::Graph;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("{field} has {got} entries, graph has {expected} nodes")]
    Dimension {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{field}[{node}] = {value} must be positive and finite")]
    NonPositive {
        field: &'static str,
        node: usize,
        value: f64,
    },
    #[error("{field}[{node}] = {value} must be non-negative and finite")]
    Negative {
        field: &'static str,
        node: usize,
        value: f64,
    },
    #[error("enumeration limited to {max_nodes} nodes and {max_steps} steps (got {nodes} nodes, {steps} steps)")]
    TooLarge {
        nodes: usize,
        steps: usize,
        max_nodes: usize,
        max_steps: usize,
    },
}

/// Red additions `Δr_i(t)` over time.
#[derive(Debug, Clone, PartialEq)]
pub enum RedSchedule {
    /// Same per-node increments at every step.
    Constant(Vec<f64>),
    /// Row `t-1` holds the increments for step `t`; the last row repeats past
    /// the end.
    PerStep(Vec<Vec<f64>>),
}

impl RedSchedule {
    /// Increments for step `step` (1-based).
    pub fn at(&self, step: usize) -> &[f64] {
        match self {
            RedSchedule::Constant(v) => v,
            RedSchedule::PerStep(rows) => {
                let idx = step.saturating_sub(1).min(rows.len() - 1);
                &rows[idx]
            }
        }
    }

    fn rows(&self) -> Box<dyn Iterator<Item = &Vec<f64>> + '_> {
        match self {
            RedSchedule::Constant(v) => Box::new(std::iter::once(v)),
            RedSchedule::PerStep(rows) => Box::new(rows.iter()),
        }
    }
}

/// Initial ball masses `R_i`, `B_i` and the red-addition schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub red: Vec<f64>,
    pub black: Vec<f64>,
    pub red_increment: RedSchedule,
}

impl InitialCondition {
    pub fn new(red: Vec<f64>, black: Vec<f64>, red_increment: Vec<f64>) -> Self {
        Self {
            red,
            black,
            red_increment: RedSchedule::Constant(red_increment),
        }
    }

    /// Network-wide initial red fraction `ΣR / Σ(R + B)`.
    pub fn rho(&self) -> f64 {
        let r: f64 = self.red.iter().sum();
        let b: f64 = self.black.iter().sum();
        r / (r + b)
    }

    pub fn validate(&self, n: usize) -> Result<(), StateError> {
        check_len("red", self.red.len(), n)?;
        check_len("black", self.black.len(), n)?;
        for (field, v) in [("red", &self.red), ("black", &self.black)] {
            for (node, &value) in v.iter().enumerate() {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(StateError::NonPositive { field, node, value });
                }
            }
        }
        if let RedSchedule::PerStep(rows) = &self.red_increment {
            if rows.is_empty() {
                return Err(StateError::Dimension {
                    field: "delta_r",
                    got: 0,
                    expected: n,
                });
            }
        }
        for row in self.red_increment.rows() {
            check_nonnegative("delta_r", row, n)?;
        }
        Ok(())
    }
}

fn check_len(field: &'static str, got: usize, expected: usize) -> Result<(), StateError> {
    if got != expected {
        return Err(StateError::Dimension {
            field,
            got,
            expected,
        });
    }
    Ok(())
}

fn check_nonnegative(field: &'static str, v: &[f64], n: usize) -> Result<(), StateError> {
    check_len(field, v.len(), n)?;
    for (node, &value) in v.iter().enumerate() {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(StateError::Negative { field, node, value });
        }
    }
    Ok(())
}

/// Outcome of one network draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawOutcome {
    /// `Z_{i,n}`: true when node `i` drew red.
    pub z: Vec<bool>,
    /// `S_{i,n-1}`, the probability each draw was made with.
    pub s_prev: Vec<f64>,
}

impl DrawOutcome {
    pub fn infected(&self) -> usize {
        self.z.iter().filter(|&&z| z).count()
    }
}

/// Urn masses at time `n` with cached super-urn sums.
#[derive(Debug, Clone)]
pub struct NetworkState<'g> {
    graph: &'g Graph,
    step: usize,
    red: Vec<f64>,
    total: Vec<f64>,
    hood_red: Vec<f64>,
    hood_total: Vec<f64>,
}

impl<'g> NetworkState<'g> {
    pub fn new(graph: &'g Graph, ic: &InitialCondition) -> Result<Self, StateError> {
        ic.validate(graph.node_count())?;
        let red = ic.red.clone();
        let total: Vec<f64> = ic.red.iter().zip(&ic.black).map(|(r, b)| r + b).collect();
        Ok(Self::from_masses(graph, red, total, 0))
    }

    /// State with explicit masses; `0 < red[i] < total[i]` is asserted.
    pub fn from_masses(graph: &'g Graph, red: Vec<f64>, total: Vec<f64>, step: usize) -> Self {
        assert_eq!(red.len(), graph.node_count());
        assert_eq!(total.len(), graph.node_count());
        assert!(
            red.iter().zip(&total).all(|(r, t)| *r > 0.0 && r < t),
            "masses must satisfy 0 < red < total"
        );
        let mut state = Self {
            graph,
            step,
            red,
            total,
            hood_red: Vec::new(),
            hood_total: Vec::new(),
        };
        (state.hood_red, state.hood_total) = state.fresh_hood_sums();
        state
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn node_count(&self) -> usize {
        self.red.len()
    }

    /// Number of draws made so far.
    pub fn time(&self) -> usize {
        self.step
    }

    pub fn red_mass(&self) -> &[f64] {
        &self.red
    }

    /// `X_{i,n}`.
    pub fn total_mass(&self) -> &[f64] {
        &self.total
    }

    /// Red mass of the super urn of `i`.
    pub fn hood_red(&self, i: usize) -> f64 {
        self.hood_red[i]
    }

    /// `X̄_{i,n}`, total mass of the super urn of `i`.
    pub fn hood_total(&self, i: usize) -> f64 {
        self.hood_total[i]
    }

    /// `U_{i,n}`.
    pub fn individual_proportion(&self, i: usize) -> f64 {
        self.red[i] / self.total[i]
    }

    /// `S_{i,n}`.
    pub fn super_urn_proportion(&self, i: usize) -> f64 {
        self.hood_red[i] / self.hood_total[i]
    }

    pub fn individual_proportions(&self) -> Vec<f64> {
        (0..self.node_count())
            .map(|i| self.individual_proportion(i))
            .collect()
    }

    pub fn super_urn_proportions(&self) -> Vec<f64> {
        (0..self.node_count())
            .map(|i| self.super_urn_proportion(i))
            .collect()
    }

    /// Network susceptibility `Ũ_n`.
    pub fn susceptibility(&self) -> f64 {
        (0..self.node_count())
            .map(|i| self.individual_proportion(i))
            .sum::<f64>()
            / self.node_count() as f64
    }

    /// Network exposure `S̃_n`.
    pub fn exposure(&self) -> f64 {
        (0..self.node_count())
            .map(|i| self.super_urn_proportion(i))
            .sum::<f64>()
            / self.node_count() as f64
    }

    /// Super-urn sums recomputed from scratch.
    pub fn fresh_hood_sums(&self) -> (Vec<f64>, Vec<f64>) {
        (0..self.node_count())
            .map(|i| {
                self.graph
                    .closed_neighborhood(i)
                    .iter()
                    .fold((0.0, 0.0), |(r, t), &j| (r + self.red[j], t + self.total[j]))
            })
            .unzip()
    }

    /// Largest relative gap between the cached and recomputed super-urn sums.
    pub fn cache_drift(&self) -> f64 {
        let (r, t) = self.fresh_hood_sums();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        (0..self.node_count())
            .map(|i| rel(self.hood_red[i], r[i]).max(rel(self.hood_total[i], t[i])))
            .fold(0.0, f64::max)
    }

    /// Draws every node (one uniform per node, in id order) against
    /// `S_{i,n-1}`, then applies the additions.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        delta_r: &[f64],
        delta_b: &[f64],
        rng: &mut R,
    ) -> Result<DrawOutcome, StateError> {
        let n = self.node_count();
        check_nonnegative("delta_r", delta_r, n)?;
        check_nonnegative("delta_b", delta_b, n)?;
        let s_prev = self.super_urn_proportions();
        let z: Vec<bool> = s_prev.iter().map(|&s| rng.random::<f64>() < s).collect();
        self.apply_unchecked(&z, delta_r, delta_b);
        Ok(DrawOutcome { z, s_prev })
    }

    /// Applies a given draw vector, as if it had been sampled.
    pub fn apply(&mut self, z: &[bool], delta_r: &[f64], delta_b: &[f64]) -> Result<(), StateError> {
        let n = self.node_count();
        check_len("z", z.len(), n)?;
        check_nonnegative("delta_r", delta_r, n)?;
        check_nonnegative("delta_b", delta_b, n)?;
        self.apply_unchecked(z, delta_r, delta_b);
        Ok(())
    }

    fn apply_unchecked(&mut self, z: &[bool], delta_r: &[f64], delta_b: &[f64]) {
        let graph = self.graph;
        for j in 0..self.node_count() {
            let (d_red, d_total) = if z[j] {
                (delta_r[j], delta_r[j])
            } else {
                (0.0, delta_b[j])
            };
            if d_total == 0.0 {
                continue;
            }
            self.red[j] += d_red;
            self.total[j] += d_total;
            for &k in graph.closed_neighborhood(j) {
                self.hood_red[k] += d_red;
                self.hood_total[k] += d_total;
            }
        }
        self.step += 1;
        debug_assert!(self.cache_drift() <= 1e-12, "super-urn cache drifted");
    }
}
