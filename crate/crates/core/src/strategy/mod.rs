//! Curing policies: per step, map the observable state to black-ball
//! additions `Δb_i(n)`.
//!
//! | id  | policy                                                   | budget |
//! |-----|----------------------------------------------------------|--------|
//! | i   | each `U_i` held at its supermartingale bound             | free   |
//! | ii  | each `S_i` held at its supermartingale bound             | free   |
//! | iii | conditional-gradient minimisation of expected exposure   | `B`    |
//! | iv  | `B` split by degree × closeness × `S_i`                  | `B`    |
//! | v   | `B / N` to every node                                    | `B`    |

mod expectation;

pub use expectation::{exact_one_step_expectation, mass_weighted_drift, MAX_EXACT_NEIGHBORHOOD};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::graph::{Centrality, Graph};
use crate::optimizer::{frank_wolfe, ExposureObjective};
use crate::urn::NetworkState;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("budget must be non-negative and finite (got {0})")]
    InvalidBudget(f64),
    #[error("unknown strategy {0:?} (expected one of i, ii, iii, iv, v)")]
    Unknown(String),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("neighbourhood of node {node} has {size} members, enumeration limit is {limit}")]
    NeighborhoodTooLarge {
        node: usize,
        size: usize,
        limit: usize,
    },
}

/// Everything a policy may observe before the draw at step `n`.
pub struct StrategyInput<'a, 'g> {
    pub state: &'a NetworkState<'g>,
    /// `Δr_i(n)`, known one step ahead.
    pub delta_r: &'a [f64],
    pub budget: f64,
    pub centrality: &'a Centrality,
    /// `U_{i,n-1}`.
    pub u: Vec<f64>,
    /// `S_{i,n-1}`.
    pub s: Vec<f64>,
}

impl<'a, 'g> StrategyInput<'a, 'g> {
    pub fn new(
        state: &'a NetworkState<'g>,
        delta_r: &'a [f64],
        budget: f64,
        centrality: &'a Centrality,
    ) -> Self {
        Self {
            state,
            delta_r,
            budget,
            centrality,
            u: state.individual_proportions(),
            s: state.super_urn_proportions(),
        }
    }

    /// Step index the allocation is for.
    pub fn time(&self) -> usize {
        self.state.time() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuringAllocation {
    pub delta_b: Vec<f64>,
    /// Whether `Σ Δb_i = B` was enforced.
    pub budget_bound: bool,
}

impl CuringAllocation {
    pub fn spend(&self) -> f64 {
        self.delta_b.iter().sum()
    }
}

/// A curing policy and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// (i): `Δb_i = Δr_i (1-U_i) S_i / (U_i (1-S_i))`.
    IndividualBound { clamp: bool },
    /// (ii): the max-form super-urn bound times `1 + margin`; `margin = 0` is the
    /// equality form, any positive margin gives the strict form.
    SuperUrnBound { margin: f64, clamp: bool },
    /// (iii): Frank–Wolfe on the expected-exposure objective.
    Gradient { iterations: usize, granularity: usize },
    /// (iv): centrality-infection ratio.
    CentralityRatio,
    /// (v): uniform split.
    Uniform,
    /// The min-form super-urn bound times `factor`; a submartingale probe, not a cure.
    SubmartingaleBound { factor: f64 },
}

pub const DEFAULT_STRICT_MARGIN: f64 = 1e-6;
pub const DEFAULT_ITERATIONS: usize = 50;
pub const DEFAULT_GRANULARITY: usize = 100;

impl Strategy {
    pub fn id(&self) -> &'static str {
        match self {
            Strategy::IndividualBound { .. } => "i",
            Strategy::SuperUrnBound { .. } => "ii",
            Strategy::Gradient { .. } => "iii",
            Strategy::CentralityRatio => "iv",
            Strategy::Uniform => "v",
            Strategy::SubmartingaleBound { .. } => "b2",
        }
    }

    /// Whether the policy spends exactly the budget every step.
    pub fn is_budgeted(&self) -> bool {
        match self {
            Strategy::IndividualBound { clamp } | Strategy::SuperUrnBound { clamp, .. } => *clamp,
            Strategy::Gradient { .. } | Strategy::CentralityRatio | Strategy::Uniform => true,
            Strategy::SubmartingaleBound { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        match *self {
            Strategy::SuperUrnBound { margin, .. } if !(margin >= 0.0 && margin.is_finite()) => {
                Err(StrategyError::InvalidParameter {
                    name: "epsilon",
                    reason: format!("must be a non-negative number, got {margin}"),
                })
            }
            Strategy::Gradient { iterations, .. } if iterations < 1 => {
                Err(StrategyError::InvalidParameter {
                    name: "iterations",
                    reason: "must be at least 1".into(),
                })
            }
            Strategy::Gradient { granularity, .. } if granularity < 2 => {
                Err(StrategyError::InvalidParameter {
                    name: "granularity",
                    reason: "must be at least 2".into(),
                })
            }
            Strategy::SubmartingaleBound { factor } if !(factor > 0.0 && factor < 1.0) => {
                Err(StrategyError::InvalidParameter {
                    name: "factor",
                    reason: format!("must lie in (0, 1), got {factor}"),
                })
            }
            _ => Ok(()),
        }
    }

    pub fn allocate(&self, input: &StrategyInput<'_, '_>) -> Result<CuringAllocation, StrategyError> {
        let budget = input.budget;
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(StrategyError::InvalidBudget(budget));
        }
        let graph = input.state.graph();
        let (delta_b, budget_bound) = match *self {
            Strategy::IndividualBound { clamp } => {
                let v = individual_bound(&input.u, &input.s, input.delta_r);
                clamp_if(v, budget, clamp)
            }
            Strategy::SuperUrnBound { margin, clamp } => {
                let v = super_urn_bound(graph, &input.s, input.delta_r, Extreme::Max, 1.0 + margin);
                clamp_if(v, budget, clamp)
            }
            Strategy::Gradient {
                iterations,
                granularity,
            } => {
                let objective = ExposureObjective::build(input.state, input.delta_r);
                let result = frank_wolfe(&objective, budget, iterations, granularity);
                (result.allocation, true)
            }
            Strategy::CentralityRatio => (centrality_ratio(input.centrality, &input.s, budget), true),
            Strategy::Uniform => (uniform(graph.node_count(), budget), true),
            Strategy::SubmartingaleBound { factor } => (
                super_urn_bound(graph, &input.s, input.delta_r, Extreme::Min, factor),
                false,
            ),
        };
        Ok(CuringAllocation {
            delta_b,
            budget_bound,
        })
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Strategy {
    type Err = StrategyError;

    /// Strategy ids with default parameters.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "i" => Ok(Strategy::IndividualBound { clamp: false }),
            "ii" => Ok(Strategy::SuperUrnBound {
                margin: 0.0,
                clamp: false,
            }),
            "iii" => Ok(Strategy::Gradient {
                iterations: DEFAULT_ITERATIONS,
                granularity: DEFAULT_GRANULARITY,
            }),
            "iv" => Ok(Strategy::CentralityRatio),
            "v" => Ok(Strategy::Uniform),
            other => Err(StrategyError::Unknown(other.to_string())),
        }
    }
}

fn clamp_if(v: Vec<f64>, budget: f64, clamp: bool) -> (Vec<f64>, bool) {
    if clamp {
        (rescale_to_budget(v, budget), true)
    } else {
        (v, false)
    }
}

/// Individual-urn bound per node: `Δr (1-U) S / (U (1-S))`.
pub fn individual_bound(u: &[f64], s: &[f64], delta_r: &[f64]) -> Vec<f64> {
    u.iter()
        .zip(s)
        .zip(delta_r)
        .map(|((&u, &s), &dr)| dr * (1.0 - u) * s / (u * (1.0 - s)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    Max,
    Min,
}

/// `scale · Δr_i · S_i/(1-S_i) · ext_{k ∈ N_i'} (1-S_k)/S_k`. `Max` gives the
/// supermartingale bound for `S`, `Min` the submartingale one. On an
/// undirected graph the nodes whose super urn contains `i` are exactly `N_i'`.
pub fn super_urn_bound(graph: &Graph, s: &[f64], delta_r: &[f64], ext: Extreme, scale: f64) -> Vec<f64> {
    let odds: Vec<f64> = s.iter().map(|&s| (1.0 - s) / s).collect();
    (0..graph.node_count())
        .map(|i| {
            let hood = graph.closed_neighborhood(i).iter().map(|&k| odds[k]);
            let e = match ext {
                Extreme::Max => hood.fold(f64::NEG_INFINITY, f64::max),
                Extreme::Min => hood.fold(f64::INFINITY, f64::min),
            };
            scale * delta_r[i] * s[i] / (1.0 - s[i]) * e
        })
        .collect()
}

/// `B · deg_i C_i S_i / Σ_j deg_j C_j S_j`.
pub fn centrality_ratio(centrality: &Centrality, s: &[f64], budget: f64) -> Vec<f64> {
    let weights: Vec<f64> = centrality
        .degree
        .iter()
        .zip(&centrality.closeness)
        .zip(s)
        .map(|((&d, &c), &s)| d as f64 * c * s)
        .collect();
    let total: f64 = weights.iter().sum();
    let v = weights.iter().map(|w| budget * w / total).collect();
    fit_budget(v, budget)
}

pub fn uniform(n: usize, budget: f64) -> Vec<f64> {
    fit_budget(vec![budget / n as f64; n], budget)
}

/// Scales a non-negative vector to sum to `budget`; an all-zero vector
/// becomes the uniform split.
pub fn rescale_to_budget(v: Vec<f64>, budget: f64) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        fit_budget(v.iter().map(|x| budget * x / total).collect(), budget)
    } else {
        uniform(v.len(), budget)
    }
}

/// Pushes the summation residue onto the last coordinate.
pub(crate) fn fit_budget(mut v: Vec<f64>, budget: f64) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if let Some(last) = v.last_mut() {
        *last = (*last + (budget - total)).max(0.0);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::urn::InitialCondition;
    use approx::assert_relative_eq;
    use proptest::prelude::{prop_assert, proptest};
    use super::Strategy;

    fn path3() -> Graph {
        Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn individual_bound_values() {
        assert_relative_eq!(individual_bound(&[0.5], &[0.5], &[2.0])[0], 2.0);
        assert_relative_eq!(individual_bound(&[0.5], &[0.8], &[1.0])[0], 4.0, max_relative = 1e-12);
    }

    #[test]
    fn super_urn_bound_values() {
        let k2 = Graph::from_edges(2, [(0, 1)]).unwrap();
        let v = super_urn_bound(&k2, &[0.3, 0.3], &[1.5, 2.0], Extreme::Max, 1.0);
        assert_relative_eq!(v[0], 1.5, max_relative = 1e-12);
        assert_relative_eq!(v[1], 2.0, max_relative = 1e-12);
        let v = super_urn_bound(&k2, &[0.3, 0.3], &[1.5, 2.0], Extreme::Min, 0.5);
        assert_relative_eq!(v[0], 0.75, max_relative = 1e-12);

        // node 0 in a star with neighbours at S = 0.5 and 0.25
        let star = Graph::from_edges(3, [(0, 1), (0, 2)]).unwrap();
        let v = super_urn_bound(&star, &[0.5, 0.5, 0.25], &[1.0; 3], Extreme::Max, 1.0);
        assert_relative_eq!(v[0], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn centrality_ratio_on_path() {
        let g = path3();
        let c = Centrality::compute(&g);
        let v = centrality_ratio(&c, &[0.5; 3], 10.0);
        // weights 1/3, 1, 1/3
        assert_relative_eq!(v[1], 10.0 * 3.0 / 5.0, max_relative = 1e-12);
        assert_relative_eq!(v[0], 10.0 / 5.0, max_relative = 1e-12);

        let k2 = Graph::from_edges(2, [(0, 1)]).unwrap();
        let v = centrality_ratio(&Centrality::compute(&k2), &[0.4, 0.4], 7.0);
        assert_eq!(v, vec![3.5, 3.5]);
    }

    #[test]
    fn uniform_values() {
        assert_eq!(uniform(5, 10.0), vec![2.0; 5]);
        assert_eq!(uniform(4, 0.0), vec![0.0; 4]);
        let v = uniform(1363, 7500.0);
        assert_relative_eq!(v[0], 7500.0 / 1363.0);
        assert_relative_eq!(v.iter().sum::<f64>(), 7500.0, max_relative = 1e-9);
    }

    #[test]
    fn strategy_ids_parse() {
        for id in ["i", "ii", "iii", "iv", "v"] {
            assert_eq!(id.parse::<Strategy>().unwrap().id(), id);
        }
        assert!("vi".parse::<Strategy>().is_err());
        assert!(Strategy::Gradient { iterations: 0, granularity: 10 }.validate().is_err());
        assert!(Strategy::SubmartingaleBound { factor: 1.0 }.validate().is_err());
    }

    #[test]
    fn clamp_mode_spends_budget() {
        let g = path3();
        let ic = InitialCondition::new(vec![3.0, 1.0, 2.0], vec![1.0, 2.0, 4.0], vec![2.0, 1.0, 3.0]);
        let st = NetworkState::new(&g, &ic).unwrap();
        let c = Centrality::compute(&g);
        let dr = [2.0, 1.0, 3.0];
        let input = StrategyInput::new(&st, &dr, 6.0, &c);
        let free = Strategy::IndividualBound { clamp: false }.allocate(&input).unwrap();
        assert!(!free.budget_bound);
        let clamped = Strategy::IndividualBound { clamp: true }.allocate(&input).unwrap();
        assert!(clamped.budget_bound);
        assert_relative_eq!(clamped.spend(), 6.0, max_relative = 1e-12);
        let ratio = clamped.delta_b[0] / free.delta_b[0];
        assert_relative_eq!(clamped.delta_b[2] / free.delta_b[2], ratio, max_relative = 1e-12);
    }

    #[test]
    fn negative_budget_rejected() {
        let g = path3();
        let st = NetworkState::from_masses(&g, vec![1.0; 3], vec![2.0; 3], 0);
        let c = Centrality::compute(&g);
        let input = StrategyInput::new(&st, &[1.0; 3], -1.0, &c);
        assert_eq!(Strategy::Uniform.allocate(&input), Err(StrategyError::InvalidBudget(-1.0)));
    }

    proptest! {
        #[test]
        fn budgeted_allocations_are_feasible(
            seed in 0u64..500,
            budget in 0.0f64..100.0,
            svals in proptest::collection::vec(0.01f64..0.99, 12),
        ) {
            let g = Graph::barabasi_albert(12, 2, seed).unwrap();
            let c = Centrality::compute(&g);
            for v in [centrality_ratio(&c, &svals, budget), uniform(12, budget)] {
                prop_assert!(v.iter().all(|&x| x >= 0.0));
                let sum: f64 = v.iter().sum();
                prop_assert!((sum - budget).abs() <= 1e-9 * budget.max(1.0));
            }
        }

        #[test]
        fn centrality_ratio_is_scale_free(
            svals in proptest::collection::vec(0.01f64..0.5, 10),
            factor in 0.1f64..1.9,
        ) {
            let g = Graph::barabasi_albert(10, 1, 4).unwrap();
            let c = Centrality::compute(&g);
            let a = centrality_ratio(&c, &svals, 20.0);
            let scaled: Vec<f64> = svals.iter().map(|s| s * factor).collect();
            let b = centrality_ratio(&c, &scaled, 20.0);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }

        #[test]
        fn min_bound_never_exceeds_max_bound(
            svals in proptest::collection::vec(0.01f64..0.99, 8),
            dr in proptest::collection::vec(0.0f64..10.0, 8),
        ) {
            let g = Graph::barabasi_albert(8, 2, 1).unwrap();
            let hi = super_urn_bound(&g, &svals, &dr, Extreme::Max, 1.0);
            let lo = super_urn_bound(&g, &svals, &dr, Extreme::Min, 1.0);
            for (l, h) in lo.iter().zip(&hi) {
                prop_assert!(l <= h);
            }
        }
    }
}
