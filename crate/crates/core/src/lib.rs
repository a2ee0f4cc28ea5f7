//! Network Polya contagion: simulation, curing strategies and the checks
//! behind them.
//!
//! - [`graph`]: contact graphs, edge lists, Barabási–Albert generation, closeness.
//! - [`urn`]: the contagion state machine, the classical urn, exact enumeration.
//! - [`strategy`]: the five curing policies and one-step conditional expectations.
//! - [`optimizer`]: expected-exposure objective and its Frank–Wolfe minimiser.
//! - [`harness`]: seeded trials and ensemble averages.
//! - [`experiment`]: config files, strategy suites and CSV output.
//! - [`verify`]: property checks on small built-in fixtures.

pub mod experiment;
pub mod graph;
pub mod harness;
pub mod optimizer;
pub mod strategy;
pub mod urn;
pub mod verify;

pub use graph::{Centrality, Graph, GraphError};
pub use harness::{run_ensemble, run_trial, BudgetRule, EnsembleResult, EnsembleSpec, Execution, TrialRecord, TrialSetup};
pub use strategy::{CuringAllocation, Strategy, StrategyInput};
pub use urn::{InitialCondition, NetworkState};
