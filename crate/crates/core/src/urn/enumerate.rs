//! Exact path enumeration for tiny networks.

use super::{InitialCondition, NetworkState, StateError};
use crate::graph::Graph;

pub const MAX_ENUM_NODES: usize = 3;
pub const MAX_ENUM_STEPS: usize = 12;
/// Cap on `nodes * steps` for full-tree marginal enumeration.
const MAX_ENUM_DRAWS: usize = 20;

/// Probability of the draw history `draws[i][t]` (node `i`, step `t+1`),
/// replaying the state recursion. `policy` maps the pre-step state to `Δb`.
pub fn joint_probability<F>(
    graph: &Graph,
    ic: &InitialCondition,
    draws: &[Vec<bool>],
    mut policy: F,
) -> Result<f64, StateError>
where
    F: FnMut(&NetworkState<'_>) -> Vec<f64>,
{
    let n = graph.node_count();
    let steps = draws.first().map_or(0, Vec::len);
    if n > MAX_ENUM_NODES || steps > MAX_ENUM_STEPS {
        return Err(StateError::TooLarge {
            nodes: n,
            steps,
            max_nodes: MAX_ENUM_NODES,
            max_steps: MAX_ENUM_STEPS,
        });
    }
    if draws.len() != n || draws.iter().any(|d| d.len() != steps) {
        return Err(StateError::Dimension {
            field: "draws",
            got: draws.len(),
            expected: n,
        });
    }
    let mut state = NetworkState::new(graph, ic)?;
    let mut p = 1.0;
    let mut z = vec![false; n];
    for t in 0..steps {
        for (i, (zi, row)) in z.iter_mut().zip(draws).enumerate() {
            let s = state.super_urn_proportion(i);
            *zi = row[t];
            p *= if *zi { s } else { 1.0 - s };
        }
        let delta_b = policy(&state);
        state.apply(&z, ic.red_increment.at(t + 1), &delta_b)?;
    }
    Ok(p)
}

/// Exact average infection rate `Ĩ_t = (1/N) Σ_i P(Z_{i,t} = 1)` for
/// `t = 1..=steps`, by walking the full outcome tree.
pub fn exact_infection_rate<F>(
    graph: &Graph,
    ic: &InitialCondition,
    steps: usize,
    mut policy: F,
) -> Result<Vec<f64>, StateError>
where
    F: FnMut(&NetworkState<'_>) -> Vec<f64>,
{
    let n = graph.node_count();
    if n * steps > MAX_ENUM_DRAWS {
        return Err(StateError::TooLarge {
            nodes: n,
            steps,
            max_nodes: n,
            max_steps: MAX_ENUM_DRAWS / n,
        });
    }
    let root = NetworkState::new(graph, ic)?;
    let mut rate = vec![0.0; steps];
    walk(&root, 1.0, steps, ic, &mut policy, &mut rate)?;
    for r in &mut rate {
        *r /= n as f64;
    }
    Ok(rate)
}

fn walk<F>(
    state: &NetworkState<'_>,
    weight: f64,
    steps: usize,
    ic: &InitialCondition,
    policy: &mut F,
    rate: &mut [f64],
) -> Result<(), StateError>
where
    F: FnMut(&NetworkState<'_>) -> Vec<f64>,
{
    let t = state.time();
    if t == steps {
        return Ok(());
    }
    let n = state.node_count();
    let s = state.super_urn_proportions();
    // marginals at this step need no branching
    rate[t] += weight * s.iter().sum::<f64>();
    if t + 1 == steps {
        return Ok(());
    }
    let delta_b = policy(state);
    let delta_r = ic.red_increment.at(t + 1);
    let mut z = vec![false; n];
    for mask in 0u32..(1 << n) {
        let mut p = weight;
        for i in 0..n {
            z[i] = mask & (1 << i) != 0;
            p *= if z[i] { s[i] } else { 1.0 - s[i] };
        }
        let mut next = state.clone();
        next.apply(&z, delta_r, &delta_b)?;
        walk(&next, p, steps, ic, policy, rate)?;
    }
    Ok(())
}
