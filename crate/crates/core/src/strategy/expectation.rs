//! One-step conditional expectations given the current state.
//!
//! Given `F_{n-1}` the draws `Z_{j,n}` are independent Bernoulli(`S_{j,n-1}`),
//! so `E[U_{i,n} | F_{n-1}]` is a two-outcome average and
//! `E[S_{i,n} | F_{n-1}]` is a finite sum over the `2^{|N_i'|}` joint outcomes
//! of the closed neighbourhood.

use super::StrategyError;
use crate::urn::NetworkState;

pub const MAX_EXACT_NEIGHBORHOOD: usize = 20;

/// Exact `(E[U_{i,n} | F_{n-1}], E[S_{i,n} | F_{n-1}])` for every node.
pub fn exact_one_step_expectation(
    state: &NetworkState<'_>,
    delta_r: &[f64],
    delta_b: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), StrategyError> {
    let graph = state.graph();
    let n = state.node_count();
    if let Some(node) = (0..n).find(|&i| graph.closed_neighborhood(i).len() > MAX_EXACT_NEIGHBORHOOD) {
        return Err(StrategyError::NeighborhoodTooLarge {
            node,
            size: graph.closed_neighborhood(node).len(),
            limit: MAX_EXACT_NEIGHBORHOOD,
        });
    }
    let s = state.super_urn_proportions();
    let red = state.red_mass();
    let total = state.total_mass();

    let expected_u = (0..n)
        .map(|i| {
            s[i] * (red[i] + delta_r[i]) / (total[i] + delta_r[i])
                + (1.0 - s[i]) * red[i] / (total[i] + delta_b[i])
        })
        .collect();

    let expected_s = (0..n)
        .map(|i| {
            let hood = graph.closed_neighborhood(i);
            // (probability, red increment, total increment) per member outcome
            let branches: Vec<[(f64, f64, f64); 2]> = hood
                .iter()
                .map(|&j| [(s[j], delta_r[j], delta_r[j]), (1.0 - s[j], 0.0, delta_b[j])])
                .collect();
            enumerate_ratio(&branches, 1.0, state.hood_red(i), state.hood_total(i))
        })
        .collect();

    Ok((expected_u, expected_s))
}

fn enumerate_ratio(branches: &[[(f64, f64, f64); 2]], p: f64, num: f64, den: f64) -> f64 {
    match branches.split_first() {
        None => p * num / den,
        Some((head, rest)) => head
            .iter()
            .map(|&(q, dr, dt)| enumerate_ratio(rest, p * q, num + dr, den + dt))
            .sum(),
    }
}

/// Mass-weighted one-step drifts
/// `E[(U_{i,n} - U_{i,n-1}) X_{i,n} | F_{n-1}]` and
/// `E[(S_{i,n} - S_{i,n-1}) X̄_{i,n} | F_{n-1}]`.
///
/// These are linear in `Δb`. The first vanishes exactly on the individual
/// bound; the max/min super-urn bounds make the second strictly
/// negative/positive. They
/// carry the same sign as the unweighted drift only when the post-step mass
/// is deterministic (e.g. `Δb = Δr`).
pub fn mass_weighted_drift(
    state: &NetworkState<'_>,
    delta_r: &[f64],
    delta_b: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let graph = state.graph();
    let n = state.node_count();
    let s = state.super_urn_proportions();
    let u = state.individual_proportions();
    let drift_u = (0..n)
        .map(|i| delta_r[i] * s[i] * (1.0 - u[i]) - u[i] * (1.0 - s[i]) * delta_b[i])
        .collect();
    let drift_s = (0..n)
        .map(|i| {
            graph
                .closed_neighborhood(i)
                .iter()
                .map(|&j| (1.0 - s[i]) * delta_r[j] * s[j] - s[i] * delta_b[j] * (1.0 - s[j]))
                .sum()
        })
        .collect();
    (drift_u, drift_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::strategy::{individual_bound, super_urn_bound, Extreme};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state<'g>(g: &'g Graph, rng: &mut ChaCha8Rng) -> NetworkState<'g> {
        let n = g.node_count();
        let red: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
        let total = red.iter().map(|r| r + rng.random_range(1.0..10.0)).collect();
        NetworkState::from_masses(g, red, total, 0)
    }

    #[test]
    fn no_op_step_preserves_proportions() {
        let g = Graph::barabasi_albert(6, 2, 1).unwrap();
        let st = random_state(&g, &mut ChaCha8Rng::seed_from_u64(2));
        let (eu, es) = exact_one_step_expectation(&st, &[0.0; 6], &[0.0; 6]).unwrap();
        for i in 0..6 {
            assert_relative_eq!(eu[i], st.individual_proportion(i), max_relative = 1e-14);
            assert_relative_eq!(es[i], st.super_urn_proportion(i), max_relative = 1e-14);
        }
    }

    #[test]
    fn symmetric_state_threshold_is_exact_martingale() {
        // U = S makes the threshold equal Δr, so the post-step mass is deterministic
        let k2 = Graph::from_edges(2, [(0, 1)]).unwrap();
        let st = NetworkState::from_masses(&k2, vec![1.0, 1.0], vec![2.0, 2.0], 0);
        let dr = [2.0, 2.0];
        let db = individual_bound(&st.individual_proportions(), &st.super_urn_proportions(), &dr);
        assert_relative_eq!(db[0], 2.0);
        let (eu, _) = exact_one_step_expectation(&st, &dr, &db).unwrap();
        assert_relative_eq!(eu[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(eu[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn exact_expectation_matches_enumeration_by_hand() {
        let k2 = Graph::from_edges(2, [(0, 1)]).unwrap();
        let st = NetworkState::from_masses(&k2, vec![1.0, 2.0], vec![3.0, 5.0], 0);
        let (dr, db) = ([1.0, 2.0], [3.0, 0.5]);
        let s = 3.0 / 8.0;
        // four joint outcomes of the shared super urn
        let expect = s * s * (3.0 + 3.0) / (8.0 + 3.0)
            + s * (1.0 - s) * (3.0 + 1.0) / (8.0 + 1.0 + 0.5)
            + (1.0 - s) * s * (3.0 + 2.0) / (8.0 + 3.0 + 2.0)
            + (1.0 - s) * (1.0 - s) * 3.0 / (8.0 + 3.5);
        let (eu, es) = exact_one_step_expectation(&st, &dr, &db).unwrap();
        assert_relative_eq!(es[0], expect, max_relative = 1e-14);
        assert_relative_eq!(es[1], expect, max_relative = 1e-14);
        let eu0 = s * 2.0 / 4.0 + (1.0 - s) * 1.0 / 6.0;
        assert_relative_eq!(eu[0], eu0, max_relative = 1e-14);
    }

    #[test]
    fn drift_categories_follow_the_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for seed in 0..50 {
            let g = Graph::barabasi_albert(7, 2, seed).unwrap();
            let st = random_state(&g, &mut rng);
            let dr: Vec<f64> = (0..7).map(|_| rng.random_range(0.5..5.0)).collect();
            let (u, s) = (st.individual_proportions(), st.super_urn_proportions());

            let at = individual_bound(&u, &s, &dr);
            let (du, _) = mass_weighted_drift(&st, &dr, &at);
            assert!(du.iter().all(|d| d.abs() < 1e-10));
            let above: Vec<f64> = at.iter().map(|x| x * 1.01).collect();
            assert!(mass_weighted_drift(&st, &dr, &above).0.iter().all(|&d| d < 0.0));
            let below: Vec<f64> = at.iter().map(|x| x * 0.99).collect();
            assert!(mass_weighted_drift(&st, &dr, &below).0.iter().all(|&d| d > 0.0));

            let b1 = super_urn_bound(&g, &s, &dr, Extreme::Max, 1.0 + 1e-6);
            assert!(mass_weighted_drift(&st, &dr, &b1).1.iter().all(|&d| d < 0.0));
            let b2 = super_urn_bound(&g, &s, &dr, Extreme::Min, 1.0 - 1e-6);
            assert!(mass_weighted_drift(&st, &dr, &b2).1.iter().all(|&d| d > 0.0));
        }
    }

    #[test]
    fn exact_u_expectation_decreases_in_curing() {
        let g = Graph::barabasi_albert(5, 1, 3).unwrap();
        let st = random_state(&g, &mut ChaCha8Rng::seed_from_u64(4));
        let dr = [1.0; 5];
        let lo = exact_one_step_expectation(&st, &dr, &[0.5; 5]).unwrap().0;
        let hi = exact_one_step_expectation(&st, &dr, &[5.0; 5]).unwrap().0;
        assert!(lo.iter().zip(&hi).all(|(l, h)| h < l));
    }

    #[test]
    fn large_neighborhood_rejected() {
        let g = Graph::from_edges(22, (1..22).map(|i| (0, i))).unwrap();
        let st = NetworkState::from_masses(&g, vec![1.0; 22], vec![2.0; 22], 0);
        assert!(matches!(
            exact_one_step_expectation(&st, &[1.0; 22], &[1.0; 22]),
            Err(StrategyError::NeighborhoodTooLarge { node: 0, size: 22, .. })
        ));
    }
}
