//! Budgeted myopic curing via conditional gradient on the simplex.
//!
//! The objective is the expected network exposure after one step written in
//! ratio-of-expectations form,
//!
//! ```text
//! f(x) = (1/N) Σ_i c_i / (d_i + σ_i(x)),   σ_i(x) = Σ_{j ∈ N_i'} x_j (1 - S_j)
//! c_i  = red mass of super urn i + Σ_{j ∈ N_i'} Δr_j S_j
//! d_i  = total mass of super urn i + Σ_{j ∈ N_i'} Δr_j S_j
//! ```
//!
//! Each term is a positive constant over a positive affine function of `x`,
//! so `f` is convex and decreasing in every coordinate.

use crate::graph::Graph;
use crate::strategy::fit_budget;
use crate::urn::NetworkState;

#[derive(Debug, Clone)]
pub struct ExposureObjective<'g> {
    graph: &'g Graph,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    /// `w_j = 1 - S_j`.
    pub weights: Vec<f64>,
}

impl<'g> ExposureObjective<'g> {
    pub fn build(state: &NetworkState<'g>, delta_r: &[f64]) -> Self {
        let graph = state.graph();
        let s = state.super_urn_proportions();
        let expected_red: Vec<f64> = delta_r.iter().zip(&s).map(|(dr, s)| dr * s).collect();
        let (c, d) = (0..graph.node_count())
            .map(|i| {
                let add: f64 = graph
                    .closed_neighborhood(i)
                    .iter()
                    .map(|&j| expected_red[j])
                    .sum();
                (state.hood_red(i) + add, state.hood_total(i) + add)
            })
            .unzip();
        Self {
            graph,
            c,
            d,
            weights: s.iter().map(|s| 1.0 - s).collect(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.c.len()
    }

    pub fn sigma(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dimension())
            .map(|i| {
                self.graph
                    .closed_neighborhood(i)
                    .iter()
                    .map(|&j| x[j] * self.weights[j])
                    .sum()
            })
            .collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.value_from_sigma(&self.sigma(x))
    }

    fn value_from_sigma(&self, sigma: &[f64]) -> f64 {
        let n = self.dimension();
        (0..n).map(|i| self.c[i] / (self.d[i] + sigma[i])).sum::<f64>() / n as f64
    }

    /// `∂f/∂x_j = -(1/N) Σ_{i : j ∈ N_i'} c_i w_j / (d_i + σ_i)^2`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradient_from_sigma(&self.sigma(x))
    }

    fn gradient_from_sigma(&self, sigma: &[f64]) -> Vec<f64> {
        let n = self.dimension();
        let mut g = vec![0.0; n];
        for (i, s) in sigma.iter().enumerate() {
            let den = self.d[i] + s;
            let coef = self.c[i] / (den * den);
            for &j in self.graph.closed_neighborhood(i) {
                g[j] -= coef;
            }
        }
        for (gj, w) in g.iter_mut().zip(&self.weights) {
            *gj *= w / n as f64;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrankWolfeResult {
    pub allocation: Vec<f64>,
    /// `f(y_1), f(y_2), ..., f(y_{T+1})`.
    pub objective_trace: Vec<f64>,
}

/// Conditional gradient from the vertex `(B, 0, ..., 0)`: each iteration
/// moves toward `B e_i` for the coordinate with the most negative partial
/// (lowest id on ties), with the step chosen from the grid
/// `{0, 1/a, ..., 1}`. Costs `O(T (|E| + N a))`.
pub fn frank_wolfe(obj: &ExposureObjective<'_>, budget: f64, iterations: usize, granularity: usize) -> FrankWolfeResult {
    let n = obj.dimension();
    let mut y = vec![0.0; n];
    y[0] = budget;
    let mut sigma = obj.sigma(&y);
    let mut value = obj.value_from_sigma(&sigma);
    let mut trace = Vec::with_capacity(iterations + 1);
    trace.push(value);
    let mut candidate = vec![0.0; n];

    for _ in 0..iterations {
        let grad = obj.gradient_from_sigma(&sigma);
        let vertex = argmin(&grad);
        // σ(B e_v) is B w_v on the closed neighbourhood of v and zero elsewhere
        let vertex_mass = budget * obj.weights[vertex];
        let hood = obj.graph.closed_neighborhood(vertex);

        let mut best = (0usize, value);
        for k in 1..=granularity {
            let alpha = k as f64 / granularity as f64;
            for (cand, s) in candidate.iter_mut().zip(&sigma) {
                *cand = (1.0 - alpha) * s;
            }
            for &i in hood {
                candidate[i] += alpha * vertex_mass;
            }
            let v = obj.value_from_sigma(&candidate);
            if v < best.1 {
                best = (k, v);
            }
        }
        let (k, v) = best;
        if k > 0 {
            let alpha = k as f64 / granularity as f64;
            for yj in y.iter_mut() {
                *yj *= 1.0 - alpha;
            }
            y[vertex] += alpha * budget;
            for s in sigma.iter_mut() {
                *s *= 1.0 - alpha;
            }
            for &i in hood {
                sigma[i] += alpha * vertex_mass;
            }
            value = v;
        }
        trace.push(value);
    }

    FrankWolfeResult {
        allocation: fit_budget(y, budget),
        objective_trace: trace,
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::exact_one_step_expectation;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state<'g>(g: &'g Graph, rng: &mut ChaCha8Rng, scale: f64) -> NetworkState<'g> {
        let n = g.node_count();
        let red: Vec<f64> = (0..n).map(|_| scale * rng.random_range(1.0..10.0)).collect();
        let total = red.iter().map(|r| r + scale * rng.random_range(1.0..10.0)).collect();
        NetworkState::from_masses(g, red, total, 0)
    }

    fn random_simplex(rng: &mut ChaCha8Rng, n: usize, budget: f64) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().ln()).collect();
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|r| budget * r / sum).collect()
    }

    #[test]
    fn no_additions_give_current_exposure() {
        let g = Graph::barabasi_albert(8, 2, 1).unwrap();
        let st = random_state(&g, &mut ChaCha8Rng::seed_from_u64(1), 1.0);
        let obj = ExposureObjective::build(&st, &[0.0; 8]);
        assert_relative_eq!(obj.evaluate(&[0.0; 8]), st.exposure(), max_relative = 1e-14);
        assert!(obj.c.iter().zip(&obj.d).all(|(c, d)| *c > 0.0 && d > c));
    }

    #[test]
    fn symmetric_k2_objective() {
        let k2 = Graph::from_edges(2, [(0, 1)]).unwrap();
        let st = NetworkState::from_masses(&k2, vec![1.0, 1.0], vec![3.0, 3.0], 0);
        let obj = ExposureObjective::build(&st, &[2.0, 2.0]);
        assert_relative_eq!(obj.evaluate(&[1.0, 4.0]), obj.evaluate(&[4.0, 1.0]), max_relative = 1e-15);
        let g = obj.gradient(&[0.0, 0.0]);
        assert_relative_eq!(g[0], g[1]);
        assert!(g[0] < 0.0);
    }

    #[test]
    fn matches_exact_expectation_when_mass_is_deterministic() {
        // x = Δr makes every post-step super-urn total non-random
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let st = random_state(&g, &mut rng, 1.0);
            let dr: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..4.0)).collect();
            let obj = ExposureObjective::build(&st, &dr);
            let (_, es) = exact_one_step_expectation(&st, &dr, &dr).unwrap();
            let exact = es.iter().sum::<f64>() / 3.0;
            assert_relative_eq!(obj.evaluate(&dr), exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn gap_to_exact_expectation_is_second_order() {
        // ratio of expectations differs from the exact mean by O((Δ/X̄)^2)
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let seed: u64 = rng.random();
            let dr = [3.0, 1.0, 2.0];
            let x = [4.0, 0.5, 1.5];
            let gap = |scale: f64| {
                let st = random_state(&g, &mut ChaCha8Rng::seed_from_u64(seed), scale);
                let obj = ExposureObjective::build(&st, &dr);
                let (_, es) = exact_one_step_expectation(&st, &dr, &x).unwrap();
                (obj.evaluate(&x) - es.iter().sum::<f64>() / 3.0).abs()
            };
            let (g10, g100) = (gap(10.0), gap(100.0));
            assert!(g100 < g10 / 50.0, "gap {g10} -> {g100}");
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = Graph::barabasi_albert(12, 2, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let st = random_state(&g, &mut rng, 1.0);
        let dr: Vec<f64> = (0..12).map(|_| rng.random_range(1.0..10.0)).collect();
        let obj = ExposureObjective::build(&st, &dr);
        let budget = dr.iter().sum::<f64>();
        let x = random_simplex(&mut rng, 12, budget);
        let grad = obj.gradient(&x);
        let h = 1e-5 * budget;
        for j in 0..12 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let fd = (obj.evaluate(&xp) - obj.evaluate(&xm)) / (2.0 * h);
            assert_relative_eq!(grad[j], fd, max_relative = 1e-6);
            assert!(grad[j] <= 0.0);
        }
    }

    #[test]
    fn frank_wolfe_on_complete_graph_reaches_uniform_value() {
        let n = 5;
        let edges = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)));
        let g = Graph::from_edges(n, edges).unwrap();
        let st = NetworkState::from_masses(&g, vec![2.0; n], vec![5.0; n], 0);
        let obj = ExposureObjective::build(&st, &[1.0; 5]);
        let budget = 5.0;
        let res = frank_wolfe(&obj, budget, 500, 100);
        let uniform = obj.evaluate(&[1.0; 5]);
        assert!(res.objective_trace.last().unwrap() <= &(uniform + 1e-6));
    }

    #[test]
    fn first_iteration_moves_toward_steepest_coordinate() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        // node 0 is nearly all red, so the starting vertex is a poor use of budget
        let st = NetworkState::from_masses(&g, vec![99.0, 5.0, 5.0], vec![100.0, 10.0, 10.0], 0);
        let obj = ExposureObjective::build(&st, &[0.0; 3]);
        let grad = obj.gradient(&[3.0, 0.0, 0.0]);
        let steepest = argmin(&grad);
        let res = frank_wolfe(&obj, 3.0, 1, 100);
        assert_eq!(steepest, 2);
        assert!(res.allocation[steepest] > 0.0);
        assert!(res.objective_trace[1] < res.objective_trace[0]);
    }

    #[test]
    fn iterates_stay_feasible_and_descend() {
        let g = Graph::barabasi_albert(15, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let st = random_state(&g, &mut rng, 1.0);
        let obj = ExposureObjective::build(&st, &[2.0; 15]);
        let res = frank_wolfe(&obj, 30.0, 40, 50);
        assert!(res.allocation.iter().all(|&x| x >= 0.0));
        assert_relative_eq!(res.allocation.iter().sum::<f64>(), 30.0, max_relative = 1e-9);
        assert!(res.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_relative_eq!(obj.evaluate(&res.allocation), *res.objective_trace.last().unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn zero_budget_is_zero_allocation() {
        let g = Graph::barabasi_albert(6, 1, 2).unwrap();
        let st = random_state(&g, &mut ChaCha8Rng::seed_from_u64(1), 1.0);
        let obj = ExposureObjective::build(&st, &[1.0; 6]);
        assert_eq!(frank_wolfe(&obj, 0.0, 5, 10).allocation, vec![0.0; 6]);
    }
}
