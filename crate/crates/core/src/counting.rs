//! Convexity-oriented counting numbers.
//!
//! Two constructions beyond the uniform/tree-exact choices in [`crate::energy`]:
//!
//! * [`trw_counting`] — edge weights are the probability that the edge appears
//!   in a uniformly random spanning tree of its component, computed as the
//!   effective resistance between its endpoints (unit resistors on edges).
//!   These weights make the objective convex and turn `−F` at the optimum into
//!   an upper bound on `log Z`. On trees every edge has weight 1, recovering
//!   the tree-exact numbers.
//!
//! * [`ls_convex_counting`] — keeps the objective provably convex by writing
//!   each edge weight as `c_e = ĉ_e + ĉ_{e→i} + ĉ_{e→j}` with nonnegative
//!   parts, subject to a unit budget at every node
//!   `ĉ_i + Σ_{e∋i} (ĉ_e + ĉ_{e→other}) = 1`, and picks the decomposition whose
//!   edge weights are least-squares closest to the tree-exact value 1:
//!
//!   ```text
//!   min Σ_e (ĉ_e + ĉ_{e→i} + ĉ_{e→j} − 1)²   s.t. per-node budgets, all ĉ ≥ 0
//!   ```
//!
//!   Summing the budgets shows `Σ_e c_e ≤ N`, so on dense graphs the weights
//!   shrink (complete graph on 10 nodes: `c_e = 2/9`). Sparse graphs with at
//!   most one cycle per component reach the objective's floor of zero and
//!   reproduce the tree-exact numbers. Node numbers inherit
//!   `c_i + Σ_{e∋i} c_e = 1` from the budgets, so the result is always
//!   variable-valid.
//!
//! The least-squares problem is a small convex QP solved by projected
//! gradient: the objective Hessian is block `2·𝟙₃ₓ₃` per edge (largest
//! eigenvalue 6, hence the fixed step 1/6), and the projection onto the
//! intersection of per-node budget simplices is computed with Dykstra's
//! alternating algorithm, which handles the edge variables shared between two
//! budgets. The minimizing edge weights are unique (the objective is strictly
//! convex in them), so the returned counting numbers do not depend on the
//! iteration path.

use crate::energy::CountingNumbers;
use crate::graph::Graph;
use nalgebra::DMatrix;
use thiserror::Error;

/// Stationarity tolerance for the projected-gradient solver, measured as
/// `‖x − P(x − η∇f(x))‖_∞ / η`.
const KKT_TOL: f64 = 1e-8;
const MAX_PGD_ITERS: usize = 100_000;
/// Dykstra cycles stop when no coordinate moves more than this.
const DYKSTRA_TOL: f64 = 1e-12;
const MAX_DYKSTRA_CYCLES: usize = 100_000;
/// Gradient step `1/λ_max` of the per-edge Hessian block `2·𝟙₃ₓ₃`.
const PGD_STEP: f64 = 1.0 / 6.0;

#[derive(Debug, Error, PartialEq)]
pub enum CountingError {
    #[error("effective-resistance system is singular on a component of {size} nodes")]
    SingularComponent { size: usize },
    #[error(
        "least-squares counting stalled at stationarity residual {residual:.3e} \
         after {iterations} iterations"
    )]
    NoConvergence { residual: f64, iterations: usize },
    #[error("least-squares optimum puts non-positive weight {value:.3e} on edge {edge}")]
    DegenerateEdge { edge: usize, value: f64 },
}

/// Spanning-tree edge-appearance weights.
///
/// For each connected component the edge weight equals the effective
/// resistance between its endpoints: with `L` the component Laplacian and
/// `n` its size, `M = (L + 𝟙/n)⁻¹` agrees with the pseudoinverse `L⁺` up to
/// the constant matrix `𝟙/n`, which cancels in
/// `R(a,b) = M_aa − 2M_ab + M_bb`. Node numbers are set to
/// `1 − Σ_{e∋i} c_e`, keeping the result variable-valid.
pub fn trw_counting(graph: &Graph) -> Result<CountingNumbers, CountingError> {
    let components = graph.connected_components();
    let mut local_index = vec![usize::MAX; graph.n_nodes()];
    let mut component_id = vec![usize::MAX; graph.n_nodes()];
    for (id, comp) in components.iter().enumerate() {
        for (k, &v) in comp.iter().enumerate() {
            local_index[v] = k;
            component_id[v] = id;
        }
    }

    let mut edge_numbers = vec![0.0; graph.n_edges()];
    for (id, comp) in components.iter().enumerate() {
        let n = comp.len();
        if n < 2 {
            continue;
        }
        // L + 𝟙/n: start from the rank-one shift, add the Laplacian.
        let mut mat = DMatrix::from_element(n, n, 1.0 / n as f64);
        for &(i, j) in graph.edges() {
            if component_id[i] != id {
                continue;
            }
            let (a, b) = (local_index[i], local_index[j]);
            mat[(a, a)] += 1.0;
            mat[(b, b)] += 1.0;
            mat[(a, b)] -= 1.0;
            mat[(b, a)] -= 1.0;
        }
        let inverse = mat
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| mat.lu().try_inverse())
            .ok_or(CountingError::SingularComponent { size: n })?;
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            if component_id[i] != id {
                continue;
            }
            let (a, b) = (local_index[i], local_index[j]);
            edge_numbers[e] = inverse[(a, a)] - 2.0 * inverse[(a, b)] + inverse[(b, b)];
        }
    }

    counting_from_edges(graph, edge_numbers)
}

/// Decomposition variables underlying the least-squares counting numbers.
///
/// `arrow[e][0]` flows toward the smaller endpoint of edge `e`, `arrow[e][1]`
/// toward the larger. Node `i`'s budget covers its own `node[i]`, plus
/// `edge[e]` and the arrow pointing *away* from `i` for every incident edge.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryNumbers {
    pub edge: Vec<f64>,
    pub arrow: Vec<[f64; 2]>,
    pub node: Vec<f64>,
}

impl AuxiliaryNumbers {
    /// `Σ_e (ĉ_e + ĉ_{e→i} + ĉ_{e→j} − 1)²` — zero exactly when every edge
    /// reaches the tree-exact weight.
    pub fn objective(&self) -> f64 {
        self.edge
            .iter()
            .zip(&self.arrow)
            .map(|(&c, a)| {
                let r = c + a[0] + a[1] - 1.0;
                r * r
            })
            .sum()
    }

    /// Largest violation of the per-node unit budgets.
    pub fn budget_residual(&self, graph: &Graph) -> f64 {
        (0..graph.n_nodes())
            .map(|u| {
                let total: f64 = self.node[u]
                    + graph
                        .neighbors(u)
                        .iter()
                        .map(|&(v, e)| {
                            let toward_other = usize::from(v == graph.edges()[e].1);
                            self.edge[e] + self.arrow[e][toward_other]
                        })
                        .sum::<f64>();
                (total - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Collapses to counting numbers: `c_e` sums the three edge parts,
    /// `c_i = ĉ_i − Σ_{e∋i} ĉ_{e→i}` subtracts the arrows absorbed by `i`.
    pub fn to_counting(&self, graph: &Graph) -> Result<CountingNumbers, CountingError> {
        let edge: Vec<f64> = self
            .edge
            .iter()
            .zip(&self.arrow)
            .map(|(&c, a)| c + a[0] + a[1])
            .collect();
        let node: Vec<f64> = (0..graph.n_nodes())
            .map(|u| {
                self.node[u]
                    - graph
                        .neighbors(u)
                        .iter()
                        .map(|&(_, e)| {
                            let toward_self = usize::from(u == graph.edges()[e].1);
                            self.arrow[e][toward_self]
                        })
                        .sum::<f64>()
            })
            .collect();
        CountingNumbers::new(graph, edge, node).map_err(|err| match err {
            crate::energy::EnergyError::NonPositiveEdgeCounting { edge, value } => {
                CountingError::DegenerateEdge { edge, value }
            }
            other => unreachable!("lengths are correct by construction: {other}"),
        })
    }
}

/// Least-squares convex counting numbers (see the module docs for the
/// optimization problem). Deterministic: no randomness, fixed initial point.
pub fn ls_convex_counting(graph: &Graph) -> Result<CountingNumbers, CountingError> {
    ls_convex_auxiliary(graph)?.to_counting(graph)
}

/// Runs the projected-gradient solve and returns the raw decomposition.
pub fn ls_convex_auxiliary(graph: &Graph) -> Result<AuxiliaryNumbers, CountingError> {
    let n_nodes = graph.n_nodes();
    let n_edges = graph.n_edges();
    let dim = 3 * n_edges + n_nodes;
    let idx_edge = |e: usize| e;
    let idx_arrow = |e: usize, side: usize| n_edges + 2 * e + side;
    let idx_node = |v: usize| 3 * n_edges + v;

    // One budget simplex per node: its own variable, plus (edge, outgoing
    // arrow) for each incident edge. Edge variables appear in two simplices.
    let sets: Vec<Vec<usize>> = (0..n_nodes)
        .map(|u| {
            let mut set = vec![idx_node(u)];
            for &(v, e) in graph.neighbors(u) {
                let toward_other = usize::from(v == graph.edges()[e].1);
                set.push(idx_edge(e));
                set.push(idx_arrow(e, toward_other));
            }
            set
        })
        .collect();

    // node[u] = 1 satisfies every budget exactly.
    let mut x = vec![0.0; dim];
    for u in 0..n_nodes {
        x[idx_node(u)] = 1.0;
    }

    let mut projector = DykstraProjector::new(&sets);
    let mut trial = vec![0.0; dim];
    let mut residual = f64::INFINITY;
    for iteration in 0..MAX_PGD_ITERS {
        trial.copy_from_slice(&x);
        for e in 0..n_edges {
            let r = x[idx_edge(e)] + x[idx_arrow(e, 0)] + x[idx_arrow(e, 1)] - 1.0;
            let step = PGD_STEP * 2.0 * r;
            trial[idx_edge(e)] -= step;
            trial[idx_arrow(e, 0)] -= step;
            trial[idx_arrow(e, 1)] -= step;
        }
        projector.project(&mut trial);
        residual = x
            .iter()
            .zip(&trial)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / PGD_STEP;
        x.copy_from_slice(&trial);
        if residual <= KKT_TOL {
            return Ok(AuxiliaryNumbers {
                edge: (0..n_edges).map(|e| x[idx_edge(e)]).collect(),
                arrow: (0..n_edges)
                    .map(|e| [x[idx_arrow(e, 0)], x[idx_arrow(e, 1)]])
                    .collect(),
                node: (0..n_nodes).map(|v| x[idx_node(v)]).collect(),
            });
        }
        let _ = iteration;
    }
    Err(CountingError::NoConvergence { residual, iterations: MAX_PGD_ITERS })
}

fn counting_from_edges(
    graph: &Graph,
    edge_numbers: Vec<f64>,
) -> Result<CountingNumbers, CountingError> {
    let node_numbers: Vec<f64> = (0..graph.n_nodes())
        .map(|u| {
            1.0 - graph
                .neighbors(u)
                .iter()
                .map(|&(_, e)| edge_numbers[e])
                .sum::<f64>()
        })
        .collect();
    CountingNumbers::new(graph, edge_numbers, node_numbers).map_err(|err| match err {
        crate::energy::EnergyError::NonPositiveEdgeCounting { edge, value } => {
            CountingError::DegenerateEdge { edge, value }
        }
        other => unreachable!("lengths are correct by construction: {other}"),
    })
}

/// Dykstra's alternating projection onto an intersection of partial
/// simplices (`Σ of a variable subset = 1`, subset variables ≥ 0).
struct DykstraProjector {
    sets: Vec<Vec<usize>>,
    corrections: Vec<Vec<f64>>,
    buffer: Vec<f64>,
    sorted: Vec<f64>,
}

impl DykstraProjector {
    fn new(sets: &[Vec<usize>]) -> Self {
        let corrections = sets.iter().map(|s| vec![0.0; s.len()]).collect();
        let longest = sets.iter().map(Vec::len).max().unwrap_or(0);
        Self {
            sets: sets.to_vec(),
            corrections,
            buffer: vec![0.0; longest],
            sorted: vec![0.0; longest],
        }
    }

    fn project(&mut self, x: &mut [f64]) {
        for c in &mut self.corrections {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        for _cycle in 0..MAX_DYKSTRA_CYCLES {
            let mut max_move: f64 = 0.0;
            for (set, correction) in self.sets.iter().zip(&mut self.corrections) {
                let m = set.len();
                for (k, &i) in set.iter().enumerate() {
                    self.buffer[k] = x[i] + correction[k];
                }
                simplex_project(&mut self.buffer[..m], &mut self.sorted[..m]);
                for (k, &i) in set.iter().enumerate() {
                    correction[k] = x[i] + correction[k] - self.buffer[k];
                    max_move = max_move.max((x[i] - self.buffer[k]).abs());
                    x[i] = self.buffer[k];
                }
            }
            if max_move < DYKSTRA_TOL {
                break;
            }
        }
    }
}

/// Euclidean projection onto `{w : Σw = 1, w ≥ 0}` by the sort-and-threshold
/// rule: the largest `ρ` with `u_ρ > (Σ_{k≤ρ} u_k − 1)/ρ` fixes the shift.
fn simplex_project(w: &mut [f64], sorted: &mut [f64]) {
    sorted.copy_from_slice(w);
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).expect("weights are finite"));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if u > candidate {
            shift = candidate;
        }
    }
    for v in w.iter_mut() {
        *v = (*v - shift).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::CountingNumbers;

    /// Brute-force edge appearance fractions over all spanning trees, by
    /// enumerating edge subsets of size `n − 1` — combinatorial ground truth
    /// entirely independent of the resistance computation.
    fn spanning_tree_fractions(graph: &Graph) -> Vec<f64> {
        let n = graph.n_nodes();
        let m = graph.n_edges();
        assert!(m < 26, "enumeration oracle is for small graphs");
        let mut appearances = vec![0u64; m];
        let mut total = 0u64;
        for mask in 0u32..(1 << m) {
            if mask.count_ones() as usize != n - 1 {
                continue;
            }
            let mut parent: Vec<usize> = (0..n).collect();
            fn find(parent: &mut [usize], mut v: usize) -> usize {
                while parent[v] != v {
                    parent[v] = parent[parent[v]];
                    v = parent[v];
                }
                v
            }
            let mut merged = 0;
            for (e, &(i, j)) in graph.edges().iter().enumerate() {
                if mask & (1 << e) == 0 {
                    continue;
                }
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                    merged += 1;
                }
            }
            if merged == n - 1 {
                total += 1;
                for (e, count) in appearances.iter_mut().enumerate() {
                    if mask & (1 << e) != 0 {
                        *count += 1;
                    }
                }
            }
        }
        assert!(total > 0, "graph must be connected");
        appearances.iter().map(|&a| a as f64 / total as f64).collect()
    }

    fn assert_close(actual: &CountingNumbers, edge: &[f64], node: &[f64], tol: f64) {
        for (e, (&a, &b)) in actual.edge().iter().zip(edge).enumerate() {
            assert!((a - b).abs() < tol, "edge {e}: {a} vs {b}");
        }
        for (i, (&a, &b)) in actual.node().iter().zip(node).enumerate() {
            assert!((a - b).abs() < tol, "node {i}: {a} vs {b}");
        }
    }

    #[test]
    fn trw_on_trees_is_tree_exact() {
        let star = Graph::new(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let path = Graph::new(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        for g in [star, path] {
            let trw = trw_counting(&g).unwrap();
            let bethe = CountingNumbers::bethe(&g);
            assert_close(&trw, bethe.edge(), bethe.node(), 1e-10);
            assert!(trw.variable_valid());
        }
    }

    #[test]
    fn trw_frozen_values_on_symmetric_graphs() {
        // Complete graph on n nodes: every edge appears in a uniform spanning
        // tree with probability 2/n. Cycle of length n: (n−1)/n.
        let k10 = trw_counting(&Graph::complete(10)).unwrap();
        assert_close(&k10, &[0.2; 45], &[1.0 - 9.0 * 0.2; 10], 1e-9);

        let k4 = trw_counting(&Graph::complete(4)).unwrap();
        assert_close(&k4, &[0.5; 6], &[-0.5; 4], 1e-9);

        let c4 = Graph::new(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let cycle = trw_counting(&c4).unwrap();
        assert_close(&cycle, &[0.75; 4], &[1.0 - 1.5; 4], 1e-9);
    }

    #[test]
    fn trw_matches_spanning_tree_enumeration() {
        // Cycle C7 with three chords: 10 edges, 2^10 subsets.
        let g = Graph::new(
            7,
            &[
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (4, 5),
                (5, 6),
                (0, 6),
                (0, 3),
                (1, 5),
                (2, 6),
            ],
        )
        .unwrap();
        let trw = trw_counting(&g).unwrap();
        let oracle = spanning_tree_fractions(&g);
        for (e, (&a, &b)) in trw.edge().iter().zip(&oracle).enumerate() {
            assert!((a - b).abs() < 1e-9, "edge {e}: resistance {a} vs enumeration {b}");
        }
        assert!(trw.variable_valid());
    }

    #[test]
    fn trw_handles_components_independently() {
        // Two triangles and an isolated node: triangle edges get 2/3, the
        // isolated node keeps counting number 1.
        let g = Graph::new(
            7,
            &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)],
        )
        .unwrap();
        let trw = trw_counting(&g).unwrap();
        let third = 2.0 / 3.0;
        assert_close(
            &trw,
            &[third; 6],
            &[1.0 - 2.0 * third, 1.0 - 2.0 * third, 1.0 - 2.0 * third, 1.0 - 2.0 * third,
                1.0 - 2.0 * third, 1.0 - 2.0 * third, 1.0],
            1e-9,
        );
    }

    #[test]
    fn ls_convex_reaches_floor_on_sparse_graphs() {
        // At most one cycle per component ⇒ the budget bound Σc_e ≤ N is
        // slack enough for every edge to reach weight 1 (objective 0), and
        // the counting numbers coincide with the tree-exact ones.
        let single = Graph::new(2, &[(0, 1)]).unwrap();
        let star = Graph::new(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let path = Graph::new(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        let cycle = Graph::new(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let triangle = Graph::new(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        for g in [single, star, path, cycle, triangle] {
            let aux = ls_convex_auxiliary(&g).unwrap();
            assert!(aux.objective() < 1e-12, "objective {}", aux.objective());
            assert!(aux.budget_residual(&g) < 1e-9);
            let counting = aux.to_counting(&g).unwrap();
            let bethe = CountingNumbers::bethe(&g);
            assert_close(&counting, bethe.edge(), bethe.node(), 1e-6);
            assert!(counting.variable_valid());
        }
    }

    #[test]
    fn ls_convex_frozen_values_on_complete_graphs() {
        // On K_n the budgets force Σc_e ≤ n, and the symmetric split
        // c_e = n/|E| = 2/(n−1) is feasible (each node sends 1/(n−1) along
        // each incident edge), so it is the least-squares optimum:
        //   K4:  c_e = 2/3, c_i = −1, objective 6·(1/3)²  = 2/3
        //   K10: c_e = 2/9, c_i = −1, objective 45·(7/9)² = 245/9
        let k4 = Graph::complete(4);
        let aux4 = ls_convex_auxiliary(&k4).unwrap();
        assert!((aux4.objective() - 2.0 / 3.0).abs() < 1e-6);
        let c4 = aux4.to_counting(&k4).unwrap();
        assert_close(&c4, &[2.0 / 3.0; 6], &[-1.0; 4], 1e-5);

        let k10 = Graph::complete(10);
        let aux10 = ls_convex_auxiliary(&k10).unwrap();
        assert!((aux10.objective() - 245.0 / 9.0).abs() < 1e-4);
        let c10 = aux10.to_counting(&k10).unwrap();
        assert_close(&c10, &[2.0 / 9.0; 45], &[-1.0; 10], 1e-5);
        assert!(c10.variable_valid());
    }

    #[test]
    fn ls_convex_separates_over_components() {
        // Triangle + single edge + isolated node: both components reach the
        // floor, the isolated node keeps its full budget.
        let g = Graph::new(6, &[(0, 1), (0, 2), (1, 2), (3, 4)]).unwrap();
        let counting = ls_convex_counting(&g).unwrap();
        let bethe = CountingNumbers::bethe(&g);
        assert_close(&counting, bethe.edge(), bethe.node(), 1e-6);
        assert_eq!(bethe.node()[5], 1.0);
    }

    #[test]
    fn simplex_projection_basics() {
        let mut w = [0.4, 0.3, 0.3];
        let mut scratch = [0.0; 3];
        simplex_project(&mut w, &mut scratch);
        assert_eq!(w, [0.4, 0.3, 0.3]);

        let mut w = [2.0, 0.0, 0.0];
        simplex_project(&mut w, &mut scratch);
        assert_eq!(w, [1.0, 0.0, 0.0]);

        let mut w = [1.0, 1.0, -1.0];
        simplex_project(&mut w, &mut scratch);
        assert!((w[0] - 0.5).abs() < 1e-15);
        assert!((w[1] - 0.5).abs() < 1e-15);
        assert_eq!(w[2], 0.0);

        let mut w = [-5.0, -6.0, -7.0];
        simplex_project(&mut w, &mut scratch);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&v| v >= 0.0));
    }
}
