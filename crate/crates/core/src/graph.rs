//! Undirected simple graphs over nodes `0..n`.
//!
//! Edges are stored once, as `(i, j)` with `i < j`, sorted lexicographically;
//! every routine in the crate indexes edge-aligned data (couplings, counting
//! numbers, pairwise tables) by position in that canonical list.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge ({0}, {1}) has an endpoint outside 0..{2}")]
    EndpointOutOfRange(usize, usize, usize),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    /// Per node: `(neighbor, index of the shared edge in `edges`)`.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    /// Builds a graph from an edge list, canonicalizing endpoint order.
    /// Rejects self-loops, duplicates, and out-of-range endpoints.
    pub fn new(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut canonical: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n_nodes || b >= n_nodes {
                return Err(GraphError::EndpointOutOfRange(a, b, n_nodes));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            canonical.push((a.min(b), a.max(b)));
        }
        canonical.sort_unstable();
        if let Some(w) = canonical.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateEdge(w[0].0, w[0].1));
        }

        let mut adjacency = vec![Vec::new(); n_nodes];
        for (e, &(i, j)) in canonical.iter().enumerate() {
            adjacency[i].push((j, e));
            adjacency[j].push((i, e));
        }
        Ok(Self { n_nodes, edges: canonical, adjacency })
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Self::new(n, &edges).expect("complete graph edges are canonical by construction")
    }

    /// Rectangular 4-neighbor lattice, nodes numbered row-major.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let at = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((at(r, c), at(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((at(r, c), at(r + 1, c)));
                }
            }
        }
        Self::new(rows * cols, &edges).expect("lattice edges are canonical by construction")
    }

    /// Erdős–Rényi G(n, p): each of the n·(n−1)/2 pairs is an edge
    /// independently with probability `p`. Disconnected samples are returned
    /// as-is; downstream code treats components separately where it matters.
    pub fn erdos_renyi(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_range(0.0..1.0) < p {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, &edges).expect("sampled pairs are unique and canonical")
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list: `(i, j)` with `i < j`, lexicographically sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbors of `i` as `(neighbor, edge index)` pairs.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Connected components, each a sorted list of node ids. Ordered by
    /// smallest member, so output is deterministic.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n_nodes];
        let mut components = Vec::new();
        for start in 0..self.n_nodes {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            let mut members = Vec::new();
            seen[start] = true;
            while let Some(v) = stack.pop() {
                members.push(v);
                for &(w, _) in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        components
    }
}
