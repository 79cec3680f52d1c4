//! Binary pairwise models with ±1 spins.
//!
//! A model assigns energy `E(x) = −Σ_{(i,j)} J_ij·x_i·x_j − Σ_i θ_i·x_i`
//! to each configuration `x ∈ {−1,+1}^N`; the Gibbs distribution is
//! `p(x) = exp(−E(x)) / Z`. Couplings are aligned with the graph's canonical
//! edge list.
//!
//! The text format round-trips exactly (17 significant digits per float):
//!
//! ```text
//! ising 3 2
//! node 0 2.5000000000000000e-1
//! node 1 -1.0000000000000000e0
//! node 2 0.0000000000000000e0
//! edge 0 1 5.0000000000000000e-1
//! edge 1 2 -7.5000000000000000e-1
//! ```

use crate::graph::{Graph, GraphError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coupling sign family used when sampling instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelClass {
    /// All couplings drawn from `U(0, Ĵ)`.
    Attractive,
    /// Couplings drawn from `U(−Ĵ, Ĵ)`.
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    graph: Graph,
    thetas: Vec<f64>,
    couplings: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("expected {expected} {kind} values, got {got}")]
    LengthMismatch { kind: &'static str, expected: usize, got: usize },
    #[error("non-finite {kind} value at index {index}")]
    NonFinite { kind: &'static str, index: usize },
}

/// Parse failures carry the 1-based line number of the first offending line.
#[derive(Debug, Error, PartialEq)]
pub enum ModelParseError {
    #[error("line {line}: expected header `ising <n_nodes> <n_edges>`")]
    BadHeader { line: usize },
    #[error("line {line}: expected `{expected} ...`, found `{found}`")]
    UnexpectedKeyword { line: usize, expected: &'static str, found: String },
    #[error("line {line}: field {field} is not a valid {kind}")]
    BadField { line: usize, field: usize, kind: &'static str },
    #[error("line {line}: wrong number of fields (expected {expected})")]
    WrongFieldCount { line: usize, expected: usize },
    #[error("line {line}: node index {index} out of range 0..{n}")]
    NodeOutOfRange { line: usize, index: usize, n: usize },
    #[error("line {line}: duplicate node {index}")]
    DuplicateNode { line: usize, index: usize },
    #[error("line {line}: edge endpoints must satisfy i < j")]
    EdgeOrder { line: usize },
    #[error("line {line}: non-finite value")]
    NonFiniteValue { line: usize },
    #[error("file ends before {missing} remaining `{kind}` lines")]
    TruncatedFile { missing: usize, kind: &'static str },
    #[error("line {line}: content after the declared node and edge lines")]
    TrailingContent { line: usize },
    #[error("line {line}: {source}")]
    BadGraph { line: usize, source: GraphError },
}

impl IsingModel {
    pub fn new(graph: Graph, thetas: Vec<f64>, couplings: Vec<f64>) -> Result<Self, ModelError> {
        if thetas.len() != graph.n_nodes() {
            return Err(ModelError::LengthMismatch {
                kind: "theta",
                expected: graph.n_nodes(),
                got: thetas.len(),
            });
        }
        if couplings.len() != graph.n_edges() {
            return Err(ModelError::LengthMismatch {
                kind: "coupling",
                expected: graph.n_edges(),
                got: couplings.len(),
            });
        }
        if let Some(i) = thetas.iter().position(|t| !t.is_finite()) {
            return Err(ModelError::NonFinite { kind: "theta", index: i });
        }
        if let Some(e) = couplings.iter().position(|j| !j.is_finite()) {
            return Err(ModelError::NonFinite { kind: "coupling", index: e });
        }
        Ok(Self { graph, thetas, couplings })
    }

    /// Samples an instance: first `θ_i ~ U(−w, w)` for every node, then the
    /// couplings per [`ModelClass`], all from the supplied generator. The
    /// draw order is part of the reproducibility contract.
    pub fn sample(
        graph: Graph,
        class: ModelClass,
        j_hat: f64,
        theta_halfwidth: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let thetas: Vec<f64> = (0..graph.n_nodes())
            .map(|_| (2.0 * rng.random_range(0.0..1.0) - 1.0) * theta_halfwidth)
            .collect();
        let couplings: Vec<f64> = (0..graph.n_edges())
            .map(|_| {
                let u: f64 = rng.random_range(0.0..1.0);
                match class {
                    ModelClass::Attractive => u * j_hat,
                    ModelClass::Mixed => (2.0 * u - 1.0) * j_hat,
                }
            })
            .collect();
        Self { graph, thetas, couplings }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn is_attractive(&self) -> bool {
        self.couplings.iter().all(|&j| j >= 0.0)
    }

    /// Energy of one spin configuration (`spins[i] = ±1`).
    pub fn energy(&self, spins: &[i8]) -> f64 {
        debug_assert_eq!(spins.len(), self.n_nodes());
        debug_assert!(spins.iter().all(|&s| s == 1 || s == -1));
        let mut e = 0.0;
        for (&(i, j), &coupling) in self.graph.edges().iter().zip(&self.couplings) {
            e -= coupling * f64::from(spins[i] * spins[j]);
        }
        for (&theta, &s) in self.thetas.iter().zip(spins) {
            e -= theta * f64::from(s);
        }
        e
    }

    /// Serializes to the `ising` text format with full round-trip precision.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("ising {} {}\n", self.n_nodes(), self.n_edges()));
        for (i, theta) in self.thetas.iter().enumerate() {
            out.push_str(&format!("node {i} {theta:.16e}\n"));
        }
        for (&(i, j), coupling) in self.graph.edges().iter().zip(&self.couplings) {
            out.push_str(&format!("edge {i} {j} {coupling:.16e}\n"));
        }
        out
    }

    /// Parses the `ising` text format. Blank lines and `#` comments are
    /// skipped; everything else must match the serializer's layout.
    pub fn from_text(text: &str) -> Result<Self, ModelParseError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (header_line, header) = lines
            .next()
            .ok_or(ModelParseError::BadHeader { line: 1 })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != "ising" {
            return Err(ModelParseError::BadHeader { line: header_line });
        }
        let n_nodes = parse_index(fields[1], header_line, 2)?;
        let n_edges = parse_index(fields[2], header_line, 3)?;

        let mut thetas = vec![0.0; n_nodes];
        let mut seen = vec![false; n_nodes];
        for _ in 0..n_nodes {
            let (line, text) = lines.next().ok_or(ModelParseError::TruncatedFile {
                missing: n_nodes - seen.iter().filter(|&&s| s).count(),
                kind: "node",
            })?;
            let fields: Vec<&str> = text.split_whitespace().collect();
            if fields.is_empty() || fields[0] != "node" {
                return Err(ModelParseError::UnexpectedKeyword {
                    line,
                    expected: "node",
                    found: fields.first().unwrap_or(&"").to_string(),
                });
            }
            if fields.len() != 3 {
                return Err(ModelParseError::WrongFieldCount { line, expected: 3 });
            }
            let index = parse_index(fields[1], line, 2)?;
            if index >= n_nodes {
                return Err(ModelParseError::NodeOutOfRange { line, index, n: n_nodes });
            }
            if seen[index] {
                return Err(ModelParseError::DuplicateNode { line, index });
            }
            let theta = parse_float(fields[2], line, 3)?;
            if !theta.is_finite() {
                return Err(ModelParseError::NonFiniteValue { line });
            }
            seen[index] = true;
            thetas[index] = theta;
        }

        let mut edges = Vec::with_capacity(n_edges);
        let mut couplings = Vec::with_capacity(n_edges);
        let mut last_edge_line = header_line;
        for k in 0..n_edges {
            let (line, text) = lines.next().ok_or(ModelParseError::TruncatedFile {
                missing: n_edges - k,
                kind: "edge",
            })?;
            let fields: Vec<&str> = text.split_whitespace().collect();
            if fields.is_empty() || fields[0] != "edge" {
                return Err(ModelParseError::UnexpectedKeyword {
                    line,
                    expected: "edge",
                    found: fields.first().unwrap_or(&"").to_string(),
                });
            }
            if fields.len() != 4 {
                return Err(ModelParseError::WrongFieldCount { line, expected: 4 });
            }
            let i = parse_index(fields[1], line, 2)?;
            let j = parse_index(fields[2], line, 3)?;
            if i >= j {
                return Err(ModelParseError::EdgeOrder { line });
            }
            let coupling = parse_float(fields[3], line, 4)?;
            if !coupling.is_finite() {
                return Err(ModelParseError::NonFiniteValue { line });
            }
            edges.push((i, j));
            couplings.push(coupling);
            last_edge_line = line;
        }

        if let Some((line, _)) = lines.next() {
            return Err(ModelParseError::TrailingContent { line });
        }

        // Edge-list problems (range, duplicates) surface here. The edge list
        // arrives sorted from our own serializer, but hand-edited files may
        // not be; Graph::new canonicalizes either way and couplings must
        // follow, so re-sort them together.
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by_key(|&k| edges[k]);
        let sorted_edges: Vec<(usize, usize)> = order.iter().map(|&k| edges[k]).collect();
        let sorted_couplings: Vec<f64> = order.iter().map(|&k| couplings[k]).collect();
        let graph = Graph::new(n_nodes, &sorted_edges)
            .map_err(|source| ModelParseError::BadGraph { line: last_edge_line, source })?;
        Ok(Self { graph, thetas, couplings: sorted_couplings })
    }
}

fn parse_index(s: &str, line: usize, field: usize) -> Result<usize, ModelParseError> {
    s.parse()
        .map_err(|_| ModelParseError::BadField { line, field, kind: "integer" })
}

fn parse_float(s: &str, line: usize, field: usize) -> Result<f64, ModelParseError> {
    s.parse()
        .map_err(|_| ModelParseError::BadField { line, field, kind: "float" })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn sample_k4(seed: u64) -> IsingModel {
        IsingModel::sample(Graph::complete(4), ModelClass::Mixed, 2.0, 0.6, &mut seeded(seed))
    }

    #[test]
    fn sampling_respects_class_bounds() {
        let g = Graph::complete(10);
        let m = IsingModel::sample(g.clone(), ModelClass::Attractive, 1.5, 0.2, &mut seeded(3));
        assert!(m.couplings().iter().all(|&j| (0.0..1.5).contains(&j)));
        assert!(m.thetas().iter().all(|&t| t.abs() <= 0.2));
        assert!(m.is_attractive());

        let m = IsingModel::sample(g, ModelClass::Mixed, 1.5, 0.2, &mut seeded(3));
        assert!(m.couplings().iter().all(|&j| j.abs() <= 1.5));
        assert!(!m.is_attractive(), "mixed sample at this seed has both signs");
    }

    #[test]
    fn zero_widths_give_zero_parameters() {
        let m = IsingModel::sample(Graph::complete(3), ModelClass::Mixed, 0.0, 0.0, &mut seeded(1));
        assert!(m.couplings().iter().all(|&j| j == 0.0));
        assert!(m.thetas().iter().all(|&t| t == 0.0));
    }

    #[test]
    fn energy_of_known_configuration() {
        let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let m = IsingModel::new(g, vec![0.5, -1.0, 0.0], vec![1.0, -2.0]).unwrap();
        // x = (+1, −1, +1): E = −[1·(−1) + (−2)·(−1)] − [0.5·1 + (−1)·(−1) + 0] = −2.5
        assert_eq!(m.energy(&[1, -1, 1]), -2.5);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = sample_k4(11);
        let restored = IsingModel::from_text(&m.to_text()).unwrap();
        assert_eq!(m, restored);
    }

    #[test]
    fn parse_reports_line_of_malformed_field() {
        let text = "ising 2 1\nnode 0 0.1\nnode 1 zzz\nedge 0 1 0.5\n";
        assert_eq!(
            IsingModel::from_text(text),
            Err(ModelParseError::BadField { line: 3, field: 3, kind: "float" })
        );
    }

    #[test]
    fn parse_rejects_structural_problems() {
        let dup = "ising 2 2\nnode 0 0.0\nnode 1 0.0\nedge 0 1 1.0\nedge 0 1 2.0\n";
        assert!(matches!(
            IsingModel::from_text(dup),
            Err(ModelParseError::BadGraph { .. })
        ));

        let order = "ising 2 1\nnode 0 0.0\nnode 1 0.0\nedge 1 0 1.0\n";
        assert_eq!(
            IsingModel::from_text(order),
            Err(ModelParseError::EdgeOrder { line: 4 })
        );

        let out_of_range = "ising 2 1\nnode 0 0.0\nnode 1 0.0\nedge 0 5 1.0\n";
        assert!(matches!(
            IsingModel::from_text(out_of_range),
            Err(ModelParseError::BadGraph { .. })
        ));

        let truncated = "ising 2 1\nnode 0 0.0\n";
        assert!(matches!(
            IsingModel::from_text(truncated),
            Err(ModelParseError::TruncatedFile { kind: "node", .. })
        ));

        let trailing = "ising 1 0\nnode 0 0.0\nnode 0 0.0\n";
        assert_eq!(
            IsingModel::from_text(trailing),
            Err(ModelParseError::TrailingContent { line: 3 })
        );
    }

    #[test]
    fn parse_accepts_comments_and_blank_lines() {
        let text = "# comment\n\nising 1 0\n  node 0 1.25e0\n\n";
        let m = IsingModel::from_text(text).unwrap();
        assert_eq!(m.thetas(), &[1.25]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_many_instances(seed in 0u64..500) {
            let m = sample_k4(seed);
            let restored = IsingModel::from_text(&m.to_text()).unwrap();
            prop_assert_eq!(m, restored);
        }
    }
}
