//! Generalized free energies over the local marginal polytope.
//!
//! A candidate belief state is parameterized by singleton probabilities
//! `q_i = p̃_i(+1)` and edge joints `ξ_ij = p̃_ij(+1,+1)`; the full 2×2 edge
//! table is then `(ξ, q_i−ξ, q_j−ξ, 1+ξ−q_i−q_j)`, which is a distribution
//! exactly when `max(0, q_i+q_j−1) < ξ < min(q_i, q_j)` and `0 < q < 1`.
//!
//! The objective is
//!
//! ```text
//! F(q, ξ) =  Σ_e −(1 + 2(2ξ_e − q_i − q_j))·ζ_e·J_e  +  Σ_i (1 − 2q_i)·ζ_i·θ_i
//!          − Σ_e c_e·S_e(ξ_e, q_i, q_j)              −  Σ_i c_i·S_i(q_i)
//! ```
//!
//! with pairwise/singleton entropies `S_e`, `S_i`, per-edge counting numbers
//! `c_e > 0`, per-node `c_i` of either sign, and scale factors `ζ` that
//! shrink the effective couplings/fields. `c_e ≡ 1, c_i = 1 − deg(i)` is the
//! classic pairwise approximation that is exact on trees; other counting
//! choices trade tree-exactness for convexity or bounds.
//!
//! For fixed `q` the objective is strictly convex in each `ξ_e` and the
//! minimizing `ξ*_e` has a closed form (root of a quadratic), so the search
//! space collapses to `q` alone: [`value_on_manifold`] and
//! [`gradient_on_manifold`] evaluate `F(q, ξ*(q))` and its exact gradient.

use crate::graph::Graph;
use crate::inference::{Diagnostics, InferenceResult, PairTable};
use crate::model::IsingModel;
use thiserror::Error;

/// Interior margin used when clamping beliefs away from the boundary of the
/// polytope, where entropy derivatives diverge.
pub const EPS_BOX: f64 = 1e-12;

/// Below this |α| the quadratic for `ξ*` degenerates and the independence
/// limit `q_i·q_j` is used instead.
const ALPHA_LINEAR_EPS: f64 = 1e-12;

/// Discriminant round-off tolerance, relative to the magnitude of the terms
/// being subtracted: negatives within this of zero are plain round-off (the
/// discriminant is provably ≥ 0) and get zeroed.
const DISC_REL_CLAMP: f64 = -1e-11;

/// Tolerance on `c_i + Σ_{e∋i} c_e = 1` for the variable-validity flag.
const VALIDITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("edge counting number c[{edge}] = {value} must be positive")]
    NonPositiveEdgeCounting { edge: usize, value: f64 },
    #[error("{kind} array has length {got}, expected {expected}")]
    LengthMismatch { kind: &'static str, expected: usize, got: usize },
    #[error("scale factor {kind}[{index}] = {value} must be finite and ≥ 0")]
    BadScaleFactor { kind: &'static str, index: usize, value: f64 },
    #[error("q[{index}] = {value} outside the open interval (0, 1)")]
    SingletonOutOfBox { index: usize, value: f64 },
    #[error("xi[{index}] = {value} outside ({lo}, {hi}) for (q_i, q_j) = ({q_i}, {q_j})")]
    PairOutOfBox { index: usize, value: f64, lo: f64, hi: f64, q_i: f64, q_j: f64 },
}

/// Entropy weights `c_e` (per edge, positive) and `c_i` (per node).
#[derive(Debug, Clone, PartialEq)]
pub struct CountingNumbers {
    edge: Vec<f64>,
    node: Vec<f64>,
    variable_valid: bool,
}

impl CountingNumbers {
    pub fn new(graph: &Graph, edge: Vec<f64>, node: Vec<f64>) -> Result<Self, EnergyError> {
        if edge.len() != graph.n_edges() {
            return Err(EnergyError::LengthMismatch {
                kind: "edge counting",
                expected: graph.n_edges(),
                got: edge.len(),
            });
        }
        if node.len() != graph.n_nodes() {
            return Err(EnergyError::LengthMismatch {
                kind: "node counting",
                expected: graph.n_nodes(),
                got: node.len(),
            });
        }
        if let Some((e, &value)) = edge.iter().enumerate().find(|(_, &c)| !(c > 0.0)) {
            return Err(EnergyError::NonPositiveEdgeCounting { edge: e, value });
        }
        let variable_valid = (0..graph.n_nodes()).all(|i| {
            let total: f64 =
                node[i] + graph.neighbors(i).iter().map(|&(_, e)| edge[e]).sum::<f64>();
            (total - 1.0).abs() <= VALIDITY_TOL
        });
        Ok(Self { edge, node, variable_valid })
    }

    /// Tree-exact choice: `c_e = 1`, `c_i = 1 − deg(i)`.
    pub fn bethe(graph: &Graph) -> Self {
        Self::uniform(graph, 1.0).expect("c = 1 is positive")
    }

    /// One shared edge value `c > 0`, with `c_i = 1 − c·deg(i)` so that
    /// `c_i + Σ_{e∋i} c_e = 1` holds at every node.
    pub fn uniform(graph: &Graph, c: f64) -> Result<Self, EnergyError> {
        let edge = vec![c; graph.n_edges()];
        let node = (0..graph.n_nodes())
            .map(|i| 1.0 - c * graph.degree(i) as f64)
            .collect();
        Self::new(graph, edge, node)
    }

    pub fn edge(&self) -> &[f64] {
        &self.edge
    }

    pub fn node(&self) -> &[f64] {
        &self.node
    }

    /// Whether `c_i + Σ_{e∋i} c_e = 1` at every node (up to 1e-10). All
    /// constructors in this crate produce valid numbers; the flag exists so
    /// hand-built specs can be checked cheaply.
    pub fn variable_valid(&self) -> bool {
        self.variable_valid
    }
}

/// Per-edge and per-node multipliers `ζ` applied to couplings and fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleFactors {
    edge: Vec<f64>,
    node: Vec<f64>,
}

impl ScaleFactors {
    pub fn new(graph: &Graph, edge: Vec<f64>, node: Vec<f64>) -> Result<Self, EnergyError> {
        if edge.len() != graph.n_edges() {
            return Err(EnergyError::LengthMismatch {
                kind: "edge scale",
                expected: graph.n_edges(),
                got: edge.len(),
            });
        }
        if node.len() != graph.n_nodes() {
            return Err(EnergyError::LengthMismatch {
                kind: "node scale",
                expected: graph.n_nodes(),
                got: node.len(),
            });
        }
        for (kind, values) in [("edge", &edge), ("node", &node)] {
            if let Some((index, &value)) =
                values.iter().enumerate().find(|(_, &z)| !(z.is_finite() && z >= 0.0))
            {
                return Err(EnergyError::BadScaleFactor { kind, index, value });
            }
        }
        Ok(Self { edge, node })
    }

    /// The unmodified model: all `ζ = 1`.
    pub fn unit(graph: &Graph) -> Self {
        Self { edge: vec![1.0; graph.n_edges()], node: vec![1.0; graph.n_nodes()] }
    }

    /// One shared `ζ` on every edge; node factors stay 1 (fields unscaled).
    pub fn uniform_edges(graph: &Graph, zeta: f64) -> Result<Self, EnergyError> {
        Self::new(graph, vec![zeta; graph.n_edges()], vec![1.0; graph.n_nodes()])
    }

    pub fn edge(&self) -> &[f64] {
        &self.edge
    }

    pub fn node(&self) -> &[f64] {
        &self.node
    }
}

/// A fully specified objective: model, counting numbers, scale factors.
#[derive(Debug, Clone)]
pub struct FreeEnergySpec<'m> {
    model: &'m IsingModel,
    counting: CountingNumbers,
    scale: ScaleFactors,
}

impl<'m> FreeEnergySpec<'m> {
    pub fn new(
        model: &'m IsingModel,
        counting: CountingNumbers,
        scale: ScaleFactors,
    ) -> Result<Self, EnergyError> {
        // CountingNumbers/ScaleFactors already validated lengths against
        // *some* graph; re-check against this model's graph.
        if counting.edge.len() != model.n_edges() || counting.node.len() != model.n_nodes() {
            return Err(EnergyError::LengthMismatch {
                kind: "counting",
                expected: model.n_edges(),
                got: counting.edge.len(),
            });
        }
        if scale.edge.len() != model.n_edges() || scale.node.len() != model.n_nodes() {
            return Err(EnergyError::LengthMismatch {
                kind: "scale",
                expected: model.n_edges(),
                got: scale.edge.len(),
            });
        }
        Ok(Self { model, counting, scale })
    }

    pub fn bethe(model: &'m IsingModel) -> Self {
        Self {
            model,
            counting: CountingNumbers::bethe(model.graph()),
            scale: ScaleFactors::unit(model.graph()),
        }
    }

    pub fn uniform_c(model: &'m IsingModel, c: f64) -> Result<Self, EnergyError> {
        Ok(Self {
            model,
            counting: CountingNumbers::uniform(model.graph(), c)?,
            scale: ScaleFactors::unit(model.graph()),
        })
    }

    /// Bethe counting with all couplings scaled by `zeta`, fields unscaled.
    pub fn bethe_scaled(model: &'m IsingModel, zeta: f64) -> Result<Self, EnergyError> {
        Ok(Self {
            model,
            counting: CountingNumbers::bethe(model.graph()),
            scale: ScaleFactors::uniform_edges(model.graph(), zeta)?,
        })
    }

    pub fn model(&self) -> &'m IsingModel {
        self.model
    }

    pub fn graph(&self) -> &'m Graph {
        self.model.graph()
    }

    pub fn counting(&self) -> &CountingNumbers {
        &self.counting
    }

    pub fn scale(&self) -> &ScaleFactors {
        &self.scale
    }
}

/// A point of the local polytope in `(q, ξ)` coordinates, validated strictly
/// interior at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMarginals {
    pub q: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PseudoMarginals {
    pub fn new(graph: &Graph, q: Vec<f64>, xi: Vec<f64>) -> Result<Self, EnergyError> {
        if q.len() != graph.n_nodes() {
            return Err(EnergyError::LengthMismatch {
                kind: "q",
                expected: graph.n_nodes(),
                got: q.len(),
            });
        }
        if xi.len() != graph.n_edges() {
            return Err(EnergyError::LengthMismatch {
                kind: "xi",
                expected: graph.n_edges(),
                got: xi.len(),
            });
        }
        for (index, &value) in q.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) {
                return Err(EnergyError::SingletonOutOfBox { index, value });
            }
        }
        for (index, (&value, &(i, j))) in xi.iter().zip(graph.edges()).enumerate() {
            let lo = (q[i] + q[j] - 1.0).max(0.0);
            let hi = q[i].min(q[j]);
            if !(value > lo && value < hi) {
                return Err(EnergyError::PairOutOfBox {
                    index,
                    value,
                    lo,
                    hi,
                    q_i: q[i],
                    q_j: q[j],
                });
            }
        }
        Ok(Self { q, xi })
    }

    /// Completes singleton beliefs `q` with the per-edge minimizers `ξ*`.
    pub fn on_manifold(spec: &FreeEnergySpec, q: Vec<f64>) -> Result<Self, EnergyError> {
        let xi = xi_star_all(spec, &q);
        Self::new(spec.graph(), q, xi)
    }
}

/// `x·ln x` with the continuous extension `0·ln 0 = 0`.
fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Pairwise entropy of the table `(ξ, q_i−ξ, q_j−ξ, 1+ξ−q_i−q_j)`.
fn pair_entropy(q_i: f64, q_j: f64, xi: f64) -> f64 {
    -xlogx(xi) - xlogx(q_i - xi) - xlogx(q_j - xi) - xlogx(1.0 + xi - q_i - q_j)
}

fn node_entropy(q: f64) -> f64 {
    -xlogx(q) - xlogx(1.0 - q)
}

/// Margin for clamping `ξ` strictly inside `(lo, hi)`.
///
/// Proportional to the box width so wide boxes are barely disturbed, but
/// floored at one unit in the last place of `hi`: polarized marginals leave
/// a box so thin that the proportional margin vanishes in rounding and the
/// clamp lands exactly on the wall, where strict-interior validation fails.
pub(crate) fn box_margin(lo: f64, hi: f64) -> f64 {
    (EPS_BOX * (hi - lo)).max(f64::EPSILON * hi)
}

/// Minimizer of the single-edge term of `F` over `ξ` at fixed `(q_i, q_j)`.
///
/// Setting `∂F/∂ξ = 0` gives `ξ(1+ξ−q_i−q_j) = e^{4ζJ/c}·(q_i−ξ)(q_j−ξ)`,
/// a quadratic `αξ² − Qξ + (1+α)q_i q_j = 0` with `α = e^{4ζJ/c} − 1` and
/// `Q = 1 + α(q_i+q_j)`. The in-box root is returned; for `|α| < 1e-12` it
/// degenerates to the independent table `ξ = q_i·q_j`. The two root forms
/// below are algebraically identical but chosen by the sign of `Q` so that
/// neither ever subtracts nearly-equal quantities.
pub fn xi_star(q_i: f64, q_j: f64, coupling: f64, c: f64, zeta: f64) -> f64 {
    debug_assert!(c > 0.0);
    let lo = (q_i + q_j - 1.0).max(0.0);
    let hi = q_i.min(q_j);
    let margin = box_margin(lo, hi);
    if !(hi - lo > 2.0 * margin) {
        // Box too thin to hold both margins; no representable strict
        // interior exists, so return the midpoint as a best effort.
        return 0.5 * (lo + hi);
    }

    let exponent = 4.0 * zeta * coupling / c;
    // Past e^300 the α² terms below overflow, and the true minimizer sits
    // within e^{-140} of the upper wall — already inside the clamp margin.
    // (The repulsive side needs no guard: α saturates at −1.)
    if exponent > 300.0 {
        return hi - margin;
    }
    let alpha = exponent.exp_m1();
    if alpha.abs() < ALPHA_LINEAR_EPS {
        return (q_i * q_j).clamp(lo + margin, hi - margin);
    }

    let q_cap = 1.0 + alpha * (q_i + q_j);
    let product = 4.0 * alpha * (1.0 + alpha) * (q_i * q_j);
    let mut disc = q_cap.mul_add(q_cap, -product);
    if disc < 0.0 {
        let scale = (q_cap * q_cap + product.abs()).max(1.0);
        debug_assert!(disc > DISC_REL_CLAMP * scale, "discriminant {disc} beyond round-off");
        disc = 0.0;
    }
    let root = disc.sqrt();
    let xi = if q_cap >= 0.0 {
        2.0 * (1.0 + alpha) * (q_i * q_j) / (q_cap + root)
    } else {
        (q_cap - root) / (2.0 * alpha)
    };
    xi.clamp(lo + margin, hi - margin)
}

fn xi_star_all(spec: &FreeEnergySpec, q: &[f64]) -> Vec<f64> {
    spec.graph()
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            xi_star(
                q[i],
                q[j],
                spec.model.couplings()[e],
                spec.counting.edge[e],
                spec.scale.edge[e],
            )
        })
        .collect()
}

/// Normalized 2×2 table induced by `(q_i, q_j, ξ)`; rejects points outside
/// the strictly interior box (callers wanting a boundary table must nudge
/// inward by an `ε` of their choice first).
pub fn pairwise_table(q_i: f64, q_j: f64, xi: f64) -> Result<PairTable, EnergyError> {
    let lo = (q_i + q_j - 1.0).max(0.0);
    let hi = q_i.min(q_j);
    if !(q_i > 0.0 && q_i < 1.0) {
        return Err(EnergyError::SingletonOutOfBox { index: 0, value: q_i });
    }
    if !(q_j > 0.0 && q_j < 1.0) {
        return Err(EnergyError::SingletonOutOfBox { index: 1, value: q_j });
    }
    if !(xi > lo && xi < hi) {
        return Err(EnergyError::PairOutOfBox { index: 0, value: xi, lo, hi, q_i, q_j });
    }
    Ok(PairTable { pp: xi, pm: q_i - xi, mp: q_j - xi, mm: 1.0 + xi - q_i - q_j })
}

/// Evaluates `F` at an explicit interior point of the polytope.
pub fn evaluate(spec: &FreeEnergySpec, point: &PseudoMarginals) -> Result<f64, EnergyError> {
    let validated = PseudoMarginals::new(spec.graph(), point.q.clone(), point.xi.clone())?;
    Ok(value_at(spec, &validated.q, &validated.xi))
}

fn value_at(spec: &FreeEnergySpec, q: &[f64], xi: &[f64]) -> f64 {
    let model = spec.model;
    let mut f = 0.0;
    for (e, &(i, j)) in spec.graph().edges().iter().enumerate() {
        let correlation = 1.0 + 2.0 * (2.0 * xi[e] - q[i] - q[j]);
        f -= correlation * spec.scale.edge[e] * model.couplings()[e];
        f -= spec.counting.edge[e] * pair_entropy(q[i], q[j], xi[e]);
    }
    for i in 0..model.n_nodes() {
        f += (1.0 - 2.0 * q[i]) * spec.scale.node[i] * model.thetas()[i];
        f -= spec.counting.node[i] * node_entropy(q[i]);
    }
    f
}

fn q_interior(q: &[f64]) -> bool {
    q.iter().all(|&v| (EPS_BOX..=1.0 - EPS_BOX).contains(&v))
}

/// `F(q, ξ*(q))`: the objective restricted to singleton beliefs, with each
/// edge at its closed-form minimizer. Returns `+∞` outside the interior box
/// so line searches treat infeasible trial points as ordinary ascent.
pub fn value_on_manifold(spec: &FreeEnergySpec, q: &[f64]) -> f64 {
    debug_assert_eq!(q.len(), spec.model.n_nodes());
    if !q_interior(q) {
        return f64::INFINITY;
    }
    let xi = xi_star_all(spec, q);
    value_at(spec, q, &xi)
}

/// Exact gradient of `q ↦ F(q, ξ*(q))`.
///
/// Because `∂F/∂ξ_e = 0` at `ξ*_e`, the chain-rule terms through `ξ*`
/// vanish and the gradient is the partial derivative at fixed `ξ`:
///
/// ```text
/// ∂F/∂q_i = −2ζ_iθ_i + c_i·ln(q_i/(1−q_i))
///         + Σ_{e=(i,j)} [ 2ζ_eJ_e + c_e·ln((q_i − ξ*_e)/(1 + ξ*_e − q_i − q_j)) ]
/// ```
pub fn gradient_on_manifold(spec: &FreeEnergySpec, q: &[f64]) -> Vec<f64> {
    debug_assert_eq!(q.len(), spec.model.n_nodes());
    let model = spec.model;
    let mut g: Vec<f64> = (0..model.n_nodes())
        .map(|i| {
            let qi = q[i].clamp(EPS_BOX, 1.0 - EPS_BOX);
            -2.0 * spec.scale.node[i] * model.thetas()[i]
                + spec.counting.node[i] * (qi.ln() - (1.0 - qi).ln())
        })
        .collect();
    for (e, &(i, j)) in spec.graph().edges().iter().enumerate() {
        let xi = xi_star(
            q[i],
            q[j],
            model.couplings()[e],
            spec.counting.edge[e],
            spec.scale.edge[e],
        );
        let energy_term = 2.0 * spec.scale.edge[e] * model.couplings()[e];
        let joint_minus = (1.0 + xi - q[i] - q[j]).max(f64::MIN_POSITIVE);
        g[i] += energy_term
            + spec.counting.edge[e] * ((q[i] - xi).max(f64::MIN_POSITIVE).ln() - joint_minus.ln());
        g[j] += energy_term
            + spec.counting.edge[e] * ((q[j] - xi).max(f64::MIN_POSITIVE).ln() - joint_minus.ln());
    }
    g
}

/// Log-partition estimate read off a singleton belief vector: `−F(q, ξ*(q))`.
pub fn estimate_log_partition(spec: &FreeEnergySpec, q: &[f64]) -> f64 {
    -value_on_manifold(spec, q)
}

/// Packages a singleton belief vector into a full [`InferenceResult`] with
/// per-edge tables at `ξ*(q)` and the `−F` log-partition estimate.
pub fn result_from_point(
    spec: &FreeEnergySpec,
    q: Vec<f64>,
    diagnostics: Diagnostics,
) -> InferenceResult {
    let xi = xi_star_all(spec, &q);
    let pairwise = spec
        .graph()
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| PairTable {
            pp: xi[e],
            pm: q[i] - xi[e],
            mp: q[j] - xi[e],
            mm: 1.0 + xi[e] - q[i] - q[j],
        })
        .collect();
    let log_z_est = -value_at(spec, &q, &xi);
    InferenceResult { singleton: q, pairwise, log_z_est, diagnostics }
}
