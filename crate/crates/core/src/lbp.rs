//! Loopy belief propagation and the scaled-coupling homotopy.
//!
//! Messages are kept in half-log-odds form: `m_{i→j} ∈ ℝ` encodes the factor
//! `exp(m·s_j)` an edge sends about its far endpoint. The update is
//!
//! ```text
//! m_{i→j} ← atanh( tanh(ζ·J_ij) · tanh(h_{i→j}) ),
//! h_{i→j} = θ_i + Σ_{k ∈ N(i)\{j}} m_{k→i}
//! ```
//!
//! applied sequentially over all directed edges in a freshly shuffled order
//! each sweep (the shuffle is seeded, so runs are reproducible). Fixed points
//! are stationary points of the tree-exact free energy; on trees they are
//! exact. Singleton beliefs are `q_i = σ(2(θ_i + Σ m_{k→i}))`, pair beliefs
//! come from the two cavity fields plus the edge factor, and the partition
//! estimate plugs the beliefs into the tree-exact objective.
//!
//! [`mooij_radius`] evaluates the classic sufficient condition for a unique
//! fixed point: the spectral radius of the directed-edge influence matrix
//! `A[(i→j),(j→k)] = tanh|ζ·J_jk|` (for `k ≠ i`) below one guarantees the
//! message map is a contraction. On trees the matrix is nilpotent, so the
//! radius is zero and the certificate always holds.
//!
//! [`sbp`] walks couplings up a grid `ζ = 0, Δζ, 2Δζ, …, 1`, warm-starting
//! messages at each step. `ζ = 0` always converges (all messages vanish), and
//! the walk stops at the first non-convergent step, returning the last
//! converged beliefs — a progressively weakened model whose beliefs are still
//! plugged into the *original* objective for the partition estimate.

use crate::energy::{
    box_margin, estimate_log_partition, evaluate, FreeEnergySpec, PseudoMarginals, EPS_BOX,
};
use crate::inference::{Diagnostics, InferenceResult, PairTable, UniquenessCertificate};
use crate::model::IsingModel;
use crate::rng::{derive_seed, seeded};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Message products are clamped to this before `atanh`, capping messages
/// near 17.6 — beliefs within one ulp of 0/1.
const MESSAGE_PRODUCT_CAP: f64 = 1.0 - 1e-15;
const POWER_ITER_CAP: usize = 10_000;
const POWER_ITER_TOL: f64 = 1e-12;
/// Dense eigenvalue fallback is affordable up to this many directed edges.
const DENSE_RADIUS_CAP: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbpConfig {
    /// Converged when no message moves more than this in a full sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Fraction of the old message kept at each update (0 = undamped).
    pub damping: f64,
    /// Seeds the per-sweep shuffle of the directed-edge update order.
    pub seed: u64,
}

impl Default for LbpConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_sweeps: 10_000, damping: 0.0, seed: 0 }
    }
}

/// Half-log-odds messages, two per edge: slot `2e` flows from the smaller
/// endpoint to the larger, slot `2e+1` the other way.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState(Vec<f64>);

impl MessageState {
    pub fn zeros(n_edges: usize) -> Self {
        Self(vec![0.0; 2 * n_edges])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Message arriving at `target` along edge `e` with endpoints `(i, j)`.
    fn incoming(&self, e: usize, (i, j): (usize, usize), target: usize) -> f64 {
        debug_assert!(target == i || target == j);
        if target == j {
            self.0[2 * e]
        } else {
            self.0[2 * e + 1]
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbpOutcome {
    pub result: InferenceResult,
    /// Final messages, converged or not — reusable as a warm start.
    pub messages: MessageState,
}

/// Runs message passing from all-zero messages on the model with couplings
/// scaled by `zeta` (fields unscaled).
pub fn lbp_run(model: &IsingModel, zeta: f64, config: &LbpConfig) -> LbpOutcome {
    lbp_run_from(model, zeta, MessageState::zeros(model.n_edges()), config)
}

/// Same, but warm-started from the given messages.
pub fn lbp_run_from(
    model: &IsingModel,
    zeta: f64,
    start: MessageState,
    config: &LbpConfig,
) -> LbpOutcome {
    let graph = model.graph();
    let edges = graph.edges();
    let mut messages = start;
    debug_assert_eq!(messages.0.len(), 2 * edges.len());
    let mut rng = seeded(config.seed);
    let mut order: Vec<usize> = (0..2 * edges.len()).collect();

    let mut converged = false;
    let mut sweeps = 0;
    for sweep in 0..config.max_sweeps {
        sweeps = sweep + 1;
        order.shuffle(&mut rng);
        let mut max_delta: f64 = 0.0;
        for &d in &order {
            let e = d / 2;
            let (i, j) = edges[e];
            let (from, to) = if d % 2 == 0 { (i, j) } else { (j, i) };
            let mut cavity = model.thetas()[from];
            for &(k, e2) in graph.neighbors(from) {
                if k != to {
                    cavity += messages.incoming(e2, edges[e2], from);
                }
            }
            let product = ((zeta * model.couplings()[e]).tanh() * cavity.tanh())
                .clamp(-MESSAGE_PRODUCT_CAP, MESSAGE_PRODUCT_CAP);
            let updated =
                (1.0 - config.damping) * product.atanh() + config.damping * messages.0[d];
            max_delta = max_delta.max((updated - messages.0[d]).abs());
            messages.0[d] = updated;
        }
        if max_delta <= config.tol {
            converged = true;
            break;
        }
    }

    let (singleton, pairwise) = beliefs(model, zeta, &messages);
    let log_z_est = scaled_tree_objective_estimate(model, zeta, &singleton, &pairwise);
    LbpOutcome {
        result: InferenceResult {
            singleton,
            pairwise,
            log_z_est,
            diagnostics: Diagnostics {
                converged,
                iterations: sweeps,
                ..Diagnostics::default()
            },
        },
        messages,
    }
}

fn beliefs(model: &IsingModel, zeta: f64, messages: &MessageState) -> (Vec<f64>, Vec<PairTable>) {
    let graph = model.graph();
    let edges = graph.edges();
    let field: Vec<f64> = (0..model.n_nodes())
        .map(|u| {
            model.thetas()[u]
                + graph
                    .neighbors(u)
                    .iter()
                    .map(|&(_, e)| messages.incoming(e, edges[e], u))
                    .sum::<f64>()
        })
        .collect();
    let singleton: Vec<f64> =
        field.iter().map(|&h| 1.0 / (1.0 + (-2.0 * h).exp())).collect();
    let pairwise = edges
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            // Cavity fields re-add by leaving the cross-edge message out.
            let h_i = field[i] - messages.incoming(e, (i, j), i);
            let h_j = field[j] - messages.incoming(e, (i, j), j);
            let w = zeta * model.couplings()[e];
            let logits =
                [w + h_i + h_j, -w + h_i - h_j, -w - h_i + h_j, w - h_i - h_j];
            let peak = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let cells: Vec<f64> = logits.iter().map(|&l| (l - peak).exp()).collect();
            let total: f64 = cells.iter().sum();
            PairTable {
                pp: cells[0] / total,
                pm: cells[1] / total,
                mp: cells[2] / total,
                mm: cells[3] / total,
            }
        })
        .collect();
    (singleton, pairwise)
}

/// `−F` of the tree-exact objective (couplings scaled by `zeta`) at the
/// belief point, with beliefs nudged inside the polytope where necessary.
fn scaled_tree_objective_estimate(
    model: &IsingModel,
    zeta: f64,
    singleton: &[f64],
    pairwise: &[PairTable],
) -> f64 {
    let spec = FreeEnergySpec::bethe_scaled(model, zeta).expect("zeta ≥ 0");
    let q: Vec<f64> =
        singleton.iter().map(|&v| v.clamp(EPS_BOX, 1.0 - EPS_BOX)).collect();
    let xi: Vec<f64> = model
        .graph()
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let lo = (q[i] + q[j] - 1.0).max(0.0);
            let hi = q[i].min(q[j]);
            // `q` is boxed away from {0, 1} above, so the box is wide enough
            // for two margins even at its narrowest.
            let margin = box_margin(lo, hi);
            pairwise[e].pp.clamp(lo + margin, hi - margin)
        })
        .collect();
    let point = PseudoMarginals::new(model.graph(), q, xi)
        .expect("clamped beliefs are interior");
    -evaluate(&spec, &point).expect("validated point")
}

/// Spectral radius of the directed-edge influence matrix; below one the
/// message update is a contraction with a single fixed point.
///
/// Power iteration exploits the row structure (`O(E)` per product); if the
/// eigenvalue estimate has not settled — weighted cycles make the ratio
/// oscillate — a dense eigendecomposition takes over on small systems.
pub fn mooij_radius(model: &IsingModel, zeta: f64) -> UniquenessCertificate {
    let edges = model.graph().edges();
    let dim = 2 * edges.len();
    if dim == 0 {
        return UniquenessCertificate { spectral_radius: 0.0, holds: true };
    }
    let weight: Vec<f64> =
        model.couplings().iter().map(|&j| (zeta * j).abs().tanh()).collect();

    let mut v = vec![1.0; dim];
    let mut lambda_prev = f64::INFINITY;
    for _ in 0..POWER_ITER_CAP {
        let mut in_sum = vec![0.0; model.n_nodes()];
        for (e, &(i, j)) in edges.iter().enumerate() {
            in_sum[j] += v[2 * e];
            in_sum[i] += v[2 * e + 1];
        }
        // Target (from → to): sums sources (k → from), k ≠ to.
        let mut next = vec![0.0; dim];
        for (e, &(i, j)) in edges.iter().enumerate() {
            next[2 * e] = weight[e] * (in_sum[i] - v[2 * e + 1]);
            next[2 * e + 1] = weight[e] * (in_sum[j] - v[2 * e]);
        }
        let norm = next.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if norm == 0.0 {
            // Nilpotent influence (trees): radius exactly zero.
            return UniquenessCertificate { spectral_radius: 0.0, holds: true };
        }
        if (norm - lambda_prev).abs() <= POWER_ITER_TOL * norm.max(1.0) {
            return UniquenessCertificate { spectral_radius: norm, holds: norm < 1.0 };
        }
        lambda_prev = norm;
        for (dst, src) in v.iter_mut().zip(&next) {
            *dst = src / norm;
        }
    }
    let radius = if dim <= DENSE_RADIUS_CAP {
        dense_radius(model, zeta)
    } else {
        lambda_prev
    };
    UniquenessCertificate { spectral_radius: radius, holds: radius < 1.0 }
}

fn dense_radius(model: &IsingModel, zeta: f64) -> f64 {
    let edges = model.graph().edges();
    let dim = 2 * edges.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    // Row = target (from → to), column = source (k → from), k ≠ to.
    for (e, &(i, j)) in edges.iter().enumerate() {
        for (target_row, from, to) in [(2 * e, i, j), (2 * e + 1, j, i)] {
            for &(k, e2) in model.graph().neighbors(from) {
                if k == to {
                    continue;
                }
                let source_col = if from == edges[e2].1 { 2 * e2 } else { 2 * e2 + 1 };
                a[(target_row, source_col)] = weight_of(model, zeta, e);
            }
        }
    }
    a.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn weight_of(model: &IsingModel, zeta: f64, e: usize) -> f64 {
    (zeta * model.couplings()[e]).abs().tanh()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbpConfig {
    /// Grid spacing for the coupling scale walk.
    pub delta_zeta: f64,
    pub lbp: LbpConfig,
}

impl Default for SbpConfig {
    fn default() -> Self {
        Self { delta_zeta: 0.05, lbp: LbpConfig::default() }
    }
}

#[derive(Debug, Clone)]
pub struct SbpOutcome {
    pub result: InferenceResult,
    pub messages: MessageState,
}

/// Walks `ζ` from 0 to 1, warm-starting messages, and returns the beliefs of
/// the last converged step. `diagnostics.zeta_final` records how far the walk
/// got; `model_modified` flags an early stop (`ζ_final < 1`), in which case
/// the beliefs describe a weakened model. The partition estimate always
/// plugs the beliefs into the original unscaled objective.
pub fn sbp(model: &IsingModel, config: &SbpConfig) -> SbpOutcome {
    assert!(
        config.delta_zeta > 0.0 && config.delta_zeta <= 1.0,
        "grid spacing must lie in (0, 1]"
    );
    let mut messages = MessageState::zeros(model.n_edges());
    let mut last: Option<(LbpOutcome, f64)> = None;
    let mut total_sweeps = 0;
    let mut step = 0u64;
    loop {
        let zeta = (step as f64 * config.delta_zeta).min(1.0);
        let step_config =
            LbpConfig { seed: derive_seed(config.lbp.seed, &[step]), ..config.lbp.clone() };
        let outcome = lbp_run_from(model, zeta, messages.clone(), &step_config);
        total_sweeps += outcome.result.diagnostics.iterations;
        if !outcome.result.diagnostics.converged {
            break;
        }
        messages = outcome.messages.clone();
        last = Some((outcome, zeta));
        if zeta >= 1.0 {
            break;
        }
        step += 1;
    }

    let (outcome, zeta_final) = last.expect("the ζ = 0 step always converges");
    let bethe = FreeEnergySpec::bethe(model);
    let log_z_est = estimate_log_partition(&bethe, &clamped(&outcome.result.singleton));
    SbpOutcome {
        result: InferenceResult {
            singleton: outcome.result.singleton,
            pairwise: outcome.result.pairwise,
            log_z_est,
            diagnostics: Diagnostics {
                converged: zeta_final >= 1.0,
                iterations: total_sweeps,
                zeta_final: Some(zeta_final),
                model_modified: zeta_final < 1.0,
                ..Diagnostics::default()
            },
        },
        messages: outcome.messages,
    }
}

fn clamped(q: &[f64]) -> Vec<f64> {
    q.iter().map(|&v| v.clamp(EPS_BOX, 1.0 - EPS_BOX)).collect()
}
