//! Free-energy minimization over singleton beliefs.
//!
//! Minimizes `q ↦ F(q, ξ*(q))` (see [`crate::energy`]) with a BFGS-style
//! quasi-Newton iteration kept inside the open box `(0,1)^N`:
//!
//! 1. direction `d = −B·g` with `B` an inverse-Hessian estimate, reset to the
//!    identity whenever `d` stops being a descent direction;
//! 2. the direction is rescaled by the largest `ρ_max ≤ 1` (geometric
//!    backoff) for which `q + ρ_max·d` stays strictly inside the box, so the
//!    line search always works on the feasible slice `ρ ∈ (0, 1]`;
//! 3. a randomized weak-Wolfe line search picks the step;
//! 4. `B` is updated by the inverse BFGS formula, skipped when the curvature
//!    `sᵀy` is too small to be trusted.
//!
//! The objective is non-convex for tree-exact counting numbers, so
//! [`minimize`] runs several independent restarts from random interior points
//! and keeps the best; with convex counting numbers (spanning-tree or
//! least-squares weights) every restart lands on the same minimizer and a
//! single [`minimize_from`] suffices. All randomness (restart points, line
//! search) is driven by one seed; equal seeds give bit-identical runs.

use crate::energy::{gradient_on_manifold, value_on_manifold, FreeEnergySpec, EPS_BOX};
use crate::rng::{derive_seed, seeded};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Curvature `sᵀy` below this skips the BFGS update instead of dividing by it.
const CURVATURE_FLOOR: f64 = 1e-10;
/// Geometric backoff applied to the step cap while the trial leaves the box.
const FEASIBILITY_SHRINK: f64 = 0.9;
/// Fallback step when the line search finds no acceptable point.
const FALLBACK_RHO: f64 = 1e-8;
const MAX_CONTRACTIONS: usize = 100;
/// Consecutive iterations without a strict decrease before giving up: once
/// per-step decreases drop below one ulp of `F`, the sufficient-decrease test
/// is pure round-off noise and further iterations cannot help.
const STALL_LIMIT: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum FminError {
    #[error("all {restarts} restarts hit non-finite objective or gradient values")]
    AllRestartsFailed { restarts: usize },
    #[error("starting point coordinate {index} = {value} is outside (0, 1)")]
    BadStartingPoint { index: usize, value: f64 },
    #[error("starting point has length {got}, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("objective or gradient became non-finite during the descent")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FminConfig {
    /// Stop when `‖g‖₂` drops to this.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Sufficient-decrease constant (first Wolfe condition).
    pub wolfe_c1: f64,
    /// Curvature constant (second Wolfe condition).
    pub wolfe_c2: f64,
    /// Step growth factor while the curvature condition still fails.
    pub expansion: f64,
    /// Independent descents from random interior points; best value wins.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FminConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iters: 2000,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            expansion: 1.1,
            restarts: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FminResult {
    pub q: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Which restart produced the winning value (0 for [`minimize_from`]).
    pub restart_index: usize,
}

/// Outcome of one line search on the unit interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfeStep {
    pub rho: f64,
    /// Both Wolfe conditions hold at `rho`. When `false` the step still
    /// satisfies sufficient decrease if any such point was seen.
    pub satisfied: bool,
    pub contractions: usize,
}

/// Randomized weak-Wolfe search over `ρ ∈ (0, 1]` for a 1-D slice `φ` with
/// `φ(0) = phi0`, `φ′(0) = dphi0 < 0`.
///
/// The first trial is uniform on `(0, 1)`. While sufficient decrease holds
/// but the slope is still too negative, the step expands geometrically
/// (clamped at 1). If sufficient decrease fails, the bracket `(l, r)`
/// shrinks by uniform random picks: `r` moves onto points failing the
/// decrease condition, `l` onto points passing it with too-negative slope —
/// the bracket always contains acceptable points, so this terminates with
/// probability one; a hard cap returns the best decrease point seen.
#[allow(clippy::too_many_arguments)]
pub fn wolfe_line_search<F, G, R>(
    mut phi: F,
    mut dphi: G,
    phi0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
    expansion: f64,
    rng: &mut R,
) -> WolfeStep
where
    F: FnMut(f64) -> f64,
    G: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    debug_assert!(dphi0 < 0.0, "line search needs a descent direction");
    if !(dphi0 < 0.0) {
        return WolfeStep { rho: FALLBACK_RHO, satisfied: false, contractions: 0 };
    }
    let decrease_ok = |rho: f64, value: f64| value <= phi0 + c1 * rho * dphi0;
    let curvature_ok = |slope: f64| slope >= c2 * dphi0;

    let mut rho = rng.random_range(0.0f64..1.0).max(1e-12);
    let mut value = phi(rho);
    let mut best: Option<(f64, f64)> = None; // (value, rho) with decrease ok
    let note_best = |value: f64, rho: f64, best: &mut Option<(f64, f64)>| {
        if best.is_none_or(|(bv, _)| value < bv) {
            *best = Some((value, rho));
        }
    };

    if decrease_ok(rho, value) {
        note_best(value, rho, &mut best);
        loop {
            if curvature_ok(dphi(rho)) {
                return WolfeStep { rho, satisfied: true, contractions: 0 };
            }
            if rho >= 1.0 {
                // Clamped at the feasibility cap with decrease intact.
                return WolfeStep { rho, satisfied: false, contractions: 0 };
            }
            let next = (rho * expansion).min(1.0);
            let next_value = phi(next);
            if !decrease_ok(next, next_value) {
                return WolfeStep { rho, satisfied: false, contractions: 0 };
            }
            rho = next;
            value = next_value;
            note_best(value, rho, &mut best);
        }
    }

    let (mut lo, mut hi) = (0.0, rho);
    for contraction in 1..=MAX_CONTRACTIONS {
        rho = (lo + rng.random_range(0.0f64..1.0) * (hi - lo)).max(1e-15);
        value = phi(rho);
        if !decrease_ok(rho, value) {
            hi = rho;
            continue;
        }
        note_best(value, rho, &mut best);
        if curvature_ok(dphi(rho)) {
            return WolfeStep { rho, satisfied: true, contractions: contraction };
        }
        lo = rho;
    }
    match best {
        Some((_, rho)) => WolfeStep { rho, satisfied: false, contractions: MAX_CONTRACTIONS },
        None => WolfeStep { rho: FALLBACK_RHO, satisfied: false, contractions: MAX_CONTRACTIONS },
    }
}

struct DescentOutcome {
    q: Vec<f64>,
    value: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

/// One quasi-Newton descent; `None` when the objective or gradient leaves the
/// finite range (the caller treats that restart as failed).
fn descend<R: Rng + ?Sized>(
    spec: &FreeEnergySpec,
    q0: Vec<f64>,
    config: &FminConfig,
    rng: &mut R,
) -> Option<DescentOutcome> {
    let n = q0.len();
    let interior = |v: f64| (EPS_BOX..=1.0 - EPS_BOX).contains(&v);
    let mut q = DVector::from_vec(q0);
    let mut value = value_on_manifold(spec, q.as_slice());
    if !value.is_finite() {
        return None;
    }
    let mut grad = DVector::from_vec(gradient_on_manifold(spec, q.as_slice()));
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = 0;

    for iteration in 0..config.max_iters {
        let grad_norm = grad.norm();
        if !grad_norm.is_finite() {
            return None;
        }
        if grad_norm <= config.grad_tol {
            converged = true;
            break;
        }
        if stalled >= STALL_LIMIT {
            break;
        }
        iterations = iteration + 1;

        let mut direction = -(&b * &grad);
        if !(grad.dot(&direction) < 0.0) || direction.iter().any(|v| !v.is_finite()) {
            b = DMatrix::identity(n, n);
            direction = -grad.clone();
        }

        // Largest cap in (0, 1] keeping the endpoint (hence the whole
        // segment — the box is convex) strictly interior.
        let mut rho_max = 1.0f64;
        let mut backoffs = 0;
        while !(0..n).all(|i| interior(q[i] + rho_max * direction[i])) {
            rho_max *= FEASIBILITY_SHRINK;
            backoffs += 1;
            if backoffs > 20_000 {
                return None;
            }
        }
        let effective: DVector<f64> = rho_max * &direction;
        let slope0 = grad.dot(&effective);
        if !(slope0 < 0.0) {
            // Direction numerically flat: nothing left to gain.
            converged = grad_norm <= config.grad_tol;
            break;
        }

        let step = wolfe_line_search(
            |rho| value_on_manifold(spec, (&q + rho * &effective).as_slice()),
            |rho| {
                DVector::from_vec(gradient_on_manifold(
                    spec,
                    (&q + rho * &effective).as_slice(),
                ))
                .dot(&effective)
            },
            value,
            slope0,
            config.wolfe_c1,
            config.wolfe_c2,
            config.expansion,
            rng,
        );

        let displacement: DVector<f64> = step.rho * &effective;
        let q_next = &q + &displacement;
        let value_next = value_on_manifold(spec, q_next.as_slice());
        if !value_next.is_finite() {
            return None;
        }
        stalled = if value_next < value { 0 } else { stalled + 1 };
        let grad_next = DVector::from_vec(gradient_on_manifold(spec, q_next.as_slice()));
        let y = &grad_next - &grad;
        let curvature = displacement.dot(&y);
        if curvature > CURVATURE_FLOOR {
            // Inverse BFGS: B += ((γ + yᵀBy)/γ²)·ssᵀ − (Bysᵀ + s(By)ᵀ)/γ.
            let by = &b * &y;
            let scale = (curvature + y.dot(&by)) / (curvature * curvature);
            b += scale * (&displacement * displacement.transpose());
            b -= (&by * displacement.transpose() + &displacement * by.transpose()) / curvature;
        }
        q = q_next;
        value = value_next;
        grad = grad_next;
    }

    Some(DescentOutcome {
        grad_norm: grad.norm(),
        q: q.as_slice().to_vec(),
        value,
        iterations,
        converged,
    })
}

/// Multi-restart minimization; the restart with the lowest final value wins,
/// ties broken toward the earlier restart. Restart `r` derives its RNG (for
/// both the starting point and line-search draws) from `seed` and `r`, so
/// results are reproducible and independent of scheduling.
pub fn minimize(spec: &FreeEnergySpec, config: &FminConfig) -> Result<FminResult, FminError> {
    let n = spec.model().n_nodes();
    let restarts = config.restarts.max(1);
    let mut best: Option<FminResult> = None;
    for restart in 0..restarts {
        let mut rng = seeded(derive_seed(config.seed, &[restart as u64]));
        let q0: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        if let Some(outcome) = descend(spec, q0, config, &mut rng) {
            if best.as_ref().is_none_or(|b| outcome.value < b.value) {
                best = Some(FminResult {
                    q: outcome.q,
                    value: outcome.value,
                    grad_norm: outcome.grad_norm,
                    iterations: outcome.iterations,
                    converged: outcome.converged,
                    restart_index: restart,
                });
            }
        }
    }
    best.ok_or(FminError::AllRestartsFailed { restarts })
}

/// Single descent from a caller-supplied interior point (used for warm
/// starts). The line-search RNG is seeded directly from `config.seed`.
pub fn minimize_from(
    spec: &FreeEnergySpec,
    q0: &[f64],
    config: &FminConfig,
) -> Result<FminResult, FminError> {
    let n = spec.model().n_nodes();
    if q0.len() != n {
        return Err(FminError::WrongLength { expected: n, got: q0.len() });
    }
    if let Some((index, &value)) =
        q0.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v < 1.0))
    {
        return Err(FminError::BadStartingPoint { index, value });
    }
    let start: Vec<f64> = q0.iter().map(|&v| v.clamp(EPS_BOX, 1.0 - EPS_BOX)).collect();
    let mut rng = seeded(config.seed);
    let outcome = descend(spec, start, config, &mut rng).ok_or(FminError::NonFinite)?;
    Ok(FminResult {
        q: outcome.q,
        value: outcome.value,
        grad_norm: outcome.grad_norm,
        iterations: outcome.iterations,
        converged: outcome.converged,
        restart_index: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::trw_counting;
    use crate::energy::{CountingNumbers, ScaleFactors};
    use crate::exact::exact_marginals;
    use crate::graph::Graph;
    use crate::model::{IsingModel, ModelClass};

    #[test]
    fn wolfe_on_a_quadratic() {
        // φ(ρ) = (ρ − 0.3)²: any ρ in [0.03, ~0.6] satisfies both conditions
        // for c1 = 1e-4, c2 = 0.9.
        for seed in 0..20 {
            let mut rng = seeded(seed);
            let step = wolfe_line_search(
                |r| (r - 0.3) * (r - 0.3),
                |r| 2.0 * (r - 0.3),
                0.09,
                -0.6,
                1e-4,
                0.9,
                1.1,
                &mut rng,
            );
            assert!(step.satisfied, "seed {seed}: {step:?}");
            let value = (step.rho - 0.3) * (step.rho - 0.3);
            assert!(value <= 0.09 + 1e-4 * step.rho * -0.6);
            assert!(2.0 * (step.rho - 0.3) >= 0.9 * -0.6);
        }
    }

    #[test]
    fn wolfe_contracts_on_a_steep_valley() {
        // φ(ρ) = 100ρ² − ρ: decrease requires ρ ≲ 0.01, so the first uniform
        // trial almost always fails and the bracket must shrink.
        let mut contracted = false;
        for seed in 0..20 {
            let mut rng = seeded(seed);
            let step = wolfe_line_search(
                |r| 100.0 * r * r - r,
                |r| 200.0 * r - 1.0,
                0.0,
                -1.0,
                1e-4,
                0.9,
                1.1,
                &mut rng,
            );
            assert!(step.satisfied, "seed {seed}: {step:?}");
            assert!(100.0 * step.rho * step.rho - step.rho <= -(1e-4 * step.rho));
            assert!(200.0 * step.rho - 1.0 >= -0.9);
            contracted |= step.contractions > 0;
        }
        assert!(contracted, "steep valley never exercised the contraction path");
    }

    #[test]
    fn wolfe_handles_infinite_regions() {
        // φ(ρ) = (ρ − 0.03)² but +∞ past 0.05, as at a feasibility boundary;
        // both conditions are satisfiable on [0.003, 0.05].
        for seed in 0..10 {
            let mut rng = seeded(seed);
            let step = wolfe_line_search(
                |r| if r > 0.05 { f64::INFINITY } else { (r - 0.03) * (r - 0.03) },
                |r| 2.0 * (r - 0.03),
                9e-4,
                -0.06,
                1e-4,
                0.9,
                1.1,
                &mut rng,
            );
            assert!(step.rho <= 0.05, "seed {seed}: {step:?}");
            assert!(step.satisfied, "seed {seed}: {step:?}");
            assert!(2.0 * (step.rho - 0.03) >= 0.9 * -0.06);
        }
    }

    #[test]
    fn separable_model_minimizes_to_sigmoids() {
        // With all couplings zero the objective separates and the minimizer
        // is q_i = σ(2θ_i) for any counting numbers summing to 1 per node.
        let g = Graph::complete(4);
        let thetas = vec![0.7, -0.2, 1.5, 0.0];
        let model = IsingModel::new(g, thetas.clone(), vec![0.0; 6]).unwrap();
        let spec = FreeEnergySpec::uniform_c(&model, 1.7).unwrap();
        let config = FminConfig { grad_tol: 1e-7, restarts: 2, ..FminConfig::default() };
        let result = minimize(&spec, &config).unwrap();
        assert!(result.converged);
        for (i, &theta) in thetas.iter().enumerate() {
            let target = 1.0 / (1.0 + (-2.0 * theta).exp());
            assert!(
                (result.q[i] - target).abs() < 1e-7,
                "node {i}: {} vs {target}",
                result.q[i]
            );
        }
    }

    #[test]
    fn tree_minimum_recovers_exact_marginals() {
        let edges: Vec<(usize, usize)> = (0..5).map(|i| (i, i + 1)).collect();
        let g = Graph::new(6, &edges).unwrap();
        let model = IsingModel::sample(g, ModelClass::Mixed, 1.0, 0.6, &mut seeded(11));
        let exact = exact_marginals(&model).unwrap();
        let spec = FreeEnergySpec::bethe(&model);
        let config = FminConfig { grad_tol: 1e-7, ..FminConfig::default() };
        let result = minimize(&spec, &config).unwrap();
        assert!(result.converged);
        for (a, b) in result.q.iter().zip(&exact.singleton) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!((result.value + exact.log_z).abs() < 1e-7);
    }

    #[test]
    fn equal_seeds_are_bit_identical() {
        let model = IsingModel::sample(
            Graph::complete(6),
            ModelClass::Attractive,
            1.5,
            0.4,
            &mut seeded(5),
        );
        let spec = FreeEnergySpec::bethe(&model);
        let config = FminConfig { seed: 42, ..FminConfig::default() };
        let a = minimize(&spec, &config).unwrap();
        let b = minimize(&spec, &config).unwrap();
        assert_eq!(a.q, b.q);
        assert_eq!(a.value, b.value);
        assert_eq!(a.restart_index, b.restart_index);
    }

    #[test]
    fn convex_weights_make_starts_agree() {
        // Spanning-tree edge weights give a convex objective: descents from
        // very different corners of the box must meet at one minimizer.
        let model = IsingModel::sample(
            Graph::complete(4),
            ModelClass::Mixed,
            2.0,
            0.5,
            &mut seeded(23),
        );
        let counting = trw_counting(model.graph()).unwrap();
        let scale = ScaleFactors::unit(model.graph());
        let spec = FreeEnergySpec::new(&model, counting, scale).unwrap();
        let config = FminConfig { grad_tol: 1e-7, ..FminConfig::default() };
        let starts = [
            vec![0.2; 4],
            vec![0.8; 4],
            vec![0.5; 4],
            vec![0.9, 0.1, 0.9, 0.1],
        ];
        let results: Vec<_> = starts
            .iter()
            .map(|s| minimize_from(&spec, s, &config).unwrap())
            .collect();
        for r in &results[1..] {
            for (a, b) in r.q.iter().zip(&results[0].q) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn uniform_weight_one_equals_tree_exact_weights() {
        let model = IsingModel::sample(
            Graph::complete(5),
            ModelClass::Mixed,
            1.0,
            0.3,
            &mut seeded(9),
        );
        assert_eq!(
            CountingNumbers::uniform(model.graph(), 1.0).unwrap(),
            CountingNumbers::bethe(model.graph())
        );
        let config = FminConfig { seed: 3, ..FminConfig::default() };
        let via_uniform =
            minimize(&FreeEnergySpec::uniform_c(&model, 1.0).unwrap(), &config).unwrap();
        let via_bethe = minimize(&FreeEnergySpec::bethe(&model), &config).unwrap();
        assert_eq!(via_uniform.q, via_bethe.q);
    }

    #[test]
    fn bad_starting_points_are_rejected() {
        let model = IsingModel::sample(
            Graph::complete(3),
            ModelClass::Mixed,
            1.0,
            0.3,
            &mut seeded(1),
        );
        let spec = FreeEnergySpec::bethe(&model);
        let config = FminConfig::default();
        assert!(matches!(
            minimize_from(&spec, &[0.5, 1.0, 0.5], &config),
            Err(FminError::BadStartingPoint { index: 1, .. })
        ));
        assert!(matches!(
            minimize_from(&spec, &[0.5, 0.5], &config),
            Err(FminError::WrongLength { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn overflowing_objective_fails_all_restarts() {
        // Fields near f64::MAX overflow the objective at any interior point.
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        let model = IsingModel::new(g, vec![1e308, 1e308], vec![0.0]).unwrap();
        let spec = FreeEnergySpec::bethe(&model);
        let config = FminConfig { restarts: 3, ..FminConfig::default() };
        assert_eq!(
            minimize(&spec, &config),
            Err(FminError::AllRestartsFailed { restarts: 3 })
        );
    }
}
