//! Adaptive selection of the approximation strength.
//!
//! Two schemes, both built on the minimizer in [`crate::fmin`]:
//!
//! * [`adapt_c`] — walks a shared edge counting number up a grid
//!   `c = 1, 1+Δc, 1+2Δc, …` and stops once the partition estimate moves less
//!   than `c_tol` between consecutive grid points (or the cap `c_max` is
//!   reached). Raising `c` convexifies the objective and counteracts the
//!   tree-exact objective's tendency to overcount correlations on dense
//!   graphs; the plateau of the estimate marks where further raising stops
//!   paying. Each step warm-starts from the previous minimizer.
//!
//! * [`adapt_zeta`] — weakens couplings by the largest
//!   `ζ ∈ {1, 1−Δζ, 1−2Δζ, …}` whose influence spectral radius
//!   ([`crate::lbp::mooij_radius`]) certifies a unique message-passing fixed
//!   point, then minimizes the tree-exact objective of the weakened model.
//!   If no positive grid point is certified, the walk settles on `ζ = Δζ`
//!   with a failing certificate attached. Whenever `ζ < 1` the result is
//!   flagged `model_modified`: the beliefs describe a deliberately weakened
//!   model chosen for reliability over fidelity.

use crate::energy::{result_from_point, FreeEnergySpec};
use crate::fmin::{minimize, minimize_from, FminConfig, FminError, FminResult};
use crate::inference::{Diagnostics, InferenceResult};
use crate::lbp::mooij_radius;
use crate::model::IsingModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptCConfig {
    /// Grid spacing for the edge counting number.
    pub delta_c: f64,
    /// Stop when consecutive partition estimates differ by less than this.
    pub c_tol: f64,
    /// Hard cap on the counting number.
    pub c_max: f64,
    pub fmin: FminConfig,
}

impl Default for AdaptCConfig {
    fn default() -> Self {
        Self { delta_c: 0.1, c_tol: 0.05, c_max: 10.0, fmin: FminConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptZetaConfig {
    /// Grid spacing for the coupling scale walk (downward from 1).
    pub delta_zeta: f64,
    pub fmin: FminConfig,
}

impl Default for AdaptZetaConfig {
    fn default() -> Self {
        Self { delta_zeta: 0.02, fmin: FminConfig::default() }
    }
}

fn package(spec: &FreeEnergySpec, fmin: FminResult, diagnostics: Diagnostics) -> InferenceResult {
    let mut d = diagnostics;
    d.converged = fmin.converged;
    d.iterations = fmin.iterations;
    d.grad_norm = Some(fmin.grad_norm);
    d.restart_index = Some(fmin.restart_index);
    result_from_point(spec, fmin.q, d)
}

/// Grid walk over the shared edge counting number; see the module docs.
///
/// The grid is evaluated as `c_k = 1 + k·Δc` (clamped at `c_max`), so
/// `c_final` always lands in `[1+Δc, c_max]`. Errors only when every restart
/// of the very first minimization diverges; later warm-start failures fall
/// back to a fresh multi-restart solve, and if that fails too the walk
/// returns the last successful grid point with `converged` cleared.
pub fn adapt_c(model: &IsingModel, config: &AdaptCConfig) -> Result<InferenceResult, FminError> {
    assert!(config.delta_c > 0.0, "grid spacing must be positive");
    assert!(config.c_max > 1.0, "cap must exceed the tree-exact value 1");

    let base = FreeEnergySpec::uniform_c(model, 1.0).expect("c = 1 is positive");
    let mut previous = minimize(&base, &config.fmin)?;
    let mut previous_c = 1.0;

    let mut k = 0u64;
    loop {
        k += 1;
        let c = (1.0 + k as f64 * config.delta_c).min(config.c_max);
        let spec = FreeEnergySpec::uniform_c(model, c).expect("grid values are positive");
        let solved = minimize_from(&spec, &previous.q, &config.fmin)
            .or_else(|_| minimize(&spec, &config.fmin));
        let current = match solved {
            Ok(result) => result,
            Err(_) => {
                // Keep the last grid point that solved; mark the walk broken.
                let spec = FreeEnergySpec::uniform_c(model, previous_c)
                    .expect("previous grid value was valid");
                let mut packaged = package(
                    &spec,
                    previous,
                    Diagnostics { c_final: Some(previous_c), ..Diagnostics::default() },
                );
                packaged.diagnostics.converged = false;
                return Ok(packaged);
            }
        };
        let estimate_moved = ((-current.value) - (-previous.value)).abs();
        let stop = estimate_moved < config.c_tol || c >= config.c_max;
        previous = current;
        previous_c = c;
        if stop {
            let diagnostics = Diagnostics { c_final: Some(c), ..Diagnostics::default() };
            return Ok(package(&spec, previous, diagnostics));
        }
    }
}

/// Couplings are scaled down until the uniqueness certificate holds, then the
/// tree-exact objective of the weakened model is minimized once; see the
/// module docs.
pub fn adapt_zeta(
    model: &IsingModel,
    config: &AdaptZetaConfig,
) -> Result<InferenceResult, FminError> {
    assert!(
        config.delta_zeta > 0.0 && config.delta_zeta < 1.0,
        "grid spacing must lie in (0, 1)"
    );

    let mut zeta = 1.0;
    let mut certificate = mooij_radius(model, zeta);
    let mut k = 0u64;
    while !certificate.holds {
        k += 1;
        let candidate = 1.0 - k as f64 * config.delta_zeta;
        if candidate <= 0.0 {
            // No positive grid point is certified; settle on the smallest
            // spacing with the failing certificate attached.
            zeta = config.delta_zeta;
            certificate = mooij_radius(model, zeta);
            break;
        }
        zeta = candidate;
        certificate = mooij_radius(model, zeta);
    }

    let spec = FreeEnergySpec::bethe_scaled(model, zeta).expect("zeta > 0");
    let solved = minimize(&spec, &config.fmin)?;
    let diagnostics = Diagnostics {
        zeta_final: Some(zeta),
        model_modified: zeta < 1.0,
        certificate: Some(certificate),
        ..Diagnostics::default()
    };
    Ok(package(&spec, solved, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_marginals;
    use crate::graph::Graph;
    use crate::model::ModelClass;
    use crate::rng::seeded;

    #[test]
    fn adapt_c_stops_immediately_when_estimates_agree() {
        // With all couplings zero the objective is independent of c, so the
        // first comparison already falls under c_tol.
        let model = IsingModel::new(
            Graph::complete(4),
            vec![0.5, -0.3, 0.8, 0.1],
            vec![0.0; 6],
        )
        .unwrap();
        let out = adapt_c(&model, &AdaptCConfig::default()).unwrap();
        let c_final = out.diagnostics.c_final.unwrap();
        assert!((c_final - 1.1).abs() < 1e-12, "c_final = {c_final}");
        for (q, &theta) in out.singleton.iter().zip(model.thetas()) {
            let target = 1.0 / (1.0 + (-2.0 * theta).exp());
            assert!((q - target).abs() < 1e-6);
        }
    }

    #[test]
    fn adapt_c_respects_the_cap() {
        let model = IsingModel::sample(
            Graph::complete(6),
            ModelClass::Mixed,
            2.0,
            0.3,
            &mut seeded(3),
        );
        let config = AdaptCConfig { c_tol: 0.0, c_max: 1.35, ..AdaptCConfig::default() };
        let out = adapt_c(&model, &config).unwrap();
        // c_tol = 0 forbids the plateau stop, so the walk must hit the cap.
        assert_eq!(out.diagnostics.c_final, Some(1.35));
        assert!(out.log_z_est.is_finite());
    }

    #[test]
    fn adapt_c_is_deterministic() {
        let model = IsingModel::sample(
            Graph::complete(5),
            ModelClass::Attractive,
            1.5,
            0.5,
            &mut seeded(17),
        );
        let a = adapt_c(&model, &AdaptCConfig::default()).unwrap();
        let b = adapt_c(&model, &AdaptCConfig::default()).unwrap();
        assert_eq!(a.singleton, b.singleton);
        assert_eq!(a.log_z_est, b.log_z_est);
        assert_eq!(a.diagnostics.c_final, b.diagnostics.c_final);
    }

    #[test]
    fn adapt_zeta_keeps_certified_models_unchanged() {
        // A weakly coupled tree: the certificate holds at ζ = 1 and the
        // minimization recovers the exact marginals.
        let edges: Vec<(usize, usize)> = (0..5).map(|i| (i, i + 1)).collect();
        let model = IsingModel::sample(
            Graph::new(6, &edges).unwrap(),
            ModelClass::Mixed,
            1.0,
            0.6,
            &mut seeded(13),
        );
        let exact = exact_marginals(&model).unwrap();
        let out = adapt_zeta(&model, &AdaptZetaConfig::default()).unwrap();
        let d = &out.diagnostics;
        assert_eq!(d.zeta_final, Some(1.0));
        assert!(!d.model_modified);
        assert!(d.certificate.as_ref().unwrap().holds);
        for (a, b) in out.singleton.iter().zip(&exact.singleton) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn adapt_zeta_walks_down_to_the_certified_scale() {
        // K10 with every |J| = 0.5: radius(ζ) = 8·tanh(ζ/2) crosses 1
        // between ζ = 0.26 (1.034) and ζ = 0.24 (0.955), so the 0.02-grid
        // walk from 1 stops at 0.24.
        let model = IsingModel::new(
            Graph::complete(10),
            vec![0.3; 10],
            vec![0.5; 45],
        )
        .unwrap();
        let out = adapt_zeta(&model, &AdaptZetaConfig::default()).unwrap();
        let d = &out.diagnostics;
        let zeta = d.zeta_final.unwrap();
        assert!((zeta - 0.24).abs() < 1e-9, "zeta_final = {zeta}");
        assert!(d.model_modified);
        let cert = d.certificate.as_ref().unwrap();
        assert!(cert.holds);
        assert!((cert.spectral_radius - 8.0 * 0.12f64.tanh()).abs() < 1e-6);
    }

    #[test]
    fn adapt_zeta_flags_an_uncertifiable_walk() {
        // Spacing 0.5 on the same strong model: ζ = 0.5 fails
        // (8·tanh(0.25) ≈ 1.96), the next grid point underflows, and the
        // walk settles on ζ = Δζ with the failing certificate attached.
        let model = IsingModel::new(
            Graph::complete(10),
            vec![0.3; 10],
            vec![0.5; 45],
        )
        .unwrap();
        let config = AdaptZetaConfig { delta_zeta: 0.5, ..AdaptZetaConfig::default() };
        let out = adapt_zeta(&model, &config).unwrap();
        let d = &out.diagnostics;
        assert_eq!(d.zeta_final, Some(0.5));
        assert!(d.model_modified);
        assert!(!d.certificate.as_ref().unwrap().holds);
    }
}
