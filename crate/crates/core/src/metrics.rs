//! Error measures comparing approximate marginals against exact answers.

use crate::inference::PairTable;

/// Mean absolute singleton error `(1/N)·Σ_i |p_i − q_i|`.
pub fn err_singleton(exact: &[f64], estimate: &[f64]) -> f64 {
    assert_eq!(exact.len(), estimate.len());
    assert!(!exact.is_empty());
    exact.iter().zip(estimate).map(|(p, q)| (p - q).abs()).sum::<f64>() / exact.len() as f64
}

/// Mean absolute pairwise-table error, averaging the four cells per edge and
/// then over edges; zero when the graph has no edges.
pub fn err_pairwise(exact: &[PairTable], estimate: &[PairTable]) -> f64 {
    assert_eq!(exact.len(), estimate.len());
    if exact.is_empty() {
        return 0.0;
    }
    exact
        .iter()
        .zip(estimate)
        .map(|(a, b)| {
            a.cells()
                .iter()
                .zip(b.cells())
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
                / 4.0
        })
        .sum::<f64>()
        / exact.len() as f64
}

/// Absolute log-partition error.
pub fn err_log_z(exact: f64, estimate: f64) -> f64 {
    (exact - estimate).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_error_averages_absolute_gaps() {
        let exact = [0.2, 0.6, 0.9];
        let estimate = [0.25, 0.6, 0.8];
        assert!((err_singleton(&exact, &estimate) - 0.05).abs() < 1e-15);
        assert_eq!(err_singleton(&exact, &exact), 0.0);
        // Symmetric in its arguments.
        assert_eq!(
            err_singleton(&exact, &estimate),
            err_singleton(&estimate, &exact)
        );
    }

    #[test]
    fn pairwise_error_averages_cells_then_edges() {
        let a = PairTable { pp: 0.25, pm: 0.25, mp: 0.25, mm: 0.25 };
        let b = PairTable { pp: 0.35, pm: 0.15, mp: 0.25, mm: 0.25 };
        // One edge, cell diffs (0.1, 0.1, 0, 0) → 0.05.
        assert!((err_pairwise(&[a], &[b]) - 0.05).abs() < 1e-15);
        // Averaged with an identical edge → 0.025.
        assert!((err_pairwise(&[a, a], &[b, a]) - 0.025).abs() < 1e-15);
        assert_eq!(err_pairwise(&[], &[]), 0.0);
    }

    #[test]
    fn log_z_error_is_absolute() {
        assert_eq!(err_log_z(1.5, 1.2), 0.30000000000000004);
        assert_eq!(err_log_z(1.2, 1.5), 0.30000000000000004);
        assert_eq!(err_log_z(-3.0, -3.0), 0.0);
    }
}
