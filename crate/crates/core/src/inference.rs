//! Common result types shared by every inference algorithm.

/// Joint distribution of one edge's two spins as a normalized 2×2 table.
/// Field order is `(x_i, x_j)` = `(+,+), (+,−), (−,+), (−,−)` where `i < j`
/// is the canonical edge orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTable {
    pub pp: f64,
    pub pm: f64,
    pub mp: f64,
    pub mm: f64,
}

impl PairTable {
    pub fn cells(&self) -> [f64; 4] {
        [self.pp, self.pm, self.mp, self.mm]
    }

    /// Marginal `p(x_i = +1)` of the lower-indexed endpoint.
    pub fn first_plus(&self) -> f64 {
        self.pp + self.pm
    }

    /// Marginal `p(x_j = +1)` of the higher-indexed endpoint.
    pub fn second_plus(&self) -> f64 {
        self.pp + self.mp
    }

    /// `E[x_i · x_j]` under the table.
    pub fn correlation(&self) -> f64 {
        self.pp - self.pm - self.mp + self.mm
    }
}

/// Outcome of the fixed-point uniqueness test for belief propagation:
/// the spectral radius of the directed-edge influence matrix, and whether
/// it certifies a unique fixed point (radius < 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniquenessCertificate {
    pub spectral_radius: f64,
    pub holds: bool,
}

/// Run metadata attached to every [`InferenceResult`]. Fields that do not
/// apply to a given algorithm stay `None`/`false`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Whether the underlying iteration reached its tolerance.
    pub converged: bool,
    /// Optimizer iterations or message-passing sweeps, including any retries.
    pub iterations: usize,
    /// Final gradient norm for minimization-based algorithms.
    pub grad_norm: Option<f64>,
    /// Which random restart produced the returned minimum.
    pub restart_index: Option<usize>,
    /// Final counting-number value for the adaptive-c schedule.
    pub c_final: Option<f64>,
    /// Final edge scale for scaled-coupling algorithms.
    pub zeta_final: Option<f64>,
    /// True when the log-partition estimate was obtained from a model with
    /// rescaled couplings rather than the original energy function.
    pub model_modified: bool,
    /// Uniqueness certificate at the final scale, where one was computed.
    pub certificate: Option<UniquenessCertificate>,
}

/// Approximate inference output: estimated singleton marginals
/// `p̂_i(x_i = +1)`, per-edge joint tables, and a log-partition estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub singleton: Vec<f64>,
    pub pairwise: Vec<PairTable>,
    pub log_z_est: f64,
    pub diagnostics: Diagnostics,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_table_marginals_and_correlation() {
        let t = PairTable { pp: 0.4, pm: 0.2, mp: 0.1, mm: 0.3 };
        assert!((t.first_plus() - 0.6).abs() < 1e-15);
        assert!((t.second_plus() - 0.5).abs() < 1e-15);
        assert!((t.correlation() - 0.4).abs() < 1e-15);
        assert!((t.cells().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
