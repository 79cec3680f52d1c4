//! Core library for approximate inference in binary pairwise models.

// Numerical kernels index several parallel arrays per loop, and validation
// uses `!(x > 0.0)`-style comparisons deliberately so NaN fails closed.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod counting;
pub mod energy;
pub mod exact;
pub mod fmin;
pub mod graph;
pub mod inference;
pub mod lbp;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sweep;

pub use adaptive::{adapt_c, adapt_zeta, AdaptCConfig, AdaptZetaConfig};
pub use counting::{
    ls_convex_auxiliary, ls_convex_counting, trw_counting, AuxiliaryNumbers, CountingError,
};
pub use energy::{
    estimate_log_partition, evaluate, gradient_on_manifold, pairwise_table, result_from_point,
    value_on_manifold, xi_star, CountingNumbers, EnergyError, FreeEnergySpec, PseudoMarginals,
    ScaleFactors, EPS_BOX,
};
pub use exact::{exact_log_partition, exact_marginals, ExactAnswers, ExactError, ENUMERATION_CAP};
pub use fmin::{
    minimize, minimize_from, wolfe_line_search, FminConfig, FminError, FminResult, WolfeStep,
};
pub use graph::{Graph, GraphError};
pub use inference::{Diagnostics, InferenceResult, PairTable, UniquenessCertificate};
pub use lbp::{
    lbp_run, lbp_run_from, mooij_radius, sbp, LbpConfig, LbpOutcome, MessageState, SbpConfig,
    SbpOutcome,
};
pub use metrics::{err_log_z, err_pairwise, err_singleton};
pub use model::{IsingModel, ModelClass, ModelError, ModelParseError};
pub use sweep::{
    run_algorithm, run_scaled_couplings, run_sweep, run_uniform_c, summarize,
    write_marginals_csv, write_raw_csv, write_summary_csv, Algorithm, ExperimentConfig,
    GraphFamily, MarginalRecord, SolverSettings, SummaryRecord, SweepError, SweepKind,
    SweepOutput, SweepRecord, SCHEMA_VERSION,
};
