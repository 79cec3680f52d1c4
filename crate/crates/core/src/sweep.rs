//! Experiment harness: runs algorithm panels over seeded random instances,
//! sweeping either a shared counting number `c`, a coupling scale `ζ`, or the
//! coupling half-width `Ĵ`, and records errors against exact enumeration.
//!
//! Reproducibility contract: every random choice derives from `master_seed`
//! through a fixed path — instances from `(master_seed, sweep kind, grid
//! index, replicate)`, then graph/model/per-algorithm seeds from the instance
//! seed. For `c` and `ζ` sweeps the instance seed deliberately excludes the
//! grid index, so the whole curve is measured on the *same* instances and
//! differences along it are purely algorithmic. Rows are produced in a fixed
//! order regardless of thread count (work is parallelized per instance and
//! reassembled in order), and wall-clock timing is off by default so that two
//! runs of the same config produce byte-identical CSV files.

use crate::adaptive::{adapt_c, adapt_zeta, AdaptCConfig, AdaptZetaConfig};
use crate::counting::{ls_convex_counting, trw_counting};
use crate::energy::{result_from_point, FreeEnergySpec, ScaleFactors};
use crate::exact::{exact_marginals, ExactAnswers, ENUMERATION_CAP};
use crate::fmin::{minimize, FminConfig, FminResult};
use crate::graph::Graph;
use crate::inference::{Diagnostics, InferenceResult};
use crate::lbp::{lbp_run, mooij_radius, sbp, LbpConfig, SbpConfig};
use crate::metrics::{err_log_z, err_pairwise, err_singleton};
use crate::model::{IsingModel, ModelClass};
use crate::rng::{derive_seed, seeded};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum SweepError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphFamily {
    Complete { n: usize },
    Grid { rows: usize, cols: usize },
    ErdosRenyi { n: usize, p: f64 },
}

impl GraphFamily {
    pub fn label(&self) -> &'static str {
        match self {
            GraphFamily::Complete { .. } => "complete",
            GraphFamily::Grid { .. } => "grid",
            GraphFamily::ErdosRenyi { .. } => "erdos_renyi",
        }
    }

    pub fn n_nodes(&self) -> usize {
        match *self {
            GraphFamily::Complete { n } => n,
            GraphFamily::Grid { rows, cols } => rows * cols,
            GraphFamily::ErdosRenyi { n, .. } => n,
        }
    }

    /// Builds the graph; only the random family consumes the seed.
    pub fn build(&self, seed: u64) -> Graph {
        match *self {
            GraphFamily::Complete { n } => Graph::complete(n),
            GraphFamily::Grid { rows, cols } => Graph::grid(rows, cols),
            GraphFamily::ErdosRenyi { n, p } => Graph::erdos_renyi(n, p, &mut seeded(seed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepKind {
    /// Fixed `Ĵ`; each grid value adds a uniform-counting minimization row
    /// (`algorithm = "f_c"`) on the shared instances.
    OverC { grid: Vec<f64>, j_hat: f64 },
    /// Fixed `Ĵ`; each grid value adds a scaled-coupling minimization row
    /// (`algorithm = "f_zeta"`) on the shared instances.
    OverZeta { grid: Vec<f64>, j_hat: f64 },
    /// Fresh instances per grid value; every listed algorithm runs on each.
    OverJHat { grid: Vec<f64> },
}

impl SweepKind {
    pub fn label(&self) -> &'static str {
        match self {
            SweepKind::OverC { .. } => "over_c",
            SweepKind::OverZeta { .. } => "over_zeta",
            SweepKind::OverJHat { .. } => "over_j_hat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Bethe,
    Trw,
    LsConvex,
    Lbp,
    Sbp,
    AdaptC,
    AdaptZeta,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Bethe => "bethe",
            Algorithm::Trw => "trw",
            Algorithm::LsConvex => "ls_convex",
            Algorithm::Lbp => "lbp",
            Algorithm::Sbp => "sbp",
            Algorithm::AdaptC => "adapt_c",
            Algorithm::AdaptZeta => "adapt_zeta",
        }
    }
}

/// Solver knobs shared by every algorithm dispatch.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub fmin: FminConfig,
    pub lbp: LbpConfig,
    pub sbp: SbpConfig,
    pub adapt_c: AdaptCConfig,
    pub adapt_zeta: AdaptZetaConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub family: GraphFamily,
    pub model_class: ModelClass,
    pub theta_halfwidth: f64,
    pub replicates: usize,
    pub sweep: SweepKind,
    #[serde(default)]
    pub algorithms: Vec<Algorithm>,
    /// Record wall-clock time per row. Off by default: timing makes CSV
    /// output differ between otherwise identical runs.
    #[serde(default)]
    pub timing: bool,
    /// Also emit per-node and per-cell marginal comparisons.
    #[serde(default)]
    pub dump_marginals: bool,
    /// Solver knobs. The `seed` fields inside are ignored: the harness
    /// derives every seed from `master_seed`.
    #[serde(default)]
    pub fmin: FminConfig,
    #[serde(default)]
    pub lbp: LbpConfig,
    #[serde(default)]
    pub sbp: SbpConfig,
    #[serde(default)]
    pub adapt_c: AdaptCConfig,
    #[serde(default)]
    pub adapt_zeta: AdaptZetaConfig,
}

impl ExperimentConfig {
    pub fn solvers(&self) -> SolverSettings {
        SolverSettings {
            fmin: self.fmin.clone(),
            lbp: self.lbp.clone(),
            sbp: self.sbp.clone(),
            adapt_c: self.adapt_c.clone(),
            adapt_zeta: self.adapt_zeta.clone(),
        }
    }
}

/// One CSV row of the raw results table. Optional metric fields are left
/// empty when a run failed or produced a non-finite value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub schema_version: u32,
    pub family: String,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub model_class: String,
    pub theta_halfwidth: f64,
    pub sweep_kind: String,
    /// Grid value for swept rows; empty for per-instance baseline rows.
    pub sweep_value: Option<f64>,
    pub rep: usize,
    pub instance_seed: u64,
    pub algorithm: String,
    pub err_singleton: Option<f64>,
    pub err_pairwise: Option<f64>,
    #[serde(rename = "err_logZ")]
    pub err_log_z: Option<f64>,
    pub logz_est: Option<f64>,
    pub logz_exact: f64,
    pub converged: bool,
    pub iterations: usize,
    pub c_final: Option<f64>,
    pub zeta_final: Option<f64>,
    pub wall_ms: f64,
}

/// Long-format marginal comparison row (`--dump-marginals`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalRecord {
    pub schema_version: u32,
    pub sweep_kind: String,
    pub sweep_value: Option<f64>,
    pub rep: usize,
    pub instance_seed: u64,
    pub algorithm: String,
    /// "node" or "edge".
    pub item: String,
    pub index: usize,
    /// "q" for nodes; "pp"/"pm"/"mp"/"mm" for edge table cells.
    pub cell: String,
    pub estimate: f64,
    pub exact: f64,
}

/// Aggregate over replicates for one `(algorithm, sweep_value)` cell, with
/// per-metric exclusion counts (rows whose metric was empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub schema_version: u32,
    pub family: String,
    pub model_class: String,
    pub sweep_kind: String,
    pub sweep_value: Option<f64>,
    pub algorithm: String,
    pub rows: usize,
    pub converged_rows: usize,
    pub mean_err_singleton: Option<f64>,
    pub excluded_singleton: usize,
    pub mean_err_pairwise: Option<f64>,
    pub excluded_pairwise: usize,
    #[serde(rename = "mean_err_logZ")]
    pub mean_err_log_z: Option<f64>,
    pub excluded_logz: usize,
    pub mean_wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub marginals: Vec<MarginalRecord>,
}

fn validate(config: &ExperimentConfig) -> Result<(), SweepError> {
    let fail = |msg: String| Err(SweepError::InvalidConfig(msg));
    match config.family {
        GraphFamily::Complete { n: 0 } => return fail("complete graph needs n ≥ 1".into()),
        GraphFamily::Grid { rows, cols } if rows == 0 || cols == 0 => {
            return fail("grid needs rows ≥ 1 and cols ≥ 1".into())
        }
        GraphFamily::ErdosRenyi { n, p } => {
            if n == 0 {
                return fail("random graph needs n ≥ 1".into());
            }
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("edge probability {p} outside [0, 1]"));
            }
        }
        _ => {}
    }
    let n = config.family.n_nodes();
    if n > ENUMERATION_CAP {
        return fail(format!(
            "{n} nodes exceed the exact-enumeration cap of {ENUMERATION_CAP}"
        ));
    }
    if config.replicates == 0 {
        return fail("replicates must be ≥ 1".into());
    }
    if !(config.theta_halfwidth >= 0.0 && config.theta_halfwidth.is_finite()) {
        return fail(format!("field half-width {} must be finite and ≥ 0", config.theta_halfwidth));
    }
    let check_grid = |grid: &[f64]| {
        if grid.is_empty() {
            return Some("sweep grid is empty".to_string());
        }
        if grid.windows(2).any(|w| !(w[0] <= w[1])) {
            return Some("sweep grid must be sorted ascending".to_string());
        }
        None
    };
    match &config.sweep {
        SweepKind::OverC { grid, j_hat } => {
            if let Some(msg) = check_grid(grid) {
                return fail(msg);
            }
            if let Some(&c) = grid.iter().find(|&&c| !(c > 0.0 && c.is_finite())) {
                return fail(format!("counting number {c} must be finite and > 0"));
            }
            if !(j_hat.is_finite() && *j_hat >= 0.0) {
                return fail(format!("coupling half-width {j_hat} must be finite and ≥ 0"));
            }
        }
        SweepKind::OverZeta { grid, j_hat } => {
            if let Some(msg) = check_grid(grid) {
                return fail(msg);
            }
            if let Some(&z) = grid.iter().find(|&&z| !(z > 0.0 && z.is_finite())) {
                return fail(format!("coupling scale {z} must be finite and > 0"));
            }
            if !(j_hat.is_finite() && *j_hat >= 0.0) {
                return fail(format!("coupling half-width {j_hat} must be finite and ≥ 0"));
            }
        }
        SweepKind::OverJHat { grid } => {
            if let Some(msg) = check_grid(grid) {
                return fail(msg);
            }
            if let Some(&j) = grid.iter().find(|&&j| !(j.is_finite() && j >= 0.0)) {
                return fail(format!("coupling half-width {j} must be finite and ≥ 0"));
            }
            if config.algorithms.is_empty() {
                return fail("a half-width sweep needs at least one algorithm".into());
            }
        }
    }
    Ok(())
}

struct Instance {
    seed: u64,
    rep: usize,
    model: IsingModel,
    exact: ExactAnswers,
}

fn build_instance(config: &ExperimentConfig, j_hat: f64, seed: u64, rep: usize) -> Instance {
    let graph = config.family.build(derive_seed(seed, &[0]));
    let model = IsingModel::sample(
        graph,
        config.model_class,
        j_hat,
        config.theta_halfwidth,
        &mut seeded(derive_seed(seed, &[1])),
    );
    let exact = exact_marginals(&model).expect("node count validated against the cap");
    Instance { seed, rep, model, exact }
}

fn class_label(class: ModelClass) -> &'static str {
    match class {
        ModelClass::Attractive => "attractive",
        ModelClass::Mixed => "mixed",
    }
}

fn finish_fmin(spec: &FreeEnergySpec, fmin: FminResult, extra: Diagnostics) -> InferenceResult {
    let mut d = extra;
    d.converged = fmin.converged;
    d.iterations = fmin.iterations;
    d.grad_norm = Some(fmin.grad_norm);
    d.restart_index = Some(fmin.restart_index);
    result_from_point(spec, fmin.q, d)
}

/// Runs one named algorithm. `None` means the run failed outright (e.g. a
/// degenerate counting-number optimization); a result with
/// `diagnostics.converged == false` means it finished without reaching
/// tolerance. The given seed replaces whatever the settings carry.
pub fn run_algorithm(
    algorithm: Algorithm,
    model: &IsingModel,
    seed: u64,
    solvers: &SolverSettings,
) -> Option<InferenceResult> {
    match algorithm {
        Algorithm::Bethe => {
            // Deliberately a single random start: this row measures the
            // naive tree-exact baseline, not the best-of-many variant.
            let fmin = FminConfig { seed, restarts: 1, ..solvers.fmin.clone() };
            let spec = FreeEnergySpec::bethe(model);
            minimize(&spec, &fmin)
                .ok()
                .map(|r| finish_fmin(&spec, r, Diagnostics::default()))
        }
        Algorithm::Trw => {
            let counting = trw_counting(model.graph()).ok()?;
            let spec =
                FreeEnergySpec::new(model, counting, ScaleFactors::unit(model.graph())).ok()?;
            let fmin = FminConfig { seed, ..solvers.fmin.clone() };
            minimize(&spec, &fmin)
                .ok()
                .map(|r| finish_fmin(&spec, r, Diagnostics::default()))
        }
        Algorithm::LsConvex => {
            let counting = ls_convex_counting(model.graph()).ok()?;
            let spec =
                FreeEnergySpec::new(model, counting, ScaleFactors::unit(model.graph())).ok()?;
            let fmin = FminConfig { seed, ..solvers.fmin.clone() };
            minimize(&spec, &fmin)
                .ok()
                .map(|r| finish_fmin(&spec, r, Diagnostics::default()))
        }
        Algorithm::Lbp => {
            let lbp = LbpConfig { seed, ..solvers.lbp.clone() };
            let mut out = lbp_run(model, 1.0, &lbp);
            out.result.diagnostics.certificate = Some(mooij_radius(model, 1.0));
            Some(out.result)
        }
        Algorithm::Sbp => {
            let mut sbp_config = solvers.sbp.clone();
            sbp_config.lbp.seed = seed;
            Some(sbp(model, &sbp_config).result)
        }
        Algorithm::AdaptC => {
            let mut ac = solvers.adapt_c.clone();
            ac.fmin.seed = seed;
            adapt_c(model, &ac).ok()
        }
        Algorithm::AdaptZeta => {
            let mut az = solvers.adapt_zeta.clone();
            az.fmin.seed = seed;
            adapt_zeta(model, &az).ok()
        }
    }
}

/// Minimizes the free energy with every counting number set to `c`
/// (`algorithm = "f_c"` rows).
pub fn run_uniform_c(
    model: &IsingModel,
    c: f64,
    seed: u64,
    fmin: &FminConfig,
) -> Option<InferenceResult> {
    let fmin = FminConfig { seed, ..fmin.clone() };
    FreeEnergySpec::uniform_c(model, c).ok().and_then(|spec| {
        minimize(&spec, &fmin).ok().map(|r| {
            finish_fmin(&spec, r, Diagnostics { c_final: Some(c), ..Diagnostics::default() })
        })
    })
}

/// Minimizes the Bethe free energy of the coupling-scaled model
/// (`algorithm = "f_zeta"` rows). The log-partition estimate refers to the
/// scaled model whenever `zeta < 1`, flagged via `model_modified`.
pub fn run_scaled_couplings(
    model: &IsingModel,
    zeta: f64,
    seed: u64,
    fmin: &FminConfig,
) -> Option<InferenceResult> {
    let fmin = FminConfig { seed, ..fmin.clone() };
    FreeEnergySpec::bethe_scaled(model, zeta).ok().and_then(|spec| {
        minimize(&spec, &fmin).ok().map(|r| {
            finish_fmin(
                &spec,
                r,
                Diagnostics {
                    zeta_final: Some(zeta),
                    model_modified: zeta != 1.0,
                    ..Diagnostics::default()
                },
            )
        })
    })
}

fn swept_run(
    kind: &SweepKind,
    value: f64,
    model: &IsingModel,
    seed: u64,
    fmin: &FminConfig,
) -> Option<InferenceResult> {
    match kind {
        SweepKind::OverC { .. } => run_uniform_c(model, value, seed, fmin),
        SweepKind::OverZeta { .. } => run_scaled_couplings(model, value, seed, fmin),
        SweepKind::OverJHat { .. } => unreachable!("half-width sweeps have no swept run"),
    }
}

struct RowContext<'a> {
    config: &'a ExperimentConfig,
    instance: &'a Instance,
    sweep_value: Option<f64>,
    algorithm: String,
}

fn make_record(
    ctx: &RowContext,
    outcome: Option<&InferenceResult>,
    wall_ms: f64,
) -> SweepRecord {
    let finite = |v: f64| v.is_finite().then_some(v);
    let exact = &ctx.instance.exact;
    let (err_s, err_p, err_z, logz_est, converged, iterations, c_final, zeta_final) = match outcome
    {
        Some(r) => (
            finite(err_singleton(&exact.singleton, &r.singleton)),
            finite(err_pairwise(&exact.pairwise, &r.pairwise)),
            finite(err_log_z(exact.log_z, r.log_z_est)),
            finite(r.log_z_est),
            r.diagnostics.converged,
            r.diagnostics.iterations,
            r.diagnostics.c_final,
            r.diagnostics.zeta_final,
        ),
        None => (None, None, None, None, false, 0, None, None),
    };
    SweepRecord {
        schema_version: SCHEMA_VERSION,
        family: ctx.config.family.label().to_string(),
        n_nodes: ctx.instance.model.n_nodes(),
        n_edges: ctx.instance.model.n_edges(),
        model_class: class_label(ctx.config.model_class).to_string(),
        theta_halfwidth: ctx.config.theta_halfwidth,
        sweep_kind: ctx.config.sweep.label().to_string(),
        sweep_value: ctx.sweep_value,
        rep: ctx.instance.rep,
        instance_seed: ctx.instance.seed,
        algorithm: ctx.algorithm.clone(),
        err_singleton: err_s,
        err_pairwise: err_p,
        err_log_z: err_z,
        logz_est,
        logz_exact: exact.log_z,
        converged,
        iterations,
        c_final,
        zeta_final,
        wall_ms,
    }
}

fn make_marginals(ctx: &RowContext, outcome: &InferenceResult) -> Vec<MarginalRecord> {
    let exact = &ctx.instance.exact;
    let base = |item: &str, index: usize, cell: &str, estimate: f64, truth: f64| MarginalRecord {
        schema_version: SCHEMA_VERSION,
        sweep_kind: ctx.config.sweep.label().to_string(),
        sweep_value: ctx.sweep_value,
        rep: ctx.instance.rep,
        instance_seed: ctx.instance.seed,
        algorithm: ctx.algorithm.clone(),
        item: item.to_string(),
        index,
        cell: cell.to_string(),
        estimate,
        exact: truth,
    };
    let mut rows = Vec::with_capacity(outcome.singleton.len() + 4 * outcome.pairwise.len());
    for (i, (&est, &truth)) in outcome.singleton.iter().zip(&exact.singleton).enumerate() {
        rows.push(base("node", i, "q", est, truth));
    }
    for (e, (est, truth)) in outcome.pairwise.iter().zip(&exact.pairwise).enumerate() {
        for (cell, a, b) in [
            ("pp", est.pp, truth.pp),
            ("pm", est.pm, truth.pm),
            ("mp", est.mp, truth.mp),
            ("mm", est.mm, truth.mm),
        ] {
            rows.push(base("edge", e, cell, a, b));
        }
    }
    rows
}

fn timed_run<F: FnOnce() -> Option<InferenceResult>>(
    timing: bool,
    run: F,
) -> (Option<InferenceResult>, f64) {
    if timing {
        let start = std::time::Instant::now();
        let outcome = run();
        (outcome, start.elapsed().as_secs_f64() * 1e3)
    } else {
        (run(), 0.0)
    }
}

/// Executes the configured sweep. Individual algorithm failures become rows
/// with empty metrics; only configuration problems are errors.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutput, SweepError> {
    validate(config)?;
    let solvers = config.solvers();
    let solvers = &solvers;
    let per_instance: Vec<(Vec<SweepRecord>, Vec<MarginalRecord>)> = match &config.sweep {
        SweepKind::OverJHat { grid } => {
            let tasks: Vec<(usize, usize)> = (0..grid.len())
                .flat_map(|g| (0..config.replicates).map(move |rep| (g, rep)))
                .collect();
            tasks
                .into_par_iter()
                .map(|(g, rep)| {
                    let j_hat = grid[g];
                    let seed =
                        derive_seed(config.master_seed, &[1, g as u64, rep as u64]);
                    let instance = build_instance(config, j_hat, seed, rep);
                    let mut records = Vec::new();
                    let mut marginals = Vec::new();
                    for (a, &algorithm) in config.algorithms.iter().enumerate() {
                        let algo_seed = derive_seed(seed, &[2, a as u64]);
                        let ctx = RowContext {
                            config,
                            instance: &instance,
                            sweep_value: Some(j_hat),
                            algorithm: algorithm.name().to_string(),
                        };
                        let (outcome, wall) = timed_run(config.timing, || {
                            run_algorithm(algorithm, &instance.model, algo_seed, solvers)
                        });
                        records.push(make_record(&ctx, outcome.as_ref(), wall));
                        if config.dump_marginals {
                            if let Some(r) = &outcome {
                                marginals.extend(make_marginals(&ctx, r));
                            }
                        }
                    }
                    (records, marginals)
                })
                .collect()
        }
        SweepKind::OverC { grid, j_hat } | SweepKind::OverZeta { grid, j_hat } => {
            let (grid, j_hat) = (grid.clone(), *j_hat);
            (0..config.replicates)
                .into_par_iter()
                .map(|rep| {
                    // No grid index here: the whole curve shares instances.
                    let seed = derive_seed(config.master_seed, &[2, rep as u64]);
                    let instance = build_instance(config, j_hat, seed, rep);
                    let mut records = Vec::new();
                    let mut marginals = Vec::new();
                    for (a, &algorithm) in config.algorithms.iter().enumerate() {
                        let algo_seed = derive_seed(seed, &[2, a as u64]);
                        let ctx = RowContext {
                            config,
                            instance: &instance,
                            sweep_value: None,
                            algorithm: algorithm.name().to_string(),
                        };
                        let (outcome, wall) = timed_run(config.timing, || {
                            run_algorithm(algorithm, &instance.model, algo_seed, solvers)
                        });
                        records.push(make_record(&ctx, outcome.as_ref(), wall));
                        if config.dump_marginals {
                            if let Some(r) = &outcome {
                                marginals.extend(make_marginals(&ctx, r));
                            }
                        }
                    }
                    let name = match &config.sweep {
                        SweepKind::OverC { .. } => "f_c",
                        _ => "f_zeta",
                    };
                    for (g, &value) in grid.iter().enumerate() {
                        let run_seed = derive_seed(seed, &[3, g as u64]);
                        let (outcome, wall) = timed_run(config.timing, || {
                            swept_run(&config.sweep, value, &instance.model, run_seed, &solvers.fmin)
                        });
                        let ctx = RowContext {
                            config,
                            instance: &instance,
                            sweep_value: Some(value),
                            algorithm: name.to_string(),
                        };
                        records.push(make_record(&ctx, outcome.as_ref(), wall));
                        if config.dump_marginals {
                            if let Some(r) = &outcome {
                                marginals.extend(make_marginals(&ctx, r));
                            }
                        }
                    }
                    (records, marginals)
                })
                .collect()
        }
    };

    let mut records = Vec::new();
    let mut marginals = Vec::new();
    for (r, m) in per_instance {
        records.extend(r);
        marginals.extend(m);
    }
    Ok(SweepOutput { records, marginals })
}

/// Groups rows by `(algorithm, sweep_value)` in first-appearance order and
/// averages each metric over the rows where it is present.
pub fn summarize(records: &[SweepRecord]) -> Vec<SummaryRecord> {
    let mut keys: Vec<(String, Option<u64>)> = Vec::new();
    let mut groups: Vec<Vec<&SweepRecord>> = Vec::new();
    for record in records {
        let key = (record.algorithm.clone(), record.sweep_value.map(f64::to_bits));
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(record),
            None => {
                keys.push(key);
                groups.push(vec![record]);
            }
        }
    }
    groups
        .iter()
        .map(|group| {
            let head = group[0];
            let rows = group.len();
            let mean_of = |take: fn(&SweepRecord) -> Option<f64>| {
                let values: Vec<f64> = group.iter().filter_map(|r| take(r)).collect();
                let mean = if values.is_empty() {
                    None
                } else {
                    Some(values.iter().sum::<f64>() / values.len() as f64)
                };
                (mean, rows - values.len())
            };
            let (mean_s, excl_s) = mean_of(|r| r.err_singleton);
            let (mean_p, excl_p) = mean_of(|r| r.err_pairwise);
            let (mean_z, excl_z) = mean_of(|r| r.err_log_z);
            SummaryRecord {
                schema_version: SCHEMA_VERSION,
                family: head.family.clone(),
                model_class: head.model_class.clone(),
                sweep_kind: head.sweep_kind.clone(),
                sweep_value: head.sweep_value,
                algorithm: head.algorithm.clone(),
                rows,
                converged_rows: group.iter().filter(|r| r.converged).count(),
                mean_err_singleton: mean_s,
                excluded_singleton: excl_s,
                mean_err_pairwise: mean_p,
                excluded_pairwise: excl_p,
                mean_err_log_z: mean_z,
                excluded_logz: excl_z,
                mean_wall_ms: group.iter().map(|r| r.wall_ms).sum::<f64>() / rows as f64,
            }
        })
        .collect()
}

pub fn write_raw_csv(path: &Path, records: &[SweepRecord]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_path(path)?;
    for record in records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, records: &[SummaryRecord]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_path(path)?;
    for record in records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_marginals_csv(path: &Path, records: &[MarginalRecord]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_path(path)?;
    for record in records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}
