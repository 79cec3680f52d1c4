//! `varinf` — sample binary pairwise models, enumerate exact answers, run a
//! single inference algorithm, or execute a CSV-producing experiment sweep.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O, solver), 2 bad invocation
//! or experiment config, 3 unreadable or malformed model file, 4 model too
//! large for exact enumeration.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use varinf_core::{
    exact_marginals, run_algorithm, run_scaled_couplings, run_sweep, run_uniform_c, summarize,
    write_marginals_csv, write_raw_csv, write_summary_csv, Algorithm, ExperimentConfig, Graph,
    InferenceResult, IsingModel, ModelClass, SolverSettings,
};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_MODEL: u8 = 3;
const EXIT_TOO_LARGE: u8 = 4;

/// Prints one stdout line, exiting quietly when the consumer (e.g. `head`)
/// has closed the pipe.
fn emit(line: std::fmt::Arguments) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if writeln!(out, "{line}").is_err() {
        std::process::exit(0);
    }
}

macro_rules! outln {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

#[derive(Parser)]
#[command(name = "varinf", version, about = "Approximate inference in binary pairwise models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a random instance and write it in the text model format.
    Gen(GenArgs),
    /// Exact marginals and log-partition function by enumeration.
    Exact(ExactArgs),
    /// Run one inference algorithm on a model file.
    Infer(InferArgs),
    /// Run the experiment sweep described by a TOML config.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    /// Complete graph on `--nodes` vertices.
    Complete,
    /// `--rows` × `--cols` lattice.
    Grid,
    /// G(n, p) with `--nodes` and `--edge-prob`.
    ErdosRenyi,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    /// Couplings from U(0, Ĵ).
    Attractive,
    /// Couplings from U(−Ĵ, Ĵ).
    Mixed,
}

impl From<ClassArg> for ModelClass {
    fn from(value: ClassArg) -> Self {
        match value {
            ClassArg::Attractive => ModelClass::Attractive,
            ClassArg::Mixed => ModelClass::Mixed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    /// Bethe free energy, single random start.
    Bethe,
    /// Spanning-tree-weighted counting numbers.
    Trw,
    /// Least-squares convexified counting numbers.
    LsConvex,
    /// Loopy belief propagation with a uniqueness certificate.
    Lbp,
    /// Sequential BP over a coupling-scale schedule.
    Sbp,
    /// Adaptive uniform counting-number schedule.
    AdaptC,
    /// Adaptive coupling scale guided by the certificate.
    AdaptZeta,
    /// Uniform counting number fixed at `--c`.
    Fc,
    /// Coupling scale fixed at `--zeta`.
    Fzeta,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Node count (complete / erdos-renyi).
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Edge probability (erdos-renyi).
    #[arg(long)]
    edge_prob: Option<f64>,
    #[arg(long, value_enum, default_value = "mixed")]
    class: ClassArg,
    /// Coupling half-width Ĵ.
    #[arg(long, default_value_t = 1.0)]
    j_hat: f64,
    /// Field half-width w.
    #[arg(long, default_value_t = 0.0)]
    theta_halfwidth: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExactArgs {
    model: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    model: PathBuf,
    #[arg(long, value_enum)]
    algo: AlgoArg,
    /// Counting number for `--algo fc`.
    #[arg(long)]
    c: Option<f64>,
    /// Coupling scale (> 0) for `--algo fzeta`.
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional TOML file overriding solver settings.
    #[arg(long)]
    solver_config: Option<PathBuf>,
    /// Also enumerate the exact answers and print error metrics.
    #[arg(long)]
    compare_exact: bool,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    /// Directory for raw.csv / summary.csv (created if missing).
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

/// Failure category → process exit code.
enum Failure {
    Runtime(String),
    Usage(String),
    Model(String),
    TooLarge(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => EXIT_RUNTIME,
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Model(_) => EXIT_MODEL,
            Failure::TooLarge(_) => EXIT_TOO_LARGE,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Runtime(m) | Failure::Usage(m) | Failure::Model(m) | Failure::TooLarge(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => gen(args),
        Command::Exact(args) => exact(args),
        Command::Infer(args) => infer(args),
        Command::Sweep(args) => sweep_cmd(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

fn gen(args: GenArgs) -> Result<(), Failure> {
    let need = |value: Option<usize>, flag: &str| {
        value.ok_or_else(|| Failure::Usage(format!("--family {} requires {flag}", family_name(&args.family))))
    };
    // Same seed split as the sweep harness: sub-seed 0 for the graph, 1 for
    // the parameters.
    let graph = match args.family {
        FamilyArg::Complete => Graph::complete(need(args.nodes, "--nodes")?),
        FamilyArg::Grid => Graph::grid(need(args.rows, "--rows")?, need(args.cols, "--cols")?),
        FamilyArg::ErdosRenyi => {
            let n = need(args.nodes, "--nodes")?;
            let p = args
                .edge_prob
                .ok_or_else(|| Failure::Usage("--family erdos-renyi requires --edge-prob".into()))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Failure::Usage(format!("edge probability {p} outside [0, 1]")));
            }
            let graph_seed = varinf_core::rng::derive_seed(args.seed, &[0]);
            Graph::erdos_renyi(n, p, &mut varinf_core::rng::seeded(graph_seed))
        }
    };
    if !(args.j_hat.is_finite() && args.j_hat >= 0.0) {
        return Err(Failure::Usage(format!("--j-hat {} must be finite and ≥ 0", args.j_hat)));
    }
    if !(args.theta_halfwidth.is_finite() && args.theta_halfwidth >= 0.0) {
        return Err(Failure::Usage(format!(
            "--theta-halfwidth {} must be finite and ≥ 0",
            args.theta_halfwidth
        )));
    }
    let model = IsingModel::sample(
        graph,
        args.class.into(),
        args.j_hat,
        args.theta_halfwidth,
        &mut varinf_core::rng::seeded(varinf_core::rng::derive_seed(args.seed, &[1])),
    );
    let text = model.to_text();
    match &args.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            // `to_text` ends with a newline already.
            emit(format_args!("{}", text.trim_end_matches('\n')));
            Ok(())
        }
    }
}

fn family_name(family: &FamilyArg) -> &'static str {
    match family {
        FamilyArg::Complete => "complete",
        FamilyArg::Grid => "grid",
        FamilyArg::ErdosRenyi => "erdos-renyi",
    }
}

fn load_model(path: &Path) -> Result<IsingModel, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Model(format!("cannot read {}: {e}", path.display())))?;
    IsingModel::from_text(&text)
        .map_err(|e| Failure::Model(format!("{}: {e}", path.display())))
}

fn exact(args: ExactArgs) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let answers = exact_marginals(&model).map_err(|e| Failure::TooLarge(e.to_string()))?;
    outln!("logZ {:.16e}", answers.log_z);
    for (i, q) in answers.singleton.iter().enumerate() {
        outln!("node {i} {q:.16e}");
    }
    for (e, t) in answers.pairwise.iter().enumerate() {
        let (i, j) = model.graph().edges()[e];
        outln!("edge {i} {j} {:.16e} {:.16e} {:.16e} {:.16e}", t.pp, t.pm, t.mp, t.mm);
    }
    Ok(())
}

fn load_solvers(path: Option<&PathBuf>) -> Result<SolverSettings, Failure> {
    match path {
        None => Ok(SolverSettings::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
        }
    }
}

fn infer(args: InferArgs) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let solvers = load_solvers(args.solver_config.as_ref())?;
    let reject = |flag: &str| Failure::Usage(format!("{flag} only applies to the matching --algo"));
    match args.algo {
        AlgoArg::Fc => {
            if args.zeta.is_some() {
                return Err(reject("--zeta"));
            }
        }
        AlgoArg::Fzeta => {
            if args.c.is_some() {
                return Err(reject("--c"));
            }
        }
        _ => {
            if args.c.is_some() {
                return Err(reject("--c"));
            }
            if args.zeta.is_some() {
                return Err(reject("--zeta"));
            }
        }
    }
    let (label, result) = match args.algo {
        AlgoArg::Fc => {
            let c = args.c.ok_or_else(|| Failure::Usage("--algo fc requires --c".into()))?;
            if !(c > 0.0 && c.is_finite()) {
                return Err(Failure::Usage(format!("--c {c} must be finite and > 0")));
            }
            ("f_c".to_string(), run_uniform_c(&model, c, args.seed, &solvers.fmin))
        }
        AlgoArg::Fzeta => {
            let zeta =
                args.zeta.ok_or_else(|| Failure::Usage("--algo fzeta requires --zeta".into()))?;
            if !(zeta > 0.0 && zeta.is_finite()) {
                return Err(Failure::Usage(format!("--zeta {zeta} must be finite and > 0")));
            }
            ("f_zeta".to_string(), run_scaled_couplings(&model, zeta, args.seed, &solvers.fmin))
        }
        named => {
            let algorithm = match named {
                AlgoArg::Bethe => Algorithm::Bethe,
                AlgoArg::Trw => Algorithm::Trw,
                AlgoArg::LsConvex => Algorithm::LsConvex,
                AlgoArg::Lbp => Algorithm::Lbp,
                AlgoArg::Sbp => Algorithm::Sbp,
                AlgoArg::AdaptC => Algorithm::AdaptC,
                AlgoArg::AdaptZeta => Algorithm::AdaptZeta,
                AlgoArg::Fc | AlgoArg::Fzeta => unreachable!(),
            };
            (
                algorithm.name().to_string(),
                run_algorithm(algorithm, &model, args.seed, &solvers),
            )
        }
    };
    let result = result.ok_or_else(|| Failure::Runtime(format!("{label} failed on this model")))?;
    print_result(&label, &model, &result);
    if args.compare_exact {
        let answers = exact_marginals(&model).map_err(|e| Failure::TooLarge(e.to_string()))?;
        outln!(
            "err_singleton {:.6e}",
            varinf_core::err_singleton(&answers.singleton, &result.singleton)
        );
        outln!(
            "err_pairwise {:.6e}",
            varinf_core::err_pairwise(&answers.pairwise, &result.pairwise)
        );
        outln!("err_logZ {:.6e}", varinf_core::err_log_z(answers.log_z, result.log_z_est));
        outln!("logZ_exact {:.16e}", answers.log_z);
    }
    Ok(())
}

fn print_result(label: &str, model: &IsingModel, result: &InferenceResult) {
    let d = &result.diagnostics;
    outln!("algorithm {label}");
    outln!("converged {}", d.converged);
    outln!("iterations {}", d.iterations);
    if let Some(g) = d.grad_norm {
        outln!("grad_norm {g:.6e}");
    }
    if let Some(r) = d.restart_index {
        outln!("restart_index {r}");
    }
    if let Some(c) = d.c_final {
        outln!("c_final {c:.6}");
    }
    if let Some(z) = d.zeta_final {
        outln!("zeta_final {z:.6}");
    }
    if d.model_modified {
        outln!("model_modified true");
    }
    if let Some(cert) = &d.certificate {
        outln!("certificate_radius {:.6e}", cert.spectral_radius);
        outln!("certificate_holds {}", cert.holds);
    }
    outln!("logZ_est {:.16e}", result.log_z_est);
    for (i, q) in result.singleton.iter().enumerate() {
        outln!("node {i} {q:.16e}");
    }
    for (e, t) in result.pairwise.iter().enumerate() {
        let (i, j) = model.graph().edges()[e];
        outln!("edge {i} {j} {:.16e} {:.16e} {:.16e} {:.16e}", t.pp, t.pm, t.mp, t.mm);
    }
}

fn sweep_cmd(args: SweepArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", args.config.display())))?;
    let output = run_sweep(&config).map_err(|e| Failure::Usage(e.to_string()))?;
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", args.out_dir.display())))?;
    let raw = args.out_dir.join("raw.csv");
    write_raw_csv(&raw, &output.records)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", raw.display())))?;
    outln!("wrote {} ({} rows)", raw.display(), output.records.len());

    let summary_rows = summarize(&output.records);
    let summary = args.out_dir.join("summary.csv");
    write_summary_csv(&summary, &summary_rows)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", summary.display())))?;
    outln!("wrote {} ({} rows)", summary.display(), summary_rows.len());

    if config.dump_marginals {
        let marginals = args.out_dir.join("marginals.csv");
        write_marginals_csv(&marginals, &output.marginals)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", marginals.display())))?;
        outln!("wrote {} ({} rows)", marginals.display(), output.marginals.len());
    }
    Ok(())
}
