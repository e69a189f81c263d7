use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use active_lasso::bench::{
    bench_run, fit, kfold_cv, write_csv, write_jsonl, CvConfig, EtaRule, EtaSelection, ExperimentSpec,
    FitSpec, GeneratorSpec, Tuning,
};
use active_lasso::datagen::Dataset;
use active_lasso::libsvm::{read_dataset, write_dataset, LabelMode};
use active_lasso::{kkt_residual, LassoError, SolverKind};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Parser)]
#[command(name = "active-lasso", version, about = "Active-set Lasso solvers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset as LIBSVM text plus a JSON sidecar.
    Gen(GenArgs),
    /// Solve one instance and print the solution as JSON.
    Solve(SolveArgs),
    /// Run an experiment spec and write CSV or JSON lines.
    Bench(BenchArgs),
    /// Choose eta by k-fold cross-validation.
    Cv(CvArgs),
    /// KKT residual of a solution file.
    CheckKkt(CheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Labels {
    Regression,
    Classification,
}

impl From<Labels> for LabelMode {
    fn from(l: Labels) -> Self {
        match l {
            Labels::Regression => LabelMode::Regression,
            Labels::Classification => LabelMode::Classification,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// LIBSVM file; a `<file>.json` sidecar is used when present.
    #[arg(long, conflicts_with = "generator")]
    data: Option<PathBuf>,
    /// Generator as JSON, e.g. '{"name":"noisy_regression","n":100,"d":500,"s":10}'.
    #[arg(long)]
    generator: Option<String>,
    /// Seed for --generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// How to read labels from --data. Defaults to the sidecar's loss, else regression.
    #[arg(long, value_enum)]
    labels: Option<Labels>,
}

impl DataArgs {
    fn load(&self) -> anyhow::Result<Dataset> {
        match (&self.data, &self.generator) {
            (Some(path), None) => load_file(path, self.labels),
            (None, Some(gen)) => {
                let spec: GeneratorSpec =
                    serde_json::from_str(gen).context("parsing --generator")?;
                Ok(spec.generate(self.seed)?)
            }
            _ => bail!("exactly one of --data and --generator is required"),
        }
    }
}

fn load_file(path: &Path, labels: Option<Labels>) -> anyhow::Result<Dataset> {
    let mode = match labels {
        Some(l) => l.into(),
        None => sidecar_mode(path).unwrap_or(LabelMode::Regression),
    };
    let (ds, _) = read_dataset(path, mode).with_context(|| format!("reading {}", path.display()))?;
    Ok(ds)
}

fn sidecar_mode(path: &Path) -> Option<LabelMode> {
    let side = active_lasso::libsvm::Sidecar::read(&active_lasso::libsvm::sidecar_path(path)).ok()?;
    Some(match side.kind {
        active_lasso::LossKind::LeastSquaresHalf => LabelMode::Regression,
        active_lasso::LossKind::LogisticNLL => LabelMode::Classification,
    })
}

#[derive(Args)]
struct GenArgs {
    /// Generator as JSON (same form as in experiment specs).
    #[arg(long)]
    generator: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value = "gpsr", value_parser = parse_solver)]
    solver: SolverKind,
    /// Use the active-set driver around the solver.
    #[arg(long)]
    hybrid: bool,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    beta0: Option<usize>,
    #[arg(long)]
    beta1: Option<usize>,
    #[arg(long)]
    tol_loose: Option<f64>,
    #[arg(long)]
    tol_tight: Option<f64>,
    /// Start each driver solve from the previous solution.
    #[arg(long)]
    warm_start: bool,
}

impl FitArgs {
    fn spec(&self) -> FitSpec {
        FitSpec {
            solver: self.solver,
            hybrid: self.hybrid,
            tuning: Tuning {
                tau: self.tau,
                beta0: self.beta0,
                beta1: self.beta1,
                tol_loose: self.tol_loose,
                tol_tight: self.tol_tight,
                warm_start: self.warm_start,
            },
        }
    }
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    s.parse().map_err(|e: LassoError| e.to_string())
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Penalty weight. Defaults to --eta-fraction times ||grad f(0)||_inf.
    #[arg(long, conflicts_with = "eta_fraction")]
    eta: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    eta_fraction: f64,
    /// Write the solution here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment spec (JSON).
    spec: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    jsonl: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    cv_seed: u64,
    /// Comma-separated eta values.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Solution JSON as written by `solve`.
    #[arg(long)]
    solution: PathBuf,
    /// Override the eta stored in the solution.
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Solution {
    solver: String,
    eta: f64,
    objective: f64,
    kkt_residual: f64,
    status: String,
    outer_iterations: usize,
    inner_iterations: usize,
    elapsed_s: f64,
    support: Vec<usize>,
    x: Vec<f64>,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => {
            let mut w = io::stdout().lock();
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn run_gen(args: GenArgs) -> anyhow::Result<()> {
    let spec: GeneratorSpec = serde_json::from_str(&args.generator).context("parsing --generator")?;
    let ds = spec.generate(args.seed)?;
    let sidecar = write_dataset(&ds, &args.out, spec.name(), spec.params())?;
    emit(
        &json!({"path": args.out, "rows": sidecar.rows, "cols": sidecar.cols, "seed": args.seed}),
        None,
    )
}

fn run_solve(args: SolveArgs) -> anyhow::Result<()> {
    let ds = args.data.load()?;
    let eta = match args.eta {
        Some(e) => e,
        None => EtaRule::GradientFraction {
            factor: args.eta_fraction,
        }
        .resolve(&ds)?,
    };
    let inst = ds.instance(eta)?;
    let spec = args.fit.spec();
    let f = fit(&inst, &spec)?;
    let sol = Solution {
        solver: spec.label(),
        eta,
        objective: f.objective,
        kkt_residual: kkt_residual(&inst, &f.x)?,
        status: format!("{:?}", f.status),
        outer_iterations: f.outer_iterations,
        inner_iterations: f.inner_iterations,
        elapsed_s: f.elapsed.as_secs_f64(),
        support: (0..f.x.len()).filter(|&j| f.x[j] != 0.0).collect(),
        x: f.x,
    };
    emit(&sol, args.out.as_deref())
}

fn run_bench(args: BenchArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let spec = ExperimentSpec::from_json(&text)?;
    let records = bench_run(&spec)?;
    if let Some(path) = &args.csv {
        write_csv(&records, File::create(path)?)?;
    }
    if let Some(path) = &args.jsonl {
        write_jsonl(&records, File::create(path)?)?;
    }
    if args.csv.is_none() && args.jsonl.is_none() {
        write_csv(&records, io::stdout().lock())?;
    }
    Ok(())
}

fn run_cv(args: CvArgs) -> anyhow::Result<()> {
    let ds = args.data.load()?;
    let cfg = CvConfig::new(args.folds, args.cv_seed);
    let sel: EtaSelection = kfold_cv(&ds, &cfg, &args.grid, &args.fit.spec())?;
    emit(&sel, None)
}

fn run_check(args: CheckArgs) -> anyhow::Result<()> {
    let ds = args.data.load()?;
    let text = std::fs::read_to_string(&args.solution)
        .with_context(|| format!("reading {}", args.solution.display()))?;
    let sol: Solution = serde_json::from_str(&text).context("parsing solution")?;
    let eta = args.eta.unwrap_or(sol.eta);
    let inst = ds.instance(eta)?;
    let r = kkt_residual(&inst, &sol.x)?;
    emit(
        &json!({"eta": eta, "kkt_residual": r, "relative": r / eta, "objective": inst.full_objective(&sol.x)?}),
        None,
    )
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    match err.downcast_ref::<LassoError>() {
        Some(LassoError::DimensionMismatch(_)) => "dimension_mismatch",
        Some(LassoError::InvalidArgument(_)) => "invalid_argument",
        Some(LassoError::ContractViolation(_)) => "contract_violation",
        Some(LassoError::Diverged(_)) => "diverged",
        Some(LassoError::UnsupportedKind { .. }) => "unsupported_kind",
        Some(LassoError::Numerical(_)) => "numerical",
        Some(LassoError::Parse { .. }) => "parse",
        Some(LassoError::NoValidCandidate) => "no_valid_candidate",
        Some(LassoError::Driver { .. }) => "driver",
        Some(LassoError::Io(_)) => "io",
        Some(LassoError::Json(_)) => "json",
        Some(LassoError::Csv(_)) => "csv",
        None if err.downcast_ref::<io::Error>().is_some() => "io",
        None if err.downcast_ref::<serde_json::Error>().is_some() => "json",
        None => "usage",
    }
}

/// Usage errors exit with 2, everything else with 1.
fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({"error": {"kind": kind, "message": message}}));
    ExitCode::from(if kind == "usage" { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end().to_string()),
    };
    let result = match cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Solve(a) => run_solve(a),
        Command::Bench(a) => run_bench(a),
        Command::Cv(a) => run_cv(a),
        Command::CheckKkt(a) => run_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(error_kind(&e), format!("{e:#}")),
    }
}
