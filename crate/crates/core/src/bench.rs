//! Experiment harness: fitting with either path, eta selection by validation
//! error or k-fold cross-validation, and benchmark records.

use std::io::Write;
use std::time::Duration;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::{self, derive_seeds, rng, Dataset, Ensemble};
use crate::driver::{run_active_solver, support, DriverConfig};
use crate::error::{LassoError, Result};
use crate::kkt::kkt_residual;
use crate::model::{norm_inf, softplus, DesignMatrix, LossKind, ProblemInstance};
use crate::solvers::{solve_unconstrained, SolveStatus, SolverConfig, SolverKind};

/// Coefficients above this fraction of `||x||_inf` count as recovered when
/// scoring against a ground truth.
pub const RECOVERY_THRESHOLD_REL: f64 = 0.1;
/// Relative threshold for the numerical support reported in records.
pub const SUPPORT_EPS: f64 = 1e-10;
/// Metrics within this relative distance of the minimum are ties.
pub const TIE_RTOL: f64 = 1e-12;

/// Optional overrides of the driver and tolerance defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tuning {
    pub tau: Option<usize>,
    pub beta0: Option<usize>,
    pub beta1: Option<usize>,
    pub tol_loose: Option<f64>,
    pub tol_tight: Option<f64>,
    pub warm_start: bool,
}

/// Which path to fit with. Plain solves run at the tight tolerance from the
/// origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub solver: SolverKind,
    pub hybrid: bool,
    #[serde(default)]
    pub tuning: Tuning,
}

impl FitSpec {
    pub fn plain(solver: SolverKind) -> Self {
        Self {
            solver,
            hybrid: false,
            tuning: Tuning::default(),
        }
    }

    pub fn hybrid(solver: SolverKind) -> Self {
        Self {
            solver,
            hybrid: true,
            tuning: Tuning::default(),
        }
    }

    pub fn with_tuning(mut self, tuning: Tuning) -> Self {
        self.tuning = tuning;
        self
    }

    pub fn plain_config(&self) -> SolverConfig {
        let cfg = SolverConfig::tight(self.solver);
        match self.tuning.tol_tight {
            Some(t) => cfg.with_tol(t),
            None => cfg,
        }
    }

    /// Driver defaults for dimension `nu` with the overrides applied. An
    /// overridden `tau` also moves the default `beta0 = 3 tau`.
    pub fn driver_config(&self, nu: usize) -> DriverConfig {
        let t = &self.tuning;
        let mut cfg = DriverConfig::new(nu, self.solver);
        if let Some(tau) = t.tau {
            cfg.tau = tau;
            cfg.beta0 = 3 * tau;
        }
        if let Some(b) = t.beta0 {
            cfg.beta0 = b;
        }
        if let Some(b) = t.beta1 {
            cfg.beta1 = b;
            cfg.outer_cap = cfg.outer_cap.max(b);
        }
        if let Some(tol) = t.tol_loose {
            cfg.loose = cfg.loose.with_tol(tol);
        }
        if let Some(tol) = t.tol_tight {
            cfg.tight = cfg.tight.with_tol(tol);
        }
        cfg.warm_start = t.warm_start;
        cfg
    }

    pub fn label(&self) -> String {
        if self.hybrid {
            format!("hybrid-{}", self.solver.name())
        } else {
            self.solver.name().to_string()
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fit {
    pub x: Vec<f64>,
    pub objective: f64,
    pub elapsed: Duration,
    /// Zero for plain solves.
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub status: SolveStatus,
}

pub fn fit(inst: &ProblemInstance, spec: &FitSpec) -> Result<Fit> {
    if spec.hybrid {
        let (rep, trace) = run_active_solver(inst, &spec.driver_config(inst.dim()))?;
        Ok(Fit {
            x: rep.x,
            objective: rep.objective,
            elapsed: rep.elapsed,
            outer_iterations: trace.outer_iterations(),
            inner_iterations: rep.inner_iterations,
            status: rep.status,
        })
    } else {
        let rep = solve_unconstrained(inst, &vec![0.0; inst.dim()], &spec.plain_config())?;
        Ok(Fit {
            x: rep.x,
            objective: rep.objective,
            elapsed: rep.elapsed,
            outer_iterations: 0,
            inner_iterations: rep.inner_iterations,
            status: rep.status,
        })
    }
}

fn check_dim(x: &[f64], val: &Dataset) -> Result<()> {
    if x.len() != val.dim() {
        return Err(LassoError::DimensionMismatch(format!(
            "model has {} coordinates, validation data has {} columns",
            x.len(),
            val.dim()
        )));
    }
    Ok(())
}

/// `(1/n) ||A x - b||^2`
pub fn validation_mse(x: &[f64], val: &Dataset) -> Result<f64> {
    check_dim(x, val)?;
    let pred = val.design.mul_vec(x);
    let sse: f64 = pred
        .iter()
        .zip(&val.response)
        .map(|(p, b)| (p - b).powi(2))
        .sum();
    Ok(sse / val.n_obs() as f64)
}

/// Mean logistic negative log-likelihood.
pub fn validation_nll(x: &[f64], val: &Dataset) -> Result<f64> {
    check_dim(x, val)?;
    let margin = val.design.mul_vec(x);
    let total: f64 = margin
        .iter()
        .zip(&val.response)
        .map(|(&m, &y)| softplus(m) - y * m)
        .sum();
    Ok(total / val.n_obs() as f64)
}

/// MSE for regression data, NLL for classification data.
pub fn validation_metric(x: &[f64], val: &Dataset) -> Result<f64> {
    match val.kind {
        LossKind::LeastSquaresHalf => validation_mse(x, val),
        LossKind::LogisticNLL => validation_nll(x, val),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaSelection {
    pub candidates: Vec<f64>,
    /// `None` marks a candidate whose fit failed.
    pub metrics: Vec<Option<f64>>,
    pub chosen: f64,
    pub chosen_index: usize,
    pub best_metric: f64,
    /// Largest KKT residual over the fits behind each candidate.
    #[serde(default)]
    pub kkt: Vec<Option<f64>>,
}

impl EtaSelection {
    /// Argmin over valid candidates; ties go to the larger eta.
    pub fn from_metrics(candidates: Vec<f64>, metrics: Vec<Option<f64>>) -> Result<Self> {
        let best = metrics
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return Err(LassoError::NoValidCandidate);
        }
        let chosen_index = (0..candidates.len())
            .filter(|&i| metrics[i].is_some_and(|m| is_tie(m, best)))
            .max_by(|&a, &b| candidates[a].total_cmp(&candidates[b]))
            .ok_or(LassoError::NoValidCandidate)?;
        Ok(Self {
            chosen: candidates[chosen_index],
            best_metric: metrics[chosen_index].unwrap_or(best),
            kkt: vec![None; candidates.len()],
            candidates,
            metrics,
            chosen_index,
        })
    }

    /// True when no other candidate value ties with the minimum.
    pub fn is_unique(&self) -> bool {
        self.candidates
            .iter()
            .zip(&self.metrics)
            .filter(|(c, m)| **c != self.chosen && m.is_some_and(|m| is_tie(m, self.best_metric)))
            .count()
            == 0
    }
}

fn is_tie(m: f64, best: f64) -> bool {
    m - best <= TIE_RTOL * best.abs().max(1.0)
}

fn check_candidates(candidates: &[f64]) -> Result<()> {
    if candidates.is_empty() {
        return Err(LassoError::InvalidArgument("empty candidate grid".into()));
    }
    if let Some(bad) = candidates.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(LassoError::InvalidArgument(format!("invalid eta candidate {bad}")));
    }
    Ok(())
}

/// Validation metric and KKT residual of one fit.
fn fit_and_score(train: &Dataset, val: &Dataset, eta: f64, spec: &FitSpec) -> Option<(f64, f64)> {
    let inst = train.instance(eta).ok()?;
    let f = fit(&inst, spec).ok()?;
    let metric = validation_metric(&f.x, val).ok().filter(|m| m.is_finite())?;
    Some((metric, kkt_residual(&inst, &f.x).ok()?))
}

/// Fits each candidate on `train` and scores it on `val`.
pub fn select_eta(
    train: &Dataset,
    val: &Dataset,
    candidates: &[f64],
    spec: &FitSpec,
) -> Result<EtaSelection> {
    check_candidates(candidates)?;
    check_dim(&vec![0.0; train.dim()], val)?;
    let scored: Vec<Option<(f64, f64)>> = candidates
        .iter()
        .map(|&eta| fit_and_score(train, val, eta, spec))
        .collect();
    let mut sel = EtaSelection::from_metrics(
        candidates.to_vec(),
        scored.iter().map(|s| s.map(|(m, _)| m)).collect(),
    )?;
    sel.kkt = scored.iter().map(|s| s.map(|(_, k)| k)).collect();
    Ok(sel)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    /// When false, folds are contiguous blocks in the original row order.
    pub shuffle: bool,
}

impl CvConfig {
    pub fn new(folds: usize, seed: u64) -> Self {
        Self {
            folds,
            seed,
            shuffle: true,
        }
    }
}

/// Row indices of each fold: a seeded permutation cut into contiguous
/// blocks whose sizes differ by at most one.
pub fn fold_indices(n: usize, cfg: &CvConfig) -> Result<Vec<Vec<usize>>> {
    let k = cfg.folds;
    if k < 2 || n < k {
        return Err(LassoError::InvalidArgument(format!(
            "need 2 <= folds <= rows (folds = {k}, rows = {n})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if cfg.shuffle {
        order.shuffle(&mut rng(cfg.seed));
    }
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// k-fold cross-validation; the metric is the mean over folds of
/// [`validation_metric`]. A candidate is invalid if any fold fails.
pub fn kfold_cv(
    data: &Dataset,
    cfg: &CvConfig,
    candidates: &[f64],
    spec: &FitSpec,
) -> Result<EtaSelection> {
    check_candidates(candidates)?;
    let folds = fold_indices(data.n_obs(), cfg)?;
    let splits: Vec<(Dataset, Dataset)> = folds
        .iter()
        .enumerate()
        .map(|(f, held)| {
            let train_rows: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, rows)| rows.iter().copied())
                .collect();
            (data.select_rows(&train_rows), data.select_rows(held))
        })
        .collect();
    let scored: Vec<Option<(f64, f64)>> = candidates
        .iter()
        .map(|&eta| {
            let (mut total, mut worst) = (0.0, 0.0f64);
            for (train, val) in &splits {
                let (m, k) = fit_and_score(train, val, eta, spec)?;
                total += m;
                worst = worst.max(k);
            }
            Some((total / splits.len() as f64, worst))
        })
        .collect();
    let mut sel = EtaSelection::from_metrics(
        candidates.to_vec(),
        scored.iter().map(|s| s.map(|(m, _)| m)).collect(),
    )?;
    sel.kkt = scored.iter().map(|s| s.map(|(_, k)| k)).collect();
    Ok(sel)
}

/// Coordinates with `|x_i| > RECOVERY_THRESHOLD_REL * ||x||_inf`.
pub fn recovered_support(x: &[f64]) -> Vec<usize> {
    let top = norm_inf(x);
    if top == 0.0 {
        return Vec::new();
    }
    let cut = RECOVERY_THRESHOLD_REL * top;
    (0..x.len()).filter(|&i| x[i].abs() > cut).collect()
}

/// F1 score of `found` against the nonzeros of `truth`. Two empty supports
/// score 1.
pub fn support_f1(found: &[usize], truth: &[f64]) -> f64 {
    let true_count = truth.iter().filter(|v| **v != 0.0).count();
    let hits = found.iter().filter(|&&i| truth.get(i).is_some_and(|v| *v != 0.0)).count();
    if found.is_empty() && true_count == 0 {
        return 1.0;
    }
    2.0 * hits as f64 / (found.len() + true_count) as f64
}

/// Dataset generators addressable from an experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    CompressedSensing {
        ensemble: Ensemble,
        k: usize,
        n: usize,
        s: usize,
        #[serde(default = "default_cs_variance")]
        variance: f64,
    },
    NoisyRegression {
        n: usize,
        d: usize,
        s: usize,
        #[serde(default = "default_regression_variance")]
        variance: f64,
    },
    Correlated {
        n: usize,
        d: usize,
        rho: f64,
    },
    SyntheticLogistic {
        n: usize,
        d: usize,
        s: usize,
    },
    /// Identity design with a fixed response; ignores the seed.
    Identity {
        target: Vec<f64>,
    },
}

fn default_cs_variance() -> f64 {
    datagen::CS_NOISE_VARIANCE
}

fn default_regression_variance() -> f64 {
    datagen::REGRESSION_NOISE_VARIANCE
}

impl GeneratorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::CompressedSensing { .. } => "compressed_sensing",
            GeneratorSpec::NoisyRegression { .. } => "noisy_regression",
            GeneratorSpec::Correlated { .. } => "correlated",
            GeneratorSpec::SyntheticLogistic { .. } => "synthetic_logistic",
            GeneratorSpec::Identity { .. } => "identity",
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        match *self {
            GeneratorSpec::CompressedSensing { ensemble, k, n, s, variance } => {
                datagen::compressed_sensing_dataset(ensemble, k, n, s, variance, seed)
            }
            GeneratorSpec::NoisyRegression { n, d, s, variance } => {
                datagen::noisy_regression_dataset_with_variance(n, d, s, variance, seed)
            }
            GeneratorSpec::Correlated { n, d, rho } => datagen::correlated_dataset(n, d, rho, seed),
            GeneratorSpec::SyntheticLogistic { n, d, s } => {
                datagen::synthetic_logistic_dataset(n, d, s, seed)
            }
            GeneratorSpec::Identity { ref target } => {
                if target.is_empty() {
                    return Err(LassoError::InvalidArgument("identity target is empty".into()));
                }
                Dataset::new(
                    DesignMatrix::identity(target.len()),
                    target.clone(),
                    LossKind::LeastSquaresHalf,
                )
            }
        }
    }

    /// Parameters as JSON, without the generator name.
    pub fn params(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).unwrap_or_default();
        if let Some(obj) = v.as_object_mut() {
            obj.remove("name");
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaRule {
    Fixed { value: f64 },
    /// `factor * ||grad f(0)||_inf`; for least squares this is
    /// `factor * ||A^T b||_inf`.
    GradientFraction { factor: f64 },
}

impl Default for EtaRule {
    fn default() -> Self {
        EtaRule::GradientFraction { factor: 0.1 }
    }
}

impl EtaRule {
    pub fn resolve(&self, data: &Dataset) -> Result<f64> {
        match *self {
            EtaRule::Fixed { value } => Ok(value),
            EtaRule::GradientFraction { factor } => {
                // the gradient does not depend on eta
                let inst = data.instance(1.0)?;
                let g = inst.smooth_gradient(&vec![0.0; inst.dim()])?;
                Ok(factor * norm_inf(&g))
            }
        }
    }
}

fn default_hybrid() -> Vec<bool> {
    vec![false, true]
}

/// An experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub id: String,
    pub generator: GeneratorSpec,
    pub trials: usize,
    pub solvers: Vec<SolverKind>,
    #[serde(default = "default_hybrid")]
    pub hybrid: Vec<bool>,
    pub master_seed: u64,
    #[serde(default)]
    pub eta: EtaRule,
    #[serde(default)]
    pub tuning: Tuning,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.solvers.is_empty() || self.hybrid.is_empty() {
            return Err(LassoError::InvalidArgument(
                "experiment needs at least one trial, solver and hybrid flag".into(),
            ));
        }
        let (EtaRule::Fixed { value: v } | EtaRule::GradientFraction { factor: v }) = self.eta;
        if !(v.is_finite() && v >= 0.0) {
            return Err(LassoError::InvalidArgument(format!("invalid eta rule value {v}")));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// One benchmark row. `trial` is empty on rows that average the successful
/// trials of a (solver, hybrid) pair; measurement fields are empty on failed
/// rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub experiment: String,
    pub generator: String,
    /// Generator parameters as compact JSON.
    pub params: String,
    pub trial: Option<usize>,
    pub seed: u64,
    pub solver: SolverKind,
    pub hybrid: bool,
    pub eta: Option<f64>,
    pub eta_rule: String,
    pub wall_time_s: Option<f64>,
    pub objective: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub outer_iterations: Option<f64>,
    pub support_size: Option<f64>,
    pub recovered_size: Option<f64>,
    pub support_f1: Option<f64>,
    /// Successful trials behind a mean row; 1 or 0 on per-trial rows.
    pub ok_trials: usize,
    pub error: Option<String>,
}

/// Column order of [`write_csv`].
pub const CSV_HEADER: [&str; 18] = [
    "experiment",
    "generator",
    "params",
    "trial",
    "seed",
    "solver",
    "hybrid",
    "eta",
    "eta_rule",
    "wall_time_s",
    "objective",
    "kkt_residual",
    "outer_iterations",
    "support_size",
    "recovered_size",
    "support_f1",
    "ok_trials",
    "error",
];

fn eta_rule_label(rule: &EtaRule) -> String {
    match rule {
        EtaRule::Fixed { value } => format!("fixed {value}"),
        EtaRule::GradientFraction { factor } => format!("{factor} * max|grad f(0)|"),
    }
}

struct Measured {
    eta: f64,
    wall: f64,
    objective: f64,
    kkt: f64,
    outer: f64,
    support: f64,
    recovered: f64,
    f1: Option<f64>,
}

fn measure(data: &Dataset, eta: f64, spec: &FitSpec) -> Result<Measured> {
    let inst = data.instance(eta)?;
    let f = fit(&inst, spec)?;
    let recovered = recovered_support(&f.x);
    Ok(Measured {
        eta,
        wall: f.elapsed.as_secs_f64(),
        objective: f.objective,
        kkt: kkt_residual(&inst, &f.x)?,
        outer: f.outer_iterations as f64,
        support: support(&f.x, SUPPORT_EPS).len() as f64,
        recovered: recovered.len() as f64,
        f1: data.ground_truth.as_deref().map(|z| support_f1(&recovered, z)),
    })
}

/// Runs every (trial, solver, hybrid) combination. All combinations of a
/// trial share one generated instance. Failures are recorded on their row
/// and the run continues.
pub fn bench_run(spec: &ExperimentSpec) -> Result<Vec<BenchRecord>> {
    spec.validate()?;
    let seeds = derive_seeds(spec.master_seed, spec.trials);
    let params = spec.generator.params().to_string();
    let rule = eta_rule_label(&spec.eta);
    let blank = |trial: Option<usize>, seed: u64, solver: SolverKind, hybrid: bool| BenchRecord {
        experiment: spec.id.clone(),
        generator: spec.generator.name().to_string(),
        params: params.clone(),
        trial,
        seed,
        solver,
        hybrid,
        eta: None,
        eta_rule: rule.clone(),
        wall_time_s: None,
        objective: None,
        kkt_residual: None,
        outer_iterations: None,
        support_size: None,
        recovered_size: None,
        support_f1: None,
        ok_trials: 0,
        error: None,
    };

    let combos: Vec<FitSpec> = spec
        .solvers
        .iter()
        .flat_map(|&solver| {
            spec.hybrid.iter().map(move |&hybrid| FitSpec {
                solver,
                hybrid,
                tuning: Tuning::default(),
            })
        })
        .map(|f| f.with_tuning(spec.tuning.clone()))
        .collect();

    let mut rows = Vec::new();
    for (t, &seed) in seeds.iter().enumerate() {
        let prepared = spec
            .generator
            .generate(seed)
            .and_then(|data| spec.eta.resolve(&data).map(|eta| (data, eta)));
        for combo in &combos {
            let mut row = blank(Some(t), seed, combo.solver, combo.hybrid);
            let outcome = match &prepared {
                Ok((data, eta)) => {
                    row.eta = Some(*eta);
                    measure(data, *eta, combo)
                }
                Err(e) => Err(LassoError::InvalidArgument(format!("instance generation failed: {e}"))),
            };
            match outcome {
                Ok(m) => {
                    row.eta = Some(m.eta);
                    row.wall_time_s = Some(m.wall);
                    row.objective = Some(m.objective);
                    row.kkt_residual = Some(m.kkt);
                    row.outer_iterations = Some(m.outer);
                    row.support_size = Some(m.support);
                    row.recovered_size = Some(m.recovered);
                    row.support_f1 = m.f1;
                    row.ok_trials = 1;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            rows.push(row);
        }
    }

    let mut means = Vec::new();
    for combo in &combos {
        let ok: Vec<&BenchRecord> = rows
            .iter()
            .filter(|r| r.solver == combo.solver && r.hybrid == combo.hybrid && r.error.is_none())
            .collect();
        let mut row = blank(None, spec.master_seed, combo.solver, combo.hybrid);
        row.ok_trials = ok.len();
        if ok.is_empty() {
            row.error = Some("no successful trials".into());
        } else {
            let avg = |get: fn(&BenchRecord) -> Option<f64>| -> Option<f64> {
                let vals: Vec<f64> = ok.iter().filter_map(|r| get(r)).collect();
                (vals.len() == ok.len()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            };
            row.eta = avg(|r| r.eta);
            row.wall_time_s = avg(|r| r.wall_time_s);
            row.objective = avg(|r| r.objective);
            row.kkt_residual = avg(|r| r.kkt_residual);
            row.outer_iterations = avg(|r| r.outer_iterations);
            row.support_size = avg(|r| r.support_size);
            row.recovered_size = avg(|r| r.recovered_size);
            row.support_f1 = avg(|r| r.support_f1);
        }
        means.push(row);
    }
    rows.extend(means);
    Ok(rows)
}

/// CSV with the fixed [`CSV_HEADER`].
pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON object per line.
pub fn write_jsonl<W: Write>(records: &[BenchRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
