//! Inner l1 solvers and the dispatch used by the active-set driver.
//!
//! Each solver keeps the stopping rule of the package it is modelled on, so
//! `SolverConfig::tol` means something different per kind:
//!
//! | kind                | `tol` compares against                                         |
//! |---------------------|----------------------------------------------------------------|
//! | `GpsrBB`            | relative objective change between consecutive iterates         |
//! | `Admm`              | `ABSTOL = RELTOL = tol` in the primal/dual residual thresholds |
//! | `CoordinateDescent` | largest `||a_j|| * |dx_j|` over a full sweep, relative to `||b||` |
//!
//! For the logistic objective, coordinate descent runs inside a proximal
//! Newton (IRLS) loop whose outer stopping rule is the relative objective
//! decrease.

mod admm;
mod cd;
mod gpsr;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use admm::admm_lasso_solve;
pub use cd::{cd_lasso_solve, cd_logistic_solve};
pub use gpsr::gpsr_bb_solve;

use crate::driver::ActiveSet;
use crate::error::{LassoError, Result};
use crate::model::{embed, gather, LossKind, ProblemInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[serde(rename = "gpsr")]
    GpsrBB,
    Admm,
    #[serde(rename = "cd")]
    CoordinateDescent,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [
        SolverKind::GpsrBB,
        SolverKind::Admm,
        SolverKind::CoordinateDescent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::GpsrBB => "gpsr",
            SolverKind::Admm => "admm",
            SolverKind::CoordinateDescent => "cd",
        }
    }

    pub fn supports(self, kind: LossKind) -> bool {
        !(self == SolverKind::Admm && kind == LossKind::LogisticNLL)
    }
}

impl std::str::FromStr for SolverKind {
    type Err = LassoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gpsr" | "gpsr-bb" | "gpsrbb" => Ok(SolverKind::GpsrBB),
            "admm" => Ok(SolverKind::Admm),
            "cd" | "glmnet" | "coordinate-descent" => Ok(SolverKind::CoordinateDescent),
            other => Err(LassoError::InvalidArgument(format!("unknown solver '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub tol: f64,
    pub max_iter: usize,
    pub admm_rho: f64,
    pub irls_outer_max: usize,
}

impl SolverConfig {
    /// Defaults of the reference packages: TolA = 1e-2, ABSTOL = RELTOL = 1e-4,
    /// thresh = 1e-7.
    pub fn new(kind: SolverKind) -> Self {
        let tol = match kind {
            SolverKind::GpsrBB => 1e-2,
            SolverKind::Admm => 1e-4,
            SolverKind::CoordinateDescent => 1e-7,
        };
        Self {
            kind,
            tol,
            max_iter: 100_000,
            admm_rho: 1.0,
            irls_outer_max: 100,
        }
    }

    /// Tolerance used for intermediate solves of an active-set run.
    pub fn loose(kind: SolverKind) -> Self {
        let tol = match kind {
            SolverKind::GpsrBB => 1e-3,
            SolverKind::Admm => 1e-4,
            SolverKind::CoordinateDescent => 1e-5,
        };
        Self::new(kind).with_tol(tol)
    }

    /// Tolerance at which solutions satisfy `kkt_residual <= 1e-4 * eta` on
    /// the instances exercised by the acceptance suite.
    pub fn tight(kind: SolverKind) -> Self {
        let tol = match kind {
            SolverKind::GpsrBB => 1e-12,
            SolverKind::Admm => 1e-9,
            SolverKind::CoordinateDescent => 1e-10,
        };
        Self::new(kind).with_tol(tol)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.admm_rho = rho;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(LassoError::InvalidArgument("solver tol must be positive".into()));
        }
        if self.max_iter == 0 || self.irls_outer_max == 0 {
            return Err(LassoError::InvalidArgument(
                "iteration limits must be at least 1".into(),
            ));
        }
        if !(self.admm_rho > 0.0) {
            return Err(LassoError::InvalidArgument("admm_rho must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIterReached,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub objective: f64,
    pub inner_iterations: usize,
    pub elapsed: Duration,
    pub status: SolveStatus,
}

/// Solve the unconstrained problem over all columns of `inst`.
pub fn solve_unconstrained(
    inst: &ProblemInstance,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    if x0.len() != inst.dim() {
        return Err(LassoError::DimensionMismatch(format!(
            "start point has length {} for {} variables",
            x0.len(),
            inst.dim()
        )));
    }
    if inst.dim() == 0 {
        return Ok(SolveReport {
            x: Vec::new(),
            objective: inst.smooth_value_from_margin(&vec![0.0; inst.n_obs()]),
            inner_iterations: 0,
            elapsed: Duration::ZERO,
            status: SolveStatus::Converged,
        });
    }
    match (cfg.kind, inst.kind()) {
        (SolverKind::GpsrBB, _) => gpsr_bb_solve(inst, x0, cfg),
        (SolverKind::Admm, _) => admm_lasso_solve(inst, x0, cfg),
        (SolverKind::CoordinateDescent, LossKind::LeastSquaresHalf) => cd_lasso_solve(inst, x0, cfg),
        (SolverKind::CoordinateDescent, LossKind::LogisticNLL) => cd_logistic_solve(inst, x0, cfg),
    }
}

/// Solve with the coordinates in `active` pinned at zero: restrict, dispatch,
/// embed.
pub fn solve(
    inst: &ProblemInstance,
    active: &ActiveSet,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    if x0.len() != inst.dim() {
        return Err(LassoError::DimensionMismatch(format!(
            "start point has length {} for {} variables",
            x0.len(),
            inst.dim()
        )));
    }
    if let Some(&j) = active.indices().iter().find(|&&j| x0[j] != 0.0) {
        return Err(LassoError::ContractViolation(format!(
            "start point is nonzero at pinned coordinate {j}"
        )));
    }
    let free = active.complement(inst.dim());
    let start = Instant::now();
    let sub = inst.restrict(&free)?;
    let mut report = solve_unconstrained(&sub, &gather(x0, &free), cfg)?;
    report.x = embed(&report.x, &free, inst.dim())?;
    report.elapsed = start.elapsed();
    Ok(report)
}

/// Keeps the start point when the solver's final iterate is no better.
pub(crate) fn finish(
    inst: &ProblemInstance,
    x0: &[f64],
    x: Vec<f64>,
    objective: f64,
    inner_iterations: usize,
    start: Instant,
    status: SolveStatus,
) -> SolveReport {
    let f0 = inst
        .full_objective(x0)
        .expect("start point dimension checked by the caller");
    let (x, objective) = if f0 < objective {
        (x0.to_vec(), f0)
    } else {
        (x, objective)
    };
    SolveReport {
        x,
        objective,
        inner_iterations,
        elapsed: start.elapsed(),
        status,
    }
}
