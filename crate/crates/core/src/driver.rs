//! The active-set outer loop.
//!
//! Every variable starts pinned at zero. Each outer iteration ranks the pinned
//! variables whose partial derivative exceeds the penalty in magnitude, frees
//! either the `tau` largest of them (keeping only the current support free
//! otherwise) or all of them, and re-solves the smaller problem with an inner
//! solver. Intermediate solves use a loose tolerance; once nothing is eligible
//! the final free set is re-solved at the tight tolerance.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{LassoError, Result};
use crate::kkt::{eligibility_from_gradient, EligibilityReport};
use crate::model::{check_index_list, norm_inf, ProblemInstance};
use crate::solvers::{solve, SolveReport, SolveStatus, SolverConfig, SolverKind};

/// Indices of variables pinned to zero, sorted and distinct.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActiveSet {
    indices: Vec<usize>,
}

impl ActiveSet {
    pub fn new(indices: Vec<usize>, dim: usize) -> Result<Self> {
        check_index_list(&indices, dim)?;
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Every variable pinned.
    pub fn full(dim: usize) -> Self {
        Self {
            indices: (0..dim).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    /// The free indices `[0, dim) \ self`.
    pub fn complement(&self, dim: usize) -> Vec<usize> {
        let mut pinned = self.indices.iter().peekable();
        (0..dim)
            .filter(|j| {
                if pinned.peek() == Some(&j) {
                    pinned.next();
                    false
                } else {
                    true
                }
            })
            .collect()
    }

    /// `self \ remove`.
    pub fn without(&self, remove: &[usize]) -> ActiveSet {
        let mut sorted = remove.to_vec();
        sorted.sort_unstable();
        ActiveSet {
            indices: self
                .indices
                .iter()
                .copied()
                .filter(|j| sorted.binary_search(j).is_err())
                .collect(),
        }
    }

    /// `[0, dim) \ keep_free`.
    pub fn all_except(keep_free: &[usize], dim: usize) -> ActiveSet {
        let mut free = vec![false; dim];
        for &j in keep_free {
            free[j] = true;
        }
        ActiveSet {
            indices: (0..dim).filter(|&j| !free[j]).collect(),
        }
    }
}

/// `floor(4 ln(nu)^2)`, at least 1.
pub fn tau_default(nu: usize) -> usize {
    let l = (nu.max(1) as f64).ln();
    ((4.0 * l * l).floor() as usize).max(1)
}

/// Coordinates with `|x_i| > eps_rel * max(1, ||x||_inf)`.
pub fn support(x: &[f64], eps_rel: f64) -> Vec<usize> {
    let cut = eps_rel * norm_inf(x).max(1.0);
    x.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > cut)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub tau: usize,
    pub beta0: usize,
    pub beta1: usize,
    pub loose: SolverConfig,
    pub tight: SolverConfig,
    pub slack: f64,
    pub support_eps: f64,
    pub warm_start: bool,
    pub outer_cap: usize,
}

impl DriverConfig {
    /// `tau = floor(4 ln^2 nu)`, `beta0 = 3 tau`, `beta1 = 15`.
    pub fn new(nu: usize, kind: SolverKind) -> Self {
        let tau = tau_default(nu);
        Self {
            tau,
            beta0: 3 * tau,
            beta1: 15,
            loose: SolverConfig::loose(kind),
            tight: SolverConfig::tight(kind),
            slack: 1e-8,
            support_eps: 1e-10,
            warm_start: false,
            outer_cap: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau < 1 || self.beta0 < self.tau || self.beta1 < 1 || self.outer_cap < self.beta1 {
            return Err(LassoError::InvalidArgument(format!(
                "need tau >= 1, beta0 >= tau, beta1 >= 1, outer_cap >= beta1 \
                 (got tau={}, beta0={}, beta1={}, outer_cap={})",
                self.tau, self.beta0, self.beta1, self.outer_cap
            )));
        }
        if self.loose.kind != self.tight.kind {
            return Err(LassoError::InvalidArgument(
                "loose and tight configurations must use the same solver".into(),
            ));
        }
        if !(self.slack >= 0.0) || !(self.support_eps >= 0.0) {
            return Err(LassoError::InvalidArgument(
                "slack and support_eps must be non-negative".into(),
            ));
        }
        self.loose.validate()?;
        self.tight.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateBranch {
    /// Free the `tau` largest eligible variables plus the current support.
    TopTau,
    /// Free every eligible variable.
    All,
    /// Same as `All`, taken because the iteration budget `beta1` was exceeded.
    FailSafe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Loose,
    Tight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Outer iteration number `r`, starting at 1.
    pub r: usize,
    pub phase: Phase,
    /// `|S_r|`
    pub pinned: usize,
    /// `|E_r|`
    pub eligible: usize,
    /// `|supp(x_r)|`
    pub support: usize,
    pub freed: usize,
    pub branch: Option<UpdateBranch>,
    /// Free-set size of the solve that produced `x_{r+1}`.
    pub free_after: usize,
    /// `F(x_r)`
    pub objective: f64,
    /// `F(x_{r+1})`, `None` when the loop stopped at this iteration.
    pub next_objective: Option<f64>,
    pub inner_iterations: usize,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DriverTrace {
    pub iterations: Vec<IterationRecord>,
    /// Solves performed, including the tight re-solve.
    pub solves: usize,
    pub capped: bool,
}

impl DriverTrace {
    /// Number of outer iterations that freed variables.
    pub fn outer_iterations(&self) -> usize {
        self.iterations.iter().filter(|r| r.branch.is_some()).count()
    }
}

/// `S_1 = [nu]`, `x_1 = 0`.
pub fn initial_active_set(inst: &ProblemInstance) -> (ActiveSet, Vec<f64>) {
    (ActiveSet::full(inst.dim()), vec![0.0; inst.dim()])
}

/// Returns the next active set and the branch taken. `r` counts from 1.
pub fn update_active_set(
    active: &ActiveSet,
    eligible: &EligibilityReport,
    x: &[f64],
    r: usize,
    cfg: &DriverConfig,
) -> (ActiveSet, UpdateBranch) {
    if eligible.len() >= cfg.beta0 && r <= cfg.beta1 {
        let mut keep: Vec<usize> = support(x, cfg.support_eps);
        keep.extend(eligible.top(cfg.tau).iter().map(|e| e.index));
        (ActiveSet::all_except(&keep, x.len()), UpdateBranch::TopTau)
    } else {
        let branch = if r > cfg.beta1 && eligible.len() >= cfg.beta0 {
            UpdateBranch::FailSafe
        } else {
            UpdateBranch::All
        };
        (active.without(&eligible.indices()), branch)
    }
}

/// Runs the active-set method with `cfg.loose` for intermediate solves and a
/// final `cfg.tight` solve on the last free set. If the tight solution still
/// has eligible variables the loop continues at the tight tolerance.
pub fn run_active_solver(
    inst: &ProblemInstance,
    cfg: &DriverConfig,
) -> Result<(SolveReport, DriverTrace)> {
    cfg.validate()?;
    let started = Instant::now();
    let mut trace = DriverTrace::default();
    match drive(inst, cfg, &mut trace) {
        Ok(mut report) => {
            report.elapsed = started.elapsed();
            Ok((report, trace))
        }
        Err(source) => Err(LassoError::Driver {
            source: Box::new(source),
            trace: Box::new(trace),
        }),
    }
}

fn drive(inst: &ProblemInstance, cfg: &DriverConfig, trace: &mut DriverTrace) -> Result<SolveReport> {
    let (mut active, mut x) = initial_active_set(inst);
    let mut objective = inst.full_objective(&x)?;
    let mut status = SolveStatus::Converged;
    let mut inner_total = 0;
    let mut phase = Phase::Loose;
    let mut r = 1;

    loop {
        let grad = inst.smooth_gradient(&x)?;
        let eligible = eligibility_from_gradient(inst, &x, &grad, &active, cfg.slack)?;
        let supp = support(&x, cfg.support_eps).len();

        if eligible.is_empty() || r > cfg.outer_cap {
            trace.capped |= r > cfg.outer_cap;
            if phase == Phase::Loose && trace.solves > 0 {
                // re-solve the final free set at the tight tolerance, starting
                // from the last loose solution
                phase = Phase::Tight;
                let rep = solve(inst, &active, &x, &cfg.tight)?;
                trace.solves += 1;
                inner_total += rep.inner_iterations;
                trace.iterations.push(IterationRecord {
                    r,
                    phase,
                    pinned: active.len(),
                    eligible: eligible.len(),
                    support: supp,
                    freed: 0,
                    branch: None,
                    free_after: inst.dim() - active.len(),
                    objective,
                    next_objective: Some(rep.objective),
                    inner_iterations: rep.inner_iterations,
                    elapsed: rep.elapsed,
                });
                status = rep.status;
                x = rep.x;
                objective = rep.objective;
                if trace.capped {
                    break;
                }
                continue;
            }
            trace.iterations.push(IterationRecord {
                r,
                phase,
                pinned: active.len(),
                eligible: eligible.len(),
                support: supp,
                freed: 0,
                branch: None,
                free_after: inst.dim() - active.len(),
                objective,
                next_objective: None,
                inner_iterations: 0,
                elapsed: Duration::ZERO,
            });
            break;
        }

        let (next, branch) = update_active_set(&active, &eligible, &x, r, cfg);
        let freed = match branch {
            UpdateBranch::TopTau => cfg.tau.min(eligible.len()),
            _ => eligible.len(),
        };
        let solver_cfg = match phase {
            Phase::Loose => &cfg.loose,
            Phase::Tight => &cfg.tight,
        };
        let x0 = if cfg.warm_start {
            let mut w = x.clone();
            for &j in next.indices() {
                w[j] = 0.0;
            }
            w
        } else {
            vec![0.0; inst.dim()]
        };
        let rep = solve(inst, &next, &x0, solver_cfg)?;
        trace.solves += 1;
        inner_total += rep.inner_iterations;
        trace.iterations.push(IterationRecord {
            r,
            phase,
            pinned: active.len(),
            eligible: eligible.len(),
            support: supp,
            freed,
            branch: Some(branch),
            free_after: inst.dim() - next.len(),
            objective,
            next_objective: Some(rep.objective),
            inner_iterations: rep.inner_iterations,
            elapsed: rep.elapsed,
        });
        status = rep.status;
        x = rep.x;
        objective = rep.objective;
        active = next;
        r += 1;
    }

    Ok(SolveReport {
        x,
        objective,
        inner_iterations: inner_total,
        elapsed: Duration::ZERO,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::EligibleEntry;
    use crate::model::DesignMatrix;

    fn report(entries: &[(usize, f64)]) -> EligibilityReport {
        EligibilityReport {
            entries: entries
                .iter()
                .map(|&(index, magnitude)| EligibleEntry { index, magnitude })
                .collect(),
        }
    }

    #[test]
    fn tau_examples() {
        assert_eq!(tau_default(4096), 276);
        assert_eq!(tau_default(32768), 432);
        assert_eq!(tau_default(3), 4);
        assert_eq!(tau_default(1), 1);
    }

    #[test]
    fn support_examples() {
        assert_eq!(support(&[2.0, 0.0, -1.0], 1e-10), vec![0, 2]);
        assert!(support(&[0.0; 4], 1e-10).is_empty());
        assert_eq!(support(&[1.0, 1e-14], 1e-10), vec![0]);
    }

    #[test]
    fn active_set_algebra() {
        let s = ActiveSet::new(vec![1, 3, 5], 6).unwrap();
        assert_eq!(s.complement(6), vec![0, 2, 4]);
        assert_eq!(s.without(&[5, 1]).indices(), &[3]);
        assert!(ActiveSet::new(vec![3, 1], 6).is_err());
        assert!(ActiveSet::new(vec![6], 6).is_err());
        assert_eq!(ActiveSet::all_except(&[0, 2, 4], 6).indices(), &[1, 3, 5]);
    }

    #[test]
    fn top_tau_branch_set_arithmetic() {
        let mut cfg = DriverConfig::new(6, SolverKind::CoordinateDescent);
        cfg.tau = 2;
        cfg.beta0 = 2;
        let active = ActiveSet::new(vec![1, 2, 3, 4, 5], 6).unwrap();
        let x = [1.5, 0.0, 0.0, 0.0, 0.0, 0.0];
        let e = report(&[(2, 5.0), (4, 4.0), (5, 3.0)]);
        let (next, branch) = update_active_set(&active, &e, &x, 1, &cfg);
        assert_eq!(branch, UpdateBranch::TopTau);
        assert_eq!(next.indices(), &[1, 3, 5]);
    }

    #[test]
    fn small_eligible_list_frees_everything() {
        let mut cfg = DriverConfig::new(6, SolverKind::CoordinateDescent);
        cfg.tau = 2;
        cfg.beta0 = 6;
        let active = ActiveSet::new(vec![1, 2, 3, 4, 5], 6).unwrap();
        let e = report(&[(2, 5.0), (4, 4.0)]);
        let (next, branch) = update_active_set(&active, &e, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1, &cfg);
        assert_eq!(branch, UpdateBranch::All);
        assert_eq!(next.indices(), &[1, 3, 5]);
    }

    #[test]
    fn fail_safe_after_beta1() {
        let mut cfg = DriverConfig::new(6, SolverKind::CoordinateDescent);
        cfg.tau = 1;
        cfg.beta0 = 1;
        cfg.beta1 = 2;
        let active = ActiveSet::full(6);
        let e = report(&[(0, 5.0), (4, 4.0), (5, 1.0)]);
        let (next, branch) = update_active_set(&active, &e, &[0.0; 6], 3, &cfg);
        assert_eq!(branch, UpdateBranch::FailSafe);
        assert_eq!(next.indices(), &[1, 2, 3]);
    }

    #[test]
    fn identity_walkthrough() {
        let inst =
            ProblemInstance::least_squares(DesignMatrix::identity(3), vec![3.0, 0.5, -2.0], 1.0)
                .unwrap();
        let (s1, x1) = initial_active_set(&inst);
        assert_eq!(s1.indices(), &[0, 1, 2]);
        assert_eq!(x1, vec![0.0; 3]);
        for kind in SolverKind::ALL {
            let mut cfg = DriverConfig::new(3, kind);
            cfg.tau = 2;
            cfg.beta0 = 6;
            let (rep, trace) = run_active_solver(&inst, &cfg).unwrap();
            for (got, want) in rep.x.iter().zip([2.0, 0.0, -1.0]) {
                assert!((got - want).abs() < 1e-6, "{kind:?} {:?}", rep.x);
            }
            assert!((rep.objective - 4.125).abs() < 1e-6);
            let first = &trace.iterations[0];
            assert_eq!(first.eligible, 2);
            assert_eq!(first.branch, Some(UpdateBranch::All));
            assert_eq!(first.free_after, 2);
            assert_eq!(trace.outer_iterations(), 1);
        }
    }

    #[test]
    fn origin_optimal_needs_no_solve() {
        let inst =
            ProblemInstance::least_squares(DesignMatrix::identity(3), vec![3.0, 0.5, -2.0], 3.0)
                .unwrap();
        let (rep, trace) = run_active_solver(&inst, &DriverConfig::new(3, SolverKind::GpsrBB)).unwrap();
        assert_eq!(rep.x, vec![0.0; 3]);
        assert_eq!(trace.solves, 0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = DriverConfig::new(100, SolverKind::GpsrBB);
        cfg.beta0 = cfg.tau - 1;
        assert!(cfg.validate().is_err());
        let mut cfg = DriverConfig::new(100, SolverKind::GpsrBB);
        cfg.outer_cap = 3;
        assert!(cfg.validate().is_err());
    }
}
