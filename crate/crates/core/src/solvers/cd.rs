use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{finish, SolveReport, SolveStatus, SolverConfig, SolverKind};
use crate::error::{LassoError, Result};
use crate::model::{axpy, dot, norm2, sigmoid, soft_threshold, LossKind, ProblemInstance};

/// Floor on the IRLS weights `mu (1 - mu)`.
const MIN_WEIGHT: f64 = 1e-5;
const MAX_HALVINGS: usize = 40;
/// Supports larger than this skip the polish step.
const MAX_POLISH_SUPPORT: usize = 2000;
/// Support sweeps between polish attempts when the sweeps are slow to settle.
const POLISH_EVERY: usize = 10;

fn check_kind(cfg: &SolverConfig, inst: &ProblemInstance, want: LossKind) -> Result<()> {
    if cfg.kind != SolverKind::CoordinateDescent {
        return Err(LassoError::InvalidArgument(format!(
            "coordinate descent called with a {:?} configuration",
            cfg.kind
        )));
    }
    if inst.kind() != want {
        return Err(LassoError::UnsupportedKind {
            solver: "coordinate descent",
            kind: inst.kind().name(),
        });
    }
    Ok(())
}

/// Weighted least-squares subproblem
/// `0.5 * sum_i w_i (r_i)^2 + sum_j pen_j |x_j|` with residual `r = z - A x`
/// maintained in place.
struct WeightedCd<'a> {
    inst: &'a ProblemInstance,
    /// `None` means unit weights.
    weights: Option<&'a [f64]>,
    /// `sum_i w_i a_ij^2`
    curvature: Vec<f64>,
}

impl<'a> WeightedCd<'a> {
    fn new(inst: &'a ProblemInstance, weights: Option<&'a [f64]>) -> Self {
        let a = inst.matrix();
        let curvature = (0..inst.dim())
            .map(|j| {
                let col = a.col(j);
                match weights {
                    Some(w) => col.iter().zip(w).map(|(c, w)| w * c * c).sum(),
                    None => dot(col, col),
                }
            })
            .collect();
        Self {
            inst,
            weights,
            curvature,
        }
    }

    /// One cyclic pass over `coords`; returns the largest `sqrt(h_j) |dx_j|`.
    fn sweep(&self, coords: impl Iterator<Item = usize>, x: &mut [f64], resid: &mut [f64]) -> f64 {
        let a = self.inst.matrix();
        let mut max_change: f64 = 0.0;
        for j in coords {
            let h = self.curvature[j];
            if h <= 0.0 {
                continue;
            }
            let col = a.col(j);
            let corr = match self.weights {
                Some(w) => col
                    .iter()
                    .zip(w)
                    .zip(resid.iter())
                    .map(|((c, w), r)| c * w * r)
                    .sum(),
                None => dot(col, resid),
            };
            let old = x[j];
            let new = soft_threshold(h * old + corr, self.inst.penalty(j)) / h;
            if new != old {
                let delta = new - old;
                axpy(-delta, col, resid);
                x[j] = new;
                max_change = max_change.max(h.sqrt() * delta.abs());
            }
        }
        max_change
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn model_value(&self, x: &[f64], resid: &[f64]) -> f64 {
        let fit: f64 = resid
            .iter()
            .enumerate()
            .map(|(i, r)| self.weight(i) * r * r)
            .sum();
        let pen: f64 = x
            .iter()
            .enumerate()
            .map(|(j, v)| self.inst.penalty(j) * v.abs())
            .sum();
        0.5 * fit + pen
    }

    /// Newton steps on the current support with the signs held fixed. A step
    /// that would flip a sign is cut back at the first crossing, that
    /// coordinate is dropped and the step is recomputed, until a full step
    /// stays sign-consistent. Supports larger than the row count are first
    /// truncated to their largest entries. The result is kept only if the
    /// model value decreases.
    fn polish(&self, x: &mut [f64], resid: &mut [f64]) {
        let a = self.inst.matrix();
        let n = resid.len();
        let mut supp: Vec<usize> = (0..x.len())
            .filter(|&j| x[j] != 0.0 && self.curvature[j] > 0.0)
            .collect();
        if supp.is_empty() || supp.len() > MAX_POLISH_SUPPORT {
            return;
        }
        let before = self.model_value(x, resid);
        let (x_old, r_old) = (x.to_vec(), resid.to_vec());
        if supp.len() > n {
            supp.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()));
            for &j in &supp[n..] {
                axpy(x[j], a.col(j), resid);
                x[j] = 0.0;
            }
            supp.truncate(n);
        }

        let k = supp.len();
        let root_w: Vec<f64> = (0..n).map(|i| self.weight(i).sqrt()).collect();
        let b = DMatrix::from_fn(n, k, |i, c| root_w[i] * a.col(supp[c])[i]);
        let mut keep: Vec<usize> = (0..k).collect();
        // explicit transpose so the product goes through the blocked kernel
        let mut chol = Cholesky::new(b.transpose() * &b);
        while let Some(factor) = chol.as_ref() {
            let wr = DVector::from_fn(n, |i, _| root_w[i] * resid[i]);
            let rhs = DVector::from_fn(keep.len(), |r, _| {
                let j = supp[keep[r]];
                b.column(keep[r]).dot(&wr) - self.inst.penalty(j) * x[j].signum()
            });
            let step = factor.solve(&rhs);
            if !step.iter().all(|v| v.is_finite()) {
                break;
            }
            let mut t: f64 = 1.0;
            let mut blocked = false;
            for (r, &c) in keep.iter().enumerate() {
                let j = supp[c];
                if x[j] * (x[j] + step[r]) <= 0.0 && -x[j] / step[r] <= t {
                    t = -x[j] / step[r];
                    blocked = true;
                }
            }
            for (r, &c) in keep.iter().enumerate() {
                let j = supp[c];
                let mut new = x[j] + t * step[r];
                if x[j] * new <= 0.0 || (blocked && -x[j] / step[r] == t) {
                    new = 0.0;
                }
                axpy(-(new - x[j]), a.col(j), resid);
                x[j] = new;
            }
            if !blocked {
                break;
            }
            // drop the coordinates that reached zero from the factorization
            let mut next = factor.clone();
            for r in (0..keep.len()).rev() {
                if x[supp[keep[r]]] == 0.0 {
                    keep.remove(r);
                    next = next.remove_column(r);
                }
            }
            chol = (!keep.is_empty()).then_some(next);
        }
        if !(self.model_value(x, resid) < before) {
            x.copy_from_slice(&x_old);
            resid.copy_from_slice(&r_old);
        }
    }

    /// Full sweeps alternating with sweeps over the current nonzeros until a
    /// full sweep moves no coordinate by more than `threshold`. A polish step
    /// follows the first support sweep, every `POLISH_EVERY`-th one after it,
    /// and the sweep at which the support settles.
    fn run(
        &self,
        x: &mut [f64],
        resid: &mut [f64],
        threshold: f64,
        max_sweeps: usize,
    ) -> (usize, bool) {
        let p = x.len();
        let mut sweeps = 0;
        while sweeps < max_sweeps {
            sweeps += 1;
            if self.sweep(0..p, x, resid) <= threshold {
                return (sweeps, true);
            }
            let support: Vec<usize> = (0..p).filter(|&j| x[j] != 0.0).collect();
            let mut inner = 0;
            while sweeps < max_sweeps {
                sweeps += 1;
                inner += 1;
                if self.sweep(support.iter().copied(), x, resid) <= threshold {
                    self.polish(x, resid);
                    break;
                }
                if inner % POLISH_EVERY == 1 {
                    self.polish(x, resid);
                }
            }
        }
        (sweeps, false)
    }
}

/// Cyclic coordinate descent for `0.5 ||Ax - b||^2 + eta ||x||_1`.
///
/// Stops once a full sweep changes no coordinate by more than
/// `tol * ||b||` in the `||a_j|| * |dx_j|` metric.
pub fn cd_lasso_solve(inst: &ProblemInstance, x0: &[f64], cfg: &SolverConfig) -> Result<SolveReport> {
    check_kind(cfg, inst, LossKind::LeastSquaresHalf)?;
    let start = Instant::now();
    let a = inst.matrix();
    let mut x = x0.to_vec();
    let mut resid: Vec<f64> = inst
        .target()
        .iter()
        .zip(a.mul_vec(&x))
        .map(|(b, ax)| b - ax)
        .collect();
    let scale = match norm2(inst.target()) {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let cd = WeightedCd::new(inst, None);
    let (sweeps, converged) = cd.run(&mut x, &mut resid, cfg.tol * scale, cfg.max_iter);
    if !x.iter().all(|v| v.is_finite()) {
        return Err(LassoError::Diverged("coordinate descent produced non-finite values".into()));
    }
    let objective = inst.full_objective(&x)?;
    let status = if converged {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIterReached
    };
    Ok(finish(inst, x0, x, objective, sweeps, start, status))
}

/// Proximal Newton (IRLS) outer loop with weighted coordinate descent on each
/// local quadratic model of the logistic loss. A step that increases `F` is
/// halved until it does not.
pub fn cd_logistic_solve(
    inst: &ProblemInstance,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    check_kind(cfg, inst, LossKind::LogisticNLL)?;
    let start = Instant::now();
    let a = inst.matrix();
    let n = inst.n_obs() as f64;
    let y = inst.target();

    let mut x = x0.to_vec();
    let mut margin = a.mul_vec(&x);
    let mut obj = inst.objective_from_margin(&x, &margin);
    let mut sweeps = 0;
    let mut status = SolveStatus::MaxIterReached;

    for _ in 0..cfg.irls_outer_max {
        if !margin.iter().all(|m| m.is_finite()) {
            return Err(LassoError::Diverged("non-finite logistic margin".into()));
        }
        // local model: (1/2n) sum_i w_i (z_i - a_i^T x)^2 with working response z
        let mut weights = Vec::with_capacity(margin.len());
        let mut resid = Vec::with_capacity(margin.len());
        for (&m, &yi) in margin.iter().zip(y) {
            let mu = sigmoid(m);
            let w = (mu * (1.0 - mu)).max(MIN_WEIGHT);
            weights.push(w / n);
            // z - a^T x at the current point
            resid.push((yi - mu) / w);
        }
        let cd = WeightedCd::new(inst, Some(&weights));
        let mut candidate = x.clone();
        let (used, _) = cd.run(&mut candidate, &mut resid, cfg.tol, cfg.max_iter);
        sweeps += used;

        let direction: Vec<f64> = candidate.iter().zip(&x).map(|(c, o)| c - o).collect();
        let step_margin = a.mul_vec(&direction);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial_x: Vec<f64> = x.iter().zip(&direction).map(|(o, d)| o + t * d).collect();
            let trial_m: Vec<f64> = margin.iter().zip(&step_margin).map(|(m, d)| m + t * d).collect();
            let trial_obj = inst.objective_from_margin(&trial_x, &trial_m);
            if !trial_obj.is_finite() {
                return Err(LassoError::Diverged(format!(
                    "logistic objective became {trial_obj}"
                )));
            }
            if trial_obj <= obj {
                accepted = Some((trial_x, trial_m, trial_obj));
                break;
            }
            t *= 0.5;
        }
        let Some((new_x, new_m, new_obj)) = accepted else {
            status = SolveStatus::Converged;
            break;
        };
        let rel = (obj - new_obj) / new_obj.abs().max(f64::MIN_POSITIVE);
        x = new_x;
        margin = new_m;
        obj = new_obj;
        if rel < cfg.tol {
            status = SolveStatus::Converged;
            break;
        }
    }

    Ok(finish(inst, x0, x, obj, sweeps, start, status))
}
