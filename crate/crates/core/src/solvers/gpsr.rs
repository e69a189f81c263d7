use std::collections::VecDeque;
use std::time::Instant;

use super::{finish, SolveReport, SolveStatus, SolverConfig, SolverKind};
use crate::error::{LassoError, Result};
use crate::model::{dot, LossKind, ProblemInstance};

const ALPHA_MIN: f64 = 1e-30;
const ALPHA_MAX: f64 = 1e30;
/// Nonmonotone reference: the largest of this many recent objectives.
const NONMONOTONE_MEMORY: usize = 10;
const SUFFICIENT_DECREASE: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 30;

/// Gradient projection with Barzilai-Borwein steps on the split `x = u - v`,
/// `u, v >= 0`, minimizing `f(u - v) + eta * 1^T (u + v)`.
///
/// The iteration is nonmonotone: the full projected step is taken unless the
/// objective fails a sufficient-decrease test against the maximum over the
/// last few iterates, in which case the step is shortened along the same
/// direction.
pub fn gpsr_bb_solve(inst: &ProblemInstance, x0: &[f64], cfg: &SolverConfig) -> Result<SolveReport> {
    if cfg.kind != SolverKind::GpsrBB {
        return Err(LassoError::InvalidArgument(format!(
            "gpsr_bb_solve called with a {:?} configuration",
            cfg.kind
        )));
    }
    let start = Instant::now();
    let a = inst.matrix();
    let p = inst.dim();
    let n = inst.n_obs();

    let mut u: Vec<f64> = x0.iter().map(|&v| v.max(0.0)).collect();
    let mut v: Vec<f64> = x0.iter().map(|&v| (-v).max(0.0)).collect();
    let mut x: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
    let mut ax = a.mul_vec(&x);
    let mut grad = inst.gradient_from_margin(&ax);
    let mut obj = split_objective(inst, &u, &v, &ax);

    // first step: exact minimizer along -grad of the quadratic (or its logistic
    // curvature bound)
    let agrad = a.mul_vec(&grad);
    let curvature = match inst.kind() {
        LossKind::LeastSquaresHalf => dot(&agrad, &agrad),
        LossKind::LogisticNLL => dot(&agrad, &agrad) / (4.0 * n as f64),
    };
    let gg = dot(&grad, &grad);
    let mut alpha = if curvature > 0.0 { gg / curvature } else { 1.0 };
    alpha = alpha.clamp(ALPHA_MIN, ALPHA_MAX);

    let mut du = vec![0.0; p];
    let mut dv = vec![0.0; p];
    let mut dx = vec![0.0; p];
    let mut adx = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut status = SolveStatus::MaxIterReached;
    let mut iterations = 0;
    let mut recent = VecDeque::with_capacity(NONMONOTONE_MEMORY);
    recent.push_back(obj);
    // nonmonotone iterates: report the best one seen
    let mut best_x = x.clone();
    let mut best_obj = obj;

    while iterations < cfg.max_iter {
        iterations += 1;
        // projected direction and its slope along the split objective
        let mut moved = false;
        let mut slope = 0.0;
        let mut pen_slope = 0.0;
        for j in 0..p {
            let eta = inst.penalty(j);
            du[j] = (u[j] - alpha * (grad[j] + eta)).max(0.0) - u[j];
            dv[j] = (v[j] - alpha * (eta - grad[j])).max(0.0) - v[j];
            dx[j] = du[j] - dv[j];
            moved |= du[j] != 0.0 || dv[j] != 0.0;
            slope += (grad[j] + eta) * du[j] + (eta - grad[j]) * dv[j];
            pen_slope += eta * (du[j] + dv[j]);
        }
        if !moved || !(slope < 0.0) {
            status = SolveStatus::Converged;
            break;
        }
        a.mul_vec_into(&dx, &mut adx);
        let reference = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pen0 = obj - inst.smooth_value_from_margin(&ax);
        let mut lambda = 1.0;
        let mut new_obj = f64::NAN;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            for ((t, m), d) in trial.iter_mut().zip(&ax).zip(&adx) {
                *t = m + lambda * d;
            }
            new_obj = inst.smooth_value_from_margin(&trial) + pen0 + lambda * pen_slope;
            if new_obj <= reference + SUFFICIENT_DECREASE * lambda * slope {
                accepted = true;
                break;
            }
            lambda *= BACKTRACK;
        }
        if !accepted {
            if alpha <= ALPHA_MIN {
                // no representable decrease along the projected direction
                status = SolveStatus::Converged;
                break;
            }
            // the step length was wildly off; restart from a shorter projection
            alpha = (alpha * lambda).max(ALPHA_MIN);
            continue;
        }
        for j in 0..p {
            u[j] += lambda * du[j];
            v[j] += lambda * dv[j];
            x[j] = u[j] - v[j];
        }
        std::mem::swap(&mut ax, &mut trial);
        if recent.len() == NONMONOTONE_MEMORY {
            recent.pop_front();
        }
        recent.push_back(new_obj);
        if new_obj < best_obj {
            best_obj = new_obj;
            best_x.copy_from_slice(&x);
        }
        let new_grad = inst.gradient_from_margin(&ax);

        let ss = lambda * lambda * (dot(&du, &du) + dot(&dv, &dv));
        let sy = match inst.kind() {
            LossKind::LeastSquaresHalf => lambda * lambda * dot(&adx, &adx),
            LossKind::LogisticNLL => {
                lambda
                    * dx.iter()
                        .zip(new_grad.iter().zip(&grad))
                        .map(|(d, (g1, g0))| d * (g1 - g0))
                        .sum::<f64>()
            }
        };
        alpha = if sy > 0.0 { ss / sy } else { ALPHA_MAX };
        alpha = alpha.clamp(ALPHA_MIN, ALPHA_MAX);

        // decrease against the window maximum: a single lucky step between
        // oscillating iterates does not stop the run
        let rel = (reference - new_obj).abs() / new_obj.abs().max(f64::MIN_POSITIVE);
        grad = new_grad;
        obj = new_obj;
        // a shortened step says nothing about stationarity
        if lambda == 1.0 && recent.len() > 1 && rel < cfg.tol {
            status = SolveStatus::Converged;
            break;
        }
    }

    // the tracked objectives use an incrementally updated margin; recompute
    // before reporting
    let objective = inst.full_objective(&best_x)?;
    Ok(finish(inst, x0, best_x, objective, iterations, start, status))
}

fn split_objective(inst: &ProblemInstance, u: &[f64], v: &[f64], ax: &[f64]) -> f64 {
    let pen: f64 = u
        .iter()
        .zip(v)
        .enumerate()
        .map(|(j, (a, b))| inst.penalty(j) * (a + b))
        .sum();
    inst.smooth_value_from_margin(ax) + pen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DesignMatrix;

    fn example() -> ProblemInstance {
        ProblemInstance::least_squares(DesignMatrix::identity(3), vec![3.0, 0.5, -2.0], 1.0).unwrap()
    }

    #[test]
    fn orthonormal_closed_form() {
        let rep = gpsr_bb_solve(&example(), &[0.0; 3], &SolverConfig::tight(SolverKind::GpsrBB))
            .unwrap();
        for (got, want) in rep.x.iter().zip([2.0, 0.0, -1.0]) {
            assert!((got - want).abs() <= 1e-6);
        }
        assert_eq!(rep.status, SolveStatus::Converged);
    }

    #[test]
    fn origin_optimal_returns_immediately() {
        let inst = example().with_eta(3.0).unwrap();
        let rep = gpsr_bb_solve(&inst, &[0.0; 3], &SolverConfig::tight(SolverKind::GpsrBB)).unwrap();
        assert_eq!(rep.x, vec![0.0; 3]);
        assert_eq!(rep.inner_iterations, 1);
    }

    #[test]
    fn wrong_config_kind() {
        assert!(gpsr_bb_solve(&example(), &[0.0; 3], &SolverConfig::tight(SolverKind::Admm)).is_err());
    }
}
