use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{finish, SolveReport, SolveStatus, SolverConfig, SolverKind};
use crate::error::{LassoError, Result};
use crate::model::{norm2, soft_threshold, DesignMatrix, LossKind, ProblemInstance};

/// Cached solver for `(A^T A + rho I) x = q`.
///
/// When `A` has fewer rows than columns the `n x n` system
/// `I + A A^T / rho` is factored instead and the inverse is applied through
/// `(A^T A + rho I)^-1 = I / rho - A^T (I + A A^T / rho)^-1 A / rho^2`.
enum XUpdate {
    Tall(Cholesky<f64, Dyn>),
    Wide(Cholesky<f64, Dyn>),
}

impl XUpdate {
    fn new(a: &DesignMatrix, rho: f64) -> Result<Self> {
        let m = a.as_dmatrix();
        let singular = || LassoError::Numerical("ADMM factorization is not positive definite".into());
        if a.rows() >= a.cols() {
            let mut g: DMatrix<f64> = m.transpose() * m;
            for i in 0..a.cols() {
                g[(i, i)] += rho;
            }
            Cholesky::new(g).map(XUpdate::Tall).ok_or_else(singular)
        } else {
            let mut g: DMatrix<f64> = m * m.transpose();
            g /= rho;
            for i in 0..a.rows() {
                g[(i, i)] += 1.0;
            }
            Cholesky::new(g).map(XUpdate::Wide).ok_or_else(singular)
        }
    }

    fn apply(&self, a: &DesignMatrix, rho: f64, q: &[f64]) -> Vec<f64> {
        match self {
            XUpdate::Tall(chol) => chol.solve(&DVector::from_column_slice(q)).data.into(),
            XUpdate::Wide(chol) => {
                let aq = DVector::from_vec(a.mul_vec(q));
                let w = chol.solve(&aq);
                let atw = a.tr_mul_vec(w.as_slice());
                q.iter()
                    .zip(&atw)
                    .map(|(qi, ti)| qi / rho - ti / (rho * rho))
                    .collect()
            }
        }
    }
}

/// Scaled-form ADMM for `0.5 ||Ax - b||^2 + eta ||z||_1` subject to `x = z`.
/// Returns the (exactly sparse) `z` iterate.
pub fn admm_lasso_solve(
    inst: &ProblemInstance,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    if cfg.kind != SolverKind::Admm {
        return Err(LassoError::InvalidArgument(format!(
            "admm_lasso_solve called with a {:?} configuration",
            cfg.kind
        )));
    }
    if inst.kind() != LossKind::LeastSquaresHalf {
        return Err(LassoError::UnsupportedKind {
            solver: "ADMM",
            kind: inst.kind().name(),
        });
    }
    let start = Instant::now();
    let a = inst.matrix();
    let p = inst.dim();
    let rho = cfg.admm_rho;
    let factor = XUpdate::new(a, rho)?;
    let atb = a.tr_mul_vec(inst.target());

    let mut z = x0.to_vec();
    let mut u = vec![0.0; p];
    let mut q = vec![0.0; p];
    let sqrt_p = (p as f64).sqrt();
    let (abstol, reltol) = (cfg.tol, cfg.tol);
    let mut status = SolveStatus::MaxIterReached;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        for j in 0..p {
            q[j] = atb[j] + rho * (z[j] - u[j]);
        }
        let x = factor.apply(a, rho, &q);

        let mut r_sq = 0.0;
        let mut s_sq = 0.0;
        for j in 0..p {
            let z_old = z[j];
            z[j] = soft_threshold(x[j] + u[j], inst.penalty(j) / rho);
            u[j] += x[j] - z[j];
            r_sq += (x[j] - z[j]).powi(2);
            s_sq += (rho * (z[j] - z_old)).powi(2);
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(LassoError::Diverged(format!(
                "ADMM iterates became non-finite at iteration {iterations}"
            )));
        }
        let eps_pri = sqrt_p * abstol + reltol * norm2(&x).max(norm2(&z));
        let eps_dual = sqrt_p * abstol + reltol * rho * norm2(&u);
        if r_sq.sqrt() < eps_pri && s_sq.sqrt() < eps_dual {
            status = SolveStatus::Converged;
            break;
        }
    }

    let objective = inst.full_objective(&z)?;
    Ok(finish(inst, x0, z, objective, iterations, start, status))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(b: Vec<f64>) -> ProblemInstance {
        ProblemInstance::least_squares(DesignMatrix::identity(3), b, 1.0).unwrap()
    }

    #[test]
    fn orthonormal_closed_form() {
        let rep = admm_lasso_solve(
            &example(vec![3.0, 0.5, -2.0]),
            &[0.0; 3],
            &SolverConfig::tight(SolverKind::Admm),
        )
        .unwrap();
        for (got, want) in rep.x.iter().zip([2.0, 0.0, -1.0]) {
            assert!((got - want).abs() <= 1e-5, "{:?}", rep.x);
        }
        // z is exactly sparse
        assert_eq!(rep.x[1], 0.0);
    }

    #[test]
    fn zero_data_gives_zero() {
        let rep = admm_lasso_solve(&example(vec![0.0; 3]), &[0.0; 3], &SolverConfig::tight(SolverKind::Admm))
            .unwrap();
        assert_eq!(rep.x, vec![0.0; 3]);
    }

    #[test]
    fn wide_and_tall_factorizations_agree() {
        let a = DesignMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 2.0]).unwrap();
        let rho = 1.7;
        let q = [0.4, -1.2, 2.5];
        let wide = XUpdate::new(&a, rho).unwrap().apply(&a, rho, &q);
        let m = a.as_dmatrix();
        let g = m.tr_mul(m) + DMatrix::identity(3, 3) * rho;
        let direct = g.lu().solve(&DVector::from_column_slice(&q)).unwrap();
        for (w, d) in wide.iter().zip(direct.iter()) {
            assert!((w - d).abs() < 1e-12);
        }
    }
}
