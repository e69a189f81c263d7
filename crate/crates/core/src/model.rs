//! Problem instances for the Lagrangian Lasso and logistic Lasso.
//!
//! The objective is `F(x) = f(x) + eta * ||x||_1` where the smooth part `f` is
//! either `0.5 * ||Ax - b||^2` or the mean negative log-likelihood of a
//! logistic model with linear predictor `Ax`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LassoError, Result};

/// Dense design matrix stored column-major so that column access is contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    data: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn from_dmatrix(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(LassoError::InvalidArgument(
                "design matrix needs at least one row and one column".into(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LassoError::InvalidArgument(
                "design matrix has non-finite entries".into(),
            ));
        }
        Ok(Self { data })
    }

    pub fn from_row_slice(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(LassoError::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, values))
    }

    pub fn from_column_slice(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(LassoError::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Self::from_dmatrix(DMatrix::from_column_slice(rows, cols, values))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            data: DMatrix::identity(n, n),
        }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        let n = self.rows();
        &self.data.as_slice()[j * n..(j + 1) * n]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols()).map(|j| self.data[(i, j)]).collect()
    }

    /// `A x`, skipping zero coordinates of `x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols());
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(xj, self.col(j), out);
            }
        }
    }

    /// `A^T y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols()];
        self.tr_mul_vec_into(y, &mut out);
        out
    }

    pub fn tr_mul_vec_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows());
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(self.col(j), y);
        }
    }

    pub fn column_norms_sq(&self) -> Vec<f64> {
        (0..self.cols()).map(|j| dot(self.col(j), self.col(j))).collect()
    }

    /// Copy of the columns listed in `cols` (which must be strictly increasing).
    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        let n = self.rows();
        let mut values = Vec::with_capacity(n * cols.len());
        for &j in cols {
            values.extend_from_slice(self.col(j));
        }
        // a zero-width matrix is legal here: it backs the empty free set
        DesignMatrix {
            data: DMatrix::from_vec(n, cols.len(), values),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            data: self.data.select_rows(rows),
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `sign(z) * max(|z| - t, 0)`, the proximal map of `t|.|`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// `0.5 * ||Ax - b||^2`
    LeastSquaresHalf,
    /// mean negative log-likelihood of a logistic model with labels in {0, 1}
    LogisticNLL,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::LeastSquaresHalf => "least-squares",
            LossKind::LogisticNLL => "logistic",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    matrix: DesignMatrix,
    target: Vec<f64>,
    kind: LossKind,
    eta: f64,
    unpenalized: Option<usize>,
}

impl ProblemInstance {
    pub fn new(matrix: DesignMatrix, target: Vec<f64>, kind: LossKind, eta: f64) -> Result<Self> {
        if target.len() != matrix.rows() {
            return Err(LassoError::DimensionMismatch(format!(
                "target has length {} but the matrix has {} rows",
                target.len(),
                matrix.rows()
            )));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(LassoError::InvalidArgument(format!(
                "eta must be positive and finite, got {eta}"
            )));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(LassoError::InvalidArgument("target has non-finite entries".into()));
        }
        if kind == LossKind::LogisticNLL && target.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(LassoError::InvalidArgument(
                "logistic labels must be 0 or 1".into(),
            ));
        }
        Ok(Self {
            matrix,
            target,
            kind,
            eta,
            unpenalized: None,
        })
    }

    pub fn least_squares(matrix: DesignMatrix, b: Vec<f64>, eta: f64) -> Result<Self> {
        Self::new(matrix, b, LossKind::LeastSquaresHalf, eta)
    }

    pub fn logistic(matrix: DesignMatrix, y: Vec<f64>, eta: f64) -> Result<Self> {
        Self::new(matrix, y, LossKind::LogisticNLL, eta)
    }

    /// Exclude one column (typically an intercept column of ones) from the penalty.
    pub fn with_unpenalized(mut self, column: usize) -> Result<Self> {
        if column >= self.dim() {
            return Err(LassoError::InvalidArgument(format!(
                "unpenalized column {column} out of range"
            )));
        }
        self.unpenalized = Some(column);
        Ok(self)
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        let mut out = Self::new(self.matrix.clone(), self.target.clone(), self.kind, eta)?;
        out.unpenalized = self.unpenalized;
        Ok(out)
    }

    pub fn matrix(&self) -> &DesignMatrix {
        &self.matrix
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn unpenalized(&self) -> Option<usize> {
        self.unpenalized
    }

    /// Number of variables.
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn n_obs(&self) -> usize {
        self.matrix.rows()
    }

    /// Penalty weight applied to coordinate `j`.
    #[inline]
    pub fn penalty(&self, j: usize) -> f64 {
        if self.unpenalized == Some(j) {
            0.0
        } else {
            self.eta
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(LassoError::DimensionMismatch(format!(
                "vector has length {} but the problem has {} variables",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Smooth loss evaluated from a precomputed linear predictor `Ax`.
    pub fn smooth_value_from_margin(&self, ax: &[f64]) -> f64 {
        match self.kind {
            LossKind::LeastSquaresHalf => {
                0.5 * ax
                    .iter()
                    .zip(&self.target)
                    .map(|(p, b)| (p - b) * (p - b))
                    .sum::<f64>()
            }
            LossKind::LogisticNLL => {
                let n = self.n_obs() as f64;
                ax.iter()
                    .zip(&self.target)
                    .map(|(&m, &y)| softplus(m) - y * m)
                    .sum::<f64>()
                    / n
            }
        }
    }

    /// Per-row derivative of the smooth loss with respect to the margin.
    pub fn margin_residual(&self, ax: &[f64]) -> Vec<f64> {
        match self.kind {
            LossKind::LeastSquaresHalf => ax.iter().zip(&self.target).map(|(p, b)| p - b).collect(),
            LossKind::LogisticNLL => {
                let n = self.n_obs() as f64;
                ax.iter()
                    .zip(&self.target)
                    .map(|(&m, &y)| (sigmoid(m) - y) / n)
                    .collect()
            }
        }
    }

    pub fn gradient_from_margin(&self, ax: &[f64]) -> Vec<f64> {
        self.matrix.tr_mul_vec(&self.margin_residual(ax))
    }

    pub fn smooth_value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.smooth_value_from_margin(&self.matrix.mul_vec(x)))
    }

    pub fn smooth_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.gradient_from_margin(&self.matrix.mul_vec(x)))
    }

    pub fn penalty_value(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, v)| self.penalty(j) * v.abs())
            .sum()
    }

    pub fn full_objective(&self, x: &[f64]) -> Result<f64> {
        Ok(self.smooth_value(x)? + self.penalty_value(x))
    }

    pub(crate) fn objective_from_margin(&self, x: &[f64], ax: &[f64]) -> f64 {
        self.smooth_value_from_margin(ax) + self.penalty_value(x)
    }

    /// The instance over the columns in `free` only; pinned columns are deleted.
    pub fn restrict(&self, free: &[usize]) -> Result<ProblemInstance> {
        check_index_list(free, self.dim())?;
        let unpenalized = self
            .unpenalized
            .and_then(|u| free.iter().position(|&j| j == u));
        Ok(ProblemInstance {
            matrix: self.matrix.select_columns(free),
            target: self.target.clone(),
            kind: self.kind,
            eta: self.eta,
            unpenalized,
        })
    }

    /// Row subset, used for train/validation and fold splits.
    pub fn select_rows(&self, rows: &[usize]) -> Result<ProblemInstance> {
        let mut out = Self::new(
            self.matrix.select_rows(rows),
            rows.iter().map(|&i| self.target[i]).collect(),
            self.kind,
            self.eta,
        )?;
        out.unpenalized = self.unpenalized;
        Ok(out)
    }
}

/// Checks that `idx` is strictly increasing and within `[0, dim)`.
pub fn check_index_list(idx: &[usize], dim: usize) -> Result<()> {
    if let Some(&last) = idx.last() {
        if last >= dim {
            return Err(LassoError::ContractViolation(format!(
                "index {last} out of range for dimension {dim}"
            )));
        }
    }
    if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LassoError::ContractViolation(
            "index list must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Scatter `x_free` into a zero vector of length `dim` at the positions `free`.
pub fn embed(x_free: &[f64], free: &[usize], dim: usize) -> Result<Vec<f64>> {
    if x_free.len() != free.len() {
        return Err(LassoError::DimensionMismatch(format!(
            "{} values for {} free indices",
            x_free.len(),
            free.len()
        )));
    }
    check_index_list(free, dim)?;
    let mut x = vec![0.0; dim];
    for (&j, &v) in free.iter().zip(x_free) {
        x[j] = v;
    }
    Ok(x)
}

/// Gather the coordinates of `x` listed in `free`.
pub fn gather(x: &[f64], free: &[usize]) -> Vec<f64> {
    free.iter().map(|&j| x[j]).collect()
}

/// `ln(1 + e^m)` without overflow.
#[inline]
pub fn softplus(m: f64) -> f64 {
    if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}
