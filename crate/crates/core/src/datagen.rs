//! Synthetic data generators and column standardization.
//!
//! Every generator is a deterministic function of its shape parameters and a
//! 64-bit seed; the seed is stored on the returned [`Dataset`].

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LassoError, Result};
use crate::model::{sigmoid, DesignMatrix, LossKind, ProblemInstance};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Noise variance used for compressed-sensing observations.
pub const CS_NOISE_VARIANCE: f64 = 1e-4;
/// Noise variance of the uniform-design regression generator.
pub const REGRESSION_NOISE_VARIANCE: f64 = 0.1;
/// Target `Var(Az) / Var(noise)` of the correlated-design generator.
pub const CORRELATED_SNR: f64 = 3.0;

#[derive(Clone, Debug)]
pub struct Dataset {
    pub design: DesignMatrix,
    pub response: Vec<f64>,
    pub kind: LossKind,
    pub ground_truth: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(design: DesignMatrix, response: Vec<f64>, kind: LossKind) -> Result<Self> {
        if response.len() != design.rows() {
            return Err(LassoError::DimensionMismatch(format!(
                "response has length {} for {} rows",
                response.len(),
                design.rows()
            )));
        }
        Ok(Self {
            design,
            response,
            kind,
            ground_truth: None,
            seed: None,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.design.rows()
    }

    pub fn dim(&self) -> usize {
        self.design.cols()
    }

    pub fn instance(&self, eta: f64) -> Result<ProblemInstance> {
        ProblemInstance::new(self.design.clone(), self.response.clone(), self.kind, eta)
    }

    /// Row subset; the ground truth and seed carry over.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            design: self.design.select_rows(rows),
            response: rows.iter().map(|&i| self.response[i]).collect(),
            kind: self.kind,
            ground_truth: self.ground_truth.clone(),
            seed: self.seed,
        }
    }

    /// First half for training, second half for validation.
    pub fn split_halves(&self) -> (Dataset, Dataset) {
        let n = self.n_obs();
        let mid = n / 2;
        let first: Vec<usize> = (0..mid).collect();
        let second: Vec<usize> = (mid..n).collect();
        (self.select_rows(&first), self.select_rows(&second))
    }
}

fn gaussian_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> DMatrix<f64> {
    // filled row by row so that the stream order does not depend on storage
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Orthonormalizes the rows of a `k x n` matrix (`k <= n`) by Cholesky QR of
/// the transpose, applied twice.
pub fn orthonormalize_rows(mut m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    for _ in 0..2 {
        let gram = &m * m.transpose();
        let chol = gram.cholesky().ok_or_else(|| {
            LassoError::Numerical("rows are linearly dependent; cannot orthonormalize".into())
        })?;
        let k = m.nrows();
        let l_inv = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(k, k))
            .ok_or_else(|| LassoError::Numerical("singular Cholesky factor".into()))?;
        m = l_inv * m;
    }
    Ok(m)
}

fn check_ensemble_shape(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(LassoError::InvalidArgument(format!(
            "ensemble needs 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    Ok(())
}

/// `n x d` matrix with iid standard normal entries.
pub fn gaussian_design(n: usize, d: usize, seed: u64) -> Result<DesignMatrix> {
    if n == 0 || d == 0 {
        return Err(LassoError::InvalidArgument(format!("empty shape {n} x {d}")));
    }
    DesignMatrix::from_dmatrix(gaussian_matrix(&mut rng(seed), n, d))
}

/// `k x n` matrix with iid standard normal entries and orthonormalized rows.
pub fn gaussian_ensemble(k: usize, n: usize, seed: u64) -> Result<DesignMatrix> {
    check_ensemble_shape(k, n)?;
    let raw = gaussian_matrix(&mut rng(seed), k, n);
    DesignMatrix::from_dmatrix(orthonormalize_rows(raw)?)
}

/// The `+-1` matrix drawn before orthonormalization in [`binary_ensemble`].
pub fn binary_ensemble_raw(k: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    check_ensemble_shape(k, n)?;
    let mut rng = rng(seed);
    let mut m = DMatrix::zeros(k, n);
    for i in 0..k {
        for j in 0..n {
            m[(i, j)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    }
    Ok(m)
}

/// `k x n` matrix with iid `+-1` entries and orthonormalized rows.
pub fn binary_ensemble(k: usize, n: usize, seed: u64) -> Result<DesignMatrix> {
    DesignMatrix::from_dmatrix(orthonormalize_rows(binary_ensemble_raw(k, n, seed)?)?)
}

/// Length-`n` vector with `s` nonzeros at uniformly chosen positions, each
/// `+1` or `-1` with equal probability.
pub fn spike_signal(n: usize, s: usize, seed: u64) -> Result<Vec<f64>> {
    if s > n {
        return Err(LassoError::InvalidArgument(format!(
            "cannot place {s} spikes in {n} coordinates"
        )));
    }
    let mut rng = rng(seed);
    let mut z = vec![0.0; n];
    for j in sample(&mut rng, n, s) {
        z[j] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    Ok(z)
}

/// `A z + noise` with iid Gaussian noise of the given variance.
pub fn observe(a: &DesignMatrix, z: &[f64], variance: f64, seed: u64) -> Result<Vec<f64>> {
    if z.len() != a.cols() {
        return Err(LassoError::DimensionMismatch(format!(
            "signal has length {} for {} columns",
            z.len(),
            a.cols()
        )));
    }
    if !(variance >= 0.0) {
        return Err(LassoError::InvalidArgument("variance must be non-negative".into()));
    }
    let mut b = a.mul_vec(z);
    if variance > 0.0 {
        let sd = variance.sqrt();
        let mut rng = rng(seed);
        for v in &mut b {
            let e: f64 = rng.sample(StandardNormal);
            *v += sd * e;
        }
    }
    Ok(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    Gaussian,
    Binary,
}

/// Compressed-sensing instance: ensemble matrix, spike signal and noisy
/// observations. Sub-seeds for the three draws are derived from `seed`.
pub fn compressed_sensing_dataset(
    ensemble: Ensemble,
    k: usize,
    n: usize,
    s: usize,
    variance: f64,
    seed: u64,
) -> Result<Dataset> {
    let seeds = derive_seeds(seed, 3);
    let a = match ensemble {
        Ensemble::Gaussian => gaussian_ensemble(k, n, seeds[0])?,
        Ensemble::Binary => binary_ensemble(k, n, seeds[0])?,
    };
    let z = spike_signal(n, s, seeds[1])?;
    let b = observe(&a, &z, variance, seeds[2])?;
    let mut ds = Dataset::new(a, b, LossKind::LeastSquaresHalf)?;
    ds.ground_truth = Some(z);
    ds.seed = Some(seed);
    Ok(ds)
}

/// Uniform `[0, 1]` design, `s` coordinates of the truth drawn uniform
/// `[0, 1]`, noise of variance `variance`.
pub fn noisy_regression_dataset_with_variance(
    n: usize,
    d: usize,
    s: usize,
    variance: f64,
    seed: u64,
) -> Result<Dataset> {
    if s > d {
        return Err(LassoError::InvalidArgument(format!("s = {s} exceeds d = {d}")));
    }
    let seeds = derive_seeds(seed, 3);
    let mut r = rng(seeds[0]);
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        values.push(r.random::<f64>());
    }
    let a = DesignMatrix::from_row_slice(n, d, &values)?;
    let mut r = rng(seeds[1]);
    let mut z = vec![0.0; d];
    for j in sample(&mut r, d, s) {
        z[j] = r.random::<f64>();
    }
    let b = observe(&a, &z, variance, seeds[2])?;
    let mut ds = Dataset::new(a, b, LossKind::LeastSquaresHalf)?;
    ds.ground_truth = Some(z);
    ds.seed = Some(seed);
    Ok(ds)
}

pub fn noisy_regression_dataset(n: usize, d: usize, s: usize, seed: u64) -> Result<Dataset> {
    noisy_regression_dataset_with_variance(n, d, s, REGRESSION_NOISE_VARIANCE, seed)
}

/// `z_j = (-1)^j exp(-2 (j - 1) / 20)` for 1-based `j`.
pub fn correlated_truth(d: usize) -> Vec<f64> {
    (1..=d)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * (-2.0 * (j as f64 - 1.0) / 20.0).exp()
        })
        .collect()
}

/// Gaussian design with population correlation `rho` between every pair of
/// columns (`a_ij = sqrt(rho) g_i + sqrt(1 - rho) e_ij`), truth from
/// [`correlated_truth`] and noise scaled so that the empirical
/// `Var(Az) / Var(noise)` equals 3.
pub fn correlated_dataset(n: usize, d: usize, rho: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&rho) {
        return Err(LassoError::InvalidArgument(format!("rho must lie in [0, 1), got {rho}")));
    }
    if n < 2 {
        return Err(LassoError::InvalidArgument("need at least two rows".into()));
    }
    let seeds = derive_seeds(seed, 2);
    let mut r = rng(seeds[0]);
    let (shared, own) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        let g: f64 = r.sample(StandardNormal);
        for _ in 0..d {
            let e: f64 = r.sample(StandardNormal);
            values.push(shared * g + own * e);
        }
    }
    let a = DesignMatrix::from_row_slice(n, d, &values)?;
    let z = correlated_truth(d);
    let signal = a.mul_vec(&z);
    let mut r = rng(seeds[1]);
    let noise: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let k = (variance(&signal) / (CORRELATED_SNR * variance(&noise))).sqrt();
    let b = signal.iter().zip(&noise).map(|(s, e)| s + k * e).collect();
    let mut ds = Dataset::new(a, b, LossKind::LeastSquaresHalf)?;
    ds.ground_truth = Some(z);
    ds.seed = Some(seed);
    Ok(ds)
}

/// Gaussian design, `s`-sparse `+-1` truth, labels drawn Bernoulli with
/// probability `sigmoid(a_i^T z)`.
pub fn synthetic_logistic_dataset(n: usize, d: usize, s: usize, seed: u64) -> Result<Dataset> {
    if s > d {
        return Err(LassoError::InvalidArgument(format!("s = {s} exceeds d = {d}")));
    }
    let seeds = derive_seeds(seed, 3);
    let a = DesignMatrix::from_dmatrix(gaussian_matrix(&mut rng(seeds[0]), n, d))?;
    let z = spike_signal(d, s, seeds[1])?;
    let margin = a.mul_vec(&z);
    let mut r = rng(seeds[2]);
    let y = margin
        .iter()
        .map(|&m| if r.random::<f64>() < sigmoid(m) { 1.0 } else { 0.0 })
        .collect();
    let mut ds = Dataset::new(a, y, LossKind::LogisticNLL)?;
    ds.ground_truth = Some(z);
    ds.seed = Some(seed);
    Ok(ds)
}

/// Independent sub-seeds drawn from a generator seeded with `seed`.
pub fn derive_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut r = rng(seed);
    (0..count).map(|_| r.random()).collect()
}

/// Population variance (divides by `n`).
pub fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    /// Indices (into the original columns) that were kept.
    pub retained: Vec<usize>,
    /// Columns dropped because their training standard deviation is zero.
    pub dropped: Vec<usize>,
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
    pub response_mean: f64,
}

/// Centers and scales every training column to mean 0 and (population)
/// standard deviation 1, centers the training response, and applies the same
/// training parameters to `others`. Constant training columns are dropped
/// everywhere. Ground truth is cleared since it no longer matches the columns.
pub fn standardize(
    train: &Dataset,
    others: &[Dataset],
) -> Result<(Vec<Dataset>, StandardizationParams)> {
    let d = train.dim();
    if let Some(o) = others.iter().find(|o| o.dim() != d) {
        return Err(LassoError::DimensionMismatch(format!(
            "dataset has {} columns, training set has {d}",
            o.dim()
        )));
    }
    let mut retained = Vec::new();
    let mut dropped = Vec::new();
    let mut column_means = Vec::new();
    let mut column_sds = Vec::new();
    for j in 0..d {
        let col = train.design.col(j);
        let m = mean(col);
        let sd = variance(col).sqrt();
        if sd <= 1e-14 * m.abs().max(1.0) {
            dropped.push(j);
        } else {
            retained.push(j);
            column_means.push(m);
            column_sds.push(sd);
        }
    }
    if retained.is_empty() {
        return Err(LassoError::InvalidArgument("every training column is constant".into()));
    }
    let response_mean = match train.kind {
        LossKind::LeastSquaresHalf => mean(&train.response),
        LossKind::LogisticNLL => 0.0,
    };
    let params = StandardizationParams {
        retained,
        dropped,
        column_means,
        column_sds,
        response_mean,
    };
    let out = std::iter::once(train)
        .chain(others)
        .map(|ds| apply_standardization(ds, &params))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, params))
}

pub fn apply_standardization(ds: &Dataset, params: &StandardizationParams) -> Result<Dataset> {
    let n = ds.n_obs();
    let mut values = Vec::with_capacity(n * params.retained.len());
    for ((&j, &m), &sd) in params
        .retained
        .iter()
        .zip(&params.column_means)
        .zip(&params.column_sds)
    {
        values.extend(ds.design.col(j).iter().map(|v| (v - m) / sd));
    }
    let design = DesignMatrix::from_column_slice(n, params.retained.len(), &values)?;
    let response = ds.response.iter().map(|v| v - params.response_mean).collect();
    Ok(Dataset {
        design,
        response,
        kind: ds.kind,
        ground_truth: None,
        seed: ds.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_gram_error(a: &DesignMatrix) -> f64 {
        let m = a.as_dmatrix();
        let g = m * m.transpose();
        let k = g.nrows();
        (g - DMatrix::<f64>::identity(k, k)).amax()
    }

    #[test]
    fn small_ensembles_are_orthonormal() {
        for seed in 0..5 {
            assert!(max_gram_error(&gaussian_ensemble(2, 4, seed).unwrap()) <= 1e-12);
            assert!(max_gram_error(&binary_ensemble(3, 7, seed).unwrap()) <= 1e-12);
        }
    }

    #[test]
    fn ensembles_are_deterministic() {
        assert_eq!(gaussian_ensemble(5, 9, 7).unwrap(), gaussian_ensemble(5, 9, 7).unwrap());
        assert_ne!(gaussian_ensemble(5, 9, 7).unwrap(), gaussian_ensemble(5, 9, 8).unwrap());
    }

    #[test]
    fn ensemble_shape_errors() {
        assert!(gaussian_ensemble(5, 4, 0).is_err());
        assert!(binary_ensemble(0, 4, 0).is_err());
    }

    #[test]
    fn binary_raw_entries_are_balanced_signs() {
        let (k, n) = (64, 256);
        let raw = binary_ensemble_raw(k, n, 11).unwrap();
        assert!(raw.iter().all(|&v| v == 1.0 || v == -1.0));
        let positives = raw.iter().filter(|&&v| v > 0.0).count() as f64;
        let total = (k * n) as f64;
        let sigma = (total * 0.25).sqrt();
        assert!((positives - total / 2.0).abs() <= 5.0 * sigma);
    }

    #[test]
    fn spikes() {
        let z = spike_signal(8, 3, 4).unwrap();
        assert_eq!(z.iter().filter(|v| **v != 0.0).count(), 3);
        assert!(z.iter().all(|&v| v == 0.0 || v.abs() == 1.0));
        assert_eq!(z.iter().map(|v| v.abs()).sum::<f64>(), 3.0);
        assert_eq!(spike_signal(8, 0, 4).unwrap(), vec![0.0; 8]);
        assert!(spike_signal(3, 4, 0).is_err());
    }

    #[test]
    fn noiseless_observation_is_exact() {
        let a = gaussian_ensemble(4, 10, 1).unwrap();
        let z = spike_signal(10, 2, 2).unwrap();
        assert_eq!(observe(&a, &z, 0.0, 3).unwrap(), a.mul_vec(&z));
    }

    #[test]
    fn observation_noise_has_target_variance() {
        let a = DesignMatrix::from_row_slice(100_000, 1, &vec![1.0; 100_000]).unwrap();
        let b = observe(&a, &[0.0], CS_NOISE_VARIANCE, 5).unwrap();
        let v = variance(&b);
        assert!((v / CS_NOISE_VARIANCE - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn regression_generator() {
        let ds = noisy_regression_dataset_with_variance(20, 50, 5, 0.0, 3).unwrap();
        assert!(ds.design.as_dmatrix().iter().all(|&v| (0.0..1.0).contains(&v)));
        let z = ds.ground_truth.as_ref().unwrap();
        assert_eq!(z.iter().filter(|v| **v != 0.0).count(), 5);
        assert_eq!(ds.response, ds.design.mul_vec(z));
        assert!(noisy_regression_dataset(5, 3, 4, 0).is_err());
    }

    #[test]
    fn correlated_truth_values() {
        let z = correlated_truth(3);
        assert_eq!(z[0], -1.0);
        assert!((z[1] - 0.904837).abs() < 1e-6);
        assert!((z[2] + 0.818731).abs() < 1e-6);
    }

    #[test]
    fn correlated_snr_is_exact_on_sample() {
        let ds = correlated_dataset(500, 10, 0.5, 9).unwrap();
        let signal = ds.design.mul_vec(ds.ground_truth.as_ref().unwrap());
        let noise: Vec<f64> = ds.response.iter().zip(&signal).map(|(b, s)| b - s).collect();
        let snr = variance(&signal) / variance(&noise);
        assert!((snr - 3.0).abs() < 1e-9);
        assert!(correlated_dataset(10, 3, 1.0, 0).is_err());
        assert!(correlated_dataset(10, 3, -0.1, 0).is_err());
    }

    #[test]
    fn logistic_generator_is_deterministic() {
        let a = synthetic_logistic_dataset(30, 8, 2, 1).unwrap();
        let b = synthetic_logistic_dataset(30, 8, 2, 1).unwrap();
        assert_eq!(a.design, b.design);
        assert_eq!(a.response, b.response);
        assert!(a.response.iter().all(|&y| y == 0.0 || y == 1.0));
    }

    #[test]
    fn standardize_training_and_validation() {
        let train = noisy_regression_dataset(40, 6, 2, 1).unwrap();
        let val = noisy_regression_dataset(30, 6, 2, 2).unwrap();
        let (out, params) = standardize(&train, &[val.clone()]).unwrap();
        for j in 0..out[0].dim() {
            let col = out[0].design.col(j);
            assert!(mean(col).abs() <= 1e-12);
            assert!((variance(col).sqrt() - 1.0).abs() <= 1e-12);
        }
        assert!(mean(&out[0].response).abs() <= 1e-12);
        // validation uses the training parameters
        let j = 3;
        let expect = (val.design.get(0, j) - params.column_means[j]) / params.column_sds[j];
        assert!((out[1].design.get(0, j) - expect).abs() < 1e-14);
        assert!((out[1].response[0] - (val.response[0] - params.response_mean)).abs() < 1e-14);
    }

    #[test]
    fn standardize_drops_constant_columns() {
        let a = DesignMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 4.0, 5.0]).unwrap();
        let ds = Dataset::new(a, vec![1.0, 2.0, 3.0], LossKind::LeastSquaresHalf).unwrap();
        let (out, params) = standardize(&ds, &[]).unwrap();
        assert_eq!(params.dropped, vec![1]);
        assert_eq!(out[0].dim(), 1);
    }

    #[test]
    fn standardize_is_idempotent() {
        let ds = noisy_regression_dataset(50, 5, 2, 4).unwrap();
        let (once, _) = standardize(&ds, &[]).unwrap();
        let (_, params) = standardize(&once[0], &[]).unwrap();
        assert!(params.column_means.iter().all(|m| m.abs() < 1e-12));
        assert!(params.column_sds.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!(params.response_mean.abs() < 1e-12);
    }
}
