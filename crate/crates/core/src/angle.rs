//! Numerical checks of the angle-boosting construction and the
//! spherical-cap probability behind the choice of `tau`.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::datagen::rng;
use crate::error::{LassoError, Result};
use crate::model::{axpy, dot, norm2};

const UNIT_TOL: f64 = 1e-12;
/// Residual norm below which a vector is treated as lying in a span.
const RANK_TOL: f64 = 1e-13;

/// A target direction `h` and unit vectors `q_1..q_p`, all in `R^s`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorFamily {
    h: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

impl VectorFamily {
    /// Requires every vector, `h` included, to be unit length within 1e-12.
    pub fn new(h: Vec<f64>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let s = h.len();
        if s == 0 {
            return Err(LassoError::InvalidArgument("empty target vector".into()));
        }
        for (i, v) in std::iter::once(&h).chain(&vectors).enumerate() {
            if v.len() != s {
                return Err(LassoError::DimensionMismatch(format!(
                    "vector {i} has length {}, expected {s}",
                    v.len()
                )));
            }
            let n = norm2(v);
            if (n - 1.0).abs() > UNIT_TOL {
                return Err(LassoError::InvalidArgument(format!("vector {i} has norm {n}")));
            }
        }
        Ok(Self { h, vectors })
    }

    /// Normalizes every input first.
    pub fn normalized(h: Vec<f64>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let unit = |v: Vec<f64>| -> Result<Vec<f64>> {
            let n = norm2(&v);
            if !(n > 0.0 && n.is_finite()) {
                return Err(LassoError::InvalidArgument("cannot normalize a zero vector".into()));
            }
            Ok(v.into_iter().map(|x| x / n).collect())
        };
        Self::new(unit(h)?, vectors.into_iter().map(unit).collect::<Result<_>>()?)
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn target(&self) -> &[f64] {
        &self.h
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// `min_i <q_i, h>`
    pub fn min_cosine(&self) -> f64 {
        self.vectors
            .iter()
            .map(|q| dot(q, &self.h))
            .fold(f64::INFINITY, f64::min)
    }
}

fn combine_raw(q1: &[f64], q2: &[f64]) -> Result<(Vec<f64>, f64)> {
    if q1.len() != q2.len() {
        return Err(LassoError::DimensionMismatch(format!(
            "pair of lengths {} and {}",
            q1.len(),
            q2.len()
        )));
    }
    let sum: Vec<f64> = q1.iter().zip(q2).map(|(a, b)| a + b).collect();
    let n = norm2(&sum);
    if n <= RANK_TOL {
        return Err(LassoError::Numerical("antipodal pair has no bisector".into()));
    }
    Ok((sum.into_iter().map(|x| x / n).collect(), n))
}

/// Unit bisector `(q1 + q2) / ||q1 + q2||`; equals `(q1 + q2) / sqrt(2)`
/// for orthogonal inputs.
pub fn pair_combine(q1: &[f64], q2: &[f64]) -> Result<Vec<f64>> {
    combine_raw(q1, q2).map(|(v, _)| v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoostResult {
    pub vector: Vec<f64>,
    /// Nonnegative weights over the original family; truncated members get 0.
    pub coefficients: Vec<f64>,
    /// Size of the power-of-two prefix actually combined.
    pub used: usize,
    pub rounds: usize,
}

impl BoostResult {
    pub fn cosine(&self, h: &[f64]) -> f64 {
        dot(&self.vector, h)
    }
}

/// Largest power of two not exceeding `p` (`p >= 1`).
pub fn power_of_two_prefix(p: usize) -> usize {
    1 << (usize::BITS - 1 - p.leading_zeros())
}

/// Truncates to the largest power-of-two prefix and combines sequential
/// pairs `(1,2), (3,4), ...` round by round until one vector remains.
pub fn angle_boost(fam: &VectorFamily) -> Result<BoostResult> {
    let p = fam.len();
    if p < 2 {
        return Err(LassoError::InvalidArgument(format!("need at least two vectors, got {p}")));
    }
    let used = power_of_two_prefix(p);
    let mut layer: Vec<(Vec<f64>, Vec<f64>)> = (0..used)
        .map(|i| {
            let mut c = vec![0.0; p];
            c[i] = 1.0;
            (fam.vectors[i].clone(), c)
        })
        .collect();
    let mut rounds = 0;
    while layer.len() > 1 {
        rounds += 1;
        let mut next = Vec::with_capacity(layer.len() / 2);
        for pair in layer.chunks_exact(2) {
            let (v, n) = combine_raw(&pair[0].0, &pair[1].0)?;
            let c = pair[0]
                .1
                .iter()
                .zip(&pair[1].1)
                .map(|(a, b)| (a + b) / n)
                .collect();
            next.push((v, c));
        }
        layer = next;
    }
    let (vector, coefficients) = layer.pop().expect("one vector remains");
    Ok(BoostResult {
        vector,
        coefficients,
        used,
        rounds,
    })
}

/// `(sqrt(3/2))^(log2 m - 1) * cos_theta` where `m` is the power-of-two
/// prefix of `p`.
pub fn boost_lower_bound(p: usize, cos_theta: f64) -> f64 {
    let rounds = power_of_two_prefix(p.max(1)).trailing_zeros() as i32;
    1.5f64.sqrt().powi(rounds - 1) * cos_theta
}

/// Orthonormal basis of the span of `vs`, skipping dependent vectors.
fn span_basis<'a>(vs: impl Iterator<Item = &'a Vec<f64>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vs {
        let mut r = v.clone();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &r);
                axpy(-c, b, &mut r);
            }
        }
        let n = norm2(&r);
        if n > RANK_TOL * norm2(v).max(1.0) {
            basis.push(r.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Distance from unit `v` to the span of `others`, i.e. the sine of the
/// angle between them.
pub fn height_over_span(v: &[f64], others: &[&Vec<f64>]) -> f64 {
    let basis = span_basis(others.iter().copied());
    let mut r = v.to_vec();
    for _ in 0..2 {
        for b in &basis {
            let c = dot(b, &r);
            axpy(-c, b, &mut r);
        }
    }
    norm2(&r)
}

/// Smallest sine between any `q_i` and the span of the other vectors. Every
/// subset of the others spans a subspace of that span, so this is also the
/// minimum over all subsets.
pub fn min_height(fam: &VectorFamily) -> f64 {
    (0..fam.len())
        .map(|i| {
            let others: Vec<&Vec<f64>> = fam
                .vectors
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v)
                .collect();
            height_over_span(&fam.vectors[i], &others)
        })
        .fold(f64::INFINITY, f64::min)
}

/// True iff every `q_i` makes an angle with sine at least `1 / (1 + eps)`
/// with the span of every subset of the remaining vectors.
pub fn volume_condition(fam: &VectorFamily, eps: f64) -> bool {
    fam.len() < 2 || min_height(fam) >= 1.0 / (1.0 + eps)
}

/// `(1/4) (2e)^(-c/2)`
pub fn cap_lower_bound(c: f64) -> f64 {
    0.25 * (2.0 * std::f64::consts::E).powf(-c / 2.0)
}

/// Monte Carlo estimate of `P(<u, e_1> >= sqrt(c / s))` for `u` uniform on
/// the unit sphere of `R^s`. The first coordinate is sampled directly as
/// `g / sqrt(g^2 + chi2_{s-1})`.
pub fn cap_probability_estimate(s: usize, c: f64, samples: usize, seed: u64) -> Result<f64> {
    if s < 2 {
        return Err(LassoError::InvalidArgument(format!("dimension must be at least 2, got {s}")));
    }
    if !(c > 0.0 && c < s as f64) {
        return Err(LassoError::InvalidArgument(format!("need 0 < c < s, got c = {c}, s = {s}")));
    }
    if samples == 0 {
        return Err(LassoError::InvalidArgument("need at least one sample".into()));
    }
    let chi = ChiSquared::new((s - 1) as f64)
        .map_err(|e| LassoError::InvalidArgument(format!("chi-squared: {e}")))?;
    let cut = (c / s as f64).sqrt();
    let mut r = rng(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let g: f64 = r.sample(StandardNormal);
        let rest = chi.sample(&mut r);
        if g / (g * g + rest).sqrt() >= cut {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn symmetric_pair_recovers_target() {
        let v = pair_combine(&[0.6, 0.8, 0.0], &[0.6, -0.8, 0.0]).unwrap();
        assert!(close(&v, &[1.0, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn orthogonal_pair() {
        let fam = VectorFamily::normalized(
            vec![1.0, 0.0, 0.0],
            vec![vec![0.5, 0.866025, 0.0], vec![0.5, -0.288675, 0.816497]],
        )
        .unwrap();
        let q = fam.vectors();
        let v = pair_combine(&q[0], &q[1]).unwrap();
        assert!(close(&v, &[0.707107, 0.408248, 0.577350], 1e-6));
        assert!((v[0] - 2f64.sqrt() * 0.5).abs() < 1e-6);
    }

    #[test]
    fn equal_pair_is_fixed_and_antipodal_fails() {
        let q = [0.0, 0.6, 0.8];
        assert!(close(&pair_combine(&q, &q).unwrap(), &q, 1e-15));
        assert!(pair_combine(&q, &[0.0, -0.6, -0.8]).is_err());
    }

    #[test]
    fn prefix_and_bound() {
        assert_eq!(power_of_two_prefix(3), 2);
        assert_eq!(power_of_two_prefix(16), 16);
        assert_eq!(power_of_two_prefix(17), 16);
        assert!((boost_lower_bound(16, 1.0) - 1.5f64.powf(1.5)).abs() < 1e-12);
        assert!((boost_lower_bound(2, 0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn three_vectors_use_two() {
        let fam = VectorFamily::new(
            vec![1.0, 0.0, 0.0],
            vec![vec![0.6, 0.8, 0.0], vec![0.6, -0.8, 0.0], vec![0.0, 0.0, 1.0]],
        )
        .unwrap();
        let out = angle_boost(&fam).unwrap();
        assert_eq!(out.used, 2);
        assert_eq!(out.coefficients[2], 0.0);
        assert!((out.cosine(fam.target()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn family_rejects_non_unit() {
        assert!(VectorFamily::new(vec![1.0, 0.0], vec![vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn duplicate_vectors_fail_volume_condition() {
        let fam = VectorFamily::new(
            vec![1.0, 0.0, 0.0],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]],
        )
        .unwrap();
        assert!(min_height(&fam) < 1e-12);
        assert!(!volume_condition(&fam, 10.0));
    }

    #[test]
    fn planar_cap() {
        // s = 2, c = 1: arc of half-angle pi/4 on each side of e_1
        let n = 200_000;
        let est = cap_probability_estimate(2, 1.0, n, 3).unwrap();
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((est - 0.25).abs() < 3.0 * sigma, "{est}");
    }

    #[test]
    fn cap_argument_checks() {
        assert!(cap_probability_estimate(4, 0.0, 10, 0).is_err());
        assert!(cap_probability_estimate(4, 4.0, 10, 0).is_err());
        assert!(cap_probability_estimate(1, 0.5, 10, 0).is_err());
    }
}
