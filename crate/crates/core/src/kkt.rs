//! Subgradient intervals of `F`, the eligibility rule for pinned variables and
//! the global KKT residual.
//!
//! For a separable l1 penalty the subdifferential at `x` is a box: coordinate
//! `i` contributes the single value `df/dx_i + sign(x_i) * eta` when `x_i != 0`
//! and the interval `[df/dx_i - eta, df/dx_i + eta]` when `x_i == 0`. A pinned
//! coordinate can be released with a strict objective decrease exactly when
//! zero falls outside its interval, i.e. when `|df/dx_i| > eta`.

use crate::driver::ActiveSet;
use crate::error::{LassoError, Result};
use crate::model::ProblemInstance;

#[derive(Clone, Debug, PartialEq)]
pub struct SubgradientBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SubgradientBox {
    pub fn interval(&self, i: usize) -> (f64, f64) {
        (self.lo[i], self.hi[i])
    }

    pub fn contains_zero(&self, i: usize) -> bool {
        self.lo[i] <= 0.0 && 0.0 <= self.hi[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EligibleEntry {
    pub index: usize,
    pub magnitude: f64,
}

/// Eligible pinned indices, largest gradient magnitude first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EligibilityReport {
    pub entries: Vec<EligibleEntry>,
}

impl EligibilityReport {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }

    /// The `k` largest entries.
    pub fn top(&self, k: usize) -> &[EligibleEntry] {
        &self.entries[..k.min(self.entries.len())]
    }
}

pub fn subgradient_box(inst: &ProblemInstance, x: &[f64]) -> Result<SubgradientBox> {
    let grad = inst.smooth_gradient(x)?;
    Ok(box_from_gradient(inst, x, &grad))
}

pub fn box_from_gradient(inst: &ProblemInstance, x: &[f64], grad: &[f64]) -> SubgradientBox {
    let (lo, hi) = x
        .iter()
        .zip(grad)
        .enumerate()
        .map(|(i, (&xi, &g))| {
            let eta = inst.penalty(i);
            if xi > 0.0 {
                (g + eta, g + eta)
            } else if xi < 0.0 {
                (g - eta, g - eta)
            } else {
                (g - eta, g + eta)
            }
        })
        .unzip();
    SubgradientBox { lo, hi }
}

/// Pinned indices `j` with `|df/dx_j| > eta * (1 + slack)`, sorted by magnitude
/// descending with ties broken by ascending index.
pub fn eligibility(
    inst: &ProblemInstance,
    x: &[f64],
    active: &ActiveSet,
    slack: f64,
) -> Result<EligibilityReport> {
    let grad = inst.smooth_gradient(x)?;
    eligibility_from_gradient(inst, x, &grad, active, slack)
}

pub fn eligibility_from_gradient(
    inst: &ProblemInstance,
    x: &[f64],
    grad: &[f64],
    active: &ActiveSet,
    slack: f64,
) -> Result<EligibilityReport> {
    if slack < 0.0 {
        return Err(LassoError::InvalidArgument("slack must be non-negative".into()));
    }
    if let Some(&j) = active.indices().iter().find(|&&j| x[j] != 0.0) {
        return Err(LassoError::ContractViolation(format!(
            "coordinate {j} is pinned but has value {}",
            x[j]
        )));
    }
    let mut entries: Vec<EligibleEntry> = active
        .indices()
        .iter()
        .filter_map(|&j| {
            let magnitude = grad[j].abs();
            (magnitude > inst.penalty(j) * (1.0 + slack)).then_some(EligibleEntry {
                index: j,
                magnitude,
            })
        })
        .collect();
    entries.sort_by(|a, b| {
        b.magnitude
            .total_cmp(&a.magnitude)
            .then(a.index.cmp(&b.index))
    });
    Ok(EligibilityReport { entries })
}

/// Largest per-coordinate violation of `0 in dF(x)`.
pub fn kkt_residual(inst: &ProblemInstance, x: &[f64]) -> Result<f64> {
    let grad = inst.smooth_gradient(x)?;
    Ok(kkt_residual_from_gradient(inst, x, &grad))
}

pub fn kkt_residual_from_gradient(inst: &ProblemInstance, x: &[f64], grad: &[f64]) -> f64 {
    x.iter()
        .zip(grad)
        .enumerate()
        .map(|(i, (&xi, &g))| {
            let eta = inst.penalty(i);
            if xi != 0.0 {
                (g + xi.signum() * eta).abs()
            } else {
                (g.abs() - eta).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn is_optimal(inst: &ProblemInstance, x: &[f64], tol: f64) -> Result<bool> {
    Ok(kkt_residual(inst, x)? <= tol)
}
