use ndarray::Array1;

use crate::error::{domain, Result};
use crate::histogram::Histogram;

/// Barycenter of the two end-point masses on a line.
#[derive(Debug, Clone, PartialEq)]
pub enum WbLineSolution {
    Unique(Histogram),
    /// Every histogram of mass `F` is optimal.
    NonUnique,
}

impl WbLineSolution {
    pub fn unique(&self) -> Option<&Histogram> {
        match self {
            WbLineSolution::Unique(h) => Some(h),
            WbLineSolution::NonUnique => None,
        }
    }
}

/// Closed-form Wasserstein barycenter of `a = F e_1` and `b = F e_n`
/// with weights `(1 - t, t)` under the cost `|i - j|`.
///
/// For `ε > 0` the cells get softmax weights `exp(-k_i / ε)` with
/// `k_i = (1 - 2t) i + t n + t - 1` (1-based `i`). The form assumes the
/// optimum is interior, which holds because every weight is positive.
pub fn analytic_wb_line(n: usize, mass: f64, t: f64, epsilon: f64) -> Result<WbLineSolution> {
    if n < 2 {
        return Err(domain(format!("line needs at least 2 cells, got {n}")));
    }
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(domain(format!("mass must be positive, got {mass}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(domain(format!("t must lie in [0, 1], got {t}")));
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(domain(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    if epsilon == 0.0 {
        return Ok(if t < 0.5 {
            WbLineSolution::Unique(Histogram::point_mass(n, 0, mass)?)
        } else if t > 0.5 {
            WbLineSolution::Unique(Histogram::point_mass(n, n - 1, mass)?)
        } else {
            WbLineSolution::NonUnique
        });
    }
    let nf = n as f64;
    let logits: Vec<f64> = (1..=n).map(|i| -((1.0 - 2.0 * t) * i as f64 + t * nf + t - 1.0) / epsilon).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Array1<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total = weights.sum();
    Ok(WbLineSolution::Unique(Histogram::new(weights * (mass / total))?))
}
