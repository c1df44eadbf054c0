//! Matrix-free kernels: powers of a potential matrix and the action of a
//! CTMC transition matrix `exp(sQ)`.

use ndarray::{Array1, ArrayView1};

use crate::ctmc::CtmcModel;
use crate::error::{shape, Error, Result};
use crate::matrix::{Kernel, LinearOperator};

/// `ψ^m x` (or `(ψᵀ)^m x`) by repeated application, never forming `ψ^m`.
pub fn kernel_power_apply(psi: &Kernel, m: usize, x: ArrayView1<f64>, transpose: bool) -> Result<Array1<f64>> {
    if x.len() != psi.n() {
        return Err(shape(format!("vector of length {} for a {}x{} kernel", x.len(), psi.n(), psi.n())));
    }
    let mut out = x.to_owned();
    for _ in 0..m {
        out = psi.apply_dir(out.view(), transpose);
    }
    Ok(out)
}

/// `ψ^m` as an operator.
#[derive(Debug, Clone)]
pub struct KernelPower<'a> {
    pub psi: &'a Kernel,
    pub power: usize,
}

impl LinearOperator for KernelPower<'_> {
    fn dim(&self) -> usize {
        self.psi.n()
    }
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        kernel_power_apply(self.psi, self.power, x, false).expect("dimension checked by caller")
    }
    fn apply_transpose(&self, x: ArrayView1<f64>) -> Array1<f64> {
        kernel_power_apply(self.psi, self.power, x, true).expect("dimension checked by caller")
    }
}

// Uniformization parameter per sub-step; keeps e^{-λs} far from underflow.
const MAX_STEP_RATE: f64 = 30.0;
const TAIL_TOLERANCE: f64 = 1e-14;
const MAX_TERMS: usize = 10_000;

/// `exp(sQ) x`, or `exp(sQ)ᵀ x` when `transpose` is set.
///
/// Uniformization: with `λ = max_i |Q_ii|` and `P = I + Q/λ` (a stochastic
/// matrix), `exp(sQ) = Σ_m e^{-λs} (λs)^m / m! P^m`. All terms are
/// non-negative, so non-negative inputs give non-negative outputs. The
/// series is truncated once the remaining Poisson mass is below `1e-14`;
/// long horizons are split so each piece has `λs ≤ 30`.
///
/// The transposed action propagates distributions and preserves the sum
/// of a non-negative `x`.
pub fn expm_action(q: &CtmcModel, s: f64, x: ArrayView1<f64>, transpose: bool) -> Result<Array1<f64>> {
    if x.len() != q.n() {
        return Err(shape(format!("vector of length {} for a {}-state chain", x.len(), q.n())));
    }
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("time must be finite and >= 0, got {s}")));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("entry {i} of the input vector is not finite")));
    }
    let lambda = q.max_exit_rate();
    if s == 0.0 || lambda == 0.0 {
        return Ok(x.to_owned());
    }
    let total = lambda * s;
    let pieces = (total / MAX_STEP_RATE).ceil().max(1.0) as usize;
    let tau = total / pieces as f64;
    let rates = q.rates();
    let uniformized = |v: &Array1<f64>| -> Array1<f64> {
        let qv = if transpose { rates.matvec_transpose(v.view()) } else { rates.matvec(v.view()) };
        v + &(qv / lambda)
    };
    let mut out = x.to_owned();
    for _ in 0..pieces {
        let mut term = out.clone();
        let mut weight = (-tau).exp();
        let mut acc = &term * weight;
        let mut cumulative = weight;
        let mut k = 0usize;
        loop {
            k += 1;
            if k > MAX_TERMS {
                return Err(Error::Numeric(format!(
                    "uniformization series did not reach its error bound within {MAX_TERMS} terms"
                )));
            }
            term = uniformized(&term);
            weight *= tau / k as f64;
            cumulative += weight;
            acc.scaled_add(weight, &term);
            // geometric bound on the Poisson tail beyond k
            let ratio = tau / (k + 1) as f64;
            if ratio < 1.0 {
                let tail = weight * ratio / (1.0 - ratio);
                if tail <= TAIL_TOLERANCE * cumulative {
                    break;
                }
            }
        }
        out = acc;
    }
    Ok(out)
}

/// `exp(sQ)` as an operator.
#[derive(Debug, Clone)]
pub struct TransitionOperator<'a> {
    pub q: &'a CtmcModel,
    pub time: f64,
}

impl LinearOperator for TransitionOperator<'_> {
    fn dim(&self) -> usize {
        self.q.n()
    }
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        expm_action(self.q, self.time, x, false).expect("validated transition operator")
    }
    fn apply_transpose(&self, x: ArrayView1<f64>) -> Array1<f64> {
        expm_action(self.q, self.time, x, true).expect("validated transition operator")
    }
}
