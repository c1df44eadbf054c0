//! Histogram interpolation as MAP inference in a path-structured CGM.
//!
//! Given endpoint histograms `a` (time 0) and `b` (time 1), the interior
//! histogram `c` minimizes
//! `Σ_s Σ_ij (T_sij log T_sij - T_sij log φ_sij) - Σ_i c_i log c_i`
//! subject to `T₁1 = a`, `T₁ᵀ1 = c`, `T₂1 = c`, `T₂ᵀ1 = b`.
//! The two potentials are either powers of a path kernel
//! (`φ₁ = ψ^(k-1)`, `φ₂ = ψ^(N-k)`) or CTMC transition matrices
//! (`φ₁ = exp(tQ)`, `φ₂ = exp((1-t)Q)`).

mod kernels;
mod path;

pub use kernels::{expm_action, kernel_power_apply, KernelPower, TransitionOperator};
pub use path::{
    interpolate_all_k, interpolate_path, interpolate_path_loopy, InterpolationResult, PathInterpolationProblem,
    PathKernel,
};
