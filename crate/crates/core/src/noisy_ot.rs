//! Transport between noisy histograms.
//!
//! The observed histograms `α = a/F`, `β = b/F` are treated as noisy views
//! of the plan marginals. The solver minimizes
//! `G_C^1(τ) + A(τ1) + B(τᵀ1)` over `τ ≥ 0`, where each penalty is the
//! per-sample negative log likelihood of the observation:
//!
//! | noise          | penalty `A(x)`                          |
//! |----------------|-----------------------------------------|
//! | Gaussian `σ`   | `(1/2σ²) ‖α - x‖²`                      |
//! | Poisson        | `KL̃(α ‖ x) = Σ α log(α/x) - α + x`      |
//! | exact marginal | `0` if `x = α`, `+∞` otherwise          |
//!
//! The Gaussian form keeps the `1/(2σ²)` factor; the limit that drops it is
//! a misprint of the same derivation.
//!
//! Minimization is by generalized scaling with KL proximal steps on the
//! kernel `e^{-1} exp(-C)`. The `e^{-1}` factor accounts for the `Σ τ` term
//! separating `G_C^1(τ)` from `KL̃(τ ‖ exp(-C))`; with exact marginals on
//! both sides it cancels and the iterates reproduce Sinkhorn at `ε = 1`.

use ndarray::{Array1, Array2, ArrayView1};
use std::f64::consts::PI;

use crate::entropic_ot::transport_cost_entries;
use crate::error::{domain, shape, Error, Result};
use crate::histogram::Histogram;
use crate::matrix::CostMatrix;
use crate::numeric::{guarded_div, max_relative_change};
use crate::options::{Scalings, SolveReport, SolverOptions};
use crate::plan::TransportPlan;

/// Observation noise on one marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// `a_i ~ N(ā_i, F σ²)`. `σ = +∞` gives the zero penalty.
    Gaussian { sigma: f64 },
    /// `a_i ~ Poisson(ā_i)`.
    Poisson,
    /// Noiseless observation: a hard marginal constraint.
    ExactMarginal,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { sigma } if !(sigma > 0.0) => {
                Err(Error::Config(format!("gaussian sigma must be > 0, got {sigma}")))
            }
            _ => Ok(()),
        }
    }
}

/// A noise model bound to its observed (per-sample) histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalPenalty {
    model: NoiseModel,
    observed: Array1<f64>,
}

const SLACK: f64 = 1e-8;

impl MarginalPenalty {
    pub fn new(model: NoiseModel, observed: ArrayView1<f64>) -> Result<Self> {
        model.validate()?;
        if let Some((i, v)) = observed.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(domain(format!("observation entry {i} = {v} must be finite and >= 0")));
        }
        Ok(Self { model, observed: observed.to_owned() })
    }

    pub fn model(&self) -> NoiseModel {
        self.model
    }

    pub fn observed(&self) -> ArrayView1<'_, f64> {
        self.observed.view()
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// Penalty value `A(x)` in its large-`F` form. Exact marginals accept
    /// a violation of up to `1e-8 · max(1, Σα)` in max-norm.
    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        let alpha = &self.observed;
        match self.model {
            NoiseModel::Gaussian { sigma } => {
                if sigma.is_infinite() {
                    return 0.0;
                }
                let ss: f64 = alpha.iter().zip(x.iter()).map(|(a, x)| (a - x).powi(2)).sum();
                ss / (2.0 * sigma * sigma)
            }
            NoiseModel::Poisson => alpha.iter().zip(x.iter()).map(|(&a, &x)| generalized_kl_term(a, x)).sum(),
            NoiseModel::ExactMarginal => {
                let tol = SLACK * alpha.sum().max(1.0);
                let ok = alpha.iter().zip(x.iter()).all(|(a, x)| (a - x).abs() <= tol);
                if ok {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Finite-`F` penalty `-(1/F) log Pr(Fα | Fx)`. The Gaussian form keeps
    /// its normalization constant `(n/2F) log(2πFσ²)`; the Poisson form
    /// applies Stirling's formula to the log-factorials and so coincides
    /// with the large-`F` form.
    pub fn value_finite(&self, x: ArrayView1<f64>, mass: f64) -> f64 {
        let base = self.value(x);
        match self.model {
            NoiseModel::Gaussian { sigma } if sigma.is_finite() => {
                let n = self.observed.len() as f64;
                base + n * (2.0 * PI * mass * sigma * sigma).ln() / (2.0 * mass)
            }
            _ => base,
        }
    }

    /// `-A*(-f)`, the penalty's contribution to the dual objective.
    fn neg_conjugate(&self, f: ArrayView1<f64>) -> f64 {
        let alpha = &self.observed;
        match self.model {
            NoiseModel::ExactMarginal => {
                alpha.iter().zip(f.iter()).filter(|(&a, _)| a != 0.0).map(|(&a, &fi)| a * fi).sum()
            }
            NoiseModel::Poisson => alpha
                .iter()
                .zip(f.iter())
                .map(|(&a, &fi)| if a == 0.0 { 0.0 } else { a * (1.0 + fi).ln() })
                .sum(),
            NoiseModel::Gaussian { sigma } => {
                if sigma.is_infinite() {
                    return 0.0;
                }
                let s2 = sigma * sigma;
                alpha
                    .iter()
                    .zip(f.iter())
                    .map(|(&a, &fi)| {
                        let y = -fi;
                        let conj = if a + s2 * y >= 0.0 { a * y + s2 * y * y / 2.0 } else { -a * a / (2.0 * s2) };
                        -conj
                    })
                    .sum()
            }
        }
    }
}

/// `α log(α/x) - α + x` with `0 log 0 = 0`.
pub fn generalized_kl_term(alpha: f64, x: f64) -> f64 {
    if alpha == 0.0 {
        x
    } else if x <= 0.0 {
        f64::INFINITY
    } else {
        alpha * (alpha / x).ln() - alpha + x
    }
}

/// `KL̃(w ‖ z)` for non-negative vectors.
pub fn generalized_kl(w: ArrayView1<f64>, z: ArrayView1<f64>) -> f64 {
    w.iter().zip(z.iter()).map(|(&a, &x)| generalized_kl_term(a, x)).sum()
}

const PROX_MAX_ITER: usize = 60;

/// Optimality residual of the scalar prox problem in the variable `s = log x`:
/// `log(x/u) + A'(x)`, with its derivative in `s` and a magnitude scale.
fn prox_residual(model: NoiseModel, alpha: f64, log_u: f64, s: f64) -> (f64, f64, f64) {
    match model {
        NoiseModel::Gaussian { sigma } => {
            let inv = 1.0 / (sigma * sigma);
            let ex = s.exp();
            let g = s - log_u + (ex - alpha) * inv;
            let scale = 1.0f64.max(s.abs()).max(log_u.abs()).max(ex * inv).max(alpha * inv);
            (g, 1.0 + ex * inv, scale)
        }
        NoiseModel::Poisson => {
            let em = alpha * (-s).exp();
            let g = s - log_u + 1.0 - em;
            let scale = 1.0f64.max(s.abs()).max(log_u.abs()).max(em);
            (g, 1.0 + em, scale)
        }
        NoiseModel::ExactMarginal => unreachable!("exact marginals have a closed-form prox"),
    }
}

/// Scalar KL prox: `argmin_{x ≥ 0} x log(x/u) - x + u + A_i(x)`.
///
/// Solved on `s = log x` by Newton's method kept inside a bisection
/// bracket. The residual has slope at least 1 in `s`, so the root lies
/// within `|g(log u)|` of `log u`; it also lies between `log u` and `log α`.
pub fn prox_scalar(model: NoiseModel, alpha: f64, u: f64) -> Result<f64> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(domain(format!("prox point must be > 0, got {u}")));
    }
    match model {
        NoiseModel::ExactMarginal => return Ok(alpha),
        NoiseModel::Gaussian { sigma } if sigma.is_infinite() => return Ok(u),
        NoiseModel::Poisson if alpha == 0.0 => return Ok(u / std::f64::consts::E),
        _ => {}
    }
    let log_u = u.ln();
    let (g0, _, _) = prox_residual(model, alpha, log_u, log_u);
    if g0 == 0.0 {
        return Ok(u);
    }
    let (mut lo, mut hi) = if g0 > 0.0 { (log_u - g0, log_u) } else { (log_u, log_u - g0) };
    // `g(log α)` has the sign of `log(α/u)`, which tightens the bracket when
    // the penalty dominates
    if alpha > 0.0 {
        if g0 > 0.0 {
            lo = lo.max(alpha.ln());
        } else {
            hi = hi.min(alpha.ln());
        }
    } else if let NoiseModel::Gaussian { sigma } = model {
        lo = lo.max((log_u - 1.0).min(2.0 * sigma.ln()));
    }
    let mut s = log_u;
    let (mut g, mut scale) = (g0, 1.0);
    for _ in 0..PROX_MAX_ITER {
        let (gs, dg, sc) = prox_residual(model, alpha, log_u, s);
        g = gs;
        scale = sc;
        if g.abs() <= 1e-15 * scale {
            break;
        }
        if g > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let newton = s - g / dg;
        let next = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if next == s || hi - lo <= 4.0 * f64::EPSILON * s.abs().max(1.0) {
            break;
        }
        s = next;
    }
    if !(g.abs() <= 1e-10 * scale) {
        return Err(Error::Numeric(format!("KL prox did not converge (residual {g:e})")));
    }
    Ok(s.exp())
}

/// Coordinate-wise KL proximal operator of a separable penalty.
pub fn kl_prox(penalty: &MarginalPenalty, u: ArrayView1<f64>) -> Result<Array1<f64>> {
    if u.len() != penalty.len() {
        return Err(shape(format!("prox point has length {}, penalty {}", u.len(), penalty.len())));
    }
    let mut out = Array1::zeros(u.len());
    for (i, (&ui, &ai)) in u.iter().zip(penalty.observed.iter()).enumerate() {
        out[i] = prox_scalar(penalty.model, ai, ui).map_err(|e| match e {
            Error::Numeric(m) => Error::Numeric(format!("coordinate {i}: {m}")),
            Error::Domain(m) => Error::Domain(format!("coordinate {i}: {m}")),
            other => other,
        })?;
    }
    Ok(out)
}

/// `G_C^1(τ) + A(τ1) + B(τᵀ1)`.
///
/// `asymptotic = true` evaluates the large-`F` penalties; `false` the
/// finite-`F` ones including normalization constants.
pub fn noisy_objective(
    tau: &TransportPlan,
    cost: &CostMatrix,
    noise_a: &MarginalPenalty,
    noise_b: &MarginalPenalty,
    mass: f64,
    asymptotic: bool,
) -> Result<f64> {
    let n = cost.n();
    if tau.n() != n || noise_a.len() != n || noise_b.len() != n {
        return Err(shape("plan, cost and observations must share the same size"));
    }
    let g = transport_cost_entries(tau.entries(), cost, 1.0)?.total;
    let rows = tau.row_marginal().values();
    let cols = tau.col_marginal().values();
    if asymptotic {
        Ok(g + noise_a.value(rows) + noise_b.value(cols))
    } else {
        if !(mass > 0.0) {
            return Err(domain(format!("mass must be > 0, got {mass}")));
        }
        Ok(g + noise_a.value_finite(rows, mass) + noise_b.value_finite(cols, mass))
    }
}

/// Generalized scaling iteration for noisy OT, one sweep at a time.
#[derive(Debug, Clone)]
pub struct NoisyScaling {
    kernel: Array2<f64>,
    penalty_a: MarginalPenalty,
    penalty_b: MarginalPenalty,
    u: Array1<f64>,
    v: Array1<f64>,
    floor: f64,
}

impl NoisyScaling {
    pub fn new(cost: &CostMatrix, penalty_a: MarginalPenalty, penalty_b: MarginalPenalty, floor: f64) -> Result<Self> {
        let n = cost.n();
        if penalty_a.len() != n || penalty_b.len() != n {
            return Err(shape("observations and cost must share the same size"));
        }
        let mut kernel = Array2::zeros((n, n));
        for ((i, j), &c) in cost.entries().indexed_iter() {
            let k = (-c - 1.0).exp();
            if !(k >= f64::MIN_POSITIVE) || !k.is_finite() {
                return Err(Error::KernelUnderflow { row: i, col: j, epsilon: 1.0 });
            }
            kernel[[i, j]] = k;
        }
        Ok(Self { kernel, penalty_a, penalty_b, u: Array1::ones(n), v: Array1::ones(n), floor })
    }

    /// `u ← prox_A(Kv) ⊘ Kv`, then `v ← prox_B(Kᵀu) ⊘ Kᵀu`.
    pub fn step(&mut self) -> Result<()> {
        let kv = self.kernel.dot(&self.v);
        let target = kl_prox(&self.penalty_a, kv.view())?;
        self.u = guarded_div(target.view(), kv.view(), self.floor)?;
        let ktu = self.kernel.t().dot(&self.u);
        if ktu.iter().all(|&x| x == 0.0) {
            return Err(Error::Infeasible("all row scalings vanished".into()));
        }
        let target = kl_prox_allow_zero(&self.penalty_b, ktu.view())?;
        self.v = guarded_div(target.view(), ktu.view(), self.floor)?;
        Ok(())
    }

    pub fn u(&self) -> ArrayView1<'_, f64> {
        self.u.view()
    }

    pub fn v(&self) -> ArrayView1<'_, f64> {
        self.v.view()
    }

    /// Current plan `diag(u) K diag(v)` on the per-sample scale.
    pub fn plan_entries(&self) -> Array2<f64> {
        let mut t = self.kernel.clone();
        for ((i, j), x) in t.indexed_iter_mut() {
            *x *= self.u[i] * self.v[j];
        }
        t
    }

    /// `-A*(-log u) - B*(-log v) - Σ τ`; equals the primal optimum at convergence.
    pub fn dual_objective(&self) -> f64 {
        let f = self.u.mapv(f64::ln);
        let g = self.v.mapv(f64::ln);
        let mass = self.u.dot(&self.kernel.dot(&self.v));
        self.penalty_a.neg_conjugate(f.view()) + self.penalty_b.neg_conjugate(g.view()) - mass
    }
}

// Columns with `Kᵀu = 0` can only arise under sparse row support; their
// scaling is irrelevant to the plan, so they are mapped to zero.
fn kl_prox_allow_zero(p: &MarginalPenalty, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    if x.iter().all(|&v| v > 0.0) {
        return kl_prox(p, x);
    }
    let mut out = Array1::zeros(x.len());
    for (i, &xi) in x.iter().enumerate() {
        if xi > 0.0 {
            out[i] = prox_scalar(p.model, p.observed[i], xi)
                .map_err(|e| Error::Numeric(format!("coordinate {i}: {e}")))?;
        } else if p.model == NoiseModel::ExactMarginal && p.observed[i] > 0.0 {
            return Err(Error::Infeasible(format!("column {i} cannot carry its observed mass")));
        }
    }
    Ok(out)
}

/// Noisy OT between observed histograms `a` and `b` (counts of total `≈ F`).
///
/// Works on the per-sample scale `α = a/F`, `β = b/F` and returns the plan
/// `τ` on that scale. Masses of `a` and `b` may differ unless both sides
/// are exact. Converges when the scaling vectors change by at most
/// `opts.tolerance` (relative) in one sweep.
pub fn noisy_ot_solve(
    a: &Histogram,
    b: &Histogram,
    cost: &CostMatrix,
    noise_a: NoiseModel,
    noise_b: NoiseModel,
    mass: f64,
    opts: &SolverOptions,
) -> Result<(TransportPlan, SolveReport)> {
    opts.validate()?;
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(domain(format!("mass must be > 0, got {mass}")));
    }
    if a.len() != cost.n() || b.len() != cost.n() {
        return Err(shape("histograms and cost must share the same size"));
    }
    if noise_a == NoiseModel::ExactMarginal && noise_b == NoiseModel::ExactMarginal {
        crate::histogram::check_equal_mass(a, b, 1e-9)?;
    }
    let alpha = a.values().mapv(|x| x / mass);
    let beta = b.values().mapv(|x| x / mass);
    let pa = MarginalPenalty::new(noise_a, alpha.view())?;
    let pb = MarginalPenalty::new(noise_b, beta.view())?;
    let mut scaling = NoisyScaling::new(cost, pa.clone(), pb.clone(), opts.epsilon_floor)?;
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        let (u_old, v_old) = (scaling.u.clone(), scaling.v.clone());
        scaling.step()?;
        iterations += 1;
        history.push(scaling.dual_objective());
        residual = max_relative_change(u_old.view(), scaling.u.view())
            .max(max_relative_change(v_old.view(), scaling.v.view()));
        if residual <= opts.tolerance {
            break;
        }
    }
    let plan = TransportPlan::new(scaling.plan_entries())?;
    let mut report = SolveReport::new(iterations, residual, opts.tolerance);
    report.objective = noisy_objective(&plan, cost, &pa, &pb, mass, true)?;
    report.history = history;
    report.scalings = Some(Scalings { log_u: scaling.u.mapv(f64::ln), log_v: scaling.v.mapv(f64::ln) });
    Ok((plan, report))
}
