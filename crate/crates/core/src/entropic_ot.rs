//! Entropic optimal transport by Sinkhorn scaling, and the identities that
//! tie the entropic objective to the two-node collective graphical model.
//!
//! For histograms `a, b` of equal mass `F` and a cost `C`, the entropic
//! objective is `G(T) = Σ C_ij T_ij + ε Σ T_ij log T_ij` over couplings with
//! `T1 = a`, `Tᵀ1 = b`. Its minimizer has the form `diag(u) K diag(v)` with
//! `K = exp(-C/ε)`.
//!
//! With `ψ = exp(-C)` and `Z = Σ ψ_ij`, the approximate negative log joint
//! probability of the two-node model is
//! `L(T) = Σ [T log T - T log ψ] - F log F + F log Z`, and for every feasible
//! `T` one has `G_C^1(T/F) = L(T)/F - log Z`.

use ndarray::{Array1, Array2, ArrayView1, Zip};

use crate::error::{domain, shape, Error, Result};
use crate::histogram::{check_equal_mass, Histogram};
use crate::matrix::{CostMatrix, Kernel};
use crate::numeric::{guarded_div, log_sum_exp, max_abs_diff, xlogx};
use crate::options::{Scalings, SolveReport, SolverOptions};
use crate::plan::TransportPlan;

/// Value of the entropic objective split into its two parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropicObjectiveValue {
    pub transport_cost: f64,
    pub entropy_term: f64,
    pub total: f64,
}

/// Evaluates `Σ C_ij T_ij + ε Σ T_ij log T_ij` with `0 log 0 = 0`.
pub fn transport_cost(plan: &TransportPlan, cost: &CostMatrix, epsilon: f64) -> Result<EntropicObjectiveValue> {
    transport_cost_entries(plan.entries(), cost, epsilon)
}

pub(crate) fn transport_cost_entries(t: &Array2<f64>, cost: &CostMatrix, epsilon: f64) -> Result<EntropicObjectiveValue> {
    if t.dim() != cost.entries().dim() {
        return Err(shape(format!("plan is {:?} but cost is {:?}", t.dim(), cost.entries().dim())));
    }
    if !(epsilon >= 0.0) {
        return Err(domain(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let mut transport = 0.0;
    let mut neg_entropy = 0.0;
    Zip::from(t).and(cost.entries()).for_each(|&tij, &cij| {
        transport += cij * tij;
        neg_entropy += xlogx(tij);
    });
    let entropy_term = if epsilon == 0.0 { 0.0 } else { epsilon * neg_entropy };
    Ok(EntropicObjectiveValue { transport_cost: transport, entropy_term, total: transport + entropy_term })
}

/// Plain-domain Sinkhorn-Knopp iteration, exposed so that callers can
/// observe the scaling trajectory one sweep at a time.
#[derive(Debug, Clone)]
pub struct SinkhornScaling {
    a: Array1<f64>,
    b: Array1<f64>,
    kernel: Array2<f64>,
    epsilon: f64,
    floor: f64,
    u: Array1<f64>,
    v: Array1<f64>,
    kv: Array1<f64>,
}

impl SinkhornScaling {
    /// Starts from `v = 1`. Fails if `exp(-C/ε)` leaves the normal range.
    pub fn new(a: &Histogram, b: &Histogram, cost: &CostMatrix, epsilon: f64, floor: f64) -> Result<Self> {
        check_problem(a, b, cost, epsilon)?;
        let n = cost.n();
        let mut kernel = Array2::zeros((n, n));
        for ((i, j), &c) in cost.entries().indexed_iter() {
            let k = (-c / epsilon).exp();
            if k < f64::MIN_POSITIVE {
                return Err(Error::KernelUnderflow { row: i, col: j, epsilon });
            }
            if !k.is_finite() {
                return Err(Error::Numeric(format!(
                    "kernel exp(-C/eps) overflows at ({i}, {j}); retry with log_domain = true"
                )));
            }
            kernel[[i, j]] = k;
        }
        let v = Array1::ones(n);
        let kv = kernel.dot(&v);
        Ok(Self {
            a: a.values().to_owned(),
            b: b.values().to_owned(),
            kernel,
            epsilon,
            floor,
            u: Array1::zeros(n),
            v,
            kv,
        })
    }

    /// One sweep: `u ← a ⊘ Kv`, then `v ← b ⊘ Kᵀu`.
    pub fn step(&mut self) -> Result<()> {
        self.u = guarded_div(self.a.view(), self.kv.view(), self.floor)?;
        let ktu = self.kernel.t().dot(&self.u);
        self.v = guarded_div(self.b.view(), ktu.view(), self.floor)?;
        self.kv = self.kernel.dot(&self.v);
        Ok(())
    }

    pub fn u(&self) -> ArrayView1<'_, f64> {
        self.u.view()
    }

    pub fn v(&self) -> ArrayView1<'_, f64> {
        self.v.view()
    }

    pub fn kernel(&self) -> &Array2<f64> {
        &self.kernel
    }

    /// Row-marginal violation of the current iterate; columns are exact after a sweep.
    pub fn row_violation(&self) -> f64 {
        let rows = &self.u * &self.kv;
        max_abs_diff(rows.view(), self.a.view())
    }

    pub fn plan_entries(&self) -> Array2<f64> {
        let mut t = self.kernel.clone();
        for ((i, j), x) in t.indexed_iter_mut() {
            *x *= self.u[i] * self.v[j];
        }
        t
    }

    /// Dual objective `Σ a f + Σ b g - ε(Σ T - F)` with `f = ε log u`, `g = ε log v`.
    pub fn dual_objective(&self) -> f64 {
        let eps = self.epsilon;
        let lin_a: f64 = weighted_log(self.a.view(), self.u.view());
        let lin_b: f64 = weighted_log(self.b.view(), self.v.view());
        let mass_t: f64 = self.u.dot(&self.kv);
        let f = self.a.sum();
        eps * (lin_a + lin_b) - eps * (mass_t - f)
    }

    fn scalings(&self) -> Scalings {
        Scalings { log_u: self.u.mapv(f64::ln), log_v: self.v.mapv(f64::ln) }
    }
}

fn weighted_log(w: ArrayView1<f64>, x: ArrayView1<f64>) -> f64 {
    w.iter().zip(x.iter()).filter(|(&wi, _)| wi != 0.0).map(|(&wi, &xi)| wi * xi.ln()).sum()
}

fn check_problem(a: &Histogram, b: &Histogram, cost: &CostMatrix, epsilon: f64) -> Result<()> {
    if a.len() != cost.n() || b.len() != cost.n() {
        return Err(shape(format!(
            "histograms of length {} and {} with a {}x{} cost",
            a.len(),
            b.len(),
            cost.n(),
            cost.n()
        )));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(domain(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(a.mass() > 0.0) {
        return Err(domain("histograms must have positive mass"));
    }
    check_equal_mass(a, b, 1e-9)
}

/// Entropic transport plan between `a` and `b`.
///
/// Converges when the max-norm marginal violation is at most
/// `opts.tolerance · F`. Hitting the iteration cap is not an error: the
/// current plan is returned with `converged = false`. The report holds the
/// log-scalings and the dual objective after every sweep.
pub fn sinkhorn_plan(
    a: &Histogram,
    b: &Histogram,
    cost: &CostMatrix,
    epsilon: f64,
    opts: &SolverOptions,
) -> Result<(TransportPlan, SolveReport)> {
    opts.validate()?;
    if opts.log_domain {
        return sinkhorn_plan_log(a, b, cost, epsilon, opts);
    }
    let mut scaling = SinkhornScaling::new(a, b, cost, epsilon, opts.epsilon_floor)?;
    let f = a.mass();
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        scaling.step()?;
        iterations += 1;
        history.push(scaling.dual_objective());
        if scaling.row_violation() / f <= opts.tolerance {
            break;
        }
    }
    let plan = TransportPlan::new(scaling.plan_entries())?;
    finish(plan, a, b, cost, epsilon, opts, iterations, history, scaling.scalings())
}

#[allow(clippy::too_many_arguments)]
fn finish(
    plan: TransportPlan,
    a: &Histogram,
    b: &Histogram,
    cost: &CostMatrix,
    epsilon: f64,
    opts: &SolverOptions,
    iterations: usize,
    history: Vec<f64>,
    scalings: Scalings,
) -> Result<(TransportPlan, SolveReport)> {
    let residual = plan.marginal_violation(a.values(), b.values()) / a.mass();
    let mut report = SolveReport::new(iterations, residual, opts.tolerance);
    report.objective = transport_cost(&plan, cost, epsilon)?.total;
    report.history = history;
    report.scalings = Some(scalings);
    Ok((plan, report))
}

/// Log-domain iteration on `f = log u`, `g = log v` with max-shifted
/// log-sum-exp reductions; stable for small `ε`.
fn sinkhorn_plan_log(
    a: &Histogram,
    b: &Histogram,
    cost: &CostMatrix,
    epsilon: f64,
    opts: &SolverOptions,
) -> Result<(TransportPlan, SolveReport)> {
    check_problem(a, b, cost, epsilon)?;
    let n = cost.n();
    let log_k = cost.entries().mapv(|c| -c / epsilon);
    let log_a = a.values().mapv(f64::ln);
    let log_b = b.values().mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(n);
    let mass = a.mass();
    let mut history = Vec::new();
    let mut iterations = 0;

    let row_lse = |g: &Array1<f64>, i: usize| log_sum_exp((0..n).map(|j| log_k[[i, j]] + g[j]));
    let col_lse = |f: &Array1<f64>, j: usize| log_sum_exp((0..n).map(|i| log_k[[i, j]] + f[i]));

    while iterations < opts.max_iterations {
        for i in 0..n {
            f[i] = if a.values()[i] == 0.0 { f64::NEG_INFINITY } else { log_a[i] - row_lse(&g, i) };
        }
        for j in 0..n {
            g[j] = if b.values()[j] == 0.0 { f64::NEG_INFINITY } else { log_b[j] - col_lse(&f, j) };
        }
        if f.iter().chain(g.iter()).any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::Infeasible("log-domain scaling left the feasible region".into()));
        }
        iterations += 1;
        let mut violation = 0.0f64;
        let mut plan_mass = 0.0;
        for i in 0..n {
            let r = (f[i] + row_lse(&g, i)).exp();
            let r = if r.is_nan() { 0.0 } else { r };
            plan_mass += r;
            violation = violation.max((r - a.values()[i]).abs());
        }
        let lin: f64 = weighted_sum(a.values(), f.view()) + weighted_sum(b.values(), g.view());
        history.push(epsilon * lin - epsilon * (plan_mass - mass));
        if violation / mass <= opts.tolerance {
            break;
        }
    }
    let mut t = Array2::zeros((n, n));
    for ((i, j), x) in t.indexed_iter_mut() {
        let e = f[i] + log_k[[i, j]] + g[j];
        *x = if e == f64::NEG_INFINITY { 0.0 } else { e.exp() };
    }
    let plan = TransportPlan::new(t)?;
    finish(plan, a, b, cost, epsilon, opts, iterations, history, Scalings { log_u: f, log_v: g })
}

fn weighted_sum(w: ArrayView1<f64>, x: ArrayView1<f64>) -> f64 {
    w.iter().zip(x.iter()).filter(|(&wi, _)| wi != 0.0).map(|(&wi, &xi)| wi * xi).sum()
}

/// Entropic OT value `D_C^ε(a, b)`, the objective at the converged plan.
pub fn sinkhorn_distance(
    a: &Histogram,
    b: &Histogram,
    cost: &CostMatrix,
    epsilon: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    let (_, report) = sinkhorn_plan(a, b, cost, epsilon, opts)?;
    if !report.converged {
        return Err(Error::NotConverged { iterations: report.iterations, residual: report.residual });
    }
    Ok(report.objective)
}

/// Approximate negative log joint probability of the two-node model with
/// noiseless observations, `Σ [T log T - T log ψ] - F log F + F log Z`.
pub fn cgm_log_joint_approx(plan: &TransportPlan, psi: &Kernel, mass: f64) -> Result<f64> {
    cgm_log_joint_entries(plan.entries(), psi, mass)
}

pub(crate) fn cgm_log_joint_entries(t: &Array2<f64>, psi: &Kernel, mass: f64) -> Result<f64> {
    let n = psi.n();
    if t.dim() != (n, n) {
        return Err(shape(format!("plan is {:?} but kernel is {n}x{n}", t.dim())));
    }
    if !(mass > 0.0) {
        return Err(domain(format!("mass must be > 0, got {mass}")));
    }
    let total = t.sum();
    if (total - mass).abs() > 1e-9 * mass {
        return Err(domain(format!("plan totals {total}, expected {mass}")));
    }
    let mut acc = 0.0;
    for ((i, j), &tij) in t.indexed_iter() {
        let p = psi.get(i, j);
        if !(p > 0.0) {
            return Err(domain(format!("kernel entry ({i}, {j}) = {p} is not strictly positive")));
        }
        acc += xlogx(tij) - tij * p.ln();
    }
    let z = psi.partition_function();
    Ok(acc - mass * mass.ln() + mass * z.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn h(v: Array1<f64>) -> Histogram {
        Histogram::new(v).unwrap()
    }

    #[test]
    fn zero_cost_gives_independent_coupling() {
        let a = h(array![0.5, 0.5]);
        let cost = CostMatrix::new(Array2::zeros((2, 2))).unwrap();
        for eps in [0.1, 1.0, 10.0] {
            let (plan, report) = sinkhorn_plan(&a, &a, &cost, eps, &SolverOptions::default()).unwrap();
            assert!(report.converged);
            for &x in plan.entries() {
                assert!((x - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forced_plan_for_point_masses() {
        let a = h(array![1.0, 0.0]);
        let b = h(array![0.0, 1.0]);
        let cost = CostMatrix::new(array![[3.0, -1.0], [0.5, 2.0]]).unwrap();
        let (plan, report) = sinkhorn_plan(&a, &b, &cost, 1.0, &SolverOptions::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        let t = plan.entries();
        assert!((t[[0, 1]] - 1.0).abs() < 1e-15);
        assert_eq!(t[[0, 0]], 0.0);
        assert_eq!(t[[1, 0]], 0.0);
        assert_eq!(t[[1, 1]], 0.0);
    }

    #[test]
    fn three_state_plan_factorizes() {
        let a = h(array![0.2, 0.3, 0.5]);
        let b = h(array![0.4, 0.4, 0.2]);
        let cost = CostMatrix::line(3);
        let (plan, report) = sinkhorn_plan(&a, &b, &cost, 1.0, &SolverOptions::default()).unwrap();
        assert!(report.converged);
        assert!(plan.marginal_violation(a.values(), b.values()) <= 1e-9);
        let s = report.scalings.unwrap();
        for ((i, j), &t) in plan.entries().indexed_iter() {
            let k = (-cost.entries()[[i, j]]).exp();
            let rebuilt = (s.log_u[i] + s.log_v[j]).exp() * k;
            assert!((rebuilt - t).abs() <= 1e-9);
        }
    }

    #[test]
    fn log_domain_matches_plain() {
        let a = h(array![0.1, 0.2, 0.3, 0.4]);
        let b = h(array![0.25, 0.25, 0.25, 0.25]);
        let cost = CostMatrix::line(4);
        let opts = SolverOptions::default();
        let (p1, _) = sinkhorn_plan(&a, &b, &cost, 0.5, &opts).unwrap();
        let (p2, r2) = sinkhorn_plan(&a, &b, &cost, 0.5, &opts.with_log_domain(true)).unwrap();
        assert!(r2.converged);
        for (x, y) in p1.entries().iter().zip(p2.entries()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn small_epsilon_needs_log_domain() {
        let a = h(array![0.5, 0.5]);
        let cost = CostMatrix::new(array![[0.0, 10.0], [10.0, 0.0]]).unwrap();
        let err = sinkhorn_plan(&a, &a, &cost, 1e-3, &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::KernelUnderflow { row: 0, col: 1, .. }));
        assert!(err.to_string().contains("log_domain"));
        let (plan, report) = sinkhorn_plan(&a, &a, &cost, 1e-3, &SolverOptions::default().with_log_domain(true)).unwrap();
        assert!(report.converged);
        assert!((plan.entries()[[0, 0]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mass_mismatch_and_cap() {
        let a = h(array![0.5, 0.5]);
        let b = h(array![0.5, 0.6]);
        let cost = CostMatrix::line(2);
        assert!(matches!(sinkhorn_plan(&a, &b, &cost, 1.0, &SolverOptions::default()), Err(Error::Domain(_))));
        let b = h(array![0.9, 0.1]);
        let opts = SolverOptions::default().with_max_iterations(1).with_tolerance(1e-15);
        let (plan, report) = sinkhorn_plan(&a, &b, &CostMatrix::line(2), 0.05, &opts).unwrap();
        assert!(!report.converged);
        assert_eq!(plan.n(), 2);
        assert!(matches!(
            sinkhorn_distance(&a, &b, &CostMatrix::line(2), 0.05, &opts),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn objective_examples() {
        let diag = TransportPlan::new(array![[0.5, 0.0], [0.0, 0.5]]).unwrap();
        let c = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let v = transport_cost(&diag, &c, 0.0).unwrap();
        assert_eq!(v.total, 0.0);
        assert_eq!(v.entropy_term, 0.0);

        let uni = TransportPlan::new(Array2::from_elem((2, 2), 0.25)).unwrap();
        let v = transport_cost(&uni, &CostMatrix::new(Array2::zeros((2, 2))).unwrap(), 1.0).unwrap();
        assert!((v.total + 4f64.ln()).abs() < 1e-15);
        assert!(transport_cost(&uni, &CostMatrix::line(3), 1.0).is_err());
    }

    #[test]
    fn distance_examples() {
        let opts = SolverOptions::default();
        let a = h(array![0.5, 0.5]);
        let zero = CostMatrix::new(Array2::zeros((2, 2))).unwrap();
        assert!((sinkhorn_distance(&a, &a, &zero, 1.0, &opts).unwrap() + 4f64.ln()).abs() < 1e-12);
        let d = sinkhorn_distance(&h(array![1.0, 0.0]), &h(array![0.0, 1.0]), &CostMatrix::line(2), 1.0, &opts).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_joint_unit_mass() {
        // with F = 1: L(τ) = G_C^1(τ) + log Z
        let psi = Kernel::dense(array![[0.5, 2.0], [1.0, 0.25]]).unwrap();
        let cost = crate::matrix::cost_from_kernel(&psi).unwrap();
        let tau = TransportPlan::new(array![[0.1, 0.2], [0.3, 0.4]]).unwrap();
        let l = cgm_log_joint_approx(&tau, &psi, 1.0).unwrap();
        let g = transport_cost(&tau, &cost, 1.0).unwrap().total;
        assert!((l - (g + psi.partition_function().ln())).abs() < 1e-14);
        assert!(cgm_log_joint_approx(&tau, &psi, 2.0).is_err());
    }
}
