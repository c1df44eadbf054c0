use ndarray::{Array1, Array2};

use crate::ctmc::CtmcModel;
use crate::error::{domain, shape, Error, Result};
use crate::histogram::{check_equal_mass, Histogram};
use crate::matrix::{Kernel, LinearOperator};
use crate::numeric::{guarded_div, max_abs_diff, max_relative_change};
use crate::options::{SolveReport, SolverOptions};
use crate::plan::TransportPlan;

use super::kernels::{KernelPower, TransitionOperator};

/// How the two edge potentials of the reduced three-node path are built.
#[derive(Debug, Clone, PartialEq)]
pub enum PathKernel {
    /// Path of `nodes` vertices with potential `psi` on every edge; the
    /// interpolant sits at vertex `k` (1-based, `2 ≤ k ≤ nodes - 1`).
    Undirected { psi: Kernel, nodes: usize, k: usize },
    /// Continuous-time Markov chain observed at times 0 and 1.
    Ctmc { q: CtmcModel, t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathInterpolationProblem {
    pub a: Histogram,
    pub b: Histogram,
    pub kernel: PathKernel,
    pub options: SolverOptions,
}

impl PathInterpolationProblem {
    pub fn new(a: Histogram, b: Histogram, kernel: PathKernel, options: SolverOptions) -> Result<Self> {
        options.validate()?;
        if a.len() != b.len() {
            return Err(shape(format!("endpoints have lengths {} and {}", a.len(), b.len())));
        }
        check_equal_mass(&a, &b, 1e-9)?;
        if !(a.mass() > 0.0) {
            return Err(domain("endpoint histograms must have positive mass"));
        }
        let n = match &kernel {
            PathKernel::Undirected { psi, nodes, k } => {
                if *nodes < 3 {
                    return Err(domain(format!("path needs at least 3 nodes, got {nodes}")));
                }
                if *k < 2 || *k > nodes - 1 {
                    return Err(domain(format!("interior node k = {k} must lie in [2, {}]", nodes - 1)));
                }
                psi.n()
            }
            PathKernel::Ctmc { q, t } => {
                if !(0.0..=1.0).contains(t) {
                    return Err(domain(format!("t = {t} must lie in [0, 1]")));
                }
                q.n()
            }
        };
        if n != a.len() {
            return Err(shape(format!("kernel has {n} states but histograms have {}", a.len())));
        }
        Ok(Self { a, b, kernel, options })
    }

    /// `(k-1)/(N-1)` for the undirected model, `t` for the CTMC.
    pub fn realized_time(&self) -> f64 {
        match &self.kernel {
            PathKernel::Undirected { nodes, k, .. } => (k - 1) as f64 / (nodes - 1) as f64,
            PathKernel::Ctmc { t, .. } => *t,
        }
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    fn operators(&self) -> Operators<'_> {
        match &self.kernel {
            PathKernel::Undirected { psi, nodes, k } => Operators {
                phi1: Box::new(KernelPower { psi, power: k - 1 }),
                phi2: Box::new(KernelPower { psi, power: nodes - k }),
                product: Box::new(KernelPower { psi, power: nodes - 1 }),
            },
            PathKernel::Ctmc { q, t } => Operators {
                phi1: Box::new(TransitionOperator { q, time: *t }),
                phi2: Box::new(TransitionOperator { q, time: 1.0 - t }),
                product: Box::new(TransitionOperator { q, time: 1.0 }),
            },
        }
    }

    fn sparse_support(&self) -> bool {
        matches!(&self.kernel, PathKernel::Undirected { psi: Kernel::Sparse(_), .. })
    }
}

struct Operators<'a> {
    phi1: Box<dyn LinearOperator + 'a>,
    phi2: Box<dyn LinearOperator + 'a>,
    product: Box<dyn LinearOperator + 'a>,
}

/// Interior histogram with the scaling vectors that generate both plans.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationResult {
    pub c: Histogram,
    /// `a ⊘ w`: row scaling of `T₁`.
    pub left_scaling: Array1<f64>,
    /// `b ⊘ y`: column scaling of `T₂`.
    pub right_scaling: Array1<f64>,
    /// `φ₁ᵀ(a ⊘ w)`.
    pub x: Array1<f64>,
    /// `φ₂(b ⊘ y)`.
    pub z: Array1<f64>,
    pub realized_time: f64,
    pub report: SolveReport,
}

impl InterpolationResult {
    /// Materializes `T₁ = diag(a⊘w) φ₁ diag(z)` and `T₂ = diag(x) φ₂ diag(b⊘y)`.
    pub fn plans(&self, problem: &PathInterpolationProblem) -> Result<(TransportPlan, TransportPlan)> {
        let ops = problem.operators();
        let mut t1 = ops.phi1.to_dense();
        for ((i, j), v) in t1.indexed_iter_mut() {
            *v *= self.left_scaling[i] * self.z[j];
        }
        let mut t2 = ops.phi2.to_dense();
        for ((i, j), v) in t2.indexed_iter_mut() {
            *v *= self.x[i] * self.right_scaling[j];
        }
        Ok((TransportPlan::new(t1)?, TransportPlan::new(t2)?))
    }

    /// Dense `φ₁` and `φ₂` of the problem, for optimality audits.
    pub fn potentials(problem: &PathInterpolationProblem) -> (Array2<f64>, Array2<f64>) {
        let ops = problem.operators();
        (ops.phi1.to_dense(), ops.phi2.to_dense())
    }
}

struct Scaled {
    left: Array1<f64>,
    right: Array1<f64>,
    iterations: usize,
    residual: f64,
    history: Vec<f64>,
}

/// Scaling loop on the combined kernel `P = φ₁φ₂`:
/// `y ← Pᵀ(a ⊘ w)`, `w ← P(b ⊘ y)`.
fn scale_product(
    a: &Histogram,
    b: &Histogram,
    product: &dyn LinearOperator,
    opts: &SolverOptions,
) -> Result<Scaled> {
    let mass = a.mass();
    let floor = opts.epsilon_floor;
    let mut left = a.values().to_owned();
    let mut right: Option<Array1<f64>> = None;
    let mut history = Vec::new();
    let mut change = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let y = product.apply_transpose(left.view());
        if let Some(r) = &right {
            let col = r * &y;
            residual = max_abs_diff(col.view(), b.values()) / mass;
            history.push(residual);
            if residual <= opts.tolerance && change <= opts.tolerance {
                break;
            }
        }
        if iterations >= opts.max_iterations {
            break;
        }
        let new_right = guarded_div(b.values(), y.view(), floor)?;
        let w = product.apply(new_right.view());
        let new_left = guarded_div(a.values(), w.view(), floor)?;
        change = max_relative_change(left.view(), new_left.view());
        if let Some(r) = &right {
            change = change.max(max_relative_change(r.view(), new_right.view()));
        }
        left = new_left;
        right = Some(new_right);
        iterations += 1;
    }
    Ok(Scaled { left, right: right.expect("at least one sweep"), iterations, residual: residual.max(change), history })
}

fn finish(problem: &PathInterpolationProblem, scaled: Scaled, x: Array1<f64>, z: Array1<f64>) -> Result<InterpolationResult> {
    let opts = &problem.options;
    let c = Histogram::new(&x * &z)?;
    let mut report = SolveReport::new(scaled.iterations, scaled.residual, opts.tolerance);
    report.history = scaled.history;
    if !report.converged && problem.sparse_support() {
        check_support_feasible(problem)?;
    }
    Ok(InterpolationResult {
        c,
        left_scaling: scaled.left,
        right_scaling: scaled.right,
        x,
        z,
        realized_time: problem.realized_time(),
        report,
    })
}

/// Simplified interpolation: scale on `φ₁φ₂` until both the relative change
/// of the scaling vectors and the marginal violation (relative to `F`) are
/// at most the tolerance, then split with `x = φ₁ᵀ(a⊘w)`, `z = φ₂(b⊘y)`
/// and return `c = x ⊙ z`.
pub fn interpolate_path(problem: &PathInterpolationProblem) -> Result<InterpolationResult> {
    let ops = problem.operators();
    let scaled = scale_product(&problem.a, &problem.b, ops.product.as_ref(), &problem.options)?;
    let x = ops.phi1.apply_transpose(scaled.left.view());
    let z = ops.phi2.apply(scaled.right.view());
    finish(problem, scaled, x, z)
}

/// Four-vector message loop: `x ← φ₁ᵀ(a⊘w)`, `y ← φ₂ᵀx`, `z ← φ₂(b⊘y)`,
/// `w ← φ₁z`, returning `x ⊙ z`. Shares its fixed point with
/// [`interpolate_path`].
pub fn interpolate_path_loopy(problem: &PathInterpolationProblem) -> Result<InterpolationResult> {
    let ops = problem.operators();
    let opts = &problem.options;
    let (a, b) = (&problem.a, &problem.b);
    let n = problem.n();
    let mass = a.mass();
    let mut w = Array1::<f64>::ones(n);
    let mut left = Array1::<f64>::zeros(n);
    let mut right = Array1::<f64>::zeros(n);
    let mut x = Array1::zeros(n);
    let mut z = Array1::zeros(n);
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        let new_left = guarded_div(a.values(), w.view(), opts.epsilon_floor)?;
        x = ops.phi1.apply_transpose(new_left.view());
        let y = ops.phi2.apply_transpose(x.view());
        let new_right = guarded_div(b.values(), y.view(), opts.epsilon_floor)?;
        z = ops.phi2.apply(new_right.view());
        w = ops.phi1.apply(z.view());
        let change = if iterations == 0 {
            f64::INFINITY
        } else {
            max_relative_change(left.view(), new_left.view()).max(max_relative_change(right.view(), new_right.view()))
        };
        left = new_left;
        right = new_right;
        iterations += 1;
        let rows = &left * &w;
        let violation = max_abs_diff(rows.view(), a.values()) / mass;
        history.push(violation);
        residual = violation.max(change);
        if residual <= opts.tolerance {
            break;
        }
    }
    let scaled = Scaled { left, right, iterations, residual, history };
    finish(problem, scaled, x, z)
}

/// Interpolants at every interior node `k = 2, …, N-1` of an `N`-node path.
///
/// The scaling on `ψ^(N-1)` does not depend on `k`, so it is solved once;
/// each split then costs two kernel applications, computed incrementally
/// as `x_{k+1} = ψᵀ x_k` and `z_{k-1} = ψ z_k`.
pub fn interpolate_all_k(
    a: &Histogram,
    b: &Histogram,
    psi: &Kernel,
    nodes: usize,
    opts: &SolverOptions,
) -> Result<(Vec<Histogram>, SolveReport)> {
    let problem = PathInterpolationProblem::new(
        a.clone(),
        b.clone(),
        PathKernel::Undirected { psi: psi.clone(), nodes, k: 2 },
        *opts,
    )?;
    let product = KernelPower { psi, power: nodes - 1 };
    let scaled = scale_product(a, b, &product, opts)?;
    let interior = nodes - 2;
    // z for k = N-1 down to 2
    let mut zs = Vec::with_capacity(interior);
    let mut z = psi.apply(scaled.right.view());
    zs.push(z.clone());
    for _ in 1..interior {
        z = psi.apply(z.view());
        zs.push(z.clone());
    }
    zs.reverse();
    let mut out = Vec::with_capacity(interior);
    let mut x = psi.apply_transpose(scaled.left.view());
    for (idx, zk) in zs.iter().enumerate() {
        if idx > 0 {
            x = psi.apply_transpose(x.view());
        }
        out.push(Histogram::new(&x * zk)?);
    }
    let mut report = SolveReport::new(scaled.iterations, scaled.residual, opts.tolerance);
    report.history = scaled.history;
    if !report.converged && problem.sparse_support() {
        check_support_feasible(&problem)?;
    }
    Ok((out, report))
}

/// Necessary condition for feasibility on a sparse support: within every
/// connected component of the bipartite support graph of `φ₁φ₂`, the mass
/// of `a` on the left equals the mass of `b` on the right.
fn check_support_feasible(problem: &PathInterpolationProblem) -> Result<()> {
    let n = problem.n();
    let support = problem.operators().product.to_dense();
    // nodes 0..n are rows (a side), n..2n are columns (b side)
    let mut comp = vec![usize::MAX; 2 * n];
    let mut next = 0;
    for start in 0..2 * n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = next;
        while let Some(u) = stack.pop() {
            let nbrs: Vec<usize> = if u < n {
                (0..n).filter(|&j| support[[u, j]] > 0.0).map(|j| j + n).collect()
            } else {
                (0..n).filter(|&i| support[[i, u - n]] > 0.0).collect()
            };
            for v in nbrs {
                if comp[v] == usize::MAX {
                    comp[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    let mut balance = vec![0.0; next];
    for i in 0..n {
        balance[comp[i]] += problem.a.values()[i];
        balance[comp[i + n]] -= problem.b.values()[i];
    }
    let tol = 1e-9 * problem.a.mass();
    if let Some((k, m)) = balance.iter().enumerate().find(|(_, m)| m.abs() > tol) {
        return Err(Error::Infeasible(format!(
            "kernel support splits into disconnected blocks; block {k} is unbalanced by {m}"
        )));
    }
    Ok(())
}
