use ndarray::{Array1, Array2};

use crate::error::{domain, shape, Error, Result};
use crate::histogram::{check_equal_mass, Histogram};
use crate::matrix::CostMatrix;
use crate::plan::TransportPlan;

/// Largest problem size the brute-force oracle accepts.
pub const MAX_BRUTE_FORCE_N: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum BruteForcePlan {
    Entropic(TransportPlan),
    /// Every optimal vertex of the transportation polytope, plus the optimal cost.
    Lp { optimal_vertices: Vec<TransportPlan>, value: f64 },
}

/// Entropic or unregularized OT by an independent method.
///
/// For `ε > 0`, Newton's method on the full dual with a backtracking line
/// search. For `ε = 0`, enumeration of every basic solution of the
/// transportation polytope (spanning trees of the bipartite support graph).
pub fn brute_force_plan(a: &Histogram, b: &Histogram, cost: &CostMatrix, epsilon: f64) -> Result<BruteForcePlan> {
    let n = a.len();
    if b.len() != n || cost.n() != n {
        return Err(shape("marginals and cost must share one size"));
    }
    if n > MAX_BRUTE_FORCE_N {
        return Err(Error::Capability(format!("brute force supports n <= {MAX_BRUTE_FORCE_N}, got {n}")));
    }
    check_equal_mass(a, b, 1e-9)?;
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(domain(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    if epsilon == 0.0 {
        enumerate_vertices(a, b, cost)
    } else {
        newton_dual(a, b, cost, epsilon).map(BruteForcePlan::Entropic)
    }
}

fn solve_dense(mut m: Array2<f64>, mut rhs: Array1<f64>) -> Option<Array1<f64>> {
    let k = rhs.len();
    for col in 0..k {
        let pivot = (col..k).max_by(|&x, &y| m[[x, col]].abs().total_cmp(&m[[y, col]].abs()))?;
        if m[[pivot, col]].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for c in 0..k {
                m.swap([pivot, c], [col, c]);
            }
            rhs.swap(pivot, col);
        }
        for r in col + 1..k {
            let factor = m[[r, col]] / m[[col, col]];
            if factor != 0.0 {
                for c in col..k {
                    m[[r, c]] -= factor * m[[col, c]];
                }
                rhs[r] -= factor * rhs[col];
            }
        }
    }
    let mut x = Array1::zeros(k);
    for r in (0..k).rev() {
        let mut acc = rhs[r];
        for c in r + 1..k {
            acc -= m[[r, c]] * x[c];
        }
        x[r] = acc / m[[r, r]];
    }
    Some(x)
}

fn newton_dual(a: &Histogram, b: &Histogram, cost: &CostMatrix, eps: f64) -> Result<TransportPlan> {
    let n = a.len();
    let rows: Vec<usize> = (0..n).filter(|&i| a.values()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| b.values()[j] > 0.0).collect();
    let (nr, nc) = (rows.len(), cols.len());
    let c = cost.entries();
    // potentials: f over active rows, g over active columns except the last (pinned at 0)
    let dim = nr + nc - 1;
    let plan_of = |x: &Array1<f64>| -> Array2<f64> {
        Array2::from_shape_fn((nr, nc), |(r, s)| {
            let g = if s + 1 < nc { x[nr + s] } else { 0.0 };
            ((x[r] + g - c[[rows[r], cols[s]]]) / eps).exp()
        })
    };
    let dual = |x: &Array1<f64>, t: &Array2<f64>| -> f64 {
        let mut v = -eps * t.sum();
        for r in 0..nr {
            v += a.values()[rows[r]] * x[r];
        }
        for s in 0..nc - 1 {
            v += b.values()[cols[s]] * x[nr + s];
        }
        v
    };
    let mut x = Array1::zeros(dim);
    for r in 0..nr {
        x[r] = eps * a.values()[rows[r]].ln();
    }
    let scale = a.mass();
    let gradient = |t: &Array2<f64>| -> Array1<f64> {
        let mut grad = Array1::zeros(dim);
        for r in 0..nr {
            grad[r] = a.values()[rows[r]] - t.row(r).sum();
        }
        for s in 0..nc - 1 {
            grad[nr + s] = b.values()[cols[s]] - t.column(s).sum();
        }
        grad
    };
    let max_abs = |g: &Array1<f64>| g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut t = plan_of(&x);
    for _ in 0..500 {
        let grad = gradient(&t);
        let worst = max_abs(&grad);
        let col_err = (b.values()[cols[nc - 1]] - t.column(nc - 1).sum()).abs();
        if worst.max(col_err) <= 1e-14 * scale {
            break;
        }
        let mut hess = Array2::zeros((dim, dim));
        for r in 0..nr {
            hess[[r, r]] = t.row(r).sum() / eps;
            for s in 0..nc - 1 {
                hess[[r, nr + s]] = t[[r, s]] / eps;
                hess[[nr + s, r]] = t[[r, s]] / eps;
            }
        }
        for s in 0..nc - 1 {
            hess[[nr + s, nr + s]] = t.column(s).sum() / eps;
        }
        let dir = solve_dense(hess, grad.clone()).ok_or_else(|| Error::Numeric("singular dual Hessian".into()))?;
        let base = dual(&x, &t);
        let slope = grad.dot(&dir);
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-20 {
            let trial = &x + &(&dir * step);
            let tt = plan_of(&trial);
            let val = dual(&trial, &tt);
            // near the optimum the dual is flat to rounding; fall back to the gradient norm
            if val.is_finite() && (val >= base + 1e-4 * step * slope || max_abs(&gradient(&tt)) < 0.5 * worst) {
                x = trial;
                t = tt;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let residual = {
        let rs = (0..nr).map(|r| (a.values()[rows[r]] - t.row(r).sum()).abs()).fold(0.0, f64::max);
        let cs = (0..nc).map(|s| (b.values()[cols[s]] - t.column(s).sum()).abs()).fold(0.0, f64::max);
        rs.max(cs)
    };
    if residual > 1e-11 * scale {
        return Err(Error::Numeric(format!("dual Newton stalled at marginal residual {residual:e}")));
    }
    let mut full = Array2::zeros((n, n));
    for (r, &i) in rows.iter().enumerate() {
        for (s, &j) in cols.iter().enumerate() {
            full[[i, j]] = t[[r, s]];
        }
    }
    TransportPlan::new(full)
}

struct Enumeration<'a> {
    n: usize,
    a: &'a [f64],
    b: &'a [f64],
    vertices: Vec<Array2<f64>>,
}

impl Enumeration<'_> {
    fn find(parent: &[usize], mut x: usize) -> usize {
        while parent[x] != x {
            x = parent[x];
        }
        x
    }

    fn search(&mut self, cell: usize, chosen: &mut Vec<(usize, usize)>, parent: &[usize]) {
        let n = self.n;
        let needed = 2 * n - 1 - chosen.len();
        if needed == 0 {
            if let Some(t) = self.tree_flow(chosen) {
                self.vertices.push(t);
            }
            return;
        }
        if n * n - cell < needed {
            return;
        }
        let (i, j) = (cell / n, cell % n);
        let (ri, rj) = (Self::find(parent, i), Self::find(parent, n + j));
        if ri != rj {
            let mut joined = parent.to_vec();
            joined[ri] = rj;
            chosen.push((i, j));
            self.search(cell + 1, chosen, &joined);
            chosen.pop();
        }
        self.search(cell + 1, chosen, parent);
    }

    /// Flows on a spanning tree that meet the marginals, if non-negative.
    fn tree_flow(&self, edges: &[(usize, usize)]) -> Option<Array2<f64>> {
        let n = self.n;
        let mut remaining: Vec<f64> = self.a.iter().chain(self.b.iter()).copied().collect();
        let mut degree = vec![0usize; 2 * n];
        for &(i, j) in edges {
            degree[i] += 1;
            degree[n + j] += 1;
        }
        let mut used = vec![false; edges.len()];
        let mut t = Array2::zeros((n, n));
        for _ in 0..edges.len() {
            let leaf = (0..2 * n).find(|&x| degree[x] == 1)?;
            let e = (0..edges.len()).find(|&e| !used[e] && (edges[e].0 == leaf || n + edges[e].1 == leaf))?;
            let (i, j) = edges[e];
            let other = if leaf == i { n + j } else { i };
            let flow = remaining[leaf];
            t[[i, j]] = flow;
            remaining[leaf] = 0.0;
            remaining[other] -= flow;
            used[e] = true;
            degree[leaf] -= 1;
            degree[other] -= 1;
        }
        let mass: f64 = self.a.iter().sum();
        if t.iter().any(|&x| x < -1e-12 * mass) {
            return None;
        }
        t.mapv_inplace(|x| x.max(0.0));
        Some(t)
    }
}

fn enumerate_vertices(a: &Histogram, b: &Histogram, cost: &CostMatrix) -> Result<BruteForcePlan> {
    let n = a.len();
    let mut en = Enumeration { n, a: a.as_slice(), b: b.as_slice(), vertices: Vec::new() };
    let parent: Vec<usize> = (0..2 * n).collect();
    en.search(0, &mut Vec::with_capacity(2 * n - 1), &parent);
    let costs: Vec<f64> = en.vertices.iter().map(|t| (t * cost.entries()).sum()).collect();
    let value = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * value.abs().max(a.mass());
    let mass = a.mass();
    let mut optimal: Vec<Array2<f64>> = Vec::new();
    for (t, &c) in en.vertices.into_iter().zip(&costs) {
        if c <= value + slack
            && !optimal.iter().any(|o| o.iter().zip(t.iter()).all(|(x, y)| (x - y).abs() <= 1e-12 * mass))
        {
            optimal.push(t);
        }
    }
    let optimal_vertices = optimal.into_iter().map(TransportPlan::new).collect::<Result<Vec<_>>>()?;
    Ok(BruteForcePlan::Lp { optimal_vertices, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn forced_vertex() {
        let a = Histogram::new(array![1.0, 0.0]).unwrap();
        let b = Histogram::new(array![0.0, 1.0]).unwrap();
        let BruteForcePlan::Lp { optimal_vertices, value } = brute_force_plan(&a, &b, &CostMatrix::line(2), 0.0).unwrap()
        else {
            panic!("expected LP result")
        };
        assert_eq!(optimal_vertices.len(), 1);
        assert_eq!(optimal_vertices[0].entries(), &array![[0.0, 1.0], [0.0, 0.0]]);
        assert_eq!(value, 1.0);
    }

    #[test]
    fn tied_costs_list_every_vertex() {
        let a = Histogram::new(array![0.5, 0.5]).unwrap();
        let cost = CostMatrix::new(Array2::zeros((2, 2))).unwrap();
        let BruteForcePlan::Lp { optimal_vertices, .. } = brute_force_plan(&a, &a, &cost, 0.0).unwrap() else {
            panic!("expected LP result")
        };
        assert_eq!(optimal_vertices.len(), 2);
    }

    #[test]
    fn entropic_zero_cost_is_independent() {
        let a = Histogram::new(array![0.2, 0.8]).unwrap();
        let b = Histogram::new(array![0.6, 0.4]).unwrap();
        let cost = CostMatrix::new(Array2::zeros((2, 2))).unwrap();
        let BruteForcePlan::Entropic(p) = brute_force_plan(&a, &b, &cost, 1.0).unwrap() else { panic!() };
        for ((i, j), &x) in p.entries().indexed_iter() {
            assert!((x - a.values()[i] * b.values()[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn size_cap() {
        let a = Histogram::uniform(6, 1.0).unwrap();
        assert!(matches!(brute_force_plan(&a, &a, &CostMatrix::line(6), 1.0), Err(Error::Capability(_))));
    }
}
