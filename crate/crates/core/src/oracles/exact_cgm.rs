use ndarray::Array2;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, shape, Result};
use crate::matrix::Kernel;

/// Integer edge table of the two-node model, drawn from `F` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactCgmInstance {
    pub psi: Kernel,
    pub mass: u64,
    pub table: Array2<i64>,
}

/// Exact `log Pr(t)` of the two-node CGM:
/// `log F! - F log Z + Σ (t_ij log ψ_ij - log t_ij!)`.
///
/// Tables that do not total `F` have probability zero and give `-∞`.
pub fn exact_cgm_log_joint(instance: &ExactCgmInstance) -> Result<f64> {
    let n = instance.psi.n();
    if instance.table.dim() != (n, n) {
        return Err(shape(format!("table is {:?}, kernel is {n}x{n}", instance.table.dim())));
    }
    if let Some(((i, j), &v)) = instance.table.indexed_iter().find(|(_, &v)| v < 0) {
        return Err(domain(format!("table entry ({i}, {j}) is negative ({v})")));
    }
    let total: i64 = instance.table.sum();
    if total as u64 != instance.mass {
        return Ok(f64::NEG_INFINITY);
    }
    let f = instance.mass as f64;
    let mut acc = ln_gamma(f + 1.0) - f * instance.psi.partition_function().ln();
    for ((i, j), &t) in instance.table.indexed_iter() {
        if t > 0 {
            let t = t as f64;
            acc += t * instance.psi.get(i, j).ln() - ln_gamma(t + 1.0);
        }
    }
    Ok(acc)
}

/// All `n × n` non-negative integer tables with entry sum `mass`.
pub fn enumerate_tables(n: usize, mass: u64) -> Vec<Array2<i64>> {
    fn fill(cells: &mut Vec<i64>, remaining: i64, slots: usize, out: &mut Vec<Vec<i64>>) {
        if slots == 1 {
            cells.push(remaining);
            out.push(cells.clone());
            cells.pop();
            return;
        }
        for v in 0..=remaining {
            cells.push(v);
            fill(cells, remaining - v, slots - 1, out);
            cells.pop();
        }
    }
    let mut raw = Vec::new();
    fill(&mut Vec::with_capacity(n * n), mass as i64, n * n, &mut raw);
    raw.into_iter().map(|cells| Array2::from_shape_vec((n, n), cells).expect("n*n cells")).collect()
}
