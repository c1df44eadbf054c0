use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{domain, Result};
use crate::histogram::Histogram;
use crate::numeric::max_abs_diff;

/// Non-negative coupling matrix with its row and column marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    entries: Array2<f64>,
    row_marginal: Histogram,
    col_marginal: Histogram,
}

impl TransportPlan {
    /// Wraps a non-negative matrix; marginals are its row and column sums.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if let Some(((i, j), v)) = entries.indexed_iter().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(domain(format!("plan entry ({i}, {j}) = {v} is negative or not finite")));
        }
        let row_marginal = Histogram::new(entries.sum_axis(Axis(1)))?;
        let col_marginal = Histogram::new(entries.sum_axis(Axis(0)))?;
        Ok(Self { entries, row_marginal, col_marginal })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn row_marginal(&self) -> &Histogram {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &Histogram {
        &self.col_marginal
    }

    pub fn mass(&self) -> f64 {
        self.row_marginal.mass()
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Max-norm violation of `T1 = a` and `Tᵀ1 = b`, absolute units.
    pub fn marginal_violation(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        max_abs_diff(self.row_marginal.values(), a).max(max_abs_diff(self.col_marginal.values(), b))
    }

    /// `T / F` for the given mass.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.entries * factor)
    }
}
