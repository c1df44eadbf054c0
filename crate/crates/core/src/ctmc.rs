use ndarray::{Array2, ArrayView2};

use crate::error::{domain, shape, Result};
use crate::matrix::CsrMatrix;

/// Generator `Q` of a continuous-time Markov chain.
///
/// Off-diagonal rates are non-negative and every row sums to zero; the
/// diagonal is always recomputed from the off-diagonal entries so the row
/// sums are exact. A row of zeros (absorbing state) is allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct CtmcModel {
    rates: CsrMatrix,
}

impl CtmcModel {
    /// Validates a dense generator. Row sums must vanish to within
    /// `1e-12 · max(1, max |Q_ij| in the row)`.
    pub fn from_dense(q: ArrayView2<f64>) -> Result<Self> {
        let (r, c) = q.dim();
        if r != c || r == 0 {
            return Err(shape(format!("rate matrix must be square and non-empty, got {r}x{c}")));
        }
        let mut triplets = Vec::new();
        for i in 0..r {
            let row = q.row(i);
            let scale = row.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let sum: f64 = row.sum();
            if !sum.is_finite() || sum.abs() > 1e-12 * scale {
                return Err(domain(format!("row {i} of the rate matrix sums to {sum}, not 0")));
            }
            for j in 0..c {
                if i != j && q[[i, j]] != 0.0 {
                    triplets.push((i, j, q[[i, j]]));
                }
            }
        }
        Self::from_off_diagonal(r, &triplets)
    }

    /// Builds from off-diagonal rates; the diagonal is derived.
    pub fn from_off_diagonal(n: usize, rates: &[(usize, usize, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(shape("rate matrix must be non-empty"));
        }
        let mut diag = vec![0.0; n];
        let mut triplets = Vec::with_capacity(rates.len() + n);
        for &(i, j, v) in rates {
            if i == j {
                return Err(domain(format!("diagonal entry ({i}, {i}) passed as an off-diagonal rate")));
            }
            if !(v >= 0.0) || !v.is_finite() {
                return Err(domain(format!("rate ({i}, {j}) = {v} must be finite and >= 0")));
            }
            if i >= n || j >= n {
                return Err(shape(format!("rate ({i}, {j}) outside an {n}x{n} generator")));
            }
            if v > 0.0 {
                diag[i] += v;
                triplets.push((i, j, v));
            }
        }
        for (i, d) in diag.iter().enumerate() {
            if *d > 0.0 {
                triplets.push((i, i, -d));
            }
        }
        Ok(Self { rates: CsrMatrix::from_triplets(n, n, &triplets)? })
    }

    pub fn n(&self) -> usize {
        self.rates.shape().0
    }

    pub fn rates(&self) -> &CsrMatrix {
        &self.rates
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.rates.to_dense_matrix()
    }

    /// `max_i |Q_ii|`, the uniformization rate.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.n()).map(|i| -self.rates.get(i, i)).fold(0.0, f64::max)
    }

    /// Same chain with every rate multiplied by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let off: Vec<_> = self.rates.iter().filter(|(i, j, _)| i != j).map(|(i, j, v)| (i, j, v * factor)).collect();
        Self::from_off_diagonal(self.n(), &off)
    }
}

/// Generator on a `rows x cols` grid with rate `q` between 4-neighbours.
/// Cell `(r, c)` has index `r * cols + c`.
pub fn build_grid_rate_matrix(rows: usize, cols: usize, q: f64) -> Result<CtmcModel> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(domain(format!("grid rate q must be > 0, got {q}")));
    }
    if rows == 0 || cols == 0 {
        return Err(domain("grid must have at least one cell"));
    }
    let idx = |r: usize, c: usize| r * cols + c;
    let mut off = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if r + 1 < rows {
                off.push((idx(r, c), idx(r + 1, c), q));
                off.push((idx(r + 1, c), idx(r, c), q));
            }
            if c + 1 < cols {
                off.push((idx(r, c), idx(r, c + 1), q));
                off.push((idx(r, c + 1), idx(r, c), q));
            }
        }
    }
    CtmcModel::from_off_diagonal(rows * cols, &off)
}
