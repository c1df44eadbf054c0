//! Matrix storage: a compact CSR type, positive kernels and cost matrices.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{domain, shape, Result};

/// Square linear map applied to vectors, optionally transposed.
///
/// Solvers that only need products `Mx` and `Mᵀx` are written against this
/// trait so that kernel powers and matrix exponentials never have to be
/// materialized.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64>;
    fn apply_transpose(&self, x: ArrayView1<f64>) -> Array1<f64>;

    fn apply_dir(&self, x: ArrayView1<f64>, transpose: bool) -> Array1<f64> {
        if transpose {
            self.apply_transpose(x)
        } else {
            self.apply(x)
        }
    }

    /// Dense materialization by applying the operator to unit vectors.
    fn to_dense(&self) -> Array2<f64> {
        let n = self.dim();
        let mut out = Array2::zeros((n, n));
        let mut e = Array1::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(e.view());
            out.column_mut(j).assign(&col);
            e[j] = 0.0;
        }
        out
    }
}

impl LinearOperator for Array2<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.dot(&x)
    }
    fn apply_transpose(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.t().dot(&x)
    }
    fn to_dense(&self) -> Array2<f64> {
        self.clone()
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicate positions are rejected.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(domain(format!("duplicate entry at ({}, {})", w[0].0, w[0].1)));
            }
        }
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut data = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            if r >= rows || c >= cols {
                return Err(shape(format!("entry ({r}, {c}) outside a {rows}x{cols} matrix")));
            }
            if !v.is_finite() {
                return Err(domain(format!("entry ({r}, {c}) is not finite")));
            }
            indptr[r + 1] += 1;
            indices.push(c);
            data.push(v);
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self { rows, cols, indptr, indices, data })
    }

    /// Keeps the non-zero entries of a dense matrix.
    pub fn from_dense(m: ArrayView2<f64>) -> Self {
        let (rows, cols) = m.dim();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for r in 0..rows {
            for c in 0..cols {
                let v = m[[r, c]];
                if v != 0.0 {
                    indices.push(c);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { rows, cols, indptr, indices, data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.indptr[row]..self.indptr[row + 1];
        match self.indices[range.clone()].binary_search(&col) {
            Ok(k) => self.data[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates over stored `(row, col, value)` entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.data[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    pub fn to_dense_matrix(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    pub fn matvec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.rows);
        for r in 0..self.rows {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            out[r] = acc;
        }
        out
    }

    pub fn matvec_transpose(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.cols);
        for r in 0..self.rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[self.indices[k]] += self.data[k] * xr;
            }
        }
        out
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.rows
    }
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.matvec(x)
    }
    fn apply_transpose(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.matvec_transpose(x)
    }
    fn to_dense(&self) -> Array2<f64> {
        self.to_dense_matrix()
    }
}

/// Square matrix of positive potentials `ψ`.
///
/// Dense kernels are strictly positive everywhere. Sparse kernels store only
/// positive entries; absent entries are structural zeros.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Dense(Array2<f64>),
    Sparse(CsrMatrix),
}

impl Kernel {
    pub fn dense(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c || r == 0 {
            return Err(shape(format!("kernel must be square and non-empty, got {r}x{c}")));
        }
        for ((i, j), &v) in entries.indexed_iter() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(domain(format!("kernel entry ({i}, {j}) = {v} is not strictly positive")));
            }
        }
        Ok(Kernel::Dense(entries))
    }

    pub fn sparse(m: CsrMatrix) -> Result<Self> {
        let (r, c) = m.shape();
        if r != c || r == 0 {
            return Err(shape(format!("kernel must be square and non-empty, got {r}x{c}")));
        }
        for (i, j, v) in m.iter() {
            if !(v > 0.0) {
                return Err(domain(format!("stored kernel entry ({i}, {j}) = {v} is not strictly positive")));
            }
        }
        Ok(Kernel::Sparse(m))
    }

    /// `ψ = exp(-C/ε)` entrywise.
    pub fn from_cost(cost: &CostMatrix, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(domain(format!("epsilon must be > 0, got {epsilon}")));
        }
        Kernel::dense(cost.entries().mapv(|c| (-c / epsilon).exp()))
    }

    pub fn n(&self) -> usize {
        match self {
            Kernel::Dense(m) => m.nrows(),
            Kernel::Sparse(m) => m.shape().0,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Kernel::Dense(m) => m[[i, j]],
            Kernel::Sparse(m) => m.get(i, j),
        }
    }

    pub fn to_dense_matrix(&self) -> Array2<f64> {
        match self {
            Kernel::Dense(m) => m.clone(),
            Kernel::Sparse(m) => m.to_dense_matrix(),
        }
    }

    /// Two-node partition function `Z = Σ_ij ψ_ij`.
    pub fn partition_function(&self) -> f64 {
        match self {
            Kernel::Dense(m) => m.sum(),
            Kernel::Sparse(m) => m.iter().map(|(_, _, v)| v).sum(),
        }
    }

    pub fn transposed(&self) -> Kernel {
        match self {
            Kernel::Dense(m) => Kernel::Dense(m.t().to_owned()),
            Kernel::Sparse(m) => {
                let t: Vec<_> = m.iter().map(|(r, c, v)| (c, r, v)).collect();
                let (r, c) = m.shape();
                Kernel::Sparse(CsrMatrix::from_triplets(c, r, &t).expect("transpose of valid CSR"))
            }
        }
    }
}

impl LinearOperator for Kernel {
    fn dim(&self) -> usize {
        self.n()
    }
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Kernel::Dense(m) => m.dot(&x),
            Kernel::Sparse(m) => m.matvec(x),
        }
    }
    fn apply_transpose(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Kernel::Dense(m) => m.t().dot(&x),
            Kernel::Sparse(m) => m.matvec_transpose(x),
        }
    }
    fn to_dense(&self) -> Array2<f64> {
        self.to_dense_matrix()
    }
}

/// Square matrix of finite ground costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c || r == 0 {
            return Err(shape(format!("cost matrix must be square and non-empty, got {r}x{c}")));
        }
        if let Some(((i, j), v)) = entries.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(domain(format!("cost entry ({i}, {j}) = {v} is not finite")));
        }
        Ok(Self(entries))
    }

    /// `C_ij = |i - j|` on `n` cells of a line.
    pub fn line(n: usize) -> Self {
        Self(Array2::from_shape_fn((n, n), |(i, j)| (i as f64 - j as f64).abs()))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.0
    }

    /// Entrywise `exp(-C)`, the kernel that pairs with this cost at `ε = 1`.
    pub fn to_kernel(&self) -> Result<Kernel> {
        Kernel::from_cost(self, 1.0)
    }
}

/// `C_ij = -log ψ_ij`.
pub fn cost_from_kernel(k: &Kernel) -> Result<CostMatrix> {
    let n = k.n();
    let mut c = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let v = k.get(i, j);
            if !(v > 0.0) {
                return Err(domain(format!("kernel entry ({i}, {j}) = {v} has no finite cost")));
            }
            c[[i, j]] = -v.ln();
        }
    }
    CostMatrix::new(c)
}
