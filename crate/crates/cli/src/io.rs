//! Text formats: histogram CSV, matrix CSV (dense or triplets) and the
//! tree and grid JSON documents.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cgmot::{CostMatrix, CsrMatrix, CtmcModel, Histogram, Kernel, TreeCgm};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Canonical number format: 17 significant digits, exact on re-parse.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_f64(path: &Path, line: usize, field: &str) -> CliResult<f64> {
    let v: f64 = field.trim().parse().map_err(|_| CliError::parse(path, line, format!("not a number: {field:?}")))?;
    if !v.is_finite() {
        return Err(CliError::parse(path, line, format!("non-finite value {field:?}")));
    }
    Ok(v)
}

fn parse_index(path: &Path, line: usize, field: &str) -> CliResult<usize> {
    field.trim().parse().map_err(|_| CliError::parse(path, line, format!("not an index: {field:?}")))
}

pub fn parse_histogram(path: &Path, text: &str) -> CliResult<Histogram> {
    let mut values = Vec::new();
    for (line, content) in data_lines(text) {
        let fields: Vec<&str> = content.split(',').collect();
        if values.is_empty() && fields.first().is_some_and(|f| f.trim() == "index") {
            continue;
        }
        if fields.len() != 2 {
            return Err(CliError::parse(path, line, format!("expected `index,value`, got {} fields", fields.len())));
        }
        let idx = parse_index(path, line, fields[0])?;
        if idx != values.len() {
            return Err(CliError::parse(path, line, format!("expected index {}, got {idx}", values.len())));
        }
        let v = parse_f64(path, line, fields[1])?;
        if v < 0.0 {
            return Err(CliError::parse(path, line, format!("negative histogram entry {v}")));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(CliError::parse(path, 1, "histogram file has no entries"));
    }
    Ok(Histogram::new(values)?)
}

pub fn load_histogram(path: &Path) -> CliResult<Histogram> {
    parse_histogram(path, &read_text(path)?)
}

pub fn histogram_to_csv(h: &Histogram) -> String {
    let mut out = String::new();
    for (i, &v) in h.as_slice().iter().enumerate() {
        writeln!(out, "{i},{}", format_value(v)).expect("writing to a String");
    }
    out
}

pub fn save_histogram(path: &Path, h: &Histogram) -> CliResult<()> {
    write_text(path, &histogram_to_csv(h))
}

/// A matrix as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixData {
    Dense(Array2<f64>),
    Triplets { n: usize, entries: Vec<(usize, usize, f64)> },
}

impl MatrixData {
    pub fn n(&self) -> usize {
        match self {
            MatrixData::Dense(m) => m.nrows(),
            MatrixData::Triplets { n, .. } => *n,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            MatrixData::Dense(m) => m.clone(),
            MatrixData::Triplets { n, entries } => {
                let mut m = Array2::zeros((*n, *n));
                for &(i, j, v) in entries {
                    m[[i, j]] = v;
                }
                m
            }
        }
    }

    pub fn to_cost(&self) -> CliResult<CostMatrix> {
        Ok(CostMatrix::new(self.to_dense())?)
    }

    /// Dense kernels must be positive everywhere; triplet kernels keep
    /// their sparsity.
    pub fn to_kernel(&self) -> CliResult<Kernel> {
        Ok(match self {
            MatrixData::Dense(m) => Kernel::dense(m.clone())?,
            MatrixData::Triplets { n, entries } => Kernel::sparse(CsrMatrix::from_triplets(*n, *n, entries)?)?,
        })
    }

    /// Triplet files may omit the diagonal; it is recomputed either way.
    pub fn to_rate_matrix(&self) -> CliResult<CtmcModel> {
        Ok(match self {
            MatrixData::Dense(m) => CtmcModel::from_dense(m.view())?,
            MatrixData::Triplets { n, entries } => {
                let off: Vec<_> = entries.iter().copied().filter(|(i, j, _)| i != j).collect();
                CtmcModel::from_off_diagonal(*n, &off)?
            }
        })
    }
}

fn looks_like_triplets(rows: &[(usize, Vec<&str>)]) -> bool {
    let integral = |s: &str| s.trim().parse::<usize>().is_ok();
    rows.len() != 3 && !rows.is_empty() && rows.iter().all(|(_, f)| f.len() == 3 && integral(f[0]) && integral(f[1]))
}

/// Parses a dense CSV or a `row,col,value` triplet list.
///
/// A `row,col,value` header selects triplets. Without one, a file is read
/// as triplets when every line has three fields, the first two are
/// non-negative integers, and the line count is not three (a 3×3 dense
/// matrix would otherwise be ambiguous).
pub fn parse_matrix(path: &Path, text: &str) -> CliResult<MatrixData> {
    let mut rows: Vec<(usize, Vec<&str>)> = data_lines(text).map(|(n, l)| (n, l.split(',').collect())).collect();
    let header = rows.first().is_some_and(|(_, f)| f.iter().map(|s| s.trim()).eq(["row", "col", "value"]));
    if header {
        rows.remove(0);
    }
    if rows.is_empty() {
        return Err(CliError::parse(path, 1, "matrix file has no entries"));
    }
    if header || looks_like_triplets(&rows) {
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(rows.len());
        let mut n = 0;
        for (line, f) in &rows {
            if f.len() != 3 {
                return Err(CliError::parse(path, *line, "expected `row,col,value`"));
            }
            let (i, j) = (parse_index(path, *line, f[0])?, parse_index(path, *line, f[1])?);
            if !seen.insert((i, j)) {
                return Err(CliError::parse(path, *line, format!("duplicate entry ({i}, {j})")));
            }
            entries.push((i, j, parse_f64(path, *line, f[2])?));
            n = n.max(i + 1).max(j + 1);
        }
        return Ok(MatrixData::Triplets { n, entries });
    }
    let width = rows[0].1.len();
    let mut values = Vec::with_capacity(rows.len() * width);
    for (line, f) in &rows {
        if f.len() != width {
            return Err(CliError::parse(path, *line, format!("expected {width} columns, got {}", f.len())));
        }
        for field in f {
            values.push(parse_f64(path, *line, field)?);
        }
    }
    if rows.len() != width {
        return Err(CliError::parse(path, rows[0].0, format!("matrix is {}x{width}, expected square", rows.len())));
    }
    Ok(MatrixData::Dense(Array2::from_shape_vec((width, width), values).expect("row-major shape")))
}

pub fn load_matrix(path: &Path) -> CliResult<MatrixData> {
    parse_matrix(path, &read_text(path)?)
}

pub fn matrix_to_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn save_matrix(path: &Path, m: &Array2<f64>) -> CliResult<()> {
    write_text(path, &matrix_to_csv(m))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Path(PathBuf),
    Inline(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HistogramSource {
    Path(PathBuf),
    Inline(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub u: u64,
    pub v: u64,
    pub kernel: MatrixSource,
}

/// On-disk description of a tree CGM. Relative paths resolve against the
/// directory holding the document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeDoc {
    pub nodes: Vec<u64>,
    pub edges: Vec<EdgeDoc>,
    pub observations: BTreeMap<String, HistogramSource>,
    pub mass: f64,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn missing(path: PathBuf, what: &str) -> CliError {
    CliError::io(path.clone(), std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} not found")))
}

pub fn load_tree(path: &Path) -> CliResult<TreeCgm> {
    let text = read_text(path)?;
    let doc: TreeDoc = serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line(), e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut edges = Vec::with_capacity(doc.edges.len());
    for e in &doc.edges {
        let kernel = match &e.kernel {
            MatrixSource::Path(p) => {
                let full = resolve(base, p);
                if !full.exists() {
                    return Err(missing(full, "kernel file"));
                }
                load_matrix(&full)?.to_kernel()?
            }
            MatrixSource::Inline(rows) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(CliError::Config(format!("inline kernel on edge ({}, {}) is not square", e.u, e.v)));
                }
                Kernel::dense(Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]))?
            }
        };
        edges.push((e.u, e.v, kernel));
    }
    let mut observations = BTreeMap::new();
    for (key, src) in &doc.observations {
        let id: u64 = key.parse().map_err(|_| CliError::Config(format!("observation key {key:?} is not a node id")))?;
        let h = match src {
            HistogramSource::Path(p) => {
                let full = resolve(base, p);
                if !full.exists() {
                    return Err(missing(full, "observation file"));
                }
                load_histogram(&full)?
            }
            HistogramSource::Inline(v) => Histogram::new(v.clone())?,
        };
        if (h.mass() - doc.mass).abs() > 1e-9 * doc.mass.abs().max(1.0) {
            return Err(CliError::Config(format!("observation at node {id} has mass {}, document says {}", h.mass(), doc.mass)));
        }
        observations.insert(id, h);
    }
    Ok(TreeCgm::new(doc.nodes, edges, observations)?)
}

/// Grid layout plus the adjacency rate `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDoc {
    pub rows: usize,
    pub cols: usize,
    pub q: f64,
}

pub fn load_grid(path: &Path) -> CliResult<GridDoc> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn histogram_text_round_trip() {
        let h = Histogram::new(array![0.1, 1.0 / 3.0, 0.0, 7e-300, 12345.678]).unwrap();
        let back = parse_histogram(Path::new("h.csv"), &histogram_to_csv(&h)).unwrap();
        assert_eq!(back.as_slice(), h.as_slice());
    }

    #[test]
    fn histogram_errors_carry_lines() {
        let err = parse_histogram(Path::new("h.csv"), "0,1.0\n1,abc\n").unwrap_err();
        assert!(err.to_string().contains("h.csv:2"), "{err}");
        let err = parse_histogram(Path::new("h.csv"), "index,value\n0,1\n2,1\n").unwrap_err();
        assert!(err.to_string().contains(":3"), "{err}");
    }

    #[test]
    fn matrix_layouts() {
        let dense = parse_matrix(Path::new("m"), "1,2\n3,4\n").unwrap();
        assert_eq!(dense, MatrixData::Dense(array![[1.0, 2.0], [3.0, 4.0]]));
        let trip = parse_matrix(Path::new("m"), "0,0,1.5\n1,1,2\n0,1,3\n1,0,4\n").unwrap();
        assert_eq!(trip.to_dense(), array![[1.5, 3.0], [4.0, 2.0]]);
        // three lines of three integer-led fields is a dense 3x3 matrix
        let square = parse_matrix(Path::new("m"), "0,1,2\n1,0,1\n2,1,0\n").unwrap();
        assert!(matches!(square, MatrixData::Dense(_)));
        let headed = parse_matrix(Path::new("m"), "row,col,value\n0,1,2\n1,0,1\n2,1,0\n").unwrap();
        assert!(matches!(headed, MatrixData::Triplets { n: 3, .. }));
    }

    #[test]
    fn duplicate_triplet_rejected() {
        let err = parse_matrix(Path::new("m.csv"), "row,col,value\n0,0,1\n0,1,2\n0,0,3\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("m.csv:4") && text.contains("duplicate"), "{text}");
    }

    #[test]
    fn dense_matrix_round_trip() {
        let m = array![[0.1, 2.0 / 3.0], [1e-12, 5.0]];
        let back = parse_matrix(Path::new("m"), &matrix_to_csv(&m)).unwrap();
        assert_eq!(back.to_dense(), m);
    }
}
