//! Small numeric helpers shared by the solvers.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// `x log x` with the continuous extension `0 log 0 = 0`.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Entrywise `num / den` where `0 / x = 0`.
///
/// A positive numerator over a denominator at or below `floor` cannot be
/// scaled to match and is reported as infeasible.
pub fn guarded_div(num: ArrayView1<f64>, den: ArrayView1<f64>, floor: f64) -> Result<Array1<f64>> {
    debug_assert_eq!(num.len(), den.len());
    let mut out = Array1::zeros(num.len());
    for (i, (&a, &w)) in num.iter().zip(den.iter()).enumerate() {
        if a == 0.0 {
            continue;
        }
        if !(w > floor) {
            return Err(Error::Infeasible(format!(
                "entry {i} has mass {a} but its scaling denominator is {w:e}"
            )));
        }
        out[i] = a / w;
    }
    Ok(out)
}

/// `log(sum(exp(v)))` with a max shift; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<I: IntoIterator<Item = f64> + Clone>(values: I) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = values.into_iter().map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// Largest relative change between two scaling vectors.
///
/// Entries that are zero in both vectors are ignored.
pub fn max_relative_change(old: ArrayView1<f64>, new: ArrayView1<f64>) -> f64 {
    old.iter()
        .zip(new.iter())
        .map(|(&o, &n)| {
            let scale = o.abs().max(n.abs());
            if scale == 0.0 {
                0.0
            } else {
                (n - o).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

pub(crate) fn max_abs_diff(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn xlogx_zero() {
        assert_eq!(xlogx(0.0), 0.0);
        assert!((xlogx(0.25) - 0.25 * 0.25f64.ln()).abs() < 1e-16);
    }

    #[test]
    fn guarded_division_rules() {
        let out = guarded_div(array![0.0, 2.0].view(), array![0.0, 4.0].view(), 1e-300).unwrap();
        assert_eq!(out, array![0.0, 0.5]);
        let err = guarded_div(array![1.0].view(), array![0.0].view(), 1e-300).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn lse_matches_direct() {
        let v = [0.1, -2.0, 3.5];
        let direct = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(v) - direct).abs() < 1e-14);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY; 2]), f64::NEG_INFINITY);
        // no overflow for large arguments
        assert!((log_sum_exp([1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
