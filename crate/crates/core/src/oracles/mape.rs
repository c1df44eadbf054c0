use ndarray::ArrayView1;

use crate::error::{domain, shape, Result};

/// Mean absolute percentage error over cells with non-zero truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mape {
    pub value: f64,
    /// Cells skipped because the true count is zero.
    pub excluded: usize,
}

/// `(1/n') Σ |(N_i - N̂_i) / N_i|` over the `n'` cells with `N_i > 0`.
pub fn mape(estimate: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<Mape> {
    if estimate.len() != truth.len() {
        return Err(shape(format!("estimate has length {}, truth {}", estimate.len(), truth.len())));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (&e, &t) in estimate.iter().zip(truth.iter()) {
        if t != 0.0 {
            sum += ((t - e) / t).abs();
            used += 1;
        }
    }
    if used == 0 {
        return Err(domain("truth histogram is all zero"));
    }
    Ok(Mape { value: sum / used as f64, excluded: truth.len() - used })
}
