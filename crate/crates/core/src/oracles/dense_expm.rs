use ndarray::Array2;

/// `exp(A)` by scaling and squaring with a Taylor series.
pub fn dense_expm(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let norm = a.rows().into_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled = a * scale;
    let mut result = Array2::<f64>::eye(n);
    let mut term = Array2::<f64>::eye(n);
    for k in 1..=30 {
        term = term.dot(&scaled) / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_state_chain() {
        let q = array![[-1.0, 1.0], [1.0, -1.0]];
        let e = dense_expm(&q);
        let d = (-2.0f64).exp();
        assert!((e[[0, 0]] - (1.0 + d) / 2.0).abs() < 1e-15);
        assert!((e[[0, 1]] - (1.0 - d) / 2.0).abs() < 1e-15);
    }
}
