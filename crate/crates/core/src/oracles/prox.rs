use crate::noisy_ot::NoiseModel;

/// Derivative of `x log(x/u) - x + u + A(x)` in `x`.
fn slope(model: NoiseModel, alpha: f64, u: f64, x: f64) -> f64 {
    let penalty = match model {
        NoiseModel::Gaussian { sigma } => (x - alpha) / (sigma * sigma),
        NoiseModel::Poisson => 1.0 - alpha / x,
        NoiseModel::ExactMarginal => unreachable!(),
    };
    (x / u).ln() + penalty
}

/// Scalar KL prox by power-of-two bracketing and bisection on the
/// derivative in `x` itself.
pub fn prox_oracle_1d(model: NoiseModel, alpha: f64, u: f64) -> f64 {
    match model {
        NoiseModel::ExactMarginal => return alpha,
        NoiseModel::Gaussian { sigma } if sigma.is_infinite() => return u,
        _ => {}
    }
    let mut lo = u;
    while slope(model, alpha, u, lo) > 0.0 {
        lo *= 0.5;
    }
    let mut hi = u;
    while slope(model, alpha, u, hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(model, alpha, u, mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(prox_oracle_1d(NoiseModel::Gaussian { sigma: f64::INFINITY }, 1.0, 3.0), 3.0);
        assert_eq!(prox_oracle_1d(NoiseModel::ExactMarginal, 0.4, 3.0), 0.4);
        let x = prox_oracle_1d(NoiseModel::Poisson, 0.0, 2.0);
        assert!((x - 2.0 / std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn gaussian_root() {
        // log(x/2) + x - 1 = 0  <=>  x e^x = 2e
        let x = prox_oracle_1d(NoiseModel::Gaussian { sigma: 1.0 }, 1.0, 2.0);
        assert!(((x / 2.0).ln() + x - 1.0).abs() < 1e-14);
    }
}
