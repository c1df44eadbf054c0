use ndarray::{Array1, ArrayView1};

use crate::error::{domain, Result};

/// A non-negative vector together with its total mass `F`.
///
/// Probability vectors are the `F = 1` case; solvers work on the
/// unnormalized values directly.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    values: Array1<f64>,
    mass: f64,
}

impl Histogram {
    pub fn new(values: impl Into<Array1<f64>>) -> Result<Self> {
        let values = values.into();
        if values.is_empty() {
            return Err(domain("histogram must have at least one entry"));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(domain(format!("histogram entry {i} is {v}; entries must be finite and >= 0")));
            }
        }
        let mass = values.sum();
        Ok(Self { values, mass })
    }

    /// A histogram with all mass `mass` in cell `index`.
    pub fn point_mass(n: usize, index: usize, mass: f64) -> Result<Self> {
        if index >= n {
            return Err(domain(format!("index {index} out of range for length {n}")));
        }
        let mut v = Array1::zeros(n);
        v[index] = mass;
        Self::new(v)
    }

    pub fn uniform(n: usize, mass: f64) -> Result<Self> {
        Self::new(Array1::from_elem(n, mass / n as f64))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice().expect("histogram storage is contiguous")
    }

    pub fn into_values(self) -> Array1<f64> {
        self.values
    }

    /// Same shape, scaled to total mass `mass`.
    pub fn rescaled(&self, mass: f64) -> Result<Self> {
        if self.mass <= 0.0 {
            return Err(domain("cannot rescale a zero-mass histogram"));
        }
        Self::new(&self.values * (mass / self.mass))
    }

    pub fn reversed(&self) -> Self {
        Self { values: self.values.iter().rev().copied().collect(), mass: self.mass }
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// Checks that two masses agree to within `rel` relative tolerance.
pub fn check_equal_mass(a: &Histogram, b: &Histogram, rel: f64) -> Result<()> {
    let scale = a.mass().abs().max(b.mass().abs()).max(f64::MIN_POSITIVE);
    if (a.mass() - b.mass()).abs() > rel * scale {
        return Err(domain(format!(
            "histogram masses differ: {} vs {}",
            a.mass(),
            b.mass()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_negative_and_nan() {
        assert!(Histogram::new(array![1.0, -0.5]).is_err());
        assert!(Histogram::new(array![f64::NAN]).is_err());
        assert!(Histogram::new(Array1::<f64>::zeros(0)).is_err());
    }

    #[test]
    fn mass_is_entry_sum() {
        let h = Histogram::new(array![100.0, 0.0, 0.0]).unwrap();
        assert_eq!(h.mass(), 100.0);
        assert_eq!(h.argmax(), 0);
        assert_eq!(h.reversed().as_slice(), &[0.0, 0.0, 100.0]);
    }

    #[test]
    fn mass_mismatch_detected() {
        let a = Histogram::new(array![1.0, 1.0]).unwrap();
        let b = Histogram::new(array![1.0, 1.5]).unwrap();
        assert!(check_equal_mass(&a, &b, 1e-9).is_err());
        assert!(check_equal_mass(&a, &a, 1e-9).is_ok());
    }
}
