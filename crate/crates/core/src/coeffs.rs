use std::ops::{Deref, DerefMut};

use ndarray::Array1;

/// A `(p+1)`-length coefficient vector with the intercept at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector(Array1<f64>);

impl CoefficientVector {
    pub fn zeros(len: usize) -> Self {
        CoefficientVector(Array1::zeros(len))
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        CoefficientVector(Array1::from(values))
    }

    /// Number of covariates, excluding the intercept.
    pub fn p(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn intercept(&self) -> f64 {
        self.0[0]
    }

    /// Indices `j ≥ 1` with `|β_j| > zero_tol`, ascending.
    pub fn support(&self, zero_tol: f64) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, v)| v.abs() > zero_tol)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Array1<f64>> for CoefficientVector {
    fn from(values: Array1<f64>) -> Self {
        CoefficientVector(values)
    }
}

impl Deref for CoefficientVector {
    type Target = Array1<f64>;

    fn deref(&self) -> &Array1<f64> {
        &self.0
    }
}

impl DerefMut for CoefficientVector {
    fn deref_mut(&mut self) -> &mut Array1<f64> {
        &mut self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_skips_intercept() {
        let b = CoefficientVector::from_vec(vec![3.0, 0.0, 1e-9, -2.0, 0.5]);
        assert_eq!(b.support(1e-8), vec![3, 4]);
        assert_eq!(b.p(), 4);
    }
}
