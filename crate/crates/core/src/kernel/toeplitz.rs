use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// First column `a_0, a_1, …` of a lower-triangular Toeplitz operator.
/// Coefficients past the stored length are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ToeplitzSeq(Vec<f64>);

impl ToeplitzSeq {
    pub fn new(coeffs: Vec<f64>) -> Self {
        ToeplitzSeq(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    /// First `n` coefficients of the operator product `self · other`.
    pub fn compose(&self, other: &ToeplitzSeq, n: usize) -> ToeplitzSeq {
        let out = (0..n)
            .map(|k| (0..=k).map(|j| self.get(k - j) * other.get(j)).sum())
            .collect();
        ToeplitzSeq(out)
    }

    /// The `n × n` leading block of the operator.
    pub fn to_matrix(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if i >= j { self.get(i - j) } else { 0.0 })
    }
}

/// First `n` coefficients of the inverse of a lower-triangular Toeplitz
/// operator, which is again lower-triangular Toeplitz:
///
/// `b_0 = 1/a_0`, `b_k = -(1/a_0) Σ_{j<k} a_{k-j} b_j`.
pub fn toeplitz_inverse(a: &ToeplitzSeq, n: usize) -> Result<ToeplitzSeq> {
    let a0 = a.get(0);
    if a0 == 0.0 || !a0.is_finite() {
        return Err(Error::SingularOperator);
    }
    let mut b = Vec::with_capacity(n);
    for k in 0..n {
        if k == 0 {
            b.push(1.0 / a0);
            continue;
        }
        // only the first a.len() coefficients of `a` are nonzero
        let lo = k.saturating_sub(a.len().saturating_sub(1));
        let acc: f64 = (lo..k).map(|j| a.get(k - j) * b[j]).sum();
        b.push(-acc / a0);
    }
    Ok(ToeplitzSeq(b))
}
