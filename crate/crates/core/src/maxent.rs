//! Maximum-entropy band extension.
//!
//! Given the entries `c_{t,s}` of a symmetric matrix for `|t-s| <= m`, the
//! positive definite completion maximizing `log det` is the unique one whose
//! inverse is banded with bandwidth `m`. It is built one entry at a time: each
//! entry on diagonal `m+1, m+2, …` is the one-step extension of the principal
//! submatrix it closes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric band data: `bands[k][j] = c_{j+k, j}` (0-based) for `k <= m`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandSpec {
    bands: Vec<Vec<f64>>,
}

impl BandSpec {
    /// `bands[0]` is the main diagonal, `bands[k]` has length `T - k`.
    pub fn new(bands: Vec<Vec<f64>>) -> Result<Self> {
        let dim = bands.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Dimension("band data need a nonempty diagonal".into()));
        }
        if bands.len() > dim {
            return Err(Error::Dimension(format!(
                "bandwidth {} must be smaller than the dimension {dim}",
                bands.len() - 1
            )));
        }
        for (k, band) in bands.iter().enumerate() {
            if band.len() != dim - k {
                return Err(Error::Dimension(format!(
                    "band {k} has length {}, expected {}",
                    band.len(),
                    dim - k
                )));
            }
            if band.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("band {k} has a non-finite entry")));
            }
        }
        Ok(BandSpec { bands })
    }

    /// The band of width `bandwidth` of a square matrix (lower triangle read).
    pub fn from_matrix(m: &DMatrix<f64>, bandwidth: usize) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension("band source must be square".into()));
        }
        let n = m.nrows();
        let width = bandwidth.min(n.saturating_sub(1));
        Self::new((0..=width).map(|k| (0..n - k).map(|j| m[(j + k, j)]).collect()).collect())
    }

    pub fn dim(&self) -> usize {
        self.bands[0].len()
    }

    pub fn bandwidth(&self) -> usize {
        self.bands.len() - 1
    }

    pub fn band(&self, k: usize) -> &[f64] {
        &self.bands[k]
    }

    /// `c_{i,j}` (0-based) inside the band, `None` outside.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = i.abs_diff(j);
        self.bands.get(k).and_then(|b| b.get(i.min(j)).copied())
    }

    /// Overwrites `c_{i,j}` and `c_{j,i}` inside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        let k = i.abs_diff(j);
        let lo = i.min(j);
        match self.bands.get_mut(k).and_then(|b| b.get_mut(lo)) {
            Some(slot) => {
                *slot = v;
                Ok(())
            }
            None => Err(Error::Dimension(format!("entry ({i}, {j}) lies outside the band"))),
        }
    }

    /// Dense matrix with the band filled in and zeros elsewhere.
    pub fn to_partial_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j).unwrap_or(0.0))
    }

    fn block(&self, start: usize) -> DMatrix<f64> {
        let b = self.bandwidth() + 1;
        DMatrix::from_fn(b, b, |i, j| self.get(start + i, start + j).unwrap_or(0.0))
    }
}

/// Outcome of [`check_feasibility`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Feasibility {
    pub feasible: bool,
    /// 1-based index of the first sliding block that is not positive definite.
    pub first_failure: Option<usize>,
}

/// Relative eigenvalue floor below which a block counts as singular.
pub const PD_TOL: f64 = 1e-12;

/// A band admits a positive definite extension iff every `(m+1)×(m+1)`
/// sliding principal block is positive definite.
pub fn check_feasibility(spec: &BandSpec) -> Feasibility {
    let blocks = spec.dim() - spec.bandwidth();
    for start in 0..blocks {
        let eig = spec.block(start).symmetric_eigenvalues();
        let norm = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if !(norm > 0.0 && min > PD_TOL * norm) {
            return Feasibility { feasible: false, first_failure: Some(start + 1) };
        }
    }
    Feasibility { feasible: true, first_failure: None }
}

/// Maximum-entropy value of the corner `(1, T)` of a symmetric `T×T` matrix
/// whose other entries are known. The corner entries of `partial` are ignored.
///
/// `x = -(1/y₁) Σ_{j=2}^{T-1} c_{T,j} y_j` with `y = L⁻¹ e₁`, where `L` is the
/// leading `(T-1)×(T-1)` block.
pub fn one_step_extension(partial: &DMatrix<f64>) -> Result<f64> {
    let n = partial.nrows();
    if !partial.is_square() || n < 2 {
        return Err(Error::Dimension(format!(
            "one-step extension needs a square matrix of size at least 2, got {}x{}",
            partial.nrows(),
            partial.ncols()
        )));
    }
    let lead = partial.view((0, 0), (n - 1, n - 1)).clone_owned();
    let chol = lead.cholesky().ok_or(Error::InfeasibleExtension { block: None })?;
    let mut e1 = DVector::zeros(n - 1);
    e1[0] = 1.0;
    let y = chol.solve(&e1);
    let acc: f64 = (1..n - 1).map(|j| partial[(n - 1, j)] * y[j]).sum();
    Ok(-acc / y[0])
}

/// Maximum-entropy completion and its entropy `log det`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletionResult {
    pub matrix: DMatrix<f64>,
    pub entropy: f64,
}

/// Fills the diagonals outside the band outward, left to right within each
/// diagonal; entry `(s, t)` is the one-step extension of rows/columns `s..=t`.
pub fn maxent_completion(spec: &BandSpec) -> Result<CompletionResult> {
    let feas = check_feasibility(spec);
    if !feas.feasible {
        return Err(Error::InfeasibleExtension { block: feas.first_failure });
    }
    let n = spec.dim();
    let mut m = spec.to_partial_matrix();
    for k in spec.bandwidth() + 1..n {
        for s in 0..n - k {
            let t = s + k;
            let sub = m.view((s, s), (k + 1, k + 1)).clone_owned();
            let x = one_step_extension(&sub)?;
            m[(s, t)] = x;
            m[(t, s)] = x;
        }
    }
    let entropy = log_det(&m).ok_or(Error::InfeasibleExtension { block: None })?;
    Ok(CompletionResult { matrix: m, entropy })
}

/// `log det` of a symmetric positive definite matrix.
pub fn log_det(m: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    Some(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}
