use nalgebra::DMatrix;

use super::build::{alternate_signs, build_kernel, series_trailing_rows};
use super::{kappa_of, KernelMatrix, KernelSpec, Shape};
use crate::error::{Error, Result};

/// Lower-triangular banded Cholesky factor `L` of a kernel inverse,
/// `K⁻¹ = L Lᵀ`, together with `log det K`.
///
/// `bands[k][j]` holds `L[j + k, j]`, the `k`-th subdiagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedFactor {
    dim: usize,
    bandwidth: usize,
    bands: Vec<Vec<f64>>,
    logdet_k: f64,
}

impl BandedFactor {
    /// Builds a factor from bands; `logdet_k` defaults to `-2 Σ log L_ii`.
    pub fn from_bands(bands: Vec<Vec<f64>>, logdet_k: Option<f64>) -> Result<Self> {
        let dim = bands.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Dimension("factor must have a nonempty diagonal".into()));
        }
        for (k, band) in bands.iter().enumerate() {
            if band.len() != dim.saturating_sub(k) {
                return Err(Error::Dimension(format!(
                    "band {k} has length {}, expected {}",
                    band.len(),
                    dim.saturating_sub(k)
                )));
            }
        }
        if bands[0].iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let logdet_k = logdet_k.unwrap_or_else(|| -2.0 * bands[0].iter().map(|d| d.ln()).sum::<f64>());
        Ok(BandedFactor { dim, bandwidth: bands.len() - 1, bands, logdet_k })
    }

    /// Keeps the lower band of width `bandwidth` of a dense lower-triangular matrix.
    pub fn from_dense(l: &DMatrix<f64>, bandwidth: usize, logdet_k: Option<f64>) -> Result<Self> {
        let dim = l.nrows();
        let width = bandwidth.min(dim.saturating_sub(1));
        let bands = (0..=width)
            .map(|k| (0..dim - k).map(|j| l[(j + k, j)]).collect())
            .collect();
        Self::from_bands(bands, logdet_k)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Natural-log determinant of `K` (not of `K⁻¹`).
    pub fn logdet_k(&self) -> f64 {
        self.logdet_k
    }

    pub fn band(&self, k: usize) -> &[f64] {
        &self.bands[k]
    }

    pub fn diag(&self) -> &[f64] {
        &self.bands[0]
    }

    /// `L[i, j]` with 0-based indices.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < j || i - j > self.bandwidth || i >= self.dim {
            0.0
        } else {
            self.bands[i - j][j]
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// `L Lᵀ`, assembled within the band.
    pub fn inverse_kernel(&self) -> DMatrix<f64> {
        let n = self.dim;
        let w = self.bandwidth;
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(w)..=i {
                let lo = i.saturating_sub(w);
                let v: f64 = (lo..=j).map(|k| self.get(i, k) * self.get(j, k)).sum();
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

/// `K⁻¹ = κ⁻¹ G D_T Gᵀ` with `D_T = diag(β⁻¹, …, β⁻ˡ) ⊕ B`, `l = T - b`.
struct Decomposition {
    coeffs: Vec<f64>,
    kappa: f64,
    beta: f64,
    lead: usize,
    block: DMatrix<f64>,
    /// Lower Cholesky factor of `block`.
    block_chol: DMatrix<f64>,
}

impl Decomposition {
    fn new(spec: &KernelSpec, dim: usize) -> Result<Option<Self>> {
        let Some(coeffs) = spec.prefilter() else {
            return Ok(None);
        };
        let width = coeffs.len() - 1;
        let b = width.min(dim);
        let lead = dim - b;
        let kappa = inverse_scale(spec);
        let beta = spec.beta;
        let (block, block_chol) = match closed_form_block(spec, dim) {
            Some(block) => {
                let chol = if block.nrows() > 0 {
                    block.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.l()
                } else {
                    DMatrix::zeros(0, 0)
                };
                (block, chol)
            }
            None => numeric_block(spec, &coeffs, kappa, dim, b)?,
        };
        Ok(Some(Decomposition { coeffs, kappa, beta, lead, block, block_chol }))
    }

    fn width(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn g(&self, i: usize, k: usize) -> f64 {
        if i < k {
            0.0
        } else {
            self.coeffs.get(i - k).copied().unwrap_or(0.0)
        }
    }

    fn dim(&self) -> usize {
        self.lead + self.block.nrows()
    }

    /// Cholesky factor `κ^(-1/2) G (D_1^(1/2) ⊕ chol(B))`.
    fn factor(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let w = self.width();
        let scale = self.kappa.powf(-0.5);
        let block_chol = &self.block_chol;
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n.min(j + w + 1) {
                l[(i, j)] = if j < self.lead {
                    scale * self.g(i, j) * self.beta.powf(-((j + 1) as f64) / 2.0)
                } else {
                    let v: f64 = (j..=i)
                        .map(|k| self.g(i, k) * block_chol[(k - self.lead, j - self.lead)])
                        .sum();
                    scale * v
                };
            }
        }
        Ok(l)
    }

    /// `κ⁻¹ G D_T Gᵀ`, entries outside the band left at exactly zero.
    fn assemble_inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let w = self.width();
        let d_entry = |k: usize, l: usize| -> f64 {
            if k < self.lead || l < self.lead {
                if k == l {
                    self.beta.powi(-(k as i32 + 1))
                } else {
                    0.0
                }
            } else {
                self.block[(k - self.lead, l - self.lead)]
            }
        };
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(w)..=i {
                let mut v = 0.0;
                for k in i.saturating_sub(w)..=i {
                    let gi = self.g(i, k);
                    if gi == 0.0 {
                        continue;
                    }
                    for l in j.saturating_sub(w)..=j {
                        let d = d_entry(k, l);
                        if d != 0.0 {
                            v += gi * d * self.g(j, l);
                        }
                    }
                }
                v /= self.kappa;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

/// Scale `κ` in `K⁻¹ = κ⁻¹ G D_T Gᵀ`. It equals the normalization constant
/// except for first-order DC, whose unnormalized entries `α^|t-s| β^max(t,s)`
/// give `1 - α²β` rather than `1 - αβ`.
fn inverse_scale(spec: &KernelSpec) -> f64 {
    match spec.shape() {
        Shape::Dc1 { alpha } => 1.0 - alpha * alpha * spec.beta,
        _ => kappa_of(spec),
    }
}

/// Trailing block `B_T` where a closed form is known.
fn closed_form_block(spec: &KernelSpec, dim: usize) -> Option<DMatrix<f64>> {
    let b = spec.beta;
    let scale = b.powi(-(dim as i32));
    match spec.shape() {
        Shape::Diagonal => Some(DMatrix::zeros(0, 0)),
        Shape::Tc1 | Shape::Dc1 { .. } => Some(DMatrix::from_element(1, 1, inverse_scale(spec) * scale)),
        Shape::Tc2 if dim >= 2 => {
            let c = (1.0 - b) * scale;
            Some(DMatrix::from_row_slice(
                2,
                2,
                &[
                    c * (b + b * b),
                    c * 2.0 * b * b,
                    c * 2.0 * b * b,
                    c * (1.0 - 3.0 * b + 4.0 * b * b),
                ],
            ))
        }
        Shape::Dc2 { alpha: a } if dim >= 2 => {
            let c = (1.0 - a * b) * scale;
            let off = c * a * b * b * (1.0 + a);
            Some(DMatrix::from_row_slice(
                2,
                2,
                &[
                    c * b * (1.0 + a * b),
                    off,
                    off,
                    c * ((1.0 - b - a * a * b) * (1.0 - a * b) + 2.0 * a * a * b * b),
                ],
            ))
        }
        _ => None,
    }
}

/// `B_T = κ (trailing b×b block of Gᵀ K G)⁻¹` with its lower Cholesky
/// factor.
///
/// For the series kernels the block is `β^T PᵀP` with `P` from
/// [`series_trailing_rows`]; a QR of the column-reversed `P` gives the factor
/// of its inverse directly, without forming or inverting the Gram matrix.
/// Otherwise the trailing block of the dense kernel is used.
fn numeric_block(
    spec: &KernelSpec,
    coeffs: &[f64],
    kappa: f64,
    dim: usize,
    b: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if b == 0 {
        return Ok((DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)));
    }
    let beta = spec.beta;
    let lead = dim - b;
    let unscale = beta.powf(-(dim as f64) / 2.0);
    if let Shape::Series { delta, alpha } = spec.shape() {
        let mut p = series_trailing_rows(delta, alpha, beta, coeffs, b)?;
        // P J = Q R  gives  (PᵀP)⁻¹ = (J R⁻¹ J)(J R⁻¹ J)ᵀ, and J R⁻¹ J is lower
        for j in 0..b / 2 {
            p.swap_columns(j, b - 1 - j);
        }
        let mut r = p.qr().r();
        for i in 0..b {
            if r[(i, i)] < 0.0 {
                r.row_mut(i).neg_mut();
            }
        }
        let r_inv = r
            .try_inverse()
            .ok_or_else(|| Error::Conditioning("trailing block of GᵀKG is singular".into()))?;
        let chol = DMatrix::from_fn(b, b, |i, j| r_inv[(b - 1 - i, b - 1 - j)] * unscale);
        let block = &chol * chol.transpose();
        return Ok((block, chol));
    }
    let mut base = *spec;
    base.family = match spec.family {
        super::Family::HfD => super::Family::TcD,
        super::Family::HcD => super::Family::DcD,
        f => f,
    };
    let k = build_kernel(&base, dim)?;
    // scaled by β^-T to stay in range
    let trail = k.matrix().view((lead, lead), (b, b)) * beta.powi(-(dim as i32));
    let g = |i: usize, k: usize| if i < k { 0.0 } else { coeffs.get(i - k).copied().unwrap_or(0.0) };
    // G restricted to the trailing rows and columns is the trailing block of G
    let gt = DMatrix::from_fn(b, b, |i, j| g(i, j));
    let y = gt.transpose() * trail * &gt / kappa;
    let y = (&y + y.transpose()) * 0.5;
    let inv = y
        .cholesky()
        .ok_or_else(|| Error::Conditioning("trailing block of GᵀKG is not positive definite".into()))?
        .inverse();
    let block = (&inv + inv.transpose()) * (0.5 * beta.powi(-(dim as i32)));
    let chol = block.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.l();
    Ok((block, chol))
}

/// Closed-form log-determinant of `K`, where one is known.
fn closed_form_logdet(spec: &KernelSpec, dim: usize) -> Option<f64> {
    let t = dim as f64;
    let b = spec.beta;
    let tri = t * (t + 1.0) / 2.0 * b.ln();
    match spec.shape() {
        Shape::Diagonal => Some(tri),
        Shape::Tc1 | Shape::Dc1 { .. } => Some((t - 1.0) * inverse_scale(spec).ln() + tri),
        Shape::Tc2 if dim >= 2 => Some(tri + (3.0 * t - 4.0) * (1.0 - b).ln()),
        Shape::Dc2 { alpha: a } if dim >= 2 => Some(
            tri + (t - 2.0) * (1.0 - a * b).ln()
                + (t - 1.0) * (1.0 - b).ln()
                + (t - 1.0) * (1.0 - a * a * b).ln(),
        ),
        _ => None,
    }
}

/// Closed-form Cholesky factor of the TC2 inverse (`T ≥ 2`).
pub fn corollary_factor_tc2(beta: f64, dim: usize) -> Result<DMatrix<f64>> {
    if dim < 2 {
        return Err(Error::Dimension("the TC2 factor formula needs T >= 2".into()));
    }
    let b = beta;
    let k3 = (1.0 - b).powi(3);
    let t_ = dim as i32;
    Ok(DMatrix::from_fn(dim, dim, |i, j| {
        let (t, s) = (i as i32 + 1, j as i32 + 1);
        if t == s && t <= t_ - 2 {
            1.0 / (k3 * b.powi(t)).sqrt()
        } else if t == s + 1 && (2..=t_ - 1).contains(&t) {
            -2.0 / (k3 * b.powi(t - 1)).sqrt()
        } else if t == s + 2 && t >= 3 {
            1.0 / (k3 * b.powi(t - 2)).sqrt()
        } else if t == s && t == t_ - 1 {
            (b.powi(1 - t_) * (1.0 + b)).sqrt() / (1.0 - b)
        } else if t == s + 1 && t == t_ {
            -2.0 * b.powi(1 - t_).sqrt() / ((1.0 - b) * (1.0 + b).sqrt())
        } else if t == s && t == t_ {
            (b.powi(-t_) / (1.0 + b)).sqrt()
        } else {
            0.0
        }
    }))
}

/// Closed-form Cholesky factor of the DC2 inverse (`T ≥ 2`).
pub fn corollary_factor_dc2(alpha: f64, beta: f64, dim: usize) -> Result<DMatrix<f64>> {
    if dim < 2 {
        return Err(Error::Dimension("the DC2 factor formula needs T >= 2".into()));
    }
    let (a, b) = (alpha, beta);
    let kappa = (1.0 - b) * (1.0 - a * b) * (1.0 - a * a * b);
    let t_ = dim as i32;
    Ok(DMatrix::from_fn(dim, dim, |i, j| {
        let (t, s) = (i as i32 + 1, j as i32 + 1);
        if t == s && t <= t_ - 2 {
            1.0 / (kappa * b.powi(t)).sqrt()
        } else if t == s + 1 && (2..=t_ - 1).contains(&t) {
            -(1.0 + a) / (kappa * b.powi(t - 1)).sqrt()
        } else if t == s + 2 && t >= 3 {
            a / (kappa * b.powi(t - 2)).sqrt()
        } else if t == s && t == t_ - 1 {
            ((1.0 + a * b) * b.powi(1 - t_) / ((1.0 - b) * (1.0 - a * a * b))).sqrt()
        } else if t == s + 1 && t == t_ {
            -(1.0 + a) * b.powi(1 - t_).sqrt()
                / ((1.0 + a * b) * (1.0 - b) * (1.0 - a * a * b)).sqrt()
        } else if t == s && t == t_ {
            (b.powi(-t_) / (1.0 + a * b)).sqrt()
        } else {
            0.0
        }
    }))
}

/// Factor from the general `G D_T Gᵀ` decomposition, ignoring the TC2/DC2
/// entrywise formulas. `None` for SS.
pub fn decomposition_factor(spec: &KernelSpec, dim: usize) -> Result<Option<DMatrix<f64>>> {
    spec.validate()?;
    if dim == 0 {
        return Err(Error::Dimension("kernel dimension must be at least 1".into()));
    }
    match Decomposition::new(spec, dim)? {
        Some(dec) => {
            let mut l = dec.factor()?;
            if spec.is_alternating() {
                alternate_signs(&mut l);
            }
            Ok(Some(l))
        }
        None => Ok(None),
    }
}

/// Cholesky factor of `K⁻¹` computed from `K` alone.
///
/// With `J` the exchange matrix and `J K J = R Rᵀ`, the factor is
/// `L = J R⁻ᵀ J`, which is lower triangular with a positive diagonal.
pub fn numeric_inverse_factor(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    let flipped = DMatrix::from_fn(n, n, |i, j| k[(n - 1 - i, n - 1 - j)]);
    let r = flipped.cholesky().ok_or(Error::NotPositiveDefinite)?.l();
    let r_inv = r
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::NotPositiveDefinite)?;
    Ok(DMatrix::from_fn(n, n, |i, j| r_inv[(n - 1 - j, n - 1 - i)]))
}

/// Banded Cholesky factor of the inverse kernel plus `log det K`.
///
/// TC2/DC2 (and HF2/HC2) use the entrywise closed-form factor, the remaining
/// banded families the `G D_T Gᵀ` decomposition (with a numerically obtained
/// trailing block above order two), and SS a dense factor of the numeric
/// inverse.
pub fn inverse_cholesky(spec: &KernelSpec, dim: usize) -> Result<BandedFactor> {
    spec.validate()?;
    if dim == 0 {
        return Err(Error::Dimension("kernel dimension must be at least 1".into()));
    }
    let logdet = closed_form_logdet(spec, dim);
    let (mut l, bandwidth) = match spec.shape() {
        Shape::Tc2 if dim >= 2 => (corollary_factor_tc2(spec.beta, dim)?, 2),
        Shape::Dc2 { alpha } if dim >= 2 => (corollary_factor_dc2(alpha, spec.beta, dim)?, 2),
        Shape::Ss => {
            let k = build_kernel(spec, dim)?;
            (numeric_inverse_factor(k.matrix())?, dim - 1)
        }
        _ => {
            let dec = Decomposition::new(spec, dim)?.expect("banded family has a prefilter");
            (dec.factor()?, dec.width())
        }
    };
    if spec.is_alternating() {
        alternate_signs(&mut l);
    }
    BandedFactor::from_dense(&l, bandwidth, logdet)
}

/// Inverse kernel assembled from the `G D_T Gᵀ` decomposition; entries with
/// `|t-s|` beyond the bandwidth are exactly zero. SS falls back to the dense
/// numeric inverse.
pub fn build_inverse(spec: &KernelSpec, dim: usize) -> Result<KernelMatrix> {
    spec.validate()?;
    if dim == 0 {
        return Err(Error::Dimension("kernel dimension must be at least 1".into()));
    }
    let mut inv = match Decomposition::new(spec, dim)? {
        Some(dec) => dec.assemble_inverse(),
        None => {
            let k = build_kernel(spec, dim)?;
            let l = numeric_inverse_factor(k.matrix())?;
            &l * l.transpose()
        }
    };
    if spec.is_alternating() {
        alternate_signs(&mut inv);
    }
    KernelMatrix::new(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn tc2_leading_factor_entry() {
        let f = inverse_cholesky(&KernelSpec::tc_d(2, 0.5), 5).unwrap();
        assert!((f.get(0, 0) - 4.0).abs() < 1e-14);
        assert_eq!(f.bandwidth(), 2);
    }

    #[test]
    fn tc2_logdet_two_by_two() {
        let f = inverse_cholesky(&KernelSpec::tc_d(2, 0.5), 2).unwrap();
        assert!((f.logdet_k().exp() - 0.03125).abs() < 1e-16);
    }

    #[test]
    fn dc2_first_subdiagonal_entry() {
        let f = inverse_cholesky(&KernelSpec::dc_d(2, 0.5, 0.5), 4).unwrap();
        let expected = -1.5 / (0.328125f64 * 0.5).sqrt();
        assert!((f.get(1, 0) - expected).abs() < 1e-13);
        assert!((expected + 3.7033).abs() < 1e-4);
    }

    #[test]
    fn tc2_inverse_is_pentadiagonal() {
        let inv = build_inverse(&KernelSpec::tc_d(2, 0.7), 6).unwrap();
        assert_eq!(inv.matrix()[(0, 3)], 0.0);
        assert_eq!(inv.matrix()[(0, 5)], 0.0);
        assert_ne!(inv.matrix()[(0, 2)], 0.0);
    }

    #[test]
    fn tc_inverse_matches_numeric_inverse() {
        let spec = KernelSpec::tc(0.5);
        let k = build_kernel(&spec, 3).unwrap();
        let inv = build_inverse(&spec, 3).unwrap();
        let numeric = k.matrix().clone().try_inverse().unwrap();
        assert!(rel(inv.matrix(), &numeric) < 1e-10);
        for (i, j) in [(0, 2), (2, 0)] {
            assert_eq!(inv.matrix()[(i, j)], 0.0);
        }
    }

    #[test]
    fn dc3_inverse_is_banded_and_inverts() {
        let spec = KernelSpec::dc_d(3, 0.5, 0.7);
        let k = build_kernel(&spec, 10).unwrap();
        let inv = build_inverse(&spec, 10).unwrap();
        for i in 0..10usize {
            for j in 0..10usize {
                if i.abs_diff(j) > 3 {
                    assert_eq!(inv.matrix()[(i, j)], 0.0);
                }
            }
        }
        let prod = k.matrix() * inv.matrix();
        let eye = DMatrix::identity(10, 10);
        assert!(rel(&prod, &eye) < 1e-8);
    }

    #[test]
    fn corollary_and_decomposition_factors_agree() {
        for dim in 2..12 {
            for &b in &[0.2, 0.6, 0.9] {
                let closed = corollary_factor_tc2(b, dim).unwrap();
                let general = decomposition_factor(&KernelSpec::tc_d(2, b), dim).unwrap().unwrap();
                assert!(rel(&general, &closed) < 1e-13, "tc2 dim={dim} b={b}");
                for &a in &[0.0, 0.3, 0.8, 1.0] {
                    let closed = corollary_factor_dc2(a, b, dim).unwrap();
                    let general =
                        decomposition_factor(&KernelSpec::dc_d(2, a, b), dim).unwrap().unwrap();
                    assert!(rel(&general, &closed) < 1e-13, "dc2 dim={dim} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn series_log_determinants_match_high_precision() {
        // log det K of the series-built kernels, evaluated with 60-digit
        // arithmetic; the dense kernels are numerically singular here
        let cases = [
            (5, 0.8, 10, 27.963052488570981402),
            (5, 0.8, 30, -63.525803550254995703),
            (5, 0.9287, 10, 61.953150178037565378),
            (6, 0.95, 10, 105.02523065662836188),
            (3, 0.93, 30, -9.8120318358034420089),
        ];
        for (delta, beta, dim, want) in cases {
            for spec in [KernelSpec::tc_d(delta, beta), KernelSpec::hf_d(delta, beta)] {
                let got = inverse_cholesky(&spec, dim).unwrap().logdet_k();
                assert!(((got - want) / want).abs() < 1e-8, "{spec} T={dim}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn numeric_block_reproduces_closed_form_blocks() {
        for dim in 2..9 {
            for spec in [KernelSpec::tc_d(2, 0.6), KernelSpec::dc_d(2, 0.4, 0.8), KernelSpec::tc(0.3)] {
                let coeffs = spec.prefilter().unwrap();
                let w = coeffs.len() - 1;
                let numeric = numeric_block(&spec, &coeffs, inverse_scale(&spec), dim, w).unwrap().0;
                let closed = closed_form_block(&spec, dim).unwrap();
                assert!(rel(&numeric, &closed) < 1e-10, "{spec} dim={dim}");
            }
        }
    }

    #[test]
    fn ss_factor_inverts_kernel() {
        let spec = KernelSpec::ss(0.8);
        let k = build_kernel(&spec, 8).unwrap();
        let f = inverse_cholesky(&spec, 8).unwrap();
        assert_eq!(f.bandwidth(), 7);
        let l = f.to_dense();
        let prod = &l * l.transpose() * k.matrix();
        assert!(rel(&prod, &DMatrix::identity(8, 8)) < 1e-9);
        let det = k.matrix().determinant();
        assert!((f.logdet_k() - det.ln()).abs() < 1e-9);
    }

    #[test]
    fn single_sample_kernels() {
        for spec in [
            KernelSpec::tc_d(2, 0.5),
            KernelSpec::dc_d(2, 0.5, 0.5),
            KernelSpec::tc_d(4, 0.5),
            KernelSpec::di(0.5),
            KernelSpec::tc(0.5),
        ] {
            let k = build_kernel(&spec, 1).unwrap().matrix()[(0, 0)];
            let f = inverse_cholesky(&spec, 1).unwrap();
            assert!((f.get(0, 0) * f.get(0, 0) * k - 1.0).abs() < 1e-13, "{spec}");
            assert!((f.logdet_k() - k.ln()).abs() < 1e-13, "{spec}");
            let inv = build_inverse(&spec, 1).unwrap().matrix()[(0, 0)];
            assert!((inv * k - 1.0).abs() < 1e-13, "{spec}");
        }
    }

    #[test]
    fn banded_factor_validation() {
        assert!(BandedFactor::from_bands(vec![], None).is_err());
        assert!(BandedFactor::from_bands(vec![vec![1.0, 1.0], vec![0.5, 0.5]], None).is_err());
        assert!(matches!(
            BandedFactor::from_bands(vec![vec![1.0, -1.0]], None),
            Err(Error::NotPositiveDefinite)
        ));
        let f = BandedFactor::from_bands(vec![vec![2.0, 4.0], vec![1.0]], None).unwrap();
        assert!((f.logdet_k() + 2.0 * 8f64.ln()).abs() < 1e-15);
        assert_eq!(f.inverse_kernel(), DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 17.0]));
    }
}
