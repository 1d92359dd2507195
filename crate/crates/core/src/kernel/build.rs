use nalgebra::DMatrix;

use super::{kappa_of, KernelMatrix, KernelSpec, Shape};
use crate::error::{Error, Result};

/// Relative size of the certified tail left out of each series.
const SERIES_TOL: f64 = 1e-16;
const SERIES_MAX_TERMS: usize = 20_000_000;

/// Above this `alpha` the DC2 entries use the expanded form, which has no
/// `1/(1-alpha)` cancellation.
const DC2_EXPANDED_ABOVE: f64 = 0.5;

/// Evaluates the `T × T` kernel matrix.
///
/// DI, TC, DC, SS, TC2 and DC2 (and their sign-alternating versions) use
/// closed forms. Orders above two use
/// `[K]_{t,s} = β^max(t,s) · c(|t-s|)` with
/// `c(d) = κ Σ_{j≥0} β^j x_j x_{j+d}`, where `x` are the coefficients of the
/// inverse prefilter; the series is truncated with a certified geometric
/// tail bound.
pub fn build_kernel(spec: &KernelSpec, dim: usize) -> Result<KernelMatrix> {
    spec.validate()?;
    if dim == 0 {
        return Err(Error::Dimension("kernel dimension must be at least 1".into()));
    }
    let b = spec.beta;
    let mut k = match spec.shape() {
        Shape::Diagonal => {
            DMatrix::from_fn(dim, dim, |i, j| if i == j { b.powi(i as i32 + 1) } else { 0.0 })
        }
        Shape::Tc1 => by_lag(dim, |m, _| b.powi(m)),
        Shape::Dc1 { alpha } => by_lag(dim, |m, d| alpha.powi(d) * b.powi(m)),
        Shape::Tc2 => by_lag(dim, |m, d| tc2_entry(b, m, d)),
        Shape::Dc2 { alpha } => by_lag(dim, |m, d| dc2_entry(alpha, b, m, d)),
        Shape::Ss => {
            let g = spec.gamma;
            DMatrix::from_fn(dim, dim, |i, j| {
                let (t, s) = (i as i32 + 1, j as i32 + 1);
                let m = t.max(s);
                g.powi(t + s + m) / 2.0 - g.powi(3 * m) / 6.0
            })
        }
        Shape::Series { delta, alpha } => {
            let c = series_diagonals(delta, alpha, b, kappa_of(spec), dim)?;
            by_lag(dim, |m, d| b.powi(m) * c[d as usize])
        }
    };
    if spec.is_alternating() {
        alternate_signs(&mut k);
    }
    KernelMatrix::new(k)
}

/// `2β^(m+1) + (1-β)(1+d)β^m`.
pub(crate) fn tc2_entry(b: f64, m: i32, d: i32) -> f64 {
    2.0 * b.powi(m + 1) + (1.0 - b) * f64::from(1 + d) * b.powi(m)
}

/// DC2 entry at `m = max(t,s)`, `d = |t-s|`.
///
/// The closed form `[β^m (1-(1-β)α^(d+1)) - α²β^(m+1)] / (1-α)` equals
/// `β^m [(1-β) Σ_{i=0}^{d} α^i + β(1+α)]`; the second form is used for α
/// near one and is exact at α = 1, where DC2 reduces to TC2.
pub(crate) fn dc2_entry(a: f64, b: f64, m: i32, d: i32) -> f64 {
    if a <= DC2_EXPANDED_ABOVE {
        (b.powi(m) * (1.0 - (1.0 - b) * a.powi(d + 1)) - a * a * b.powi(m + 1)) / (1.0 - a)
    } else {
        let mut geometric = 0.0;
        let mut p = 1.0;
        for _ in 0..=d {
            geometric += p;
            p *= a;
        }
        b.powi(m) * ((1.0 - b) * geometric + b * (1.0 + a))
    }
}

fn by_lag(dim: usize, f: impl Fn(i32, i32) -> f64) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..=i {
            let v = f(i as i32 + 1, (i - j) as i32);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

pub(crate) fn alternate_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if (i + j) % 2 == 1 {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Coefficients of `F_{δ,α}⁻¹ = (I - αS)⁻¹ F^-(δ-1)`, generated lazily.
///
/// `F^-p` is obtained by `p` running prefix sums of the unit impulse and the
/// factor `(I - αS)⁻¹` by a first-order recursion, so every update adds
/// nonnegative numbers when `α ≥ 0`.
struct InverseFilterCoeffs {
    alpha: f64,
    sums: Vec<f64>,
    last: f64,
    index: usize,
}

impl InverseFilterCoeffs {
    fn new(delta: u32, alpha: f64) -> Self {
        InverseFilterCoeffs {
            alpha,
            sums: vec![0.0; delta as usize - 1],
            last: 0.0,
            index: 0,
        }
    }
}

impl Iterator for InverseFilterCoeffs {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let mut v = if self.index == 0 { 1.0 } else { 0.0 };
        for s in self.sums.iter_mut() {
            *s += v;
            v = *s;
        }
        self.last = self.alpha * self.last + v;
        self.index += 1;
        Some(self.last)
    }
}

/// `c(d) = κ Σ_{j≥0} β^j x_j x_{j+d}` for `d = 0..n`.
///
/// For `α ∈ [0, 1]` the sequence `x` is positive and log-concave, so
/// `x_{j+1}/x_j` is nonincreasing and every term ratio after index `j` is at
/// most `ρ_j = β (x_{j+1}/x_j)²`. Once `ρ_j < 1` the remaining tail of each
/// series is bounded by `term_j · ρ_j / (1 - ρ_j)`; summation stops when that
/// bound drops below `SERIES_TOL` relative to the partial sum.
pub(crate) fn series_diagonals(
    delta: u32,
    alpha: f64,
    beta: f64,
    kappa: f64,
    n: usize,
) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!(
            "series kernels need 0 < beta < 1 to converge, got {beta}"
        )));
    }
    if delta < 1 || !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!(
            "series kernels need delta >= 1 and alpha in [0, 1], got delta={delta}, alpha={alpha}"
        )));
    }
    let mut coeffs = InverseFilterCoeffs::new(delta, alpha);
    let mut x: Vec<f64> = coeffs.by_ref().take(n + 1).collect();
    let mut sums = vec![0.0; n];
    for j in 0..SERIES_MAX_TERMS {
        // keep x_{j+n} available for the ratio test
        if x.len() < j + n + 1 {
            x.push(coeffs.next().unwrap());
        }
        let weight = beta.powi(j as i32) * x[j];
        if weight == 0.0 && j > 0 {
            return Ok(sums.into_iter().map(|s| s * kappa).collect());
        }
        for (d, sum) in sums.iter_mut().enumerate() {
            *sum += weight * x[j + d];
        }
        if x[j] > 0.0 {
            let ratio = x[j + 1] / x[j];
            let rho = beta * ratio * ratio;
            if rho < 1.0 {
                let factor = rho / (1.0 - rho);
                let converged = sums
                    .iter()
                    .enumerate()
                    .all(|(d, &s)| weight * x[j + d] * factor <= SERIES_TOL * s);
                if converged {
                    return Ok(sums.into_iter().map(|s| s * kappa).collect());
                }
            }
        }
    }
    Err(Error::Domain(format!(
        "kernel series did not converge within {SERIES_MAX_TERMS} terms (beta={beta}, delta={delta})"
    )))
}

/// Rows `β^((k-T)/2) (Gᵀ v_k)` restricted to the trailing `b` rows, for a
/// series kernel whose prefilter `G` has coefficients `a` (`a[0] = 1`).
///
/// Writing `K / κ = Σ_k β^k v_k v_kᵀ` with `v_k(t) = x_{k-t}`, the trailing
/// block of `Gᵀ K G / κ` divided by `β^T` is `PᵀP` for the returned `P`.
/// `Gᵀ v_k` is a partial convolution of `a` with `x`, so the rows are formed
/// without differencing `K`, which is numerically singular for high orders
/// and slow decay.
pub(crate) fn series_trailing_rows(
    delta: u32,
    alpha: f64,
    beta: f64,
    a: &[f64],
    b: usize,
) -> Result<DMatrix<f64>> {
    let mut coeffs = InverseFilterCoeffs::new(delta, alpha);
    let mut x: Vec<f64> = Vec::new();
    let a_norm: f64 = a.iter().map(|v| v.abs()).sum();
    let mut rows: Vec<f64> = Vec::new();
    let mut diag = vec![0.0; b];
    // r = k - T; row i sits at t - T = i + 1 - b
    let first = 1 - b as i64;
    for step in 0..SERIES_MAX_TERMS as i64 {
        let r = first + step;
        while x.len() < step as usize + 3 {
            x.push(coeffs.next().unwrap());
        }
        let w = beta.powf(r as f64 / 2.0);
        for (i, d) in diag.iter_mut().enumerate() {
            let lag = r - (i as i64 + 1 - b as i64);
            let v = if lag < 0 {
                0.0
            } else {
                let lag = lag as usize;
                w * (0..=lag.min(b - 1 - i)).map(|j| a[j] * x[lag - j]).sum::<f64>()
            };
            rows.push(v);
            *d += v * v;
        }
        if r < 1 {
            continue;
        }
        // |p_i(lag)| ≤ Σ|a_j| x_lag with x nondecreasing, and lag ≤ r + b - 1
        let top = step as usize;
        let rho = beta * (x[top + 1] / x[top]).powi(2);
        if rho < 1.0 {
            let tail = a_norm * a_norm * beta.powi(r as i32 + 1) * x[top + 1].powi(2) / (1.0 - rho);
            let floor = diag.iter().copied().fold(f64::INFINITY, f64::min);
            if tail <= SERIES_TOL * floor {
                return Ok(DMatrix::from_row_slice(rows.len() / b, b, &rows));
            }
        }
    }
    Err(Error::Domain(format!(
        "trailing block series did not converge within {SERIES_MAX_TERMS} terms (beta={beta}, delta={delta})"
    )))
}
