use nalgebra::{DMatrix, DVector};

use super::regressor::RegressionMatrix;
use crate::error::{Error, Result};
use crate::kernel::{numeric_inverse_factor, BandedFactor, KernelMatrix};

fn check_scales(lambda: f64, sigma2: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok(())
}

/// Triangular factor `R₀` of `[A y]`, computed once per dataset.
///
/// Every likelihood evaluation then only factors the small stacked matrix
/// `[R₀; σ λ^(-1/2) Lᵀ 0]` instead of the `(N+T)×(T+1)` original.
#[derive(Clone, Debug)]
pub struct ReducedData {
    r0: DMatrix<f64>,
    n: usize,
    t: usize,
}

impl ReducedData {
    pub fn new(a: &RegressionMatrix, y: &[f64]) -> Result<Self> {
        let (n, t) = (a.nrows(), a.ncols());
        if y.len() != n {
            return Err(Error::Dimension(format!("y has length {}, A has {n} rows", y.len())));
        }
        let mut ay = DMatrix::zeros(n, t + 1);
        ay.view_mut((0, 0), (n, t)).copy_from(a.matrix());
        ay.set_column(t, &DVector::from_column_slice(y));
        let r0 = ay.qr().r();
        Ok(ReducedData { r0, n, t })
    }

    pub fn samples(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.t
    }

    /// `R` of the stacked system, holding the blocks `R₁`, `R₂` and `r`.
    fn stacked_r(&self, factor: &BandedFactor, lambda: f64, sigma2: f64) -> Result<DMatrix<f64>> {
        check_scales(lambda, sigma2)?;
        let t = self.t;
        if factor.dim() != t {
            return Err(Error::Dimension(format!(
                "factor has dimension {}, regressor has {t} columns",
                factor.dim()
            )));
        }
        let p = self.r0.nrows();
        let scale = (sigma2 / lambda).sqrt();
        let w = factor.bandwidth();
        let mut m = DMatrix::zeros(p + t, t + 1);
        m.view_mut((0, 0), (p, t + 1)).copy_from(&self.r0);
        for i in 0..t {
            for j in i..t.min(i + w + 1) {
                m[(p + i, j)] = scale * factor.get(j, i);
            }
        }
        let r = m.qr().r();
        for i in 0..t {
            let d = r[(i, i)];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Conditioning(format!("stacked factor is singular at column {i}")));
            }
        }
        Ok(r)
    }

    /// Negative log marginal likelihood
    /// `r²/σ² + (N-T) log σ² + T log λ + log det K + 2 log|det R₁|`.
    pub fn nll(&self, factor: &BandedFactor, lambda: f64, sigma2: f64) -> Result<f64> {
        let r = self.stacked_r(factor, lambda, sigma2)?;
        Ok(self.nll_from_r(&r, factor, lambda, sigma2))
    }

    fn nll_from_r(&self, r: &DMatrix<f64>, factor: &BandedFactor, lambda: f64, sigma2: f64) -> f64 {
        let t = self.t;
        let resid = r[(t, t)];
        let logdet_r1: f64 = (0..t).map(|i| r[(i, i)].abs().ln()).sum();
        resid * resid / sigma2
            + (self.n as f64 - t as f64) * sigma2.ln()
            + t as f64 * lambda.ln()
            + factor.logdet_k()
            + 2.0 * logdet_r1
    }

    /// Regularized estimate `ĝ = R₁⁻¹ R₂` and the likelihood at the same point.
    pub fn estimate(&self, factor: &BandedFactor, lambda: f64, sigma2: f64) -> Result<(DVector<f64>, f64)> {
        let r = self.stacked_r(factor, lambda, sigma2)?;
        let t = self.t;
        let r1 = r.view((0, 0), (t, t)).upper_triangle();
        let r2 = r.view((0, t), (t, 1)).clone_owned();
        let g = r1
            .solve_upper_triangular(&r2)
            .ok_or_else(|| Error::Conditioning("singular R₁".into()))?;
        let nll = self.nll_from_r(&r, factor, lambda, sigma2);
        Ok((g.column(0).into_owned(), nll))
    }
}

/// Negative log marginal likelihood through the QR factorization of
/// `[[A, y], [σ λ^(-1/2) Lᵀ, 0]]`, with `K⁻¹ = L Lᵀ`.
pub fn nll_qr(
    y: &[f64],
    a: &RegressionMatrix,
    factor: &BandedFactor,
    lambda: f64,
    sigma2: f64,
) -> Result<f64> {
    ReducedData::new(a, y)?.nll(factor, lambda, sigma2)
}

/// Negative log marginal likelihood evaluated from its definition,
/// `log det Σ + yᵀ Σ⁻¹ y` with `Σ = λ A K Aᵀ + σ² I`.
pub fn nll_direct(
    y: &[f64],
    a: &RegressionMatrix,
    k: &KernelMatrix,
    lambda: f64,
    sigma2: f64,
) -> Result<f64> {
    check_scales(lambda, sigma2)?;
    let (n, t) = (a.nrows(), a.ncols());
    if y.len() != n || k.dim() != t {
        return Err(Error::Dimension(format!(
            "inconsistent sizes: y {}, A {n}x{t}, K {}",
            y.len(),
            k.dim()
        )));
    }
    let am = a.matrix();
    let mut sigma = am * k.matrix() * am.transpose() * lambda;
    for i in 0..n {
        sigma[(i, i)] += sigma2;
    }
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Conditioning("output covariance is not positive definite".into()))?;
    let yv = DVector::from_column_slice(y);
    let z = chol.solve(&yv);
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(logdet + yv.dot(&z))
}

/// Regularized estimate from a precomputed inverse-kernel factor.
pub fn rls_with_factor(
    a: &RegressionMatrix,
    y: &[f64],
    factor: &BandedFactor,
    lambda: f64,
    sigma2: f64,
) -> Result<DVector<f64>> {
    Ok(ReducedData::new(a, y)?.estimate(factor, lambda, sigma2)?.0)
}

/// `ĝ = argmin ‖y - A g‖² + (σ²/λ) gᵀ K⁻¹ g`, solved as a stacked least-squares
/// problem so that `AᵀA` is never formed.
pub fn rls_estimate(
    a: &RegressionMatrix,
    y: &[f64],
    k: &KernelMatrix,
    lambda: f64,
    sigma2: f64,
) -> Result<DVector<f64>> {
    if k.dim() != a.ncols() {
        return Err(Error::Dimension(format!(
            "kernel has dimension {}, regressor has {} columns",
            k.dim(),
            a.ncols()
        )));
    }
    let l = numeric_inverse_factor(k.matrix())?;
    let factor = BandedFactor::from_dense(&l, k.dim() - 1, None)?;
    rls_with_factor(a, y, &factor, lambda, sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::build_regressor;
    use crate::kernel::{build_kernel, inverse_cholesky, KernelSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn instance(seed: u64, n: usize, t: usize) -> (RegressionMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = normals(&mut rng, n);
        let y = normals(&mut rng, n);
        (build_regressor(&u, n, t).unwrap(), y)
    }

    fn families(rng: &mut ChaCha8Rng) -> Vec<KernelSpec> {
        let b = rng.random_range(0.3..0.95);
        let a = rng.random_range(0.0..1.0);
        vec![
            KernelSpec::di(b),
            KernelSpec::tc(b),
            KernelSpec::dc(a, b),
            KernelSpec::ss(b),
            KernelSpec::tc_d(2, b),
            KernelSpec::dc_d(2, a, b),
            KernelSpec::tc_d(3, b),
            KernelSpec::dc_d(4, a, b),
            KernelSpec::hf_d(2, b),
            KernelSpec::hc_d(3, a, b),
        ]
    }

    #[test]
    fn zero_regressor_reduces_to_noise_only() {
        let y = [0.5, -1.0, 2.0, 0.25];
        let a = RegressionMatrix::new(DMatrix::zeros(4, 3)).unwrap();
        let spec = KernelSpec::tc_d(2, 0.7);
        let f = inverse_cholesky(&spec, 3).unwrap();
        let k = build_kernel(&spec, 3).unwrap();
        let s2: f64 = 0.3;
        let expected = y.iter().map(|v| v * v).sum::<f64>() / s2 + 4.0 * s2.ln();
        let qr = nll_qr(&y, &a, &f, 2.0, s2).unwrap();
        let direct = nll_direct(&y, &a, &k, 2.0, s2).unwrap();
        assert!((qr - expected).abs() < 1e-12 * expected.abs());
        assert!((direct - expected).abs() < 1e-12 * expected.abs());
    }

    #[test]
    fn vanishing_prior_variance() {
        let (a, y) = instance(1, 10, 3);
        let k = build_kernel(&KernelSpec::tc(0.8), 3).unwrap();
        let s2: f64 = 0.7;
        let limit = y.iter().map(|v| v * v).sum::<f64>() / s2 + 10.0 * s2.ln();
        let v = nll_direct(&y, &a, &k, 1e-14, s2).unwrap();
        assert!((v - limit).abs() < 1e-6 * limit.abs());
    }

    #[test]
    fn direct_and_qr_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut seed = 0;
        for &n in &[5usize, 20, 100] {
            for &t in &[2usize, 5, 30] {
                for spec in families(&mut rng) {
                    seed += 1;
                    let (a, y) = instance(seed, n, t);
                    let lambda = 10f64.powf(rng.random_range(-2.0..2.0));
                    let s2 = 10f64.powf(rng.random_range(-1.0..1.0));
                    let k = build_kernel(&spec, t).unwrap();
                    let f = inverse_cholesky(&spec, t).unwrap();
                    let d = nll_direct(&y, &a, &k, lambda, s2).unwrap();
                    let q = nll_qr(&y, &a, &f, lambda, s2).unwrap();
                    assert!((d - q).abs() <= 1e-8 * d.abs().max(1.0), "{spec} N={n} T={t}: {d} {q}");
                }
            }
        }
    }

    #[test]
    fn output_scaling_only_moves_the_residual() {
        let (a, y) = instance(4, 20, 5);
        let f = inverse_cholesky(&KernelSpec::dc_d(2, 0.4, 0.8), 5).unwrap();
        let base = nll_qr(&y, &a, &f, 1.3, 0.4).unwrap();
        let zero = nll_qr(&vec![0.0; 20], &a, &f, 1.3, 0.4).unwrap();
        let y3: Vec<f64> = y.iter().map(|v| 3.0 * v).collect();
        let scaled = nll_qr(&y3, &a, &f, 1.3, 0.4).unwrap();
        assert!(((scaled - zero) - 9.0 * (base - zero)).abs() < 1e-9 * (base - zero).abs());
    }

    #[test]
    fn kernel_scale_trades_with_lambda() {
        let (a, y) = instance(8, 20, 6);
        let k = build_kernel(&KernelSpec::ss(0.8), 6).unwrap();
        let c = 7.5;
        let lhs = nll_direct(&y, &a, &k.scaled(c), 0.2, 0.5).unwrap();
        let rhs = nll_direct(&y, &a, &k, 0.2 * c, 0.5).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
    }

    #[test]
    fn zero_output_gives_zero_estimate() {
        let (a, _) = instance(2, 15, 4);
        let k = build_kernel(&KernelSpec::tc(0.6), 4).unwrap();
        let g = rls_estimate(&a, &[0.0; 15], &k, 1.0, 1.0).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn weak_regularization_approaches_least_squares() {
        let (a, y) = instance(6, 30, 4);
        let k = build_kernel(&KernelSpec::tc(0.7), 4).unwrap();
        let g = rls_estimate(&a, &y, &k, 1.0, 1e-12).unwrap();
        let ls = a.matrix().clone().svd(true, true).solve(&DVector::from_column_slice(&y), 0.0).unwrap();
        assert!((&g - &ls).norm() < 1e-6 * ls.norm());
    }

    #[test]
    fn primal_and_dual_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (seed, spec) in families(&mut rng).into_iter().enumerate() {
            let (a, y) = instance(100 + seed as u64, 25, 6);
            let k = build_kernel(&spec, 6).unwrap();
            let (lambda, s2) = (0.8, 0.3);
            let g = rls_estimate(&a, &y, &k, lambda, s2).unwrap();
            let am = a.matrix();
            let km = k.matrix();
            let mut sigma = am * km * am.transpose() * lambda;
            for i in 0..25 {
                sigma[(i, i)] += s2;
            }
            let dual = km * am.transpose() * sigma.lu().solve(&DVector::from_column_slice(&y)).unwrap() * lambda;
            assert!((&g - &dual).norm() < 1e-8 * dual.norm(), "{spec}");
            let f = inverse_cholesky(&spec, 6).unwrap();
            let g2 = rls_with_factor(&a, &y, &f, lambda, s2).unwrap();
            assert!((&g2 - &dual).norm() < 1e-8 * dual.norm(), "{spec}");
        }
    }

    #[test]
    fn estimate_shrinks_as_noise_grows() {
        let (a, y) = instance(12, 40, 8);
        let k = build_kernel(&KernelSpec::tc_d(2, 0.8), 8).unwrap();
        let norms: Vec<f64> = (0..12)
            .map(|e| rls_estimate(&a, &y, &k, 1.0, 10f64.powi(e - 4)).unwrap().norm())
            .collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
        assert!(norms[11] < 1e-5);
    }

    #[test]
    fn scale_and_size_validation() {
        let (a, y) = instance(3, 10, 3);
        let f = inverse_cholesky(&KernelSpec::tc(0.5), 3).unwrap();
        assert!(nll_qr(&y, &a, &f, 0.0, 1.0).is_err());
        assert!(nll_qr(&y, &a, &f, 1.0, -1.0).is_err());
        assert!(nll_qr(&y[..9], &a, &f, 1.0, 1.0).is_err());
        let f4 = inverse_cholesky(&KernelSpec::tc(0.5), 4).unwrap();
        assert!(nll_qr(&y, &a, &f4, 1.0, 1.0).is_err());
    }
}
