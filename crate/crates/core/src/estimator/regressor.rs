use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `N×T` regression matrix with `A[t, k] = u(t - k)` (1-based) and
/// `u(τ) = 0` for `τ <= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionMatrix(DMatrix<f64>);

impl RegressionMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::Dimension("regression matrix must be nonempty".into()));
        }
        Ok(RegressionMatrix(a))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Number of samples `N`.
    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    /// Impulse response length `T`.
    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    /// True when `T > N`, i.e. the least-squares part alone is underdetermined.
    pub fn is_underdetermined(&self) -> bool {
        self.ncols() > self.nrows()
    }
}

/// Builds the regression matrix of the first `n` samples of `u` for an
/// impulse response of length `t`.
pub fn build_regressor(u: &[f64], n: usize, t: usize) -> Result<RegressionMatrix> {
    if n == 0 || t == 0 {
        return Err(Error::Dimension(format!("need N >= 1 and T >= 1, got N={n}, T={t}")));
    }
    if u.len() < n {
        return Err(Error::Dimension(format!("input has {} samples, need {n}", u.len())));
    }
    RegressionMatrix::new(DMatrix::from_fn(n, t, |i, k| if i > k { u[i - k - 1] } else { 0.0 }))
}

/// Noise variance estimate: residual sum of squares of an unregularized FIR
/// least-squares fit of the given order, divided by `N - order`.
///
/// The fit goes through an SVD, so a rank-deficient regressor yields the
/// minimum-norm (pseudo-inverse) solution.
pub fn estimate_sigma2(u: &[f64], y: &[f64], order: usize) -> Result<f64> {
    let n = y.len();
    if order == 0 || n <= order {
        return Err(Error::Dimension(format!("need N > order >= 1, got N={n}, order={order}")));
    }
    let a = build_regressor(u, n, order)?.into_inner();
    let yv = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let eps = f64::EPSILON * n.max(order) as f64 * svd.singular_values.max();
    let g = svd
        .solve(&yv, eps)
        .map_err(|e| Error::Conditioning(format!("FIR least squares failed: {e}")))?;
    let resid = yv - a * g;
    Ok(resid.norm_squared() / (n - order) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    #[test]
    fn unit_impulse_shifts() {
        let a = build_regressor(&[1.0, 0.0, 0.0], 3, 2).unwrap();
        assert_eq!(a.matrix(), &DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn step_input() {
        let a = build_regressor(&[1.0; 3], 3, 3).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(a.matrix(), &expected);
        assert!(!a.is_underdetermined());
        assert!(build_regressor(&[1.0; 3], 3, 5).unwrap().is_underdetermined());
    }

    #[test]
    fn regressor_is_a_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = normals(&mut rng, 40);
        let g = normals(&mut rng, 7);
        let a = build_regressor(&u, 40, 7).unwrap();
        let y = a.matrix() * DVector::from_column_slice(&g);
        for t in 1..=40usize {
            let direct: f64 = (1..=7usize).filter(|&k| t > k).map(|k| g[k - 1] * u[t - k - 1]).sum();
            assert!((y[t - 1] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn regressor_errors() {
        assert!(build_regressor(&[1.0], 2, 1).is_err());
        assert!(build_regressor(&[1.0], 1, 0).is_err());
    }

    #[test]
    fn exact_fir_has_no_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = normals(&mut rng, 60);
        let g = normals(&mut rng, 6);
        let y = (build_regressor(&u, 60, 6).unwrap().into_inner() * DVector::from_column_slice(&g))
            .as_slice()
            .to_vec();
        assert!(estimate_sigma2(&u, &y, 6).unwrap() < 1e-20);
    }

    #[test]
    fn pure_noise_variance() {
        let sigma2: f64 = 0.3;
        let (mut total, mut close) = (0.0, 0);
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = normals(&mut rng, 500);
            let y: Vec<f64> = normals(&mut rng, 500).iter().map(|e| e * sigma2.sqrt()).collect();
            let est = estimate_sigma2(&u, &y, 10).unwrap();
            close += usize::from((est - sigma2).abs() < 0.2 * sigma2);
            total += est;
        }
        assert!(close >= 95, "{close} of 100 within 20%");
        assert!((total / 100.0 - sigma2).abs() < 0.02 * sigma2);
    }

    #[test]
    fn doubling_noise_quadruples_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = normals(&mut rng, 300);
        let e = normals(&mut rng, 300);
        let y2: Vec<f64> = e.iter().map(|v| 2.0 * v).collect();
        let a = estimate_sigma2(&u, &e, 8).unwrap();
        let b = estimate_sigma2(&u, &y2, 8).unwrap();
        assert!((b / a - 4.0).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_input_uses_pseudo_inverse() {
        let u = vec![0.0; 20];
        let y: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let est = estimate_sigma2(&u, &y, 3).unwrap();
        let rss: f64 = y.iter().map(|v| v * v).sum();
        assert!((est - rss / 17.0).abs() < 1e-12);
        assert!(estimate_sigma2(&u, &y, 20).is_err());
    }
}
