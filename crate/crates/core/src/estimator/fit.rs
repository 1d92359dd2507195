use super::likelihood::ReducedData;
use super::regressor::{build_regressor, estimate_sigma2};
use super::{Dataset, EstimateResult};
use crate::error::{Error, Result};
use crate::kernel::{build_kernel, inverse_cholesky, BandedFactor, Family, KernelSpec};
use crate::optimize::{nelder_mead, NelderMeadOptions};

/// Box for β and γ.
pub const DECAY_BOX: (f64, f64) = (1e-3, 1.0 - 1e-3);
/// Box for α in the fitted DC-type families.
pub const ALPHA_BOX: (f64, f64) = (0.0, 1.0);
/// Box for `log10(λ·K₁₁)`, the prior variance of the first coefficient.
pub const LOG10_PRIOR_VARIANCE_BOX: (f64, f64) = (-8.0, 8.0);

const GRID_DECAY: [f64; 6] = [0.3, 0.6, 0.8, 0.9, 0.95, 0.98];
const GRID_ALPHA: [f64; 3] = [0.1, 0.5, 0.9];
const GRID_LOG10_PRIOR_VARIANCE: std::ops::RangeInclusive<i32> = -6..=6;
/// Keeps logit coordinates finite for parameters sitting on a box edge.
const COORD_LIMIT: f64 = 40.0;

/// Starting point of the local search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitSeed {
    pub spec: KernelSpec,
    pub lambda: f64,
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Noise variance to use; otherwise the dataset's, otherwise estimated.
    pub sigma2: Option<f64>,
    /// FIR order for the noise estimate, default `min(T, N/3)`.
    pub fir_order: Option<usize>,
    /// Replaces the coarse grid when given.
    pub seeds: Option<Vec<FitSeed>>,
    /// Simplex restarts from the incumbent until no strict improvement.
    pub max_restarts: usize,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            sigma2: None,
            fir_order: None,
            seeds: None,
            max_restarts: 20,
            nelder_mead: NelderMeadOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Param {
    Beta,
    Alpha,
    Gamma,
}

fn free_params(family: Family) -> Vec<Param> {
    match family {
        Family::Di | Family::Tc | Family::TcD | Family::HfD => vec![Param::Beta],
        Family::Dc | Family::DcD | Family::HcD => vec![Param::Beta, Param::Alpha],
        Family::Ss => vec![Param::Gamma],
    }
}

fn bounds(p: Param) -> (f64, f64) {
    match p {
        Param::Beta | Param::Gamma => DECAY_BOX,
        Param::Alpha => ALPHA_BOX,
    }
}

fn to_unit(z: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) / (1.0 + (-z).exp())
}

fn from_unit(v: f64, (lo, hi): (f64, f64)) -> f64 {
    let p = (v - lo) / (hi - lo);
    (p / (1.0 - p)).ln().clamp(-COORD_LIMIT, COORD_LIMIT)
}

/// Prior variance of the first impulse-response coefficient per unit λ.
fn leading_variance(spec: &KernelSpec) -> Result<f64> {
    Ok(build_kernel(spec, 1)?.matrix()[(0, 0)])
}

struct Problem<'a> {
    data: &'a ReducedData,
    template: KernelSpec,
    params: Vec<Param>,
    dim: usize,
    sigma2: f64,
}

impl Problem<'_> {
    fn natural(&self, z: &[f64]) -> (KernelSpec, f64) {
        let mut spec = self.template;
        for (p, &zi) in self.params.iter().zip(z) {
            let v = to_unit(zi, bounds(*p));
            match p {
                Param::Beta => spec.beta = v,
                Param::Alpha => spec.alpha = v,
                Param::Gamma => spec.gamma = v,
            }
        }
        let (lo, hi) = LOG10_PRIOR_VARIANCE_BOX;
        let lv = z[self.params.len()].clamp(lo, hi);
        let lambda = match leading_variance(&spec) {
            Ok(k11) => 10f64.powf(lv) / k11,
            Err(_) => f64::NAN,
        };
        (spec, lambda)
    }

    fn coords(&self, spec: &KernelSpec, lambda: f64) -> Vec<f64> {
        let mut z: Vec<f64> = self
            .params
            .iter()
            .map(|p| {
                let v = match p {
                    Param::Beta => spec.beta,
                    Param::Alpha => spec.alpha,
                    Param::Gamma => spec.gamma,
                };
                from_unit(v, bounds(*p))
            })
            .collect();
        let lv = leading_variance(spec).map_or(0.0, |k11| (lambda * k11).log10());
        z.push(if lv.is_finite() { lv } else { 0.0 });
        z
    }

    fn factor(&self, spec: &KernelSpec) -> Option<BandedFactor> {
        inverse_cholesky(spec, self.dim).ok()
    }

    fn eval_with(&self, factor: &BandedFactor, lambda: f64) -> f64 {
        match self.data.nll(factor, lambda, self.sigma2) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    }

    fn eval(&self, spec: &KernelSpec, lambda: f64) -> f64 {
        self.factor(spec).map_or(f64::INFINITY, |f| self.eval_with(&f, lambda))
    }

    fn grid(&self) -> Vec<KernelSpec> {
        let mut out = Vec::new();
        for &d in &GRID_DECAY {
            let mut spec = self.template;
            if self.params.contains(&Param::Gamma) {
                spec.gamma = d;
            } else {
                spec.beta = d;
            }
            if self.params.contains(&Param::Alpha) {
                for &a in &GRID_ALPHA {
                    out.push(KernelSpec { alpha: a, ..spec });
                }
            } else {
                out.push(spec);
            }
        }
        out
    }
}

/// Tunes `(λ, η)` of the template's family by minimizing the negative log
/// marginal likelihood, then returns the regularized estimate there.
///
/// The search seeds from a coarse grid over the kernel parameters and
/// `λ·K₁₁` (one factorization per kernel point), then runs Nelder–Mead in
/// logit/log10 coordinates, restarting from the incumbent until a restart
/// fails to improve it by a relative `1e-10`. The incumbent's parameters are
/// carried exactly, so refitting from the returned point reproduces it.
pub fn fit_hyperparameters(
    data: &Dataset,
    template: &KernelSpec,
    dim: usize,
    opts: &FitOptions,
) -> Result<EstimateResult> {
    if dim == 0 {
        return Err(Error::Dimension("impulse response length must be at least 1".into()));
    }
    let n = data.len();
    let sigma2 = match opts.sigma2.or(data.sigma2()) {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::Domain(format!("sigma2 must be positive, got {s}"))),
        None => {
            let order = opts.fir_order.unwrap_or(dim.min(n / 3));
            estimate_sigma2(data.u(), data.y(), order)?
        }
    };
    if !(sigma2 > 0.0) {
        return Err(Error::Degenerate(format!(
            "estimated noise variance is {sigma2}; supply sigma2 explicitly"
        )));
    }
    let a = build_regressor(data.u(), n, dim)?;
    let reduced = ReducedData::new(&a, data.y())?;
    let problem = Problem {
        data: &reduced,
        template: *template,
        params: free_params(template.family),
        dim,
        sigma2,
    };

    let mut best: Option<(KernelSpec, f64, f64)> = None;
    let mut consider = |spec: KernelSpec, lambda: f64, f: f64| {
        if f.is_finite() && best.is_none_or(|(_, _, fb)| f < fb) {
            best = Some((spec, lambda, f));
        }
    };
    let mut tried = 0usize;
    match &opts.seeds {
        Some(seeds) => {
            for s in seeds {
                tried += 1;
                consider(s.spec, s.lambda, problem.eval(&s.spec, s.lambda));
            }
        }
        None => {
            for spec in problem.grid() {
                let factor = problem.factor(&spec);
                let k11 = leading_variance(&spec).unwrap_or(f64::NAN);
                for lv in GRID_LOG10_PRIOR_VARIANCE {
                    tried += 1;
                    let lambda = 10f64.powi(lv) / k11;
                    let f = factor.as_ref().map_or(f64::INFINITY, |fa| problem.eval_with(fa, lambda));
                    consider(spec, lambda, f);
                }
            }
        }
    }
    let (mut spec, mut lambda, mut f) = best.ok_or_else(|| {
        Error::Optimization(format!(
            "all {tried} starting points of {} gave a non-finite likelihood (N={n}, T={dim}, sigma2={sigma2:e})",
            template.label()
        ))
    })?;

    for _ in 0..opts.max_restarts {
        let x0 = problem.coords(&spec, lambda);
        let m = nelder_mead(
            |z| {
                let (s, l) = problem.natural(z);
                problem.eval(&s, l)
            },
            &x0,
            &opts.nelder_mead,
        );
        if m.f < f - 1e-10 * f.abs() {
            (spec, lambda) = problem.natural(&m.x);
            f = m.f;
        } else {
            break;
        }
    }

    let factor = inverse_cholesky(&spec, dim)?;
    let (g, nll) = reduced.estimate(&factor, lambda, sigma2)?;
    Ok(EstimateResult {
        family: spec.family,
        beta: spec.beta,
        alpha: spec.alpha,
        delta: spec.delta,
        gamma: spec.gamma,
        lambda,
        sigma2,
        nll,
        g_hat: g.as_slice().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// Data from `g ~ N(0, λ₀ K)` with white input.
    fn prior_draw(spec: &KernelSpec, lambda: f64, n: usize, t: usize, s2: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = build_kernel(spec, t).unwrap().into_inner() * lambda;
        let chol = k.cholesky().unwrap();
        let g = chol.l() * DVector::from_vec(normals(&mut rng, t));
        let u = normals(&mut rng, n);
        let a = build_regressor(&u, n, t).unwrap();
        let e = DVector::from_vec(normals(&mut rng, n)) * s2.sqrt();
        let y = a.matrix() * g + e;
        Dataset::new(u, y.as_slice().to_vec(), None).unwrap()
    }

    #[test]
    fn optimizer_never_loses_to_truth() {
        let truth = KernelSpec::tc(0.85);
        let data = prior_draw(&truth, 2.0, 400, 30, 0.5, 1);
        let opts = FitOptions { sigma2: Some(0.5), ..Default::default() };
        let fit = fit_hyperparameters(&data, &KernelSpec::tc(0.5), 30, &opts).unwrap();
        let a = build_regressor(data.u(), 400, 30).unwrap();
        let reduced = ReducedData::new(&a, data.y()).unwrap();
        let at_truth = reduced.nll(&inverse_cholesky(&truth, 30).unwrap(), 2.0, 0.5).unwrap();
        assert!(fit.nll <= at_truth, "{} > {at_truth}", fit.nll);
        assert!((fit.beta - 0.85).abs() < 0.1, "beta {}", fit.beta);
        assert_eq!(fit.sigma2, 0.5);
        assert_eq!(fit.g_hat.len(), 30);
    }

    #[test]
    fn refit_from_result_is_bit_identical() {
        let data = prior_draw(&KernelSpec::dc_d(2, 0.6, 0.8), 1.0, 150, 20, 0.2, 2);
        for template in [KernelSpec::dc_d(2, 0.5, 0.5), KernelSpec::ss(0.5), KernelSpec::tc_d(3, 0.5)] {
            let first = fit_hyperparameters(&data, &template, 20, &FitOptions::default()).unwrap();
            let opts = FitOptions {
                seeds: Some(vec![FitSeed { spec: first.spec(), lambda: first.lambda }]),
                ..Default::default()
            };
            let again = fit_hyperparameters(&data, &template, 20, &opts).unwrap();
            assert_eq!(first, again, "{template}");
        }
    }

    #[test]
    fn fitted_parameters_stay_in_their_boxes() {
        let data = prior_draw(&KernelSpec::tc(0.9), 1.0, 200, 25, 0.3, 3);
        for template in [KernelSpec::dc(0.5, 0.5), KernelSpec::hc_d(2, 0.5, 0.5), KernelSpec::di(0.5)] {
            let fit = fit_hyperparameters(&data, &template, 25, &FitOptions::default()).unwrap();
            assert!(fit.beta >= DECAY_BOX.0 && fit.beta <= DECAY_BOX.1);
            assert!(fit.alpha >= ALPHA_BOX.0 && fit.alpha <= ALPHA_BOX.1);
            let lv = (fit.lambda * leading_variance(&fit.spec()).unwrap()).log10();
            assert!(lv >= -8.0 - 1e-9 && lv <= 8.0 + 1e-9);
            assert!(fit.nll.is_finite() && fit.g_hat.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn non_finite_start_points_are_an_optimization_error() {
        let data = prior_draw(&KernelSpec::tc(0.9), 1.0, 60, 10, 0.3, 4);
        let opts = FitOptions {
            seeds: Some(vec![FitSeed { spec: KernelSpec::tc(0.5), lambda: -1.0 }]),
            ..Default::default()
        };
        let err = fit_hyperparameters(&data, &KernelSpec::tc(0.5), 10, &opts).unwrap_err();
        assert!(matches!(err, Error::Optimization(_)), "{err}");
    }

    #[test]
    fn sigma2_precedence() {
        let data = prior_draw(&KernelSpec::tc(0.9), 1.0, 90, 10, 0.3, 5).with_sigma2(Some(0.7)).unwrap();
        let fit = fit_hyperparameters(&data, &KernelSpec::tc(0.5), 10, &FitOptions::default()).unwrap();
        assert_eq!(fit.sigma2, 0.7);
        let opts = FitOptions { sigma2: Some(0.2), ..Default::default() };
        let fit = fit_hyperparameters(&data, &KernelSpec::tc(0.5), 10, &opts).unwrap();
        assert_eq!(fit.sigma2, 0.2);
        let est = fit_hyperparameters(&data.with_sigma2(None).unwrap(), &KernelSpec::tc(0.5), 10, &FitOptions::default())
            .unwrap();
        assert!(est.sigma2 > 0.0 && est.sigma2 < 1.0);
    }

    #[test]
    fn coordinates_round_trip() {
        let a = build_regressor(&[1.0, 2.0, 3.0, 4.0], 4, 2).unwrap();
        let reduced = ReducedData::new(&a, &[1.0, 0.0, 1.0, 0.0]).unwrap();
        let problem = Problem {
            data: &reduced,
            template: KernelSpec::dc_d(3, 0.5, 0.5),
            params: free_params(Family::DcD),
            dim: 2,
            sigma2: 1.0,
        };
        let spec = KernelSpec::dc_d(3, 0.25, 0.7);
        let z = problem.coords(&spec, 0.01);
        let (back, lambda) = problem.natural(&z);
        assert!((back.beta - 0.7).abs() < 1e-12 && (back.alpha - 0.25).abs() < 1e-12);
        assert!((lambda / 0.01 - 1.0).abs() < 1e-12);
        let edge = problem.coords(&KernelSpec::dc_d(3, 0.0, 0.7), 0.01);
        assert!(edge.iter().all(|v| v.is_finite()));
    }
}
