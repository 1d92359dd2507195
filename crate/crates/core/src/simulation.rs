//! Monte Carlo benchmark: random smooth impulse responses, band-limited
//! Gaussian inputs, noisy outputs at a prescribed SNR, and the AIRF score of
//! every tuned estimator.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_hyperparameters, Dataset, FitOptions};
use crate::io::format_float;
use crate::kernel::KernelSpec;

/// Order of the input-shaping lowpass filter.
pub const INPUT_FILTER_ORDER: usize = 100;

/// Estimators of the benchmark, in reporting order.
pub const DEFAULT_ESTIMATORS: [&str; 14] = [
    "DI", "DC", "TC", "SS", "DC2", "DC3", "DC4", "DC5", "DC6", "TC2", "TC3", "TC4", "TC5", "TC6",
];

/// How the drawn `a_k` enter the impulse response.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpulseForm {
    /// `g_t = Σ_k a_k cos(b_k t + c_k)`, the formula read literally.
    #[default]
    Amplitude,
    /// `g_t = Σ_k a_k^t cos(b_k t + c_k)`: damped modes with poles of
    /// modulus `a_k`.
    Damped,
}

/// Three-mode impulse response over `t = 1..T`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrueSystem {
    pub g: Vec<f64>,
    /// `(a_k, b_k, c_k)` for `k = 1, 2, 3`.
    pub params: [(f64, f64, f64); 3],
}

impl TrueSystem {
    /// `g_t = Σ_k a_k cos(b_k t + c_k)`.
    pub fn from_params(params: [(f64, f64, f64); 3], dim: usize) -> Self {
        Self::with_form(params, dim, ImpulseForm::Amplitude)
    }

    pub fn with_form(params: [(f64, f64, f64); 3], dim: usize, form: ImpulseForm) -> Self {
        let g = (1..=dim)
            .map(|t| {
                let t = t as f64;
                params
                    .iter()
                    .map(|&(a, b, c)| {
                        let scale = match form {
                            ImpulseForm::Amplitude => a,
                            ImpulseForm::Damped => a.powf(t),
                        };
                        scale * (b * t + c).cos()
                    })
                    .sum()
            })
            .collect();
        TrueSystem { g, params }
    }
}

fn amplitude_range(study: u8) -> Result<(f64, f64)> {
    match study {
        1 => Ok((0.8, 0.9)),
        2 => Ok((0.63, 0.73)),
        s => Err(Error::Domain(format!("study must be 1 or 2, got {s}"))),
    }
}

/// Draws `a_k ~ U[0.8, 0.9]` (study 1) or `U[0.63, 0.73]` (study 2),
/// `b_k ~ U[0.4, 0.5]`, `c_k ~ U[0, π]`.
pub fn sample_impulse_response<R: Rng>(study: u8, dim: usize, rng: &mut R) -> Result<TrueSystem> {
    sample_impulse_response_with(study, dim, ImpulseForm::Amplitude, rng)
}

pub fn sample_impulse_response_with<R: Rng>(
    study: u8,
    dim: usize,
    form: ImpulseForm,
    rng: &mut R,
) -> Result<TrueSystem> {
    let (lo, hi) = amplitude_range(study)?;
    let mut params = [(0.0, 0.0, 0.0); 3];
    for p in &mut params {
        *p = (rng.random_range(lo..=hi), rng.random_range(0.4..=0.5), rng.random_range(0.0..=PI));
    }
    Ok(TrueSystem::with_form(params, dim, form))
}

/// Linear-phase lowpass FIR of the given (even) order: Hamming-windowed sinc
/// with cutoff `fc·π` rad/sample and unit DC gain.
pub fn lowpass_fir(order: usize, fc: f64) -> Vec<f64> {
    let mid = order as f64 / 2.0;
    let mut h: Vec<f64> = (0..=order)
        .map(|n| {
            let x = n as f64 - mid;
            let ideal = if x == 0.0 { fc } else { (PI * fc * x).sin() / (PI * x) };
            let window = if order == 0 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * PI * n as f64 / order as f64).cos()
            };
            ideal * window
        })
        .collect();
    let gain: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= gain);
    h
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Band-limited Gaussian input: white noise through [`lowpass_fir`] (valid
/// part of the convolution only), rescaled to unit sample variance.
///
/// `fc` is the band edge as a fraction of the Nyquist frequency.
pub fn generate_input<R: Rng>(n: usize, fc: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(fc > 0.0 && fc <= 1.0) {
        return Err(Error::Domain(format!("band edge must lie in (0, 1], got {fc}")));
    }
    if n <= INPUT_FILTER_ORDER {
        return Err(Error::Dimension(format!(
            "input length {n} must exceed the filter order {INPUT_FILTER_ORDER}"
        )));
    }
    let h = lowpass_fir(INPUT_FILTER_ORDER, fc);
    let white: Vec<f64> = (0..n + INPUT_FILTER_ORDER).map(|_| StandardNormal.sample(rng)).collect();
    let mut u: Vec<f64> = (0..n)
        .map(|i| h.iter().enumerate().map(|(k, hk)| hk * white[i + INPUT_FILTER_ORDER - k]).sum())
        .collect();
    let scale = sample_variance(&u).sqrt();
    u.iter_mut().for_each(|v| *v /= scale);
    Ok(u)
}

/// Noise-free output `Σ_{k=1}^{T} g_k u(t-k)` with `u(τ) = 0` for `τ <= 0`.
pub fn convolve(g: &[f64], u: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|i| g.iter().enumerate().take(i).map(|(k, gk)| gk * u[i - k - 1]).sum())
        .collect()
}

/// Returns `(y, σ²)` with `σ² = var(y_clean)/snr` (sample variance) and
/// `y = y_clean + e`, `e ~ N(0, σ² I)`.
pub fn simulate_output<R: Rng>(g: &[f64], u: &[f64], snr: f64, rng: &mut R) -> Result<(Vec<f64>, f64)> {
    if !(snr > 0.0) {
        return Err(Error::Domain(format!("snr must be positive, got {snr}")));
    }
    if u.len() < 2 {
        return Err(Error::Dimension("need at least two input samples".into()));
    }
    let clean = convolve(g, u);
    let var = sample_variance(&clean);
    if !(var > 0.0) {
        return Err(Error::Degenerate("noise-free output has zero variance".into()));
    }
    let sigma2 = var / snr;
    let sd = sigma2.sqrt();
    let y = clean
        .iter()
        .map(|c| {
            let e: f64 = StandardNormal.sample(rng);
            c + sd * e
        })
        .collect();
    Ok((y, sigma2))
}

/// Reference level `ḡ` of the fit score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AirfReference {
    /// `ḡ = mean(g)`.
    #[default]
    Mean,
    /// `ḡ = Σ g_t`, the formula read literally.
    Sum,
}

/// `100 (1 - ‖g - ĝ‖ / ‖g - ḡ·1‖)` with `ḡ` the mean of `g`.
pub fn airf(g: &[f64], g_hat: &[f64]) -> Result<f64> {
    airf_with(g, g_hat, AirfReference::Mean)
}

pub fn airf_with(g: &[f64], g_hat: &[f64], reference: AirfReference) -> Result<f64> {
    if g.len() != g_hat.len() || g.is_empty() {
        return Err(Error::Dimension(format!(
            "impulse responses have lengths {} and {}",
            g.len(),
            g_hat.len()
        )));
    }
    let total: f64 = g.iter().sum();
    let bar = match reference {
        AirfReference::Mean => total / g.len() as f64,
        AirfReference::Sum => total,
    };
    let err = g.iter().zip(g_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let spread = g.iter().map(|a| (a - bar).powi(2)).sum::<f64>().sqrt();
    if !(spread > 0.0) {
        return Err(Error::Degenerate("reference impulse response has no spread".into()));
    }
    Ok(100.0 * (1.0 - err / spread))
}

fn default_runs() -> usize {
    50
}
fn default_n() -> usize {
    500
}
fn default_t() -> usize {
    50
}
fn default_snr() -> f64 {
    1.0
}
fn default_band() -> f64 {
    0.2
}
fn default_estimators() -> Vec<String> {
    DEFAULT_ESTIMATORS.iter().map(|s| s.to_string()).collect()
}

/// Monte Carlo study description. Serialized as JSON; every field but
/// `study` has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: u8,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_t")]
    pub t: usize,
    #[serde(default)]
    pub seed: u64,
    /// Estimator labels such as `TC`, `SS`, `DC3`.
    #[serde(default = "default_estimators")]
    pub estimators: Vec<String>,
    #[serde(default = "default_snr")]
    pub snr: f64,
    /// Input band edge as a fraction of Nyquist.
    #[serde(default = "default_band")]
    pub band: f64,
    /// Give the estimators the true noise variance instead of estimating it.
    #[serde(default)]
    pub known_sigma2: bool,
    #[serde(default)]
    pub airf_reference: AirfReference,
    #[serde(default)]
    pub impulse: ImpulseForm,
}

impl ExperimentConfig {
    pub fn new(study: u8) -> Self {
        ExperimentConfig {
            study,
            runs: default_runs(),
            n: default_n(),
            t: default_t(),
            seed: 0,
            estimators: default_estimators(),
            snr: default_snr(),
            band: default_band(),
            known_sigma2: false,
            airf_reference: AirfReference::Mean,
            impulse: ImpulseForm::Amplitude,
        }
    }

    pub fn validate(&self) -> Result<Vec<KernelSpec>> {
        amplitude_range(self.study)?;
        if self.runs == 0 {
            return Err(Error::Domain("runs must be at least 1".into()));
        }
        if !(self.snr > 0.0) {
            return Err(Error::Domain(format!("snr must be positive, got {}", self.snr)));
        }
        if self.t == 0 {
            return Err(Error::Domain("impulse response length must be at least 1".into()));
        }
        if self.n <= INPUT_FILTER_ORDER {
            return Err(Error::Domain(format!("N must exceed {INPUT_FILTER_ORDER}, got {}", self.n)));
        }
        if !(self.band > 0.0 && self.band <= 1.0) {
            return Err(Error::Domain(format!("band must lie in (0, 1], got {}", self.band)));
        }
        if self.estimators.is_empty() {
            return Err(Error::Domain("at least one estimator is required".into()));
        }
        self.estimators.iter().map(|l| KernelSpec::from_label(l)).collect()
    }
}

/// One row of the Monte Carlo table. Failed fits have `airf = NaN`, no
/// hyperparameters and the error message.
#[derive(Clone, Debug, PartialEq)]
pub struct McRecord {
    pub run: usize,
    pub estimator: String,
    pub airf: f64,
    pub spec: Option<KernelSpec>,
    pub lambda: f64,
    pub sigma2: f64,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McResult {
    pub records: Vec<McRecord>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

impl McResult {
    /// Median AIRF of an estimator over its successful runs.
    pub fn median(&self, estimator: &str) -> Option<f64> {
        median(
            self.records
                .iter()
                .filter(|r| r.estimator == estimator && r.airf.is_finite())
                .map(|r| r.airf)
                .collect(),
        )
    }

    /// `(estimator, median AIRF, failures)` in first-appearance order.
    pub fn summary(&self) -> Vec<(String, Option<f64>, usize)> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.records {
            if !names.contains(&r.estimator.as_str()) {
                names.push(&r.estimator);
            }
        }
        names
            .into_iter()
            .map(|name| {
                let failures =
                    self.records.iter().filter(|r| r.estimator == name && r.error.is_some()).count();
                (name.to_string(), self.median(name), failures)
            })
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    /// CSV with columns
    /// `run,estimator,airf,beta,alpha,delta,gamma,lambda,sigma2,seconds`.
    ///
    /// Wall times vary between invocations, so `seconds` is written as `0`
    /// unless `timings` is set; the file is then byte-reproducible.
    pub fn write_csv<W: Write>(&self, mut out: W, timings: bool) -> Result<()> {
        writeln!(out, "run,estimator,airf,beta,alpha,delta,gamma,lambda,sigma2,seconds")?;
        for r in &self.records {
            let seconds = if timings { format_float(r.seconds) } else { "0".into() };
            match &r.spec {
                Some(s) => writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.run,
                    r.estimator,
                    format_float(r.airf),
                    format_float(s.beta),
                    format_float(s.alpha),
                    s.delta,
                    format_float(s.gamma),
                    format_float(r.lambda),
                    format_float(r.sigma2),
                    seconds
                )?,
                None => writeln!(out, "{},{},NaN,,,,,,,{}", r.run, r.estimator, seconds)?,
            }
        }
        Ok(())
    }
}

/// Per-run generator: stream `run` of the seeded ChaCha8 generator.
pub fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

/// Draws the system and dataset of one run.
pub fn simulate_run(config: &ExperimentConfig, run: usize) -> Result<(TrueSystem, Dataset, f64)> {
    let mut rng = run_rng(config.seed, run);
    let system = sample_impulse_response_with(config.study, config.t, config.impulse, &mut rng)?;
    let u = generate_input(config.n, config.band, &mut rng)?;
    let (y, sigma2) = simulate_output(&system.g, &u, config.snr, &mut rng)?;
    Ok((system, Dataset::new(u, y, None)?, sigma2))
}

fn run_one(config: &ExperimentConfig, specs: &[KernelSpec], run: usize) -> Vec<McRecord> {
    let failed = |estimator: &str, msg: String| McRecord {
        run,
        estimator: estimator.to_string(),
        airf: f64::NAN,
        spec: None,
        lambda: f64::NAN,
        sigma2: f64::NAN,
        seconds: 0.0,
        error: Some(msg),
    };
    let (system, data, true_sigma2) = match simulate_run(config, run) {
        Ok(v) => v,
        Err(e) => return config.estimators.iter().map(|l| failed(l, e.to_string())).collect(),
    };
    let opts = FitOptions {
        sigma2: config.known_sigma2.then_some(true_sigma2),
        ..Default::default()
    };
    config
        .estimators
        .iter()
        .zip(specs)
        .map(|(label, template)| {
            let start = Instant::now();
            let outcome = fit_hyperparameters(&data, template, config.t, &opts).and_then(|fit| {
                let score = airf_with(&system.g, &fit.g_hat, config.airf_reference)?;
                Ok((fit, score))
            });
            let seconds = start.elapsed().as_secs_f64();
            match outcome {
                Ok((fit, score)) => McRecord {
                    run,
                    estimator: label.clone(),
                    airf: score,
                    spec: Some(fit.spec()),
                    lambda: fit.lambda,
                    sigma2: fit.sigma2,
                    seconds,
                    error: None,
                },
                Err(e) => McRecord { seconds, ..failed(label, e.to_string()) },
            }
        })
        .collect()
}

/// Runs the study; runs execute in parallel on the current rayon pool and are
/// merged in run order, so the result does not depend on the thread count.
pub fn run_monte_carlo(config: &ExperimentConfig) -> Result<McResult> {
    let specs = config.validate()?;
    let records = (0..config.runs)
        .into_par_iter()
        .map(|run| run_one(config, &specs, run))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(McResult { records })
}
