//! Exponentially convex locally stationary (ECLS) decomposition and spectra.
//!
//! Every kernel in the catalog factors as `K[t,s] = ρ^((t+s)/2) w(|t-s|)`,
//! with envelope `ρ = β` (`ρ = γ³` for SS) and a stationary autocovariance
//! `w`. The spectrum of `w` shows where a kernel puts its prior power.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io::format_float;
use crate::kernel::{build_kernel, KernelSpec};

/// Default truncation length for spectral work.
pub const SPECTRAL_DIM: usize = 200;
/// Default tolerance on the relative spread of `ρ^(-(t+s)/2) K[t,s]` along a
/// diagonal.
pub const STATIONARITY_TOL: f64 = 1e-7;

/// Stationary part `w(0), …, w(T-1)` of a kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryKernel {
    pub w: Vec<f64>,
    pub spec: KernelSpec,
    /// Largest spread along a diagonal, relative to `w(0)`.
    pub spread: f64,
}

/// Extracts `w(τ) = ρ^(-(t+s)/2) K[t,s]` for `|t-s| = τ` and certifies it
/// does not depend on the position along the diagonal.
pub fn stationary_part(spec: &KernelSpec, dim: usize) -> Result<StationaryKernel> {
    stationary_part_with_tol(spec, dim, STATIONARITY_TOL)
}

pub fn stationary_part_with_tol(spec: &KernelSpec, dim: usize, tol: f64) -> Result<StationaryKernel> {
    let k = build_kernel(spec, dim)?.into_inner();
    let (w, spread) = stationary_decomposition(&k, spec.envelope(), tol)?;
    Ok(StationaryKernel { w, spec: *spec, spread })
}

/// Largest dimension tried by [`stationary_part_converged`].
pub const MAX_SPECTRAL_DIM: usize = 1600;
/// Relative size of the last lag below which the stationary part is treated
/// as fully decayed.
pub const TAIL_TOL: f64 = 1e-15;

/// Stationary part long enough for its tail to have decayed: starts at
/// [`SPECTRAL_DIM`] and doubles up to [`MAX_SPECTRAL_DIM`] until
/// `|w(T-1)| <= TAIL_TOL * w(0)`. Slow decay (large β with high order) stops
/// at the cap with whatever tail remains.
pub fn stationary_part_converged(spec: &KernelSpec) -> Result<StationaryKernel> {
    let mut dim = SPECTRAL_DIM;
    loop {
        let w = stationary_part(spec, dim)?;
        let tail = w.w.last().map_or(0.0, |v| v.abs());
        if tail <= TAIL_TOL * w.w[0] || dim >= MAX_SPECTRAL_DIM {
            return Ok(w);
        }
        dim = (2 * dim).min(MAX_SPECTRAL_DIM);
    }
}

/// Splits a kernel matrix into envelope `ρ^((t+s)/2)` and stationary part.
/// Returns `w` read off the first column and the relative spread.
pub fn stationary_decomposition(k: &DMatrix<f64>, rho: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
    let dim = k.nrows();
    let scaled = |t: usize, s: usize| k[(t, s)] * rho.powf(-((t + s + 2) as f64) / 2.0);
    let w: Vec<f64> = (0..dim).map(|tau| scaled(tau, 0)).collect();
    if w.is_empty() || !(w[0] > 0.0) || w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning(format!(
            "stationary part is not representable at T={dim} with envelope {rho}"
        )));
    }
    let mut spread = 0.0f64;
    for (tau, &w_tau) in w.iter().enumerate() {
        let (mut lo, mut hi) = (w_tau, w_tau);
        for s in 1..dim - tau {
            let v = scaled(s + tau, s);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        spread = spread.max((hi - lo) / w[0]);
    }
    if !(spread < tol) {
        return Err(Error::Decomposition { spread, tol });
    }
    Ok((w, spread))
}

/// Closed-form stationary part of TC2.
pub fn w_tc2(beta: f64, tau: usize) -> f64 {
    let d = tau as f64;
    beta.powf(d / 2.0) * (2.0 * beta + (1.0 - beta) * (1.0 + d))
}

/// Closed-form stationary part of DC2 (`0 <= α < 1`).
pub fn w_dc2(alpha: f64, beta: f64, tau: usize) -> f64 {
    let d = tau as i32;
    beta.powf(tau as f64 / 2.0)
        * (1.0 - (1.0 - beta) * alpha.powi(d + 1) - alpha * alpha * beta)
        / (1.0 - alpha)
}

/// Spectrum sampled on `θ_j = jπ/(M-1)`, `j = 0..M`.
#[derive(Clone, Debug, PartialEq)]
pub struct Psd {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub normalized: bool,
}

impl Psd {
    /// Smallest value, negative when truncation leaks below zero.
    pub fn min(&self) -> f64 {
        self.phi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "theta,phi")?;
        for (t, p) in self.theta.iter().zip(&self.phi) {
            writeln!(out, "{},{}", format_float(*t), format_float(*p))?;
        }
        Ok(())
    }
}

/// `φ(θ) = w(0) + 2 Σ_{τ≥1} w(τ) cos(θτ)` on an `M`-point grid over `[0, π]`,
/// optionally scaled to maximum one.
pub fn psd(w: &StationaryKernel, grid: usize, normalize: bool) -> Result<Psd> {
    psd_of_autocovariance(&w.w, grid, normalize)
}

pub fn psd_of_autocovariance(w: &[f64], grid: usize, normalize: bool) -> Result<Psd> {
    if grid < 2 {
        return Err(Error::Dimension(format!("PSD grid needs at least 2 points, got {grid}")));
    }
    if w.is_empty() || w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("autocovariance must be nonempty and finite".into()));
    }
    let theta: Vec<f64> = (0..grid).map(|j| j as f64 * PI / (grid - 1) as f64).collect();
    let mut phi: Vec<f64> = theta
        .iter()
        .map(|&th| w[0] + 2.0 * w[1..].iter().enumerate().map(|(k, v)| v * (th * (k + 1) as f64).cos()).sum::<f64>())
        .collect();
    if normalize {
        let max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > 0.0) {
            return Err(Error::Degenerate("spectrum has no positive value to normalize by".into()));
        }
        phi.iter_mut().for_each(|p| *p /= max);
    }
    Ok(Psd { theta, phi, normalized: normalize })
}

/// Fraction of spectral mass in `[0, θ_c]`, trapezoidal rule, negative values
/// clipped to zero. The integrand is interpolated linearly at `θ_c`.
pub fn low_frequency_mass(psd: &Psd, cutoff: f64) -> f64 {
    let phi: Vec<f64> = psd.phi.iter().map(|p| p.max(0.0)).collect();
    let th = &psd.theta;
    let mut below = 0.0;
    let mut total = 0.0;
    for j in 1..th.len() {
        let (a, b) = (th[j - 1], th[j]);
        let seg = 0.5 * (phi[j - 1] + phi[j]) * (b - a);
        total += seg;
        if b <= cutoff {
            below += seg;
        } else if a < cutoff {
            let frac = (cutoff - a) / (b - a);
            let at_cut = phi[j - 1] + frac * (phi[j] - phi[j - 1]);
            below += 0.5 * (phi[j - 1] + at_cut) * (cutoff - a);
        }
    }
    if total > 0.0 {
        below / total
    } else {
        0.0
    }
}

/// Recovers `w(τ) = (1/π) ∫₀^π φ(θ) cos(θτ) dθ` by the trapezoidal rule.
pub fn autocovariance_from_psd(psd: &Psd, tau: usize) -> f64 {
    let th = &psd.theta;
    let f = |j: usize| psd.phi[j] * (th[j] * tau as f64).cos();
    let integral: f64 = (1..th.len()).map(|j| 0.5 * (f(j - 1) + f(j)) * (th[j] - th[j - 1])).sum();
    integral / PI
}
