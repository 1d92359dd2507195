//! Kernel catalog: construction, banded inverse, inverse Cholesky factor and
//! log-determinant.
//!
//! Every kernel except SS is of the form
//!
//! ```text
//! K⁻¹ = κ⁻¹ · G · D_T · Gᵀ
//! ```
//!
//! where `G` is a lower-triangular banded Toeplitz prefilter (a power of the
//! first-difference operator, or a blend of two consecutive powers),
//! `D_T = diag(β⁻¹, …, β⁻⁽ᵀ⁻ᵇ⁾) ⊕ B_T` and `B_T` is a small trailing block.
//! The inverse is therefore banded and its Cholesky factor is available
//! without ever inverting `K`.

mod build;
mod factor;
mod toeplitz;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use build::build_kernel;
pub use factor::{
    build_inverse, corollary_factor_dc2, corollary_factor_tc2, decomposition_factor,
    inverse_cholesky, numeric_inverse_factor, BandedFactor,
};
pub use toeplitz::{toeplitz_inverse, ToeplitzSeq};

/// Kernel family tag.
///
/// `TcD`, `DcD`, `HfD` and `HcD` carry an order `delta`; with `delta = 1`
/// they coincide with TC, DC, HF and HC respectively.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "DI")]
    Di,
    #[serde(rename = "TC")]
    Tc,
    #[serde(rename = "DC")]
    Dc,
    #[serde(rename = "SS")]
    Ss,
    #[serde(rename = "TCd")]
    TcD,
    #[serde(rename = "DCd")]
    DcD,
    #[serde(rename = "HFd")]
    HfD,
    #[serde(rename = "HCd")]
    HcD,
}

impl Family {
    pub fn tag(self) -> &'static str {
        match self {
            Family::Di => "DI",
            Family::Tc => "TC",
            Family::Dc => "DC",
            Family::Ss => "SS",
            Family::TcD => "TCd",
            Family::DcD => "DCd",
            Family::HfD => "HFd",
            Family::HcD => "HCd",
        }
    }

    pub fn uses_alpha(self) -> bool {
        matches!(self, Family::Dc | Family::DcD | Family::HcD)
    }

    pub fn uses_delta(self) -> bool {
        matches!(self, Family::TcD | Family::DcD | Family::HfD | Family::HcD)
    }

    pub fn uses_beta(self) -> bool {
        self != Family::Ss
    }

    pub fn uses_gamma(self) -> bool {
        self == Family::Ss
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "DI" => Ok(Family::Di),
            "TC" => Ok(Family::Tc),
            "DC" => Ok(Family::Dc),
            "SS" => Ok(Family::Ss),
            "TCd" => Ok(Family::TcD),
            "DCd" => Ok(Family::DcD),
            "HFd" => Ok(Family::HfD),
            "HCd" => Ok(Family::HcD),
            other => Err(Error::Parse(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// One kernel: family tag plus hyperparameters.
///
/// Fields that the family does not use are ignored (and are zero when built
/// through the constructors).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: Family,
    /// Exponential decay rate, `0 < beta < 1`.
    pub beta: f64,
    /// Correlation (DC) or transition (DCd, HCd) parameter.
    pub alpha: f64,
    /// Order of the difference prefilter.
    pub delta: u32,
    /// SS decay rate, `0 < gamma < 1`.
    pub gamma: f64,
}

/// How a spec is evaluated, after resolving orders that have closed forms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Shape {
    Diagonal,
    Tc1,
    Dc1 { alpha: f64 },
    Tc2,
    Dc2 { alpha: f64 },
    /// Order ≥ 3, evaluated by series. `alpha = 1` is the pure TCδ prefilter.
    Series { delta: u32, alpha: f64 },
    Ss,
}

impl KernelSpec {
    fn base(family: Family) -> Self {
        KernelSpec { family, beta: 0.0, alpha: 0.0, delta: 0, gamma: 0.0 }
    }

    pub fn di(beta: f64) -> Self {
        KernelSpec { beta, ..Self::base(Family::Di) }
    }

    pub fn tc(beta: f64) -> Self {
        KernelSpec { beta, delta: 1, ..Self::base(Family::Tc) }
    }

    pub fn dc(alpha: f64, beta: f64) -> Self {
        KernelSpec { beta, alpha, delta: 1, ..Self::base(Family::Dc) }
    }

    pub fn ss(gamma: f64) -> Self {
        KernelSpec { gamma, ..Self::base(Family::Ss) }
    }

    pub fn tc_d(delta: u32, beta: f64) -> Self {
        KernelSpec { beta, delta, ..Self::base(Family::TcD) }
    }

    pub fn dc_d(delta: u32, alpha: f64, beta: f64) -> Self {
        KernelSpec { beta, alpha, delta, ..Self::base(Family::DcD) }
    }

    pub fn hf_d(delta: u32, beta: f64) -> Self {
        KernelSpec { beta, delta, ..Self::base(Family::HfD) }
    }

    pub fn hc_d(delta: u32, alpha: f64, beta: f64) -> Self {
        KernelSpec { beta, alpha, delta, ..Self::base(Family::HcD) }
    }

    /// Checks the hyperparameter ranges of the family.
    pub fn validate(&self) -> Result<()> {
        let fam = self.family;
        if fam.uses_beta() && !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Domain(format!(
                "beta must lie in (0, 1) for {fam}, got {}",
                self.beta
            )));
        }
        if fam.uses_gamma() && !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Domain(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if fam.uses_delta() && self.delta < 1 {
            return Err(Error::Domain(format!("delta must be at least 1, got {}", self.delta)));
        }
        match fam {
            Family::Dc => {
                let bound = self.beta.powf(-0.5);
                if !(self.alpha.abs() < bound) {
                    return Err(Error::Domain(format!(
                        "alpha must satisfy |alpha| < beta^(-1/2) = {bound} for DC, got {}",
                        self.alpha
                    )));
                }
            }
            Family::DcD | Family::HcD => {
                if !(0.0..=1.0).contains(&self.alpha) {
                    return Err(Error::Domain(format!(
                        "alpha must lie in [0, 1] for {fam}, got {}",
                        self.alpha
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub(crate) fn shape(&self) -> Shape {
        match self.family {
            Family::Di => Shape::Diagonal,
            Family::Tc => Shape::Tc1,
            Family::Dc => Shape::Dc1 { alpha: self.alpha },
            Family::Ss => Shape::Ss,
            Family::TcD | Family::HfD => match self.delta {
                1 => Shape::Tc1,
                2 => Shape::Tc2,
                d => Shape::Series { delta: d, alpha: 1.0 },
            },
            Family::DcD | Family::HcD => match self.delta {
                1 => Shape::Dc1 { alpha: self.alpha },
                2 => Shape::Dc2 { alpha: self.alpha },
                d => Shape::Series { delta: d, alpha: self.alpha },
            },
        }
    }

    /// True for the high-frequency families, whose entries carry `(-1)^|t-s|`.
    pub fn is_alternating(&self) -> bool {
        matches!(self.family, Family::HfD | Family::HcD)
    }

    /// Bandwidth of the inverse kernel, `None` when the inverse is dense (SS).
    pub fn bandwidth(&self) -> Option<usize> {
        match self.shape() {
            Shape::Diagonal => Some(0),
            Shape::Tc1 | Shape::Dc1 { .. } => Some(1),
            Shape::Tc2 | Shape::Dc2 { .. } => Some(2),
            Shape::Series { delta, .. } => Some(delta as usize),
            Shape::Ss => None,
        }
    }

    /// Decay rate of the exponential envelope `β^((t+s)/2)`.
    ///
    /// For SS the envelope is `γ³`.
    pub fn envelope(&self) -> f64 {
        match self.family {
            Family::Ss => self.gamma.powi(3),
            _ => self.beta,
        }
    }

    /// First column of the banded prefilter `G` (`None` for SS).
    pub(crate) fn prefilter(&self) -> Option<Vec<f64>> {
        let (delta, alpha) = match self.shape() {
            Shape::Diagonal => return Some(vec![1.0]),
            Shape::Tc1 => (1, 1.0),
            Shape::Dc1 { alpha } => (1, alpha),
            Shape::Tc2 => (2, 1.0),
            Shape::Dc2 { alpha } => (2, alpha),
            Shape::Series { delta, alpha } => (delta, alpha),
            Shape::Ss => return None,
        };
        Some(blended_difference(delta, alpha))
    }

    /// Short estimator label such as `TC`, `DC3` or `HF2`.
    pub fn label(&self) -> String {
        let order = |prefix: &str| {
            if self.delta <= 1 {
                prefix.to_string()
            } else {
                format!("{prefix}{}", self.delta)
            }
        };
        match self.family {
            Family::Di => "DI".into(),
            Family::Tc => "TC".into(),
            Family::Dc => "DC".into(),
            Family::Ss => "SS".into(),
            Family::TcD => order("TC"),
            Family::DcD => order("DC"),
            Family::HfD => order("HF"),
            Family::HcD => order("HC"),
        }
    }

    /// Parses a label (`DI`, `TC`, `DC`, `SS`, `TC3`, `DC2`, `HF`, `HC4`, ...)
    /// into a spec with placeholder hyperparameters.
    pub fn from_label(label: &str) -> Result<Self> {
        let label = label.trim();
        match label {
            "DI" => return Ok(KernelSpec::di(0.5)),
            "TC" => return Ok(KernelSpec::tc(0.5)),
            "DC" => return Ok(KernelSpec::dc(0.5, 0.5)),
            "SS" => return Ok(KernelSpec::ss(0.5)),
            "HF" => return Ok(KernelSpec::hf_d(1, 0.5)),
            "HC" => return Ok(KernelSpec::hc_d(1, 0.5, 0.5)),
            _ => {}
        }
        let bad = || Error::Parse(format!("unknown estimator label `{label}`"));
        if label.len() < 3 || !label.is_char_boundary(2) {
            return Err(bad());
        }
        let (prefix, digits) = label.split_at(2);
        let delta: u32 = digits.parse().map_err(|_| bad())?;
        if delta == 0 {
            return Err(bad());
        }
        match prefix {
            "TC" => Ok(KernelSpec::tc_d(delta, 0.5)),
            "DC" => Ok(KernelSpec::dc_d(delta, 0.5, 0.5)),
            "HF" => Ok(KernelSpec::hf_d(delta, 0.5)),
            "HC" => Ok(KernelSpec::hc_d(delta, 0.5, 0.5)),
            _ => Err(bad()),
        }
    }
}

/// Coefficients of `(1-α)·F^(δ-1) + α·F^δ`, with `F = I - S` the first
/// difference operator.
pub(crate) fn blended_difference(delta: u32, alpha: f64) -> Vec<f64> {
    let lower = difference_power(delta - 1);
    let upper = difference_power(delta);
    upper
        .iter()
        .enumerate()
        .map(|(j, &hi)| (1.0 - alpha) * lower.get(j).copied().unwrap_or(0.0) + alpha * hi)
        .collect()
}

/// Coefficients `(-1)^j C(p, j)` of `F^p`.
fn difference_power(p: u32) -> Vec<f64> {
    let mut c = vec![1.0];
    for _ in 0..p {
        let mut next = vec![0.0; c.len() + 1];
        for (j, &v) in c.iter().enumerate() {
            next[j] += v;
            next[j + 1] -= v;
        }
        c = next;
    }
    c
}

/// Displays the flat key-value form, e.g. `family=TCd beta=0.8 delta=3`.
impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "family={}", self.family)?;
        if self.family.uses_beta() {
            write!(f, " beta={}", self.beta)?;
        }
        if self.family.uses_alpha() {
            write!(f, " alpha={}", self.alpha)?;
        }
        if self.family.uses_delta() {
            write!(f, " delta={}", self.delta)?;
        }
        if self.family.uses_gamma() {
            write!(f, " gamma={}", self.gamma)?;
        }
        Ok(())
    }
}

/// Parses the flat key-value form. The family may be a canonical tag
/// (`TCd`) or an order-carrying label (`TC2`), in which case `delta` is
/// implied.
impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut family: Option<(Family, Option<u32>)> = None;
        let (mut beta, mut alpha, mut delta, mut gamma) = (None, None, None, None);
        for token in s.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{token}`")))?;
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("invalid number `{v}` for `{key}`")))
            };
            match key {
                "family" => {
                    family = Some(match value.parse::<Family>() {
                        Ok(f) => (f, None),
                        Err(_) => {
                            let spec = KernelSpec::from_label(value)?;
                            let implied = spec.family.uses_delta().then_some(spec.delta);
                            (spec.family, implied)
                        }
                    })
                }
                "beta" => beta = Some(num(value)?),
                "alpha" => alpha = Some(num(value)?),
                "gamma" => gamma = Some(num(value)?),
                "delta" => {
                    delta = Some(value.parse::<u32>().map_err(|_| {
                        Error::Parse(format!("invalid integer `{value}` for `delta`"))
                    })?)
                }
                other => return Err(Error::Parse(format!("unknown key `{other}`"))),
            }
        }
        let (family, implied) =
            family.ok_or_else(|| Error::Parse("missing key `family`".into()))?;
        let delta = match (implied, delta) {
            (Some(i), Some(d)) if i != d => {
                return Err(Error::Parse(format!(
                    "family label implies delta={i} but delta={d} was given"
                )))
            }
            (Some(i), _) => Some(i),
            (None, d) => d,
        };
        let require = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::Parse(format!("missing key `{name}` for family {family}")))
        };
        let mut spec = KernelSpec::base(family);
        if family.uses_beta() {
            spec.beta = require("beta", beta)?;
        }
        if family.uses_alpha() {
            spec.alpha = require("alpha", alpha)?;
        }
        if family.uses_gamma() {
            spec.gamma = require("gamma", gamma)?;
        }
        spec.delta = match family {
            Family::Tc | Family::Dc => 1,
            f if f.uses_delta() => delta
                .ok_or_else(|| Error::Parse(format!("missing key `delta` for family {family}")))?,
            _ => 0,
        };
        Ok(spec)
    }
}

/// Dense symmetric positive definite kernel matrix. Indices are 0-based:
/// entry `(i, j)` is the kernel at lags `t = i + 1`, `s = j + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix(DMatrix<f64>);

impl KernelMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "kernel matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(KernelMatrix(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Scales every entry by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        KernelMatrix(&self.0 * c)
    }
}

/// Normalization constant κ of the family.
///
/// Orders above two have no prescribed normalization and use κ = 1; a constant
/// rescaling of the kernel is absorbed by the regularization scale λ.
pub fn normalization_kappa(spec: &KernelSpec) -> Result<f64> {
    spec.validate()?;
    Ok(kappa_of(spec))
}

pub(crate) fn kappa_of(spec: &KernelSpec) -> f64 {
    let b = spec.beta;
    match spec.shape() {
        Shape::Diagonal | Shape::Ss | Shape::Series { .. } => 1.0,
        Shape::Tc1 => 1.0 - b,
        Shape::Dc1 { alpha } => 1.0 - alpha * b,
        Shape::Tc2 => (1.0 - b).powi(3),
        Shape::Dc2 { alpha } => (1.0 - b) * (1.0 - alpha * b) * (1.0 - alpha * alpha * b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_values() {
        assert_eq!(normalization_kappa(&KernelSpec::tc_d(2, 0.5)).unwrap(), 0.125);
        assert_eq!(normalization_kappa(&KernelSpec::dc_d(2, 0.5, 0.5)).unwrap(), 0.328125);
        assert_eq!(normalization_kappa(&KernelSpec::tc_d(4, 0.3)).unwrap(), 1.0);
        assert_eq!(normalization_kappa(&KernelSpec::tc(0.25)).unwrap(), 0.75);
        assert_eq!(normalization_kappa(&KernelSpec::dc(0.5, 0.5)).unwrap(), 0.75);
    }

    #[test]
    fn validation_ranges() {
        assert!(KernelSpec::tc_d(3, 1.2).validate().is_err());
        assert!(KernelSpec::tc(0.0).validate().is_err());
        assert!(KernelSpec::ss(1.0).validate().is_err());
        assert!(KernelSpec::dc_d(3, 1.1, 0.5).validate().is_err());
        assert!(KernelSpec::dc_d(3, -0.1, 0.5).validate().is_err());
        assert!(KernelSpec::tc_d(0, 0.5).validate().is_err());
        // DC admits negative and super-unit alpha up to beta^(-1/2)
        assert!(KernelSpec::dc(-1.9, 0.25).validate().is_ok());
        assert!(KernelSpec::dc(2.0, 0.25).validate().is_err());
        assert!(KernelSpec::dc(f64::NAN, 0.25).validate().is_err());
    }

    #[test]
    fn prefilters() {
        assert_eq!(KernelSpec::tc_d(2, 0.5).prefilter().unwrap(), vec![1.0, -2.0, 1.0]);
        assert_eq!(KernelSpec::tc_d(3, 0.5).prefilter().unwrap(), vec![1.0, -3.0, 3.0, -1.0]);
        assert_eq!(KernelSpec::dc(0.25, 0.5).prefilter().unwrap(), vec![1.0, -0.25]);
        assert_eq!(KernelSpec::dc_d(2, 0.5, 0.5).prefilter().unwrap(), vec![1.0, -1.5, 0.5]);
        assert_eq!(KernelSpec::di(0.5).prefilter().unwrap(), vec![1.0]);
        assert!(KernelSpec::ss(0.5).prefilter().is_none());
    }

    #[test]
    fn key_value_form() {
        let spec: KernelSpec = "family=TC2 beta=0.8".parse().unwrap();
        assert_eq!(spec, KernelSpec::tc_d(2, 0.8));
        let spec: KernelSpec = "family=DCd beta=0.7 alpha=0.25 delta=3".parse().unwrap();
        assert_eq!(spec, KernelSpec::dc_d(3, 0.25, 0.7));
        let back: KernelSpec = spec.to_string().parse().unwrap();
        assert_eq!(back, spec);
        assert_eq!(KernelSpec::ss(0.5).to_string(), "family=SS gamma=0.5");

        assert!("family=TC2 beta=0.8 delta=3".parse::<KernelSpec>().is_err());
        assert!("family=TCd beta=0.8".parse::<KernelSpec>().is_err());
        assert!("family=TC beta=0.8 colour=red".parse::<KernelSpec>().is_err());
        assert!("beta=0.8".parse::<KernelSpec>().is_err());
    }

    #[test]
    fn labels_round_trip() {
        for label in ["DI", "TC", "DC", "SS", "TC2", "TC6", "DC3", "HF", "HF2", "HC", "HC2"] {
            assert_eq!(KernelSpec::from_label(label).unwrap().label(), label);
        }
        assert!(KernelSpec::from_label("TC0").is_err());
        assert!(KernelSpec::from_label("XY2").is_err());
        assert!(KernelSpec::from_label("T").is_err());
    }
}
