//! Regularized impulse-response estimation and marginal-likelihood tuning.
//!
//! Model: `y = A g + e`, `e ~ N(0, σ² I)`, prior `g ~ N(0, λ K(η))`. The
//! estimate is the posterior mean and `(λ, η)` minimize the negative log
//! marginal likelihood.

mod fit;
mod likelihood;
mod regressor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Family, KernelSpec};

pub use fit::{fit_hyperparameters, FitOptions, FitSeed};
pub use likelihood::{nll_direct, nll_qr, rls_estimate, rls_with_factor, ReducedData};
pub use regressor::{build_regressor, estimate_sigma2, RegressionMatrix};

/// Input/output record of length `N`, with an optional known noise variance.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    u: Vec<f64>,
    y: Vec<f64>,
    sigma2: Option<f64>,
}

impl Dataset {
    pub fn new(u: Vec<f64>, y: Vec<f64>, sigma2: Option<f64>) -> Result<Self> {
        if u.is_empty() || u.len() != y.len() {
            return Err(Error::Dimension(format!(
                "u and y must be nonempty and of equal length, got {} and {}",
                u.len(),
                y.len()
            )));
        }
        if u.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Domain("data contain non-finite values".into()));
        }
        if let Some(s) = sigma2 {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Domain(format!("sigma2 must be positive, got {s}")));
            }
        }
        Ok(Dataset { u, y, sigma2 })
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn sigma2(&self) -> Option<f64> {
        self.sigma2
    }

    pub fn with_sigma2(mut self, sigma2: Option<f64>) -> Result<Self> {
        self.sigma2 = None;
        Dataset::new(self.u, self.y, sigma2)
    }
}

/// Tuned estimate. Serialized flat, with the kernel hyperparameters inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub family: Family,
    pub beta: f64,
    pub alpha: f64,
    pub delta: u32,
    pub gamma: f64,
    pub lambda: f64,
    pub sigma2: f64,
    pub nll: f64,
    pub g_hat: Vec<f64>,
}

impl EstimateResult {
    pub fn spec(&self) -> KernelSpec {
        KernelSpec {
            family: self.family,
            beta: self.beta,
            alpha: self.alpha,
            delta: self.delta,
            gamma: self.gamma,
        }
    }
}
