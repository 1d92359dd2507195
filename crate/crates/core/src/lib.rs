//! Regularized kernel-based estimation of impulse responses.
//!
//! The crate provides the stable kernel catalog used in kernel-based system
//! identification (DI, TC, DC, SS), the second-order TC2/DC2 kernels and their
//! order-δ generalizations (TCδ, DCδ, and the sign-alternating HFδ, HCδ), together
//! with:
//!
//! * closed-form banded Cholesky factors of the kernel inverses and their
//!   log-determinants ([`kernel`]),
//! * the maximum-entropy band extension solver that characterizes them ([`maxent`]),
//! * regularized least squares and marginal-likelihood tuning ([`estimator`]),
//! * the locally-stationary decomposition and spectral analysis ([`spectral`]),
//! * the Monte Carlo harness used to benchmark the estimators ([`simulation`]).

pub mod error;
pub mod estimator;
pub mod io;
pub mod kernel;
pub mod maxent;
pub mod optimize;
pub mod simulation;
pub mod spectral;

pub use error::{Error, Result};
pub use estimator::{
    build_regressor, estimate_sigma2, fit_hyperparameters, nll_direct, nll_qr, rls_estimate,
    Dataset, EstimateResult, FitOptions, RegressionMatrix,
};
pub use kernel::{
    build_inverse, build_kernel, inverse_cholesky, normalization_kappa, toeplitz_inverse,
    BandedFactor, Family, KernelMatrix, KernelSpec, ToeplitzSeq,
};
pub use maxent::{check_feasibility, maxent_completion, one_step_extension, BandSpec};
