//! The shared-truth measurement model with cross-correlated error: forward
//! population moments, the strong-constraint analytic solve, the
//! weak-constraint true-variance search, and diagnostic statistics.
//!
//! Six datasets (I, N, F, E, R, S) share one truth t. The in situ sample I
//! is the calibration reference (alpha_I = 0, beta_I = 1). A fraction
//! lambda_N of the in situ error is shared with the nowcast, and the
//! lagged analysis samples carry that error forward and backward through
//! first-order propagation factors lambda_F, lambda_E, lambda_R, lambda_S.

mod curves;
mod diagnostics;
mod fit;
mod solve;

pub use curves::{choose_solution, residual_curves, ResidualCurves, AUTOCOV_PAIRS};
pub use diagnostics::{diagnostics, ComponentDiag, FitDiagnostics, ENVELOPE_CORR_FLOOR};
pub use fit::{fit, FitError, FitOptions, FitOutput};
pub use solve::{shared_error_fraction, strong_solve};

use num_complex::Complex64;
use thiserror::Error;

use crate::moments::MomentSet;
use crate::tag::Tag;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("true variance {0} outside [0, Var(I) = {1})")]
    SigmaT2OutOfRange(f64, f64),
    #[error("2x2 calibration system for {0} is singular")]
    SingularSystem(Tag),
    #[error("propagation factor of the parent sample of {0} is zero")]
    LambdaParentZero(Tag),
    #[error("beta_N equals lambda_N; per-component truth is undefined")]
    DegenerateCalibration,
    #[error("variance of {0} is not positive")]
    DegenerateVariance(Tag),
    #[error("no autocovariance minima found")]
    NoMinimaFound,
    #[error("no candidate true variance satisfies the non-negativity constraints")]
    NoFeasibleRegion,
    #[error("parameters are infeasible (negative variance retrieval)")]
    InfeasibleParams,
}

/// The 17 model unknowns plus additive calibrations and the derived
/// per-component truth split.
///
/// Array order for the five calibrated datasets is N, F, E, R, S; error
/// variances `sigma2` are ordered I, N, F, E, R, S.
#[derive(Debug, Clone, PartialEq)]
pub struct InfersParams {
    /// Joint (both-component) true variance, m^2/s^2.
    pub sigma_t2: f64,
    /// Derived zonal true variance; sigma_t2_u + sigma_t2_v = sigma_t2.
    pub sigma_t2_u: f64,
    pub sigma_t2_v: f64,
    pub alpha: [Complex64; 5],
    pub beta: [f64; 5],
    /// lambda_N (shared error fraction) then the propagation factors
    /// lambda_F, lambda_E, lambda_R, lambda_S.
    pub lambda: [f64; 5],
    pub sigma2: [f64; 6],
    /// All variance retrievals (error and per-component truth) non-negative.
    pub feasible: bool,
}

impl InfersParams {
    pub fn beta_of(&self, tag: Tag) -> f64 {
        match tag.index() {
            0 => 1.0,
            i => self.beta[i - 1],
        }
    }

    pub fn lambda_n(&self) -> f64 {
        self.lambda[0]
    }

    /// Checks the non-negativity constraints that define feasibility.
    pub fn check_feasible(&self) -> bool {
        self.sigma_t2 >= 0.0
            && self.sigma_t2_u >= 0.0
            && self.sigma_t2_v >= 0.0
            && self.sigma2.iter().all(|&v| v >= 0.0)
    }
}

/// Loading of each dataset's total error on the six individual error
/// sources (epsilon_I .. epsilon_S), given the propagation factors.
pub(crate) fn error_loadings(lambda: &[f64; 5]) -> [[f64; 6]; 6] {
    let [ln, lf, le, lr, ls] = *lambda;
    [
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [ln, 1.0, 0.0, 0.0, 0.0, 0.0],
        [lf * ln, lf, 1.0, 0.0, 0.0, 0.0],
        [le * lf * ln, le * lf, le, 1.0, 0.0, 0.0],
        [lr * ln, lr, 0.0, 0.0, 1.0, 0.0],
        [ls * lr * ln, ls * lr, 0.0, 0.0, ls, 1.0],
    ]
}

/// Population covariance matrix for one component (or the joint variate):
/// Cov(X,Y) = beta_X beta_Y sigma_t2 + sum_k cX_k cY_k sigma2_k.
pub(crate) fn population_cov(
    sigma_t2: f64,
    sigma2: &[f64; 6],
    beta: &[f64; 5],
    lambda: &[f64; 5],
) -> [[f64; 6]; 6] {
    let load = error_loadings(lambda);
    let b6 = [1.0, beta[0], beta[1], beta[2], beta[3], beta[4]];
    let mut cov = [[0.0; 6]; 6];
    for a in 0..6 {
        for b in a..6 {
            let mut c = b6[a] * b6[b] * sigma_t2;
            for k in 0..6 {
                c += load[a][k] * load[b][k] * sigma2[k];
            }
            cov[a][b] = c;
            cov[b][a] = c;
        }
    }
    cov
}

/// Exact population moments implied by a parameter set.
///
/// The truth mean is taken as zero, so mean(I) = 0 and mean(X) = alpha_X.
/// Error variances are split evenly between components; the derived
/// per-component truth is taken from the parameter set. The joint matrix
/// is the elementwise sum of the component matrices by construction.
pub fn forward_moments(p: &InfersParams) -> MomentSet {
    let half: [f64; 6] = std::array::from_fn(|k| p.sigma2[k] / 2.0);
    let cov_u = population_cov(p.sigma_t2_u, &half, &p.beta, &p.lambda);
    let cov_v = population_cov(p.sigma_t2_v, &half, &p.beta, &p.lambda);
    let mut cov_joint = [[0.0; 6]; 6];
    for a in 0..6 {
        for b in 0..6 {
            cov_joint[a][b] = cov_u[a][b] + cov_v[a][b];
        }
    }
    let mut mean = [Complex64::new(0.0, 0.0); 6];
    for (k, &a) in p.alpha.iter().enumerate() {
        mean[k + 1] = a;
    }
    MomentSet {
        n: usize::MAX,
        mean,
        cov_joint,
        cov_u,
        cov_v,
    }
}
