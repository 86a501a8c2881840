//! Closed-form reference estimators for a collocated pair or triplet:
//! ordinary and reverse linear regression, variance matching, and the
//! just-identified triple collocation solution. All consume a [`MomentSet`]
//! so that trimming and subsetting compose uniformly.

use num_complex::Complex64;
use thiserror::Error;

use crate::moments::MomentSet;
use crate::tag::Tag;

#[derive(Debug, Error, PartialEq)]
pub enum ReferenceError {
    #[error("variance of {0} is not positive")]
    DegenerateVariance(Tag),
    #[error("covariance between {0} and {1} is zero")]
    ZeroCovariance(Tag, Tag),
    #[error("pairwise covariance signs are inconsistent (negative true-variance estimate)")]
    SignInconsistency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionKind {
    Olr,
    Rlr,
}

/// Errors-in-variables solution with all error assigned to one side.
#[derive(Debug, Clone)]
pub struct RegressionSolution {
    pub kind: RegressionKind,
    pub beta: f64,
    pub alpha: Complex64,
    pub sigma_t2: f64,
    pub err_var_i: f64,
    pub err_var_n: f64,
}

/// Ordinary linear regression of N on I: drifter error set to zero.
pub fn olr_fit(m: &MomentSet) -> Result<RegressionSolution, ReferenceError> {
    let var_i = m.var(Tag::I);
    if var_i <= 0.0 {
        return Err(ReferenceError::DegenerateVariance(Tag::I));
    }
    let beta = m.cov(Tag::I, Tag::N) / var_i;
    Ok(RegressionSolution {
        kind: RegressionKind::Olr,
        beta,
        alpha: m.mean[Tag::N.index()] - beta * m.mean[Tag::I.index()],
        sigma_t2: var_i,
        err_var_i: 0.0,
        err_var_n: m.var(Tag::N) - beta * beta * var_i,
    })
}

/// Reverse linear regression: analysis error set to zero.
pub fn rlr_fit(m: &MomentSet) -> Result<RegressionSolution, ReferenceError> {
    let cov = m.cov(Tag::I, Tag::N);
    if cov == 0.0 {
        return Err(ReferenceError::ZeroCovariance(Tag::I, Tag::N));
    }
    let var_n = m.var(Tag::N);
    let beta = var_n / cov;
    let err_var_i = m.var(Tag::I) - cov * cov / var_n;
    Ok(RegressionSolution {
        kind: RegressionKind::Rlr,
        beta,
        alpha: m.mean[Tag::N.index()] - beta * m.mean[Tag::I.index()],
        sigma_t2: m.var(Tag::I) - err_var_i,
        err_var_i,
        err_var_n: 0.0,
    })
}

/// Variance-matching slope sqrt(Var(N)/Var(I)) on joint-complex variances;
/// the same match applies to both current components.
pub fn variance_match(m: &MomentSet) -> Result<f64, ReferenceError> {
    let var_i = m.var(Tag::I);
    if var_i <= 0.0 {
        return Err(ReferenceError::DegenerateVariance(Tag::I));
    }
    Ok((m.var(Tag::N) / var_i).sqrt())
}

/// Just-identified triple collocation solution for one dataset triplet.
#[derive(Debug, Clone)]
pub struct TripleCollocationSolution {
    pub tags: [Tag; 3],
    /// Multiplicative calibration per dataset; the first (reference) is 1.
    pub beta: [f64; 3],
    pub alpha: [Complex64; 3],
    pub sigma_t2: f64,
    pub err_var: [f64; 3],
}

/// Method-of-moments triple collocation with `tags[0]` as the reference.
///
/// sigma_t2 = C12 C13 / C23, beta_2 = C23 / C13, beta_3 = C23 / C12, and
/// errVar_i = Var(i) - beta_i^2 sigma_t2.
pub fn triple_collocation_fit(
    m: &MomentSet,
    tags: [Tag; 3],
) -> Result<TripleCollocationSolution, ReferenceError> {
    let c12 = m.cov(tags[0], tags[1]);
    let c13 = m.cov(tags[0], tags[2]);
    let c23 = m.cov(tags[1], tags[2]);
    if c23 == 0.0 {
        return Err(ReferenceError::ZeroCovariance(tags[1], tags[2]));
    }
    if c13 == 0.0 {
        return Err(ReferenceError::ZeroCovariance(tags[0], tags[2]));
    }
    if c12 == 0.0 {
        return Err(ReferenceError::ZeroCovariance(tags[0], tags[1]));
    }
    let sigma_t2 = c12 * c13 / c23;
    if sigma_t2 < 0.0 {
        return Err(ReferenceError::SignInconsistency);
    }
    let beta = [1.0, c23 / c13, c23 / c12];
    let mean_ref = m.mean[tags[0].index()];
    let mut alpha = [Complex64::new(0.0, 0.0); 3];
    let mut err_var = [0.0; 3];
    for k in 0..3 {
        alpha[k] = m.mean[tags[k].index()] - beta[k] * mean_ref;
        err_var[k] = m.var(tags[k]) - beta[k] * beta[k] * sigma_t2;
    }
    alpha[0] = Complex64::new(0.0, 0.0);
    Ok(TripleCollocationSolution {
        tags,
        beta,
        alpha,
        sigma_t2,
        err_var,
    })
}
