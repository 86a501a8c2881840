//! Strong-constraint analytic solve: given the sample moments, a candidate
//! true variance, and the variance-matched slope, every other parameter
//! follows in closed form from the variance and I/N covariance equations.

use num_complex::Complex64;

use super::{InfersParams, ModelError};
use crate::moments::{Component, MomentSet};
use crate::tag::Tag;

const SINGULAR_REL_TOL: f64 = 1e-14;
const LAMBDA_PARENT_TOL: f64 = 1e-12;

/// Shared error fraction lambda_N implied by (sigma_t2, beta_N):
/// lambda_N = (Cov(I,N) - beta_N sigma_t2) / sigma_I^2.
pub fn shared_error_fraction(
    m: &MomentSet,
    sigma_t2: f64,
    beta_n: f64,
) -> Result<f64, ModelError> {
    let var_i = m.var(Tag::I);
    if !(sigma_t2 >= 0.0 && sigma_t2 < var_i) {
        return Err(ModelError::SigmaT2OutOfRange(sigma_t2, var_i));
    }
    let sigma_i2 = var_i - sigma_t2;
    Ok((m.cov(Tag::I, Tag::N) - beta_n * sigma_t2) / sigma_i2)
}

/// Solves the 2x2 system
///   c_i = x * sigma_t2  + y * (lambda_N sigma_I^2)
///   c_n = x * beta_N sigma_t2 + y * s
/// for (x, y), where s = lambda_N^2 sigma_I^2 + sigma_N^2.
fn solve_pair(
    sigma_t2: f64,
    beta_n: f64,
    ln_si2: f64,
    s: f64,
    c_i: f64,
    c_n: f64,
    tag: Tag,
) -> Result<(f64, f64), ModelError> {
    let det = sigma_t2 * s - ln_si2 * beta_n * sigma_t2;
    let scale = (sigma_t2.abs() + (beta_n * sigma_t2).abs()) * (s.abs() + ln_si2.abs());
    if det.abs() < SINGULAR_REL_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(ModelError::SingularSystem(tag));
    }
    let x = (c_i * s - ln_si2 * c_n) / det;
    let y = (sigma_t2 * c_n - beta_n * sigma_t2 * c_i) / det;
    Ok((x, y))
}

/// Closed-form cascade for all parameters except (sigma_t2, beta_N).
///
/// Negative variance retrievals are returned as-is with `feasible` false;
/// they are never clipped because the feasibility shading of the
/// true-variance search depends on them.
pub fn strong_solve(
    m: &MomentSet,
    sigma_t2: f64,
    beta_n: f64,
) -> Result<InfersParams, ModelError> {
    let var_i = m.var(Tag::I);
    let lambda_n = shared_error_fraction(m, sigma_t2, beta_n)?;
    let sigma_i2 = var_i - sigma_t2;
    // Variance-matching tie: Var(N) is then satisfied identically.
    let sigma_n2 = sigma_i2 * (beta_n * beta_n - lambda_n * lambda_n);
    let s = lambda_n * lambda_n * sigma_i2 + sigma_n2;
    let ln_si2 = lambda_n * sigma_i2;

    let mut beta = [beta_n, 0.0, 0.0, 0.0, 0.0];
    let mut lambda = [lambda_n, 0.0, 0.0, 0.0, 0.0];
    let mut sigma2 = [sigma_i2, sigma_n2, 0.0, 0.0, 0.0, 0.0];

    // One-day samples: solve for (beta_X, lambda_X) directly.
    for (tag, bi, li) in [(Tag::F, 1, 1), (Tag::R, 3, 3)] {
        let (bx, lx) = solve_pair(
            sigma_t2,
            beta_n,
            ln_si2,
            s,
            m.cov(Tag::I, tag),
            m.cov(Tag::N, tag),
            tag,
        )?;
        beta[bi] = bx;
        lambda[li] = lx;
        sigma2[tag.index()] = m.var(tag) - bx * bx * sigma_t2 - lx * lx * s;
    }

    // Two-day samples: the system yields mu_Y = lambda_Y * lambda_parent.
    for (tag, parent, bi, li, parent_li) in [(Tag::E, Tag::F, 2, 2, 1), (Tag::S, Tag::R, 4, 4, 3)]
    {
        let (by, mu) = solve_pair(
            sigma_t2,
            beta_n,
            ln_si2,
            s,
            m.cov(Tag::I, tag),
            m.cov(Tag::N, tag),
            tag,
        )?;
        let l_parent = lambda[parent_li];
        if l_parent.abs() < LAMBDA_PARENT_TOL {
            return Err(ModelError::LambdaParentZero(tag));
        }
        let ly = mu / l_parent;
        let base = l_parent * l_parent * s + sigma2[parent.index()];
        beta[bi] = by;
        lambda[li] = ly;
        sigma2[tag.index()] = m.var(tag) - by * by * sigma_t2 - ly * ly * base;
    }

    let mean_i = m.mean[Tag::I.index()];
    let mut alpha = [Complex64::new(0.0, 0.0); 5];
    for (k, &tag) in crate::tag::CALIBRATED.iter().enumerate() {
        alpha[k] = m.mean[tag.index()] - beta[k] * mean_i;
    }

    // Derived per-component truth from the component I/N moments.
    let denom = beta_n - lambda_n;
    if denom.abs() < SINGULAR_REL_TOL * beta_n.abs().max(1.0) {
        return Err(ModelError::DegenerateCalibration);
    }
    let comp_truth = |c: Component| {
        let mm = m.matrix(c);
        let (i, n) = (Tag::I.index(), Tag::N.index());
        (mm[i][n] - lambda_n * mm[i][i]) / denom
    };
    let sigma_t2_u = comp_truth(Component::U);
    let sigma_t2_v = comp_truth(Component::V);

    let mut p = InfersParams {
        sigma_t2,
        sigma_t2_u,
        sigma_t2_v,
        alpha,
        beta,
        lambda,
        sigma2,
        feasible: false,
    };
    p.feasible = p.check_feasible();
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward_moments, testutil::random_feasible_params};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_rel(a: f64, b: f64, tol: f64) {
        let scale = a.abs().max(b.abs()).max(1e-12);
        assert!((a - b).abs() / scale < tol, "{a} != {b}");
    }

    #[test]
    fn round_trip_reproduces_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let p = random_feasible_params(&mut rng);
            let m = forward_moments(&p);
            let q = strong_solve(&m, p.sigma_t2, p.beta[0]).unwrap();
            assert!(q.feasible);
            assert_rel(q.sigma_t2_u, p.sigma_t2_u, 1e-9);
            assert_rel(q.sigma_t2_v, p.sigma_t2_v, 1e-9);
            for k in 0..5 {
                assert_rel(q.beta[k], p.beta[k], 1e-9);
                assert_rel(q.lambda[k], p.lambda[k], 1e-9);
                assert_abs_diff_eq!(q.alpha[k].re, p.alpha[k].re, epsilon = 1e-9);
                assert_abs_diff_eq!(q.alpha[k].im, p.alpha[k].im, epsilon = 1e-9);
            }
            for k in 0..6 {
                assert_rel(q.sigma2[k], p.sigma2[k], 1e-9);
            }
        }
    }

    #[test]
    fn variance_matching_tie_holds_at_any_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_feasible_params(&mut rng);
        let m = forward_moments(&p);
        // Probe the cascade away from the true sigma_t2 as well.
        for st2 in [0.0, p.sigma_t2 * 0.5, p.sigma_t2, p.sigma_t2 * 1.4] {
            if st2 >= m.var(crate::tag::Tag::I) {
                continue;
            }
            if let Ok(q) = strong_solve(&m, st2, p.beta[0]) {
                let sigma_i2 = q.sigma2[0];
                let expect = sigma_i2 * (q.beta[0] * q.beta[0] - q.lambda[0] * q.lambda[0]);
                assert_rel(q.sigma2[1], expect, 1e-12);
                assert_rel(q.sigma_t2_u + q.sigma_t2_v, st2, 1e-9);
            }
        }
    }

    #[test]
    fn zero_truth_gives_pure_error_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_feasible_params(&mut rng);
        let m = forward_moments(&p);
        let l = shared_error_fraction(&m, 0.0, p.beta[0]).unwrap();
        assert_rel(
            l,
            m.cov(crate::tag::Tag::I, crate::tag::Tag::N) / m.var(crate::tag::Tag::I),
            1e-12,
        );
        // The full cascade is singular at sigma_t2 = 0 (beta_X drops out).
        assert!(matches!(
            strong_solve(&m, 0.0, p.beta[0]),
            Err(ModelError::SingularSystem(_))
        ));
    }

    #[test]
    fn out_of_range_sigma_t2_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_feasible_params(&mut rng);
        let m = forward_moments(&p);
        let var_i = m.var(crate::tag::Tag::I);
        assert!(matches!(
            strong_solve(&m, var_i, p.beta[0]),
            Err(ModelError::SigmaT2OutOfRange(..))
        ));
        assert!(matches!(
            strong_solve(&m, -0.01, p.beta[0]),
            Err(ModelError::SigmaT2OutOfRange(..))
        ));
    }
}
