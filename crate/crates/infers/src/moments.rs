//! Sample means and covariance structure of a collocation subset.
//!
//! The two velocity components are treated as one complex variate: the
//! joint covariance is the real part of the complex cross-covariance,
//! which decomposes additively into the per-component covariances. Both
//! the joint and the per-component matrices are carried because the
//! per-component truth split needs them downstream.

use num_complex::Complex64;
use thiserror::Error;

use crate::record::CollocationRecord;
use crate::tag::Tag;

#[derive(Debug, Error, PartialEq)]
pub enum MomentsError {
    #[error("subset has {0} records; at least 2 are required")]
    EmptySubset(usize),
    #[error("non-finite velocity component in input")]
    NonFiniteInput,
    #[error("variance of {0} is not positive in the requested matrix")]
    DegenerateVariance(Tag),
}

/// Which covariance matrix a correlation is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Joint,
    U,
    V,
}

/// Means and 6x6 covariance structure of a collocation subset.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub n: usize,
    pub mean: [Complex64; 6],
    /// Real part of the complex cross-covariance (= cov_u + cov_v).
    pub cov_joint: [[f64; 6]; 6],
    pub cov_u: [[f64; 6]; 6],
    pub cov_v: [[f64; 6]; 6],
}

impl MomentSet {
    pub fn var(&self, tag: Tag) -> f64 {
        let i = tag.index();
        self.cov_joint[i][i]
    }

    pub fn cov(&self, a: Tag, b: Tag) -> f64 {
        self.cov_joint[a.index()][b.index()]
    }

    pub fn matrix(&self, c: Component) -> &[[f64; 6]; 6] {
        match c {
            Component::Joint => &self.cov_joint,
            Component::U => &self.cov_u,
            Component::V => &self.cov_v,
        }
    }

    /// cov(a,b) / sqrt(var(a) var(b)) in the requested matrix.
    pub fn correlation(&self, a: Tag, b: Tag, c: Component) -> Result<f64, MomentsError> {
        let m = self.matrix(c);
        let (ia, ib) = (a.index(), b.index());
        if m[ia][ia] <= 0.0 {
            return Err(MomentsError::DegenerateVariance(a));
        }
        if m[ib][ib] <= 0.0 {
            return Err(MomentsError::DegenerateVariance(b));
        }
        Ok(m[ia][ib] / (m[ia][ia] * m[ib][ib]).sqrt())
    }
}

/// Unbiased (n-1 denominator) sample moments of a record subset.
///
/// Two passes: means first, then centered products, so the additive
/// decomposition cov_joint = cov_u + cov_v holds exactly by construction.
pub fn compute_moments(records: &[CollocationRecord]) -> Result<MomentSet, MomentsError> {
    let n = records.len();
    if n < 2 {
        return Err(MomentsError::EmptySubset(n));
    }
    for r in records {
        if r.vel.iter().any(|&(u, v)| !u.is_finite() || !v.is_finite()) {
            return Err(MomentsError::NonFiniteInput);
        }
    }

    let nf = n as f64;
    let mut mean_u = [0.0; 6];
    let mut mean_v = [0.0; 6];
    for r in records {
        for k in 0..6 {
            mean_u[k] += r.vel[k].0;
            mean_v[k] += r.vel[k].1;
        }
    }
    for k in 0..6 {
        mean_u[k] /= nf;
        mean_v[k] /= nf;
    }

    let mut cov_u = [[0.0; 6]; 6];
    let mut cov_v = [[0.0; 6]; 6];
    for r in records {
        let mut du = [0.0; 6];
        let mut dv = [0.0; 6];
        for k in 0..6 {
            du[k] = r.vel[k].0 - mean_u[k];
            dv[k] = r.vel[k].1 - mean_v[k];
        }
        for a in 0..6 {
            for b in a..6 {
                cov_u[a][b] += du[a] * du[b];
                cov_v[a][b] += dv[a] * dv[b];
            }
        }
    }
    let denom = nf - 1.0;
    let mut cov_joint = [[0.0; 6]; 6];
    for a in 0..6 {
        for b in a..6 {
            cov_u[a][b] /= denom;
            cov_v[a][b] /= denom;
            cov_u[b][a] = cov_u[a][b];
            cov_v[b][a] = cov_v[a][b];
        }
    }
    for a in 0..6 {
        for b in 0..6 {
            cov_joint[a][b] = cov_u[a][b] + cov_v[a][b];
        }
    }

    let mut mean = [Complex64::new(0.0, 0.0); 6];
    for k in 0..6 {
        mean[k] = Complex64::new(mean_u[k], mean_v[k]);
    }

    Ok(MomentSet {
        n,
        mean,
        cov_joint,
        cov_u,
        cov_v,
    })
}
