//! Deterministic minimum-covariance-determinant trimming.
//!
//! Each collocation is flattened to a 12-dimensional real vector and a
//! fixed fraction of multivariate outliers is removed. Instead of random
//! subsampling, a small set of deterministic initial scatter estimates is
//! refined by C-steps (re-selecting the h points of smallest Mahalanobis
//! distance, which never increases the covariance determinant). Starts are
//! computed on classically whitened data so the kept/flagged partition is
//! affine equivariant.

use nalgebra::{Cholesky, SMatrix, SVector};
use thiserror::Error;

use crate::record::CollocationRecord;

pub const DIM: usize = 12;
type Vec12 = SVector<f64, DIM>;
type Mat12 = SMatrix<f64, DIM, DIM>;
type Chol = Cholesky<f64, nalgebra::Const<DIM>>;

const MAX_C_STEPS: usize = 100;
const REL_DET_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum RobustError {
    #[error("need at least {need} records for {DIM}-dimensional trimming, got {got}")]
    TooFewRecords { need: usize, got: usize },
    #[error("covariance matrix is singular; no trimming performed")]
    SingularCovariance,
    #[error("trim fraction {0} outside (0, 0.5)")]
    BadTrimFraction(f64),
}

/// Partition of a subset into kept and flagged records.
#[derive(Debug, Clone)]
pub struct TrimResult {
    pub kept: Vec<usize>,
    pub flagged: Vec<usize>,
    /// Subset size used, ceil((1 - f) n).
    pub h: usize,
    /// Covariance determinant after each accepted C-step of the winning
    /// start; non-increasing.
    pub det_history: Vec<f64>,
}

struct SubsetFit {
    kept: Vec<usize>,
    log_det: f64,
    det_history: Vec<f64>,
}

fn mean_of(points: &[Vec12], idx: &[usize]) -> Vec12 {
    let mut m = Vec12::zeros();
    for &i in idx {
        m += points[i];
    }
    m / idx.len() as f64
}

fn cov_of(points: &[Vec12], idx: &[usize], mean: &Vec12) -> Mat12 {
    let mut c = Mat12::zeros();
    for &i in idx {
        let d = points[i] - mean;
        c.syger(1.0, &d, &d, 1.0);
    }
    c / (idx.len() as f64 - 1.0)
}

fn log_det(chol: &Chol) -> f64 {
    2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>()
}

/// Indices of the h smallest values, ties broken by index order.
fn smallest_h(values: &[f64], h: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut kept: Vec<usize> = order[..h].to_vec();
    kept.sort_unstable();
    kept
}

fn mahalanobis_sq(points: &[Vec12], mean: &Vec12, chol: &Chol) -> Vec<f64> {
    points
        .iter()
        .map(|p| {
            let d = p - mean;
            let y = chol.solve(&d);
            d.dot(&y)
        })
        .collect()
}

/// C-step refinement from an initial index subset.
fn c_steps(points: &[Vec12], start: Vec<usize>, h: usize) -> Option<SubsetFit> {
    let mut kept = start;
    let mut history = Vec::new();
    let mut prev_log_det = f64::INFINITY;

    for _ in 0..MAX_C_STEPS {
        let mean = mean_of(points, &kept);
        let cov = cov_of(points, &kept, &mean);
        let chol = Cholesky::new(cov)?;
        let ld = log_det(&chol);
        if ld > prev_log_det - REL_DET_TOL {
            break;
        }
        prev_log_det = ld;
        history.push(ld.exp());
        let d2 = mahalanobis_sq(points, &mean, &chol);
        let next = smallest_h(&d2, h);
        if next == kept {
            break;
        }
        kept = next;
    }
    if history.is_empty() {
        return None;
    }
    Some(SubsetFit {
        kept,
        log_det: prev_log_det,
        det_history: history,
    })
}

/// Deterministic initial h-subsets, derived from orthogonally equivariant
/// scatter estimates of the whitened data.
fn initial_subsets(whitened: &[Vec12], h: usize) -> Vec<Vec<usize>> {
    let n = whitened.len();
    let norms: Vec<f64> = whitened.iter().map(|z| z.norm_squared()).collect();
    let mut starts = Vec::new();

    // Start 1: classical scatter (identity in whitened coordinates).
    starts.push(smallest_h(&norms, h));

    // Start 2: spatial-sign covariance.
    let mut sign_cov = Mat12::zeros();
    for z in whitened {
        let ns = z.norm_squared();
        if ns > 0.0 {
            sign_cov.syger(1.0 / ns, z, z, 1.0);
        }
    }
    sign_cov /= n as f64;
    if let Some(chol) = Cholesky::new(sign_cov) {
        let d2 = mahalanobis_sq(whitened, &Vec12::zeros(), &chol);
        starts.push(smallest_h(&d2, h));
    }

    // Starts 3 and 4: scatter of the points of smallest whitened norm,
    // at two subset sizes.
    for frac_h in [h, n.div_ceil(2)] {
        let core = smallest_h(&norms, frac_h);
        let mean = mean_of(whitened, &core);
        let cov = cov_of(whitened, &core, &mean);
        if let Some(chol) = Cholesky::new(cov) {
            let d2 = mahalanobis_sq(whitened, &mean, &chol);
            starts.push(smallest_h(&d2, h));
        }
    }
    starts
}

/// Trims approximately a fraction `f` of multivariate outliers.
///
/// Deterministic for a fixed input order; the best (smallest) converged
/// determinant among the starts wins, ties broken by start index.
pub fn trim_outliers(records: &[CollocationRecord], f: f64) -> Result<TrimResult, RobustError> {
    if !(f > 0.0 && f < 0.5) {
        return Err(RobustError::BadTrimFraction(f));
    }
    let n = records.len();
    let need = 3 * DIM;
    if n < need {
        return Err(RobustError::TooFewRecords { need, got: n });
    }
    let h = ((1.0 - f) * n as f64).ceil() as usize;

    let points: Vec<Vec12> = records
        .iter()
        .map(|r| Vec12::from_column_slice(&r.as_vector()))
        .collect();

    let all: Vec<usize> = (0..n).collect();
    let mean = mean_of(&points, &all);
    let cov = cov_of(&points, &all, &mean);
    let chol = Cholesky::new(cov).ok_or(RobustError::SingularCovariance)?;

    // Whiten: z = L^{-1}(x - mean). An affine map of the input becomes an
    // orthogonal map of z, so norm- and sign-based starts stay equivariant.
    let l_inv = chol
        .l()
        .solve_lower_triangular(&Mat12::identity())
        .ok_or(RobustError::SingularCovariance)?;
    let whitened: Vec<Vec12> = points.iter().map(|p| l_inv * (p - mean)).collect();

    let mut best: Option<SubsetFit> = None;
    for start in initial_subsets(&whitened, h) {
        if let Some(fit) = c_steps(&whitened, start, h) {
            let better = match &best {
                Some(b) => fit.log_det < b.log_det,
                None => true,
            };
            if better {
                best = Some(fit);
            }
        }
    }
    let best = best.ok_or(RobustError::SingularCovariance)?;

    let kept_set: std::collections::HashSet<usize> = best.kept.iter().copied().collect();
    let flagged: Vec<usize> = (0..n).filter(|i| !kept_set.contains(i)).collect();
    Ok(TrimResult {
        kept: best.kept,
        flagged,
        h,
        det_history: best.det_history,
    })
}
