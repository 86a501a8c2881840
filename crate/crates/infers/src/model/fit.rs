//! The end-to-end estimation pipeline for one collocation subset:
//! trim -> moments -> variance match -> residual curves -> solution ->
//! diagnostics.

use thiserror::Error;

use super::{
    choose_solution, diagnostics, residual_curves, FitDiagnostics, InfersParams, ModelError,
    ResidualCurves,
};
use crate::moments::{compute_moments, MomentSet, MomentsError};
use crate::record::CollocationRecord;
use crate::reference::{variance_match, ReferenceError};
use crate::robust::{trim_outliers, RobustError, TrimResult};

/// Hard floor on the post-trim subset size.
pub const MIN_SUBSET: usize = 100;
/// Recommended subset size; a warning is raised below it.
pub const RECOMMENDED_SUBSET: usize = 500;

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub trim_fraction: f64,
    pub grid_size: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            trim_fraction: 0.10,
            grid_size: 2000,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("subset too small: {got} records after trimming (floor {floor})")]
    SubsetTooSmall { got: usize, floor: usize },
    #[error(transparent)]
    Moments(#[from] MomentsError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Robust(#[from] RobustError),
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub params: InfersParams,
    pub curves: ResidualCurves,
    pub diagnostics: Option<FitDiagnostics>,
    pub trim: Option<TrimResult>,
    pub moments: MomentSet,
    pub beta_n: f64,
    pub warnings: Vec<String>,
}

/// Fits the full model to one subset of records.
///
/// Deterministic for fixed inputs and options. A singular covariance during
/// trimming falls back to no trimming with a warning; diagnostics are
/// omitted (with a warning) when the chosen solution is infeasible.
pub fn fit(records: &[CollocationRecord], options: &FitOptions) -> Result<FitOutput, FitError> {
    let mut warnings = Vec::new();

    let (kept_records, trim) = match trim_outliers(records, options.trim_fraction) {
        Ok(t) => {
            let kept: Vec<CollocationRecord> = t.kept.iter().map(|&i| records[i]).collect();
            (kept, Some(t))
        }
        Err(RobustError::SingularCovariance) => {
            warnings.push("singular covariance during trimming; no records flagged".into());
            (records.to_vec(), None)
        }
        Err(e) => return Err(e.into()),
    };

    if kept_records.len() < MIN_SUBSET {
        return Err(FitError::SubsetTooSmall {
            got: kept_records.len(),
            floor: MIN_SUBSET,
        });
    }
    if kept_records.len() < RECOMMENDED_SUBSET {
        warnings.push(format!(
            "subset has {} records after trimming; at least {} are recommended",
            kept_records.len(),
            RECOMMENDED_SUBSET
        ));
    }

    let moments = compute_moments(&kept_records)?;
    let beta_n = variance_match(&moments)?;
    let mut curves = residual_curves(&moments, beta_n, options.grid_size)?;
    let (chosen, params) = choose_solution(&mut curves, &moments, beta_n)?;

    let diag = match diagnostics(&params, &moments) {
        Ok(d) => {
            if d.envelope_warning {
                warnings.push(format!(
                    "lagged-sample correlation envelope below {}: min u {:.3}, v {:.3}",
                    super::ENVELOPE_CORR_FLOOR,
                    d.min_envelope_corr_u,
                    d.min_envelope_corr_v
                ));
            }
            Some(d)
        }
        Err(_) => {
            warnings.push("chosen solution infeasible; diagnostics omitted".into());
            None
        }
    };

    // A solution pinned to the feasibility boundary implies at least one
    // variance retrieval is approximately zero.
    if let Some(target) = curves.target {
        if (chosen - target).abs() > f64::EPSILON * target.abs().max(1.0) {
            warnings.push("solution projected onto the feasibility boundary".into());
        }
    }

    Ok(FitOutput {
        params,
        curves,
        diagnostics: diag,
        trim,
        moments,
        beta_n,
        warnings,
    })
}
