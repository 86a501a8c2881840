//! Per-dataset, per-component diagnostic statistics: truth and error
//! standard deviations, correlation with truth, and signal-to-noise ratio.

use super::{InfersParams, ModelError};
use crate::moments::{Component, MomentSet};
use crate::tag::{Tag, CALIBRATED, TAGS};

/// Soft lower bound on the correlation between lagged analysis samples;
/// below it the lagged instruments are suspect and a warning is raised.
pub const ENVELOPE_CORR_FLOOR: f64 = 0.7;

/// SNR values are capped at +/- this many dB so infinities are never
/// serialized.
pub const SNR_CAP_DB: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentDiag {
    pub sigma_total: f64,
    pub sigma_truth: f64,
    pub sigma_err_total: f64,
    pub sigma_err_indiv: f64,
    pub corr_truth: f64,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    /// Indexed by `[tag][component]` with component 0 = u (zonal),
    /// 1 = v (meridional); tag order I, N, F, E, R, S.
    pub per_tag: [[ComponentDiag; 2]; 6],
    pub min_envelope_corr_u: f64,
    pub min_envelope_corr_v: f64,
    pub envelope_warning: bool,
}

fn snr_db(signal_var: f64, err_var: f64) -> f64 {
    if signal_var <= 0.0 {
        return -SNR_CAP_DB;
    }
    if err_var <= 0.0 {
        return SNR_CAP_DB;
    }
    (10.0 * (signal_var / err_var).log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB)
}

/// Splits a joint error variance between components in proportion to the
/// per-component residuals (clamped at zero); an even split when both
/// residuals vanish. The joint sum is preserved.
fn split(joint: f64, residual_u: f64, residual_v: f64) -> [f64; 2] {
    let ru = residual_u.max(0.0);
    let rv = residual_v.max(0.0);
    if ru + rv > 0.0 {
        [joint * ru / (ru + rv), joint * rv / (ru + rv)]
    } else {
        [joint / 2.0, joint / 2.0]
    }
}

/// Per-component error variances for all six datasets, apportioned from
/// the joint retrievals by the residual rule, in propagation order.
fn component_error_variances(p: &InfersParams, m: &MomentSet) -> [[f64; 2]; 6] {
    let var = |tag: Tag, c: usize| {
        let mm = if c == 0 { &m.cov_u } else { &m.cov_v };
        mm[tag.index()][tag.index()]
    };
    let st = [p.sigma_t2_u.max(0.0), p.sigma_t2_v.max(0.0)];
    let [ln, lf, le, lr, ls] = p.lambda;

    let mut out = [[0.0; 2]; 6];
    out[0] = split(
        p.sigma2[0],
        var(Tag::I, 0) - st[0],
        var(Tag::I, 1) - st[1],
    );

    let bn = p.beta[0];
    let rn = |c: usize| var(Tag::N, c) - bn * bn * st[c] - ln * ln * out[0][c];
    out[1] = split(p.sigma2[1], rn(0), rn(1));

    // Propagated shared base per component: what F and R inherit from N.
    let s = |out: &[[f64; 2]; 6], c: usize| ln * ln * out[0][c] + out[1][c];

    let bf = p.beta[1];
    let rf = |c: usize| var(Tag::F, c) - bf * bf * st[c] - lf * lf * s(&out, c);
    out[2] = split(p.sigma2[2], rf(0), rf(1));

    let br = p.beta[3];
    let rr = |c: usize| var(Tag::R, c) - br * br * st[c] - lr * lr * s(&out, c);
    out[4] = split(p.sigma2[4], rr(0), rr(1));

    let be = p.beta[2];
    let base_e = |c: usize| lf * lf * s(&out, c) + out[2][c];
    let re = |c: usize| var(Tag::E, c) - be * be * st[c] - le * le * base_e(c);
    out[3] = split(p.sigma2[3], re(0), re(1));

    let bs = p.beta[4];
    let base_s = |c: usize| lr * lr * s(&out, c) + out[4][c];
    let rs = |c: usize| var(Tag::S, c) - bs * bs * st[c] - ls * ls * base_s(c);
    out[5] = split(p.sigma2[5], rs(0), rs(1));

    out
}

/// Diagnostic statistics for a feasible parameter set.
pub fn diagnostics(p: &InfersParams, m: &MomentSet) -> Result<FitDiagnostics, ModelError> {
    if !p.feasible {
        return Err(ModelError::InfeasibleParams);
    }
    let err_var = component_error_variances(p, m);
    let st = [p.sigma_t2_u.max(0.0), p.sigma_t2_v.max(0.0)];
    let [ln, lf, le, lr, ls] = p.lambda;

    let mut per_tag = [[ComponentDiag {
        sigma_total: 0.0,
        sigma_truth: 0.0,
        sigma_err_total: 0.0,
        sigma_err_indiv: 0.0,
        corr_truth: 0.0,
        snr_db: 0.0,
    }; 2]; 6];

    for c in 0..2 {
        let shared_base = ln * ln * err_var[0][c] + err_var[1][c];
        for (k, &tag) in TAGS.iter().enumerate() {
            let beta = p.beta_of(tag);
            let mm = if c == 0 { &m.cov_u } else { &m.cov_v };
            let sigma_total = mm[tag.index()][tag.index()].max(0.0).sqrt();
            // Model-implied total and individual error variance per tag.
            let (err_total_var, err_indiv_var) = match tag {
                Tag::I => (err_var[0][c], (1.0 - ln) * err_var[0][c]),
                Tag::N => (shared_base, err_var[1][c]),
                Tag::F => (lf * lf * shared_base + err_var[2][c], err_var[2][c]),
                Tag::E => (
                    le * le * (lf * lf * shared_base + err_var[2][c]) + err_var[3][c],
                    err_var[3][c],
                ),
                Tag::R => (lr * lr * shared_base + err_var[4][c], err_var[4][c]),
                Tag::S => (
                    ls * ls * (lr * lr * shared_base + err_var[4][c]) + err_var[5][c],
                    err_var[5][c],
                ),
            };
            let signal_var = beta * beta * st[c];
            per_tag[k][c] = ComponentDiag {
                sigma_total,
                sigma_truth: st[c].sqrt(),
                sigma_err_total: err_total_var.max(0.0).sqrt(),
                sigma_err_indiv: err_indiv_var.max(0.0).sqrt(),
                corr_truth: if sigma_total > 0.0 {
                    beta * st[c].sqrt() / sigma_total
                } else {
                    0.0
                },
                snr_db: snr_db(signal_var, err_total_var),
            };
        }
    }

    // Autocorrelation envelope: minimum pairwise correlation among the
    // five analysis samples, per component.
    let min_corr = |comp: Component| {
        let mut min = f64::INFINITY;
        for (i, &a) in CALIBRATED.iter().enumerate() {
            for &b in &CALIBRATED[i + 1..] {
                if let Ok(r) = m.correlation(a, b, comp) {
                    min = min.min(r);
                }
            }
        }
        min
    };
    let min_u = min_corr(Component::U);
    let min_v = min_corr(Component::V);

    Ok(FitDiagnostics {
        per_tag,
        min_envelope_corr_u: min_u,
        min_envelope_corr_v: min_v,
        envelope_warning: min_u < ENVELOPE_CORR_FLOOR || min_v < ENVELOPE_CORR_FLOOR,
    })
}
