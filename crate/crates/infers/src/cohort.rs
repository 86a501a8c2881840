//! Ingestion of collocation CSVs and construction of analysis subsets
//! (even/odd years, day-of-year, speed bins), plus the small curve
//! utilities used when summarizing parameter sweeps.

use std::fmt;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Datelike, Utc};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{fit, FitError, FitOptions, FitOutput};
use crate::record::CollocationRecord;
use crate::tag::TAGS;

/// Exact CSV header, order fixed.
pub const CSV_HEADER: &str = "time,lat,lon,u_i,v_i,u_n,v_n,u_f,v_f,u_e,v_e,u_r,v_r,u_s,v_s";

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("missing or misordered column; expected header `{CSV_HEADER}`")]
    MissingColumn,
    #[error("parse error at line {0}: {1}")]
    ParseError(usize, String),
    #[error("file has no data rows")]
    EmptyFile,
    #[error("subset too small: {got} candidates for k = {want}")]
    SubsetTooSmall { got: usize, want: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Loaded records plus the rows rejected at ingest.
#[derive(Debug)]
pub struct LoadResult {
    pub records: Vec<CollocationRecord>,
    /// (1-based line number, reason) per rejected row.
    pub rejected: Vec<(usize, String)>,
}

fn datetime(rec: &CollocationRecord) -> DateTime<Utc> {
    let secs = rec.time.floor() as i64;
    let nanos = ((rec.time - secs as f64) * 1e9).round() as u32;
    DateTime::from_timestamp(secs, nanos).unwrap_or_else(|| DateTime::from_timestamp(0, 0).unwrap())
}

/// Reads the documented CSV schema; rows violating the record invariants
/// are rejected with their line numbers, rows that do not parse are a
/// hard error.
pub fn load_csv(path: &Path) -> Result<LoadResult, CohortError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CohortError::Io(std::io::Error::other(e.to_string())),
            _ => CohortError::ParseError(0, e.to_string()),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CohortError::ParseError(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != CSV_HEADER {
        return Err(CohortError::MissingColumn);
    }

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let row = row.map_err(|e| CohortError::ParseError(line, e.to_string()))?;
        if row.len() != 15 {
            return Err(CohortError::ParseError(line, "wrong field count".into()));
        }
        let time = DateTime::parse_from_rfc3339(&row[0])
            .map_err(|e| CohortError::ParseError(line, format!("time: {e}")))?
            .with_timezone(&Utc);
        let mut vals = [0.0f64; 14];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = row[k + 1]
                .parse()
                .map_err(|e| CohortError::ParseError(line, format!("field {}: {e}", k + 1)))?;
        }
        let rec = CollocationRecord {
            time: time.timestamp() as f64 + time.timestamp_subsec_nanos() as f64 * 1e-9,
            lat: vals[0],
            lon: vals[1],
            vel: std::array::from_fn(|k| (vals[2 + 2 * k], vals[3 + 2 * k])),
        };
        if rec.is_valid() {
            records.push(rec);
        } else {
            rejected.push((line, "record invariant violated".into()));
        }
    }
    if records.is_empty() && rejected.is_empty() {
        return Err(CohortError::EmptyFile);
    }
    Ok(LoadResult { records, rejected })
}

/// Writes records in the documented schema. Velocities use the shortest
/// decimal representation that round-trips the binary value exactly.
pub fn write_csv<W: Write>(records: &[CollocationRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        let ts = datetime(r).to_rfc3339_opts(chrono::SecondsFormat::Micros, true);
        write!(out, "{ts},{},{}", r.lat, r.lon)?;
        for &(u, v) in &r.vel {
            write!(out, ",{u},{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// One analysis subset of the collocation archive.
#[derive(Debug, Clone, PartialEq)]
pub enum SubsetSpec {
    EvenYears,
    OddYears,
    /// UTC day-of-year (1..=366) restricted to latitudes >= lat_min.
    DayOfYear { day: u32, lat_min: f64 },
    /// The k records whose drifter speed is nearest to the target (m/s),
    /// ties broken by record order.
    SpeedBin { target: f64, k: usize },
}

impl fmt::Display for SubsetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetSpec::EvenYears => write!(f, "even-years"),
            SubsetSpec::OddYears => write!(f, "odd-years"),
            SubsetSpec::DayOfYear { day, lat_min } => write!(f, "day-{day}-lat{lat_min}"),
            SubsetSpec::SpeedBin { target, k } => write!(f, "speed-{target:.3}-k{k}"),
        }
    }
}

/// Selects the records matching a subset spec, preserving input order.
pub fn select(
    records: &[CollocationRecord],
    spec: &SubsetSpec,
) -> Result<Vec<CollocationRecord>, CohortError> {
    match spec {
        SubsetSpec::EvenYears | SubsetSpec::OddYears => {
            let want_even = matches!(spec, SubsetSpec::EvenYears);
            Ok(records
                .iter()
                .filter(|r| (datetime(r).year() % 2 == 0) == want_even)
                .copied()
                .collect())
        }
        SubsetSpec::DayOfYear { day, lat_min } => Ok(records
            .iter()
            .filter(|r| r.lat >= *lat_min && datetime(r).ordinal() == *day)
            .copied()
            .collect()),
        SubsetSpec::SpeedBin { target, k } => {
            if records.len() < *k {
                return Err(CohortError::SubsetTooSmall {
                    got: records.len(),
                    want: *k,
                });
            }
            let mut order: Vec<usize> = (0..records.len()).collect();
            order.sort_by(|&a, &b| {
                let da = (records[a].speed() - target).abs();
                let db = (records[b].speed() - target).abs();
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            });
            let mut idx: Vec<usize> = order[..*k].to_vec();
            idx.sort_unstable();
            Ok(idx.into_iter().map(|i| records[i]).collect())
        }
    }
}

#[derive(Debug, Error)]
pub enum SweepItemError {
    #[error(transparent)]
    Select(CohortError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Independent fits over many subsets; failures are recorded per subset
/// and never abort the sweep. Subsets run in parallel but the output
/// order follows the spec order.
pub fn sweep(
    records: &[CollocationRecord],
    specs: &[SubsetSpec],
    options: &FitOptions,
) -> Vec<(SubsetSpec, Result<FitOutput, SweepItemError>)> {
    specs
        .par_iter()
        .map(|spec| {
            let result = select(records, spec)
                .map_err(SweepItemError::Select)
                .and_then(|subset| fit(&subset, options).map_err(SweepItemError::Fit));
            (spec.clone(), result)
        })
        .collect()
}

/// Centered moving average with truncated end windows; missing entries
/// are skipped with renormalization. Preserves series length.
pub fn running_mean(series: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    assert!(window >= 1 && window % 2 == 1, "window must be odd and >= 1");
    let half = window / 2;
    (0..series.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(series.len());
            let present: Vec<f64> = series[lo..hi].iter().flatten().copied().collect();
            if present.is_empty() {
                None
            } else {
                Some(present.iter().sum::<f64>() / present.len() as f64)
            }
        })
        .collect()
}

/// Result of the exponential fit y(x) = a + b e^(c x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Residual sum of squares of the final linear stage.
    pub residual_ss: f64,
    /// Set when the decay rate is indeterminate (near-constant data); the
    /// fit falls back to a = mean(y), b = 0.
    pub ill_conditioned: bool,
}

fn solve_2x2(m: [[f64; 2]; 2], rhs: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m[0][0].abs().max(m[1][1].abs()).max(m[0][1].abs());
    if det.abs() < 1e-12 * scale.max(f64::MIN_POSITIVE).powi(2).max(f64::MIN_POSITIVE) {
        return None;
    }
    Some([
        (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det,
        (m[0][0] * rhs[1] - rhs[0] * m[1][0]) / det,
    ])
}

/// Non-iterative two-stage fit of y(x) = a + b e^(c x): the decay rate c
/// comes from linearizing the integral equation, then (a, b) from linear
/// least squares on (1, e^(c x)).
pub fn exp_fit(x: &[f64], y: &[f64]) -> Result<ExpFit, CohortError> {
    if x.len() < 4 || x.len() != y.len() {
        return Err(CohortError::SubsetTooSmall {
            got: x.len(),
            want: 4,
        });
    }
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CohortError::ParseError(0, "x must be strictly increasing".into()));
    }
    let n = x.len();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let var_y = y.iter().map(|v| (v - mean_y).powi(2)).sum::<f64>() / n as f64;
    let flagged = ExpFit {
        a: mean_y,
        b: 0.0,
        c: 0.0,
        residual_ss: var_y * n as f64,
        ill_conditioned: true,
    };
    let y_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    if var_y.sqrt() < 1e-9 * y_scale {
        return Ok(flagged);
    }

    // Stage 1: cumulative integral S of y, then least squares of
    // (y - y0) on (x - x0, S); the S coefficient is c.
    let mut s = vec![0.0; n];
    for k in 1..n {
        s[k] = s[k - 1] + 0.5 * (y[k] + y[k - 1]) * (x[k] - x[k - 1]);
    }
    let mut m = [[0.0; 2]; 2];
    let mut rhs = [0.0; 2];
    for k in 0..n {
        let dx = x[k] - x[0];
        let dy = y[k] - y[0];
        m[0][0] += dx * dx;
        m[0][1] += dx * s[k];
        m[1][1] += s[k] * s[k];
        rhs[0] += dx * dy;
        rhs[1] += s[k] * dy;
    }
    m[1][0] = m[0][1];
    let c = match solve_2x2(m, rhs) {
        Some([_, c]) => c,
        None => return Ok(flagged),
    };
    let span = x[n - 1] - x[0];
    if !c.is_finite() || (c * span).abs() < 1e-8 {
        return Ok(flagged);
    }

    // Stage 2: for a fixed rate, (a, b) are linear; returns the best
    // (a, b) and the residual sum of squares at that rate.
    let linear_stage = |c: f64| -> Option<(f64, f64, f64)> {
        let e: Vec<f64> = x.iter().map(|&v| (c * v).exp()).collect();
        let mut m2 = [[0.0; 2]; 2];
        let mut r2 = [0.0; 2];
        for k in 0..n {
            m2[0][0] += 1.0;
            m2[0][1] += e[k];
            m2[1][1] += e[k] * e[k];
            r2[0] += y[k];
            r2[1] += e[k] * y[k];
        }
        m2[1][0] = m2[0][1];
        let [a, b] = solve_2x2(m2, r2)?;
        let ss = (0..n).map(|k| (y[k] - a - b * e[k]).powi(2)).sum();
        Some((a, b, ss))
    };

    // The integral estimate carries the trapezoid discretization error, so
    // polish the rate by golden-section search on the projected residual in
    // a window around it (deterministic, fixed iteration count).
    let width = 0.5 * c.abs();
    let (mut lo, mut hi) = (c - width, c + width);
    let ss_at = |c: f64| linear_stage(c).map(|(_, _, ss)| ss).unwrap_or(f64::INFINITY);
    const PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - PHI * (hi - lo);
    let mut x2 = lo + PHI * (hi - lo);
    let (mut f1, mut f2) = (ss_at(x1), ss_at(x2));
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - PHI * (hi - lo);
            f1 = ss_at(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + PHI * (hi - lo);
            f2 = ss_at(x2);
        }
        if (hi - lo).abs() < 1e-14 * c.abs() {
            break;
        }
    }
    let c = 0.5 * (lo + hi);

    let (a, b, residual_ss) = match linear_stage(c) {
        Some(v) => v,
        None => return Ok(flagged),
    };
    Ok(ExpFit {
        a,
        b,
        c,
        residual_ss,
        ill_conditioned: false,
    })
}

pub fn tag_column_names() -> Vec<String> {
    TAGS.iter()
        .flat_map(|t| {
            let t = t.to_string().to_lowercase();
            [format!("u_{t}"), format!("v_{t}")]
        })
        .collect()
}
