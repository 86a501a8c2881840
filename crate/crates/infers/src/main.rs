//! Command-line surface: `simulate`, `fit`, and `sweep`. Every run writes
//! its data outputs plus a JSON run report listing configuration, seed,
//! timings, warnings, and an output manifest.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use infers::cohort::{self, SubsetSpec, SweepItemError};
use infers::model::{self, FitError, FitOptions, FitOutput, ModelError, ResidualCurves};
use infers::record::CollocationRecord;
use infers::report::{write_atomic, RunReport};
use infers::simulator::{self, SimulationConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NO_MINIMA: u8 = 4;
const EXIT_NO_FEASIBLE: u8 = 5;

#[derive(Parser)]
#[command(name = "infers", version, about = "Shared-truth error model estimation for collocated velocity datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic collocation records from a JSON model config.
    Simulate {
        /// JSON file mirroring the SimulationConfig field names.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's record count.
        #[arg(long)]
        n: Option<usize>,
        /// Output CSV path; a run report is written alongside.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the full model to one collocation CSV.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        /// Fraction of records flagged as multivariate outliers.
        #[arg(long, default_value_t = 0.10)]
        trim: f64,
        /// Candidate-variance grid size (floor 100).
        #[arg(long, default_value_t = 2000)]
        grid: usize,
        #[arg(long)]
        params_out: PathBuf,
        #[arg(long)]
        curves_out: PathBuf,
    },
    /// Fit the model independently over many subsets.
    Sweep {
        #[arg(long = "in")]
        input: PathBuf,
        /// Subset family: `days` (day-of-year) or `speeds` (speed bins).
        #[arg(long)]
        mode: String,
        /// Minimum latitude for days mode, degrees north.
        #[arg(long, default_value_t = 15.0)]
        lat_min: f64,
        /// Target speeds for speeds mode as start:end:step (m/s, inclusive).
        #[arg(long, default_value = "0.1:1.1:0.01")]
        targets: String,
        /// Records per speed bin.
        #[arg(long, default_value_t = 500)]
        k: usize,
        #[arg(long, default_value_t = 0.10)]
        trim: f64,
        #[arg(long, default_value_t = 2000)]
        grid: usize,
        /// Worker threads (default: machine parallelism).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory for summary.csv, exp_fit.csv, report.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Simulate {
            config,
            seed,
            n,
            out,
        } => cmd_simulate(&config, seed, n, &out),
        Command::Fit {
            input,
            trim,
            grid,
            params_out,
            curves_out,
        } => cmd_fit(&input, trim, grid, &params_out, &curves_out),
        Command::Sweep {
            input,
            mode,
            lat_min,
            targets,
            k,
            trim,
            grid,
            workers,
            out,
        } => cmd_sweep(&input, &mode, lat_min, &targets, k, trim, grid, workers, &out),
    }
}

fn report_path_for(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.report.json"))
}

fn cmd_simulate(config: &Path, seed: Option<u64>, n: Option<usize>, out: &Path) -> ExitCode {
    let body = match std::fs::read_to_string(config) {
        Ok(b) => b,
        Err(e) => return fail(EXIT_IO, format!("{}: {e}", config.display())),
    };
    let mut cfg: SimulationConfig = match serde_json::from_str(&body) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, format!("config: {e}")),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = n {
        cfg.n = n;
    }
    if let Err(msg) = cfg.validate() {
        return fail(EXIT_USAGE, format!("config: {msg}"));
    }

    let mut report = RunReport::new("simulate", serde_json::to_value(&cfg).unwrap());
    report.seed = Some(cfg.seed);
    report.rng = Some(simulator::RNG_NAME.to_string());
    report.chunk_size = Some(simulator::CHUNK_SIZE);

    let records = report.stage("generate", || simulator::simulate(&cfg));
    let mut buf = Vec::new();
    if let Err(e) = report.stage("serialize", || cohort::write_csv(&records, &mut buf)) {
        return fail(EXIT_IO, e);
    }
    if let Err(e) = write_atomic(out, &buf) {
        return fail(EXIT_IO, format!("{}: {e}", out.display()));
    }
    report.record_output(out);
    if let Err(e) = report.write(&report_path_for(out)) {
        return fail(EXIT_IO, e);
    }
    ExitCode::SUCCESS
}

/// Flat, unit-annotated JSON view of a fit result.
#[derive(Serialize)]
struct ParamsDoc {
    schema_version: u32,
    units: serde_json::Value,
    n_input: usize,
    n_kept: usize,
    n_flagged: usize,
    sigma_t2: f64,
    sigma_t2_u: f64,
    sigma_t2_v: f64,
    /// (u, v) additive calibration per calibrated dataset, order N,F,E,R,S.
    alpha: [[f64; 2]; 5],
    beta: [f64; 5],
    lambda: [f64; 5],
    /// Joint error variances, order I,N,F,E,R,S.
    sigma2: [f64; 6],
    feasible: bool,
    beta_n_variance_match: f64,
    chosen_sigma_t2: Option<f64>,
    target_sigma_t2: Option<f64>,
    diagnostics: Option<serde_json::Value>,
    warnings: Vec<String>,
}

fn params_doc(out: &FitOutput, n_input: usize) -> ParamsDoc {
    let (n_kept, n_flagged) = match &out.trim {
        Some(t) => (t.kept.len(), t.flagged.len()),
        None => (n_input, 0),
    };
    let diagnostics = out.diagnostics.as_ref().map(|d| {
        let tag_names = ["i", "n", "f", "e", "r", "s"];
        let comp_names = ["u", "v"];
        let mut per = serde_json::Map::new();
        for (k, tag) in tag_names.iter().enumerate() {
            for (c, comp) in comp_names.iter().enumerate() {
                let dd = d.per_tag[k][c];
                per.insert(
                    format!("{comp}_{tag}"),
                    serde_json::json!({
                        "sigma_total": dd.sigma_total,
                        "sigma_truth": dd.sigma_truth,
                        "sigma_err_total": dd.sigma_err_total,
                        "sigma_err_indiv": dd.sigma_err_indiv,
                        "corr_truth": dd.corr_truth,
                        "snr_db": dd.snr_db,
                    }),
                );
            }
        }
        serde_json::json!({
            "per_component": per,
            "min_envelope_corr_u": d.min_envelope_corr_u,
            "min_envelope_corr_v": d.min_envelope_corr_v,
            "envelope_warning": d.envelope_warning,
        })
    });
    ParamsDoc {
        schema_version: 1,
        units: serde_json::json!({
            "sigma_t2": "m^2/s^2", "sigma_t2_u": "m^2/s^2", "sigma_t2_v": "m^2/s^2",
            "alpha": "m/s", "beta": "dimensionless", "lambda": "dimensionless",
            "sigma2": "m^2/s^2", "sigma_total": "m/s", "sigma_truth": "m/s",
            "sigma_err_total": "m/s", "sigma_err_indiv": "m/s",
            "corr_truth": "dimensionless", "snr_db": "dB",
        }),
        n_input,
        n_kept,
        n_flagged,
        sigma_t2: out.params.sigma_t2,
        sigma_t2_u: out.params.sigma_t2_u,
        sigma_t2_v: out.params.sigma_t2_v,
        alpha: std::array::from_fn(|k| [out.params.alpha[k].re, out.params.alpha[k].im]),
        beta: out.params.beta,
        lambda: out.params.lambda,
        sigma2: out.params.sigma2,
        feasible: out.params.feasible,
        beta_n_variance_match: out.beta_n,
        chosen_sigma_t2: out.curves.chosen,
        target_sigma_t2: out.curves.target,
        diagnostics,
        warnings: out.warnings.clone(),
    }
}

fn curves_csv(curves: &ResidualCurves) -> Vec<u8> {
    let mut buf = String::from("sigma_t2,res_fe,res_fr,res_fs,res_er,res_es,res_rs,feasible\n");
    for (g, &st2) in curves.grid.iter().enumerate() {
        buf.push_str(&format!("{st2}"));
        for k in 0..6 {
            buf.push_str(&format!(",{}", curves.residual[k][g]));
        }
        buf.push_str(&format!(",{}\n", curves.feasible[g]));
    }
    buf.into_bytes()
}

/// Recomputes the residual curves for diagnosis when the fit found no
/// solution (same pipeline up to the selection step).
fn curves_for_diagnosis(
    records: &[CollocationRecord],
    options: &FitOptions,
) -> Option<ResidualCurves> {
    let kept: Vec<CollocationRecord> = match infers::robust::trim_outliers(records, options.trim_fraction) {
        Ok(t) => t.kept.iter().map(|&i| records[i]).collect(),
        Err(_) => records.to_vec(),
    };
    let m = infers::moments::compute_moments(&kept).ok()?;
    let beta_n = infers::reference::variance_match(&m).ok()?;
    model::residual_curves(&m, beta_n, options.grid_size).ok()
}

fn load_records(path: &Path, report: &mut RunReport) -> Result<Vec<CollocationRecord>, ExitCode> {
    match report.stage("load", || cohort::load_csv(path)) {
        Ok(loaded) => {
            if !loaded.rejected.is_empty() {
                report.warnings.push(format!(
                    "{} rows rejected at ingest (first at line {})",
                    loaded.rejected.len(),
                    loaded.rejected[0].0
                ));
            }
            Ok(loaded.records)
        }
        Err(e) => Err(fail(EXIT_IO, format!("{}: {e}", path.display()))),
    }
}

fn cmd_fit(input: &Path, trim: f64, grid: usize, params_out: &Path, curves_out: &Path) -> ExitCode {
    if grid < 100 {
        return fail(EXIT_USAGE, "grid size must be at least 100");
    }
    if !(trim > 0.0 && trim < 0.5) {
        return fail(EXIT_USAGE, "trim fraction must lie in (0, 0.5)");
    }
    let options = FitOptions {
        trim_fraction: trim,
        grid_size: grid,
    };
    let mut report = RunReport::new(
        "fit",
        serde_json::json!({
            "in": input.display().to_string(),
            "trim": trim, "grid": grid,
        }),
    );
    let records = match load_records(input, &mut report) {
        Ok(r) => r,
        Err(code) => return code,
    };

    match report.stage("fit", || model::fit(&records, &options)) {
        Ok(out) => {
            report.warnings.extend(out.warnings.iter().cloned());
            if let Err(e) = write_atomic(curves_out, &curves_csv(&out.curves)) {
                return fail(EXIT_IO, e);
            }
            report.record_output(curves_out);
            let doc = params_doc(&out, records.len());
            if let Err(e) = write_atomic(params_out, &serde_json::to_vec_pretty(&doc).unwrap()) {
                return fail(EXIT_IO, e);
            }
            report.record_output(params_out);
            if let Err(e) = report.write(&report_path_for(params_out)) {
                return fail(EXIT_IO, e);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = match e {
                FitError::Model(ModelError::NoMinimaFound) => EXIT_NO_MINIMA,
                FitError::Model(ModelError::NoFeasibleRegion) => EXIT_NO_FEASIBLE,
                _ => EXIT_USAGE,
            };
            if code == EXIT_NO_MINIMA || code == EXIT_NO_FEASIBLE {
                // Still export the residual curves so the failure is
                // diagnosable downstream.
                if let Some(curves) = curves_for_diagnosis(&records, &options) {
                    if write_atomic(curves_out, &curves_csv(&curves)).is_ok() {
                        report.record_output(curves_out);
                    }
                }
                report.warnings.push(e.to_string());
                let _ = report.write(&report_path_for(params_out));
            }
            fail(code, e)
        }
    }
}

fn parse_targets(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err("targets must be start:end:step".into());
    }
    let vals: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|e| format!("targets: {e}")))
        .collect::<Result<_, _>>()?;
    let (start, end, step) = (vals[0], vals[1], vals[2]);
    if !(step > 0.0 && end >= start) {
        return Err("targets must satisfy end >= start and step > 0".into());
    }
    let count = ((end - start) / step).round() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

struct SweepRow {
    label: String,
    target: Option<f64>,
    status: String,
    n: usize,
    sigma_t2: Option<f64>,
    beta_n: Option<f64>,
    lambda_n: Option<f64>,
    feasible: Option<bool>,
    params: Option<([f64; 5], [f64; 5], [f64; 6])>, // beta, lambda, sigma2
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    input: &Path,
    mode: &str,
    lat_min: f64,
    targets: &str,
    k: usize,
    trim: f64,
    grid: usize,
    workers: Option<usize>,
    out_dir: &Path,
) -> ExitCode {
    if grid < 100 {
        return fail(EXIT_USAGE, "grid size must be at least 100");
    }
    if let Some(w) = workers {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .is_err()
        {
            // Pool already initialized; proceed with the existing one.
        }
    }
    let target_values = match mode {
        "speeds" => match parse_targets(targets) {
            Ok(v) => v,
            Err(e) => return fail(EXIT_USAGE, e),
        },
        "days" => Vec::new(),
        other => return fail(EXIT_USAGE, format!("unknown mode `{other}`")),
    };
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        return fail(EXIT_IO, format!("{}: {e}", out_dir.display()));
    }

    let mut report = RunReport::new(
        "sweep",
        serde_json::json!({
            "in": input.display().to_string(), "mode": mode, "lat_min": lat_min,
            "targets": targets, "k": k, "trim": trim, "grid": grid,
        }),
    );
    let records = match load_records(input, &mut report) {
        Ok(r) => r,
        Err(code) => return code,
    };

    let specs: Vec<SubsetSpec> = match mode {
        "days" => (1..=366)
            .map(|day| SubsetSpec::DayOfYear { day, lat_min })
            .collect(),
        _ => target_values
            .iter()
            .map(|&target| SubsetSpec::SpeedBin { target, k })
            .collect(),
    };

    let options = FitOptions {
        trim_fraction: trim,
        grid_size: grid,
    };
    let results = report.stage("sweep", || cohort::sweep(&records, &specs, &options));

    let rows: Vec<SweepRow> = results
        .iter()
        .map(|(spec, res)| {
            let target = match spec {
                SubsetSpec::SpeedBin { target, .. } => Some(*target),
                _ => None,
            };
            match res {
                Ok(out) => SweepRow {
                    label: spec.to_string(),
                    target,
                    status: "ok".into(),
                    n: out.moments.n,
                    sigma_t2: Some(out.params.sigma_t2),
                    beta_n: Some(out.params.beta[0]),
                    lambda_n: Some(out.params.lambda[0]),
                    feasible: Some(out.params.feasible),
                    params: Some((out.params.beta, out.params.lambda, out.params.sigma2)),
                },
                Err(e) => SweepRow {
                    label: spec.to_string(),
                    target,
                    status: match e {
                        SweepItemError::Fit(FitError::Model(ModelError::NoMinimaFound)) => {
                            "no-minima".into()
                        }
                        SweepItemError::Fit(FitError::Model(ModelError::NoFeasibleRegion)) => {
                            "no-feasible-region".into()
                        }
                        SweepItemError::Fit(FitError::SubsetTooSmall { .. })
                        | SweepItemError::Fit(FitError::Robust(
                            infers::robust::RobustError::TooFewRecords { .. },
                        ))
                        | SweepItemError::Fit(FitError::Moments(
                            infers::moments::MomentsError::EmptySubset(_),
                        ))
                        | SweepItemError::Select(_) => "subset-too-small".into(),
                        other => format!("error: {other}"),
                    },
                    n: 0,
                    sigma_t2: None,
                    beta_n: None,
                    lambda_n: None,
                    feasible: None,
                    params: None,
                },
            }
        })
        .collect();

    let ok_count = rows.iter().filter(|r| r.status == "ok").count();

    // Smoothed companion columns, window 5, skipping failed subsets.
    let smooth = |f: fn(&SweepRow) -> Option<f64>| {
        let series: Vec<Option<f64>> = rows.iter().map(f).collect();
        cohort::running_mean(&series, 5)
    };
    let sigma_smooth = smooth(|r| r.sigma_t2);
    let beta_smooth = smooth(|r| r.beta_n);
    let lambda_smooth = smooth(|r| r.lambda_n);

    let summary_path = out_dir.join("summary.csv");
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "subset".to_string(),
        "target_speed".into(),
        "status".into(),
        "n".into(),
        "sigma_t2".into(),
        "beta_n".into(),
        "lambda_n".into(),
        "feasible".into(),
    ];
    for name in ["beta", "lambda"] {
        for tag in ["n", "f", "e", "r", "s"] {
            header.push(format!("{name}_{tag}_full"));
        }
    }
    for tag in ["i", "n", "f", "e", "r", "s"] {
        header.push(format!("sigma2_{tag}"));
    }
    header.extend(
        ["sigma_t2_smooth5", "beta_n_smooth5", "lambda_n_smooth5"]
            .map(str::to_string),
    );
    wtr.write_record(&header).unwrap();
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (i, r) in rows.iter().enumerate() {
        let mut rec = vec![
            r.label.clone(),
            opt(r.target),
            r.status.clone(),
            r.n.to_string(),
            opt(r.sigma_t2),
            opt(r.beta_n),
            opt(r.lambda_n),
            r.feasible.map(|b| b.to_string()).unwrap_or_default(),
        ];
        match &r.params {
            Some((beta, lambda, sigma2)) => {
                rec.extend(beta.iter().map(|v| v.to_string()));
                rec.extend(lambda.iter().map(|v| v.to_string()));
                rec.extend(sigma2.iter().map(|v| v.to_string()));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 16)),
        }
        rec.push(opt(sigma_smooth[i]));
        rec.push(opt(beta_smooth[i]));
        rec.push(opt(lambda_smooth[i]));
        wtr.write_record(&rec).unwrap();
    }
    if let Err(e) = write_atomic(&summary_path, &wtr.into_inner().unwrap()) {
        return fail(EXIT_IO, e);
    }
    report.record_output(&summary_path);

    // Speeds mode: exponential trend coefficients per parameter column.
    if mode == "speeds" && ok_count >= 4 {
        let mut buf = String::from("column,a,b,c,residual_ss,ill_conditioned\n");
        let columns: [(&str, fn(&SweepRow) -> Option<f64>, f64); 3] = [
            // The slope trend ignores the slow-speed targets where
            // calibration is unstable.
            ("sigma_t2", |r| r.sigma_t2, 0.0),
            ("beta_n", |r| r.beta_n, 0.3),
            ("lambda_n", |r| r.lambda_n, 0.0),
        ];
        for (name, getter, min_target) in columns {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for r in &rows {
                if let (Some(t), Some(y)) = (r.target, getter(r)) {
                    if t >= min_target {
                        xs.push(t);
                        ys.push(y);
                    }
                }
            }
            if let Ok(fit) = cohort::exp_fit(&xs, &ys) {
                buf.push_str(&format!(
                    "{name},{},{},{},{},{}\n",
                    fit.a, fit.b, fit.c, fit.residual_ss, fit.ill_conditioned
                ));
            }
        }
        let path = out_dir.join("exp_fit.csv");
        if let Err(e) = write_atomic(&path, buf.as_bytes()) {
            return fail(EXIT_IO, e);
        }
        report.record_output(&path);
    }

    if let Err(e) = report.write(&out_dir.join("report.json")) {
        return fail(EXIT_IO, e);
    }
    if ok_count == 0 {
        return fail(EXIT_NO_MINIMA, "no subset produced a solution");
    }
    ExitCode::SUCCESS
}
