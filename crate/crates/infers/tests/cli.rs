//! End-to-end tests of the command-line binary: exit codes, file outputs,
//! reproducibility, and sweep/standalone-fit equivalence.

use std::path::Path;
use std::process::{Command, Output};

use infers::cohort::{select, write_csv, SubsetSpec};
use infers::simulator::{simulate, SimulationConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_infers"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, cfg: &SimulationConfig) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    path
}

fn assert_manifest_complete(report_path: &Path) {
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(report_path).unwrap()).unwrap();
    for out in report["outputs"].as_array().unwrap() {
        let p = Path::new(out.as_str().unwrap());
        let meta = std::fs::metadata(p)
            .unwrap_or_else(|_| panic!("manifest entry missing: {}", p.display()));
        assert!(meta.len() > 0, "manifest entry empty: {}", p.display());
    }
}

#[test]
fn simulate_is_reproducible_and_counts_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimulationConfig::table_like(100, 7);
    let config = write_config(dir.path(), &cfg);
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    for out in [&out_a, &out_b] {
        let res = run(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b, "same config+seed must be byte-identical");
    assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 101); // header + 100
    assert_manifest_complete(&dir.path().join("a.report.json"));
}

#[test]
fn simulate_rejects_bad_config_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = SimulationConfig::table_like(10, 1);
    cfg.sigma2_v[2] = -1.0;
    let config = write_config(dir.path(), &cfg);
    let out = dir.path().join("x.csv");
    let res = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("sigma2_v[2]"), "stderr: {err}");
    assert!(!out.exists());
}

#[test]
fn fit_grid_below_floor_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&[
        "fit",
        "--in",
        "whatever.csv",
        "--grid",
        "50",
        "--params-out",
        dir.path().join("p.json").to_str().unwrap(),
        "--curves-out",
        dir.path().join("c.csv").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn fit_missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&[
        "fit",
        "--in",
        dir.path().join("nope.csv").to_str().unwrap(),
        "--params-out",
        dir.path().join("p.json").to_str().unwrap(),
        "--curves-out",
        dir.path().join("c.csv").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn fit_identity_fixture_exits_no_minima_with_curves() {
    let dir = tempfile::tempdir().unwrap();
    // All six samples identical per record: no residual minima exist.
    let records: Vec<infers::record::CollocationRecord> = (0..300)
        .map(|k| {
            let x = (k as f64 * 0.7).sin() * 0.2;
            let y = (k as f64 * 0.3).cos() * 0.2;
            infers::record::CollocationRecord {
                time: 946_684_800.0 + k as f64 * 86_400.0,
                lat: 0.0,
                lon: 0.0,
                vel: [(x, y); 6],
            }
        })
        .collect();
    let input = dir.path().join("identity.csv");
    let mut buf = Vec::new();
    write_csv(&records, &mut buf).unwrap();
    std::fs::write(&input, buf).unwrap();

    let curves = dir.path().join("curves.csv");
    let res = run(&[
        "fit",
        "--in",
        input.to_str().unwrap(),
        "--params-out",
        dir.path().join("params.json").to_str().unwrap(),
        "--curves-out",
        curves.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
    let body = std::fs::read_to_string(&curves).unwrap();
    assert!(body.starts_with("sigma_t2,res_fe,res_fr,res_fs,res_er,res_es,res_rs,feasible"));
    assert!(body.lines().count() > 100);
}

#[test]
fn fit_recovers_simulated_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimulationConfig::table_like(5000, 42);
    let input = dir.path().join("data.csv");
    let mut buf = Vec::new();
    write_csv(&simulate(&cfg), &mut buf).unwrap();
    std::fs::write(&input, buf).unwrap();

    let params_path = dir.path().join("params.json");
    let res = run(&[
        "fit",
        "--in",
        input.to_str().unwrap(),
        "--params-out",
        params_path.to_str().unwrap(),
        "--curves-out",
        dir.path().join("curves.csv").to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&params_path).unwrap()).unwrap();
    let lambda_n = doc["lambda"][0].as_f64().unwrap();
    let sigma_t2 = doc["sigma_t2"].as_f64().unwrap();
    assert!((lambda_n - cfg.lambda[0]).abs() < 0.15, "lambda_n {lambda_n}");
    assert!(
        (sigma_t2 - cfg.sigma_t2()).abs() / cfg.sigma_t2() < 0.5,
        "sigma_t2 {sigma_t2}"
    );
    assert!(doc["units"].is_object());
    assert_manifest_complete(&dir.path().join("params.report.json"));
}

#[test]
fn sweep_speeds_matches_standalone_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimulationConfig::table_like(4000, 9);
    let records = simulate(&cfg);
    let input = dir.path().join("data.csv");
    let mut buf = Vec::new();
    write_csv(&records, &mut buf).unwrap();
    std::fs::write(&input, buf).unwrap();

    let sweep_dir = dir.path().join("sweep");
    let res = run(&[
        "sweep",
        "--in",
        input.to_str().unwrap(),
        "--mode",
        "speeds",
        "--targets",
        "0.1:0.3:0.1",
        "--k",
        "600",
        "--out",
        sweep_dir.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = std::fs::read_to_string(sweep_dir.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 4); // header + 3 targets
    assert_manifest_complete(&sweep_dir.join("report.json"));

    // Standalone fit on the same subset must agree exactly.
    let spec = SubsetSpec::SpeedBin { target: 0.2, k: 600 };
    let subset = select(&records, &spec).unwrap();
    let sub_path = dir.path().join("subset.csv");
    let mut sub_buf = Vec::new();
    write_csv(&subset, &mut sub_buf).unwrap();
    std::fs::write(&sub_path, sub_buf).unwrap();
    let params_path = dir.path().join("sub_params.json");
    let res = run(&[
        "fit",
        "--in",
        sub_path.to_str().unwrap(),
        "--params-out",
        params_path.to_str().unwrap(),
        "--curves-out",
        dir.path().join("sub_curves.csv").to_str().unwrap(),
    ]);
    let header: Vec<&str> = rows[0].split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let row: Vec<&str> = rows
        .iter()
        .find(|r| r.starts_with("speed-0.200"))
        .unwrap()
        .split(',')
        .collect();
    if res.status.success() {
        let doc: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&params_path).unwrap()).unwrap();
        assert_eq!(row[col("status")], "ok");
        // The two call sites are compiled separately, so agreement is to
        // rounding (observed differences are a single ulp), not bitwise.
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1e-12);
        let sweep_st2: f64 = row[col("sigma_t2")].parse().unwrap();
        assert!(close(sweep_st2, doc["sigma_t2"].as_f64().unwrap()));
        let sweep_bn: f64 = row[col("beta_n")].parse().unwrap();
        assert!(close(sweep_bn, doc["beta"][0].as_f64().unwrap()));
    } else {
        // Both pipelines must fail identically on the same subset.
        assert_ne!(row[col("status")], "ok");
    }
}

#[test]
fn sweep_days_with_no_matching_records_exits_no_minima() {
    let dir = tempfile::tempdir().unwrap();
    // Simulated records all sit at latitude 0, below the 15 degree floor.
    let cfg = SimulationConfig::table_like(500, 3);
    let input = dir.path().join("data.csv");
    let mut buf = Vec::new();
    write_csv(&simulate(&cfg), &mut buf).unwrap();
    std::fs::write(&input, buf).unwrap();

    let sweep_dir = dir.path().join("sweep");
    let res = run(&[
        "sweep",
        "--in",
        input.to_str().unwrap(),
        "--mode",
        "days",
        "--lat-min",
        "15",
        "--out",
        sweep_dir.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(4));
    let summary = std::fs::read_to_string(sweep_dir.join("summary.csv")).unwrap();
    assert!(summary.contains("subset-too-small"));
}
