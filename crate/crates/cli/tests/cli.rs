//! End-to-end tests of the `mrclab` binary: exit codes, CSV shape and
//! determinism, sidecar round-trips, and flag overrides.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

/// A small sweep config with an explicit attenuation constant, so no test
/// pays for a calibration run.
const SWEEP_CONFIG: &str = r#"{
    "antennas": 4,
    "terminals": 2,
    "rho_sweep_db": [0.0, 10.0],
    "trials": 200,
    "drops": 8,
    "seed": 9,
    "rho_constant": {"explicit": 0.001}
}"#;

fn mrclab(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mrclab"));
    cmd.args(args).current_dir(dir);
    for (key, value) in envs {
        cmd.env(key, value);
    }
    cmd.output().expect("binary launches")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).expect("config written");
    path.to_str().expect("utf-8 path").to_owned()
}

fn stdout_of(output: &Output) -> String {
    assert!(
        output.status.success(),
        "expected success, got {:?}; stderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout.clone()).expect("utf-8 stdout")
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).collect()
}

#[test]
fn sinr_sweep_emits_self_describing_csv_to_stdout() {
    let dir = tempdir().expect("tempdir");
    let config = write_config(dir.path(), SWEEP_CONFIG);
    let output = mrclab(dir.path(), &["sinr-sweep", "--config", &config], &[]);
    let csv = stdout_of(&output);

    assert!(csv.starts_with("# experiment: sinr-sweep\n"), "preamble: {csv}");
    assert!(csv.contains("# config: "), "resolved config missing");
    assert!(csv.contains("# rho_constant: 1.00000000000e-3 (explicit)"), "preamble: {csv}");
    let rows = data_lines(&csv);
    assert_eq!(
        rows[0],
        "rho_db,terminal,sinr_analytic_db,sinr_sim_db,sinr_sim_halfwidth_db,\
         sumse_analytic,sumse_sim,sumse_sim_halfwidth"
    );
    // One row per (sweep point, terminal): 2 x 2.
    assert_eq!(rows.len(), 1 + 4, "rows: {rows:?}");
}

#[test]
fn csv_output_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempdir().expect("tempdir");
    let config = write_config(dir.path(), SWEEP_CONFIG);
    let mut outputs: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for (label, envs) in [
        ("plain-1", &[][..]),
        ("plain-2", &[][..]),
        ("one-thread", &[("RAYON_NUM_THREADS", "1")][..]),
        ("four-threads", &[("RAYON_NUM_THREADS", "4")][..]),
    ] {
        let sweep = dir.path().join(format!("sweep-{label}.csv"));
        let cdf = dir.path().join(format!("cdf-{label}.csv"));
        let sweep_out = mrclab(
            dir.path(),
            &["sinr-sweep", "--config", &config, "--out", sweep.to_str().unwrap()],
            envs,
        );
        stdout_of(&sweep_out);
        let cdf_out = mrclab(
            dir.path(),
            &["sum-se-cdf", "--config", &config, "--out", cdf.to_str().unwrap()],
            envs,
        );
        stdout_of(&cdf_out);
        outputs.push((fs::read(&sweep).expect("sweep read"), fs::read(&cdf).expect("cdf read")));
    }
    for (sweep, cdf) in &outputs[1..] {
        assert_eq!(sweep, &outputs[0].0, "sweep CSV differs across runs");
        assert_eq!(cdf, &outputs[0].1, "CDF CSV differs across runs");
    }
    // Stdout and --out emit the same bytes.
    let streamed = mrclab(dir.path(), &["sinr-sweep", "--config", &config], &[]);
    assert_eq!(streamed.stdout, outputs[0].0);
}

#[test]
fn sum_se_cdf_has_one_point_per_drop_and_pipeline() {
    let dir = tempdir().expect("tempdir");
    let config = write_config(dir.path(), SWEEP_CONFIG);
    let output = mrclab(dir.path(), &["sum-se-cdf", "--config", &config], &[]);
    let csv = stdout_of(&output);

    assert!(csv.starts_with("# experiment: sum-se-cdf\n"), "preamble: {csv}");
    let rows = data_lines(&csv);
    assert_eq!(rows[0], "pipeline,sum_se_bits,cdf_level");
    let analytic = rows.iter().filter(|r| r.starts_with("analytic,")).count();
    let simulated = rows.iter().filter(|r| r.starts_with("simulated,")).count();
    // Continuous sums never tie, so the CDF keeps one point per drop.
    assert_eq!((analytic, simulated), (8, 8), "rows: {rows:?}");
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let dir = tempdir().expect("tempdir");
    let config = write_config(dir.path(), SWEEP_CONFIG);
    let base = stdout_of(&mrclab(dir.path(), &["sinr-sweep", "--config", &config], &[]));
    let reseeded = stdout_of(&mrclab(
        dir.path(),
        &["sinr-sweep", "--config", &config, "--seed", "10"],
        &[],
    ));
    assert!(reseeded.contains("\"seed\":10"), "resolved config keeps the override");
    assert_ne!(base, reseeded, "a different seed must change the data");
}

#[test]
fn invalid_inputs_exit_one() {
    let dir = tempdir().expect("tempdir");
    let cases: Vec<(String, &str)> = vec![
        (write_config(dir.path(), r#"{"trials": 50}"#), "trials"),
        (dir.path().join("missing.json").to_str().unwrap().to_owned(), "cannot read config"),
        (write_config(dir.path(), r#"{"antennas": 4, "bogus": 1}"#), "bogus"),
    ];
    for (config, needle) in &cases {
        let output = mrclab(dir.path(), &["sinr-sweep", "--config", config], &[]);
        let stderr = String::from_utf8_lossy(&output.stderr);
        assert_eq!(output.status.code(), Some(1), "config {config}: {stderr}");
        assert!(stderr.contains(needle), "stderr for {config}: {stderr}");
    }

    // Flag overrides re-validate: a degenerate drop count is rejected both
    // in experiment configs and in the calibration operating point.
    let config = write_config(dir.path(), SWEEP_CONFIG);
    let cdf = mrclab(dir.path(), &["sum-se-cdf", "--config", &config, "--drops", "1"], &[]);
    assert_eq!(cdf.status.code(), Some(1));
    let calibrate = mrclab(dir.path(), &["calibrate", "--drops", "1"], &[]);
    assert_eq!(calibrate.status.code(), Some(1));

    // Usage errors are invalid invocations, not validation failures.
    let usage = mrclab(dir.path(), &["frobnicate"], &[]);
    assert_eq!(usage.status.code(), Some(1));
    assert!(!usage.stderr.is_empty());
    let help = mrclab(dir.path(), &["--help"], &[]);
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn validate_prints_the_report_and_exits_zero() {
    let dir = tempdir().expect("tempdir");
    let config = write_config(dir.path(), r#"{"antennas": 8, "seed": 3}"#);
    let report_path = dir.path().join("report.txt");
    let output = mrclab(
        dir.path(),
        &["validate", "--config", &config, "--out", report_path.to_str().unwrap()],
        &[],
    );
    let stdout = stdout_of(&output);
    assert!(stdout.contains("overall: PASS (13/13 checks passed)"), "report: {stdout}");
    let written = fs::read_to_string(&report_path).expect("report written");
    assert_eq!(written, stdout, "--out mirrors the printed report");
}

#[test]
fn calibrate_stores_a_reusable_sidecar() {
    let dir = tempdir().expect("tempdir");
    let config = write_config(dir.path(), r#"{"seed": 5}"#);
    let args = [
        "calibrate",
        "--config",
        &config,
        "--drops",
        "300",
        "--trials",
        "5",
        "--out",
        "cal.json",
    ];
    let stdout = stdout_of(&mrclab(dir.path(), &args, &[]));
    assert!(stdout.contains("rho_constant: "), "stdout: {stdout}");
    assert!(stdout.contains(" dB)"), "stdout: {stdout}");
    assert!(stdout.contains("stored: cal.json"), "stdout: {stdout}");

    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cal.json")).expect("sidecar"))
            .expect("sidecar parses");
    assert!(sidecar["rho_constant"].as_f64().expect("rho") > 0.0);
    assert_eq!(sidecar["settings"]["drops"], 300);
    assert_eq!(sidecar["settings"]["fading_trials"], 5);
    assert_eq!(sidecar["seed"], 5);

    // Same seed: identical sidecar. New seed: a different constant.
    let first = fs::read(dir.path().join("cal.json")).expect("sidecar bytes");
    stdout_of(&mrclab(dir.path(), &args, &[]));
    assert_eq!(fs::read(dir.path().join("cal.json")).expect("rerun bytes"), first);
    let mut reseeded_args = args.to_vec();
    reseeded_args.extend(["--seed", "6"]);
    stdout_of(&mrclab(dir.path(), &reseeded_args, &[]));
    assert_ne!(fs::read(dir.path().join("cal.json")).expect("reseed bytes"), first);

    // Without --out the sidecar lands on the default path.
    let defaulted = stdout_of(&mrclab(
        dir.path(),
        &["calibrate", "--config", &config, "--drops", "300", "--trials", "5"],
        &[],
    ));
    assert!(defaulted.contains("stored: calibration.json"), "stdout: {defaulted}");
    assert!(dir.path().join("calibration.json").exists());
}
