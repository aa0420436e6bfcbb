//! `mrclab` — command-line laboratory for the uplink MU-MIMO/MRC model.
//!
//! Four subcommands over one JSON experiment config:
//! - `calibrate`: pin the attenuation constant at the reference operating
//!   point, print it, and store a sidecar file for reuse,
//! - `sinr-sweep`: expected SINR vs uplink SNR on one frozen drop (CSV),
//! - `sum-se-cdf`: sum-spectral-efficiency CDF over drops (CSV),
//! - `validate`: the library's cross-check suite (report + exit code).
//!
//! CLI flags override config-file fields; outputs are self-describing
//! (CSV comment lines carry the resolved config). Exit codes: 0 success,
//! 1 invalid config or usage, 2 validation failure, 3 internal numerical
//! error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mrclab_core::experiment::{
    render_cdf_csv, render_sweep_csv, run_calibrate_with, run_sinr_sweep, run_sum_se_cdf,
    run_validate, ExperimentConfig, ValidationReport,
};
use mrclab_core::largescale::CalibrationSettings;
use mrclab_core::Error;

/// Exit code for configuration and usage errors.
const EXIT_INVALID_CONFIG: u8 = 1;
/// Exit code when the validation suite has failing checks.
const EXIT_VALIDATION_FAILURE: u8 = 2;
/// Exit code for internal numerical errors (bracketing, eigensolver, …).
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "mrclab",
    version,
    about = "Uplink multiuser MIMO/MRC laboratory: calibration, SINR sweeps, \
             sum-SE CDFs, and validation over a JSON experiment config"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the attenuation constant for the config's band and array
    /// geometry; prints it (linear and dB) and writes a JSON sidecar
    Calibrate(RunArgs),
    /// Expected-SINR sweep over the config's SNR grid on one frozen drop
    /// (CSV to --out or stdout)
    SinrSweep(RunArgs),
    /// Empirical CDF of the sum spectral efficiency over drops at the
    /// grid's first SNR point (CSV to --out or stdout)
    SumSeCdf(RunArgs),
    /// Run the cross-check suite; exits 2 if any check fails (the report
    /// is still written)
    Validate(RunArgs),
}

/// Flags shared by every subcommand. Flags override config-file fields.
#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; omitted fields take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (default: stdout for CSV, calibration.json for calibrate)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fading-trial count override
    #[arg(long)]
    trials: Option<usize>,
    /// Drop count override
    #[arg(long)]
    drops: Option<usize>,
}

/// A failed run: what to tell the user and which exit code to return.
struct Failure {
    code: u8,
    message: String,
}

/// Maps a core error onto the exit-code contract: configuration problems
/// are user errors, everything else is an internal numerical failure.
fn core_failure(e: Error) -> Failure {
    let code = match e {
        Error::InvalidConfig { .. } | Error::InvalidParameter { .. } => EXIT_INVALID_CONFIG,
        _ => EXIT_NUMERICAL,
    };
    Failure { code, message: e.to_string() }
}

fn io_failure(action: &str, path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_INVALID_CONFIG,
        message: format!("cannot {action} {}: {e}", path.display()),
    }
}

/// Loads the config file (or the defaults) and applies flag overrides.
/// `sampling_overrides` routes `--trials`/`--drops` into the config; the
/// calibrate command instead maps them onto its operating point.
fn load_config(args: &RunArgs, sampling_overrides: bool) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure("read config", path, e))?;
            ExperimentConfig::from_json(&text).map_err(core_failure)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if sampling_overrides {
        if let Some(trials) = args.trials {
            cfg.trials = Some(trials);
        }
        if let Some(drops) = args.drops {
            cfg.drops = Some(drops);
        }
    }
    cfg.validate().map_err(core_failure)?;
    Ok(cfg)
}

/// Writes CSV to `--out`, or to stdout when no path was given.
fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, content).map_err(|e| io_failure("write", path, e)),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn calibrate_cmd(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(args, false)?;
    let mut settings = CalibrationSettings::default();
    if let Some(drops) = args.drops {
        settings.drops = drops;
    }
    if let Some(trials) = args.trials {
        settings.fading_trials = trials;
    }
    let outcome = run_calibrate_with(&cfg, &settings).map_err(core_failure)?;
    println!("rho_constant: {:.11e} ({:.6} dB)", outcome.rho_constant, outcome.rho_constant_db);
    let path = args.out.clone().unwrap_or_else(|| PathBuf::from("calibration.json"));
    let doc = serde_json::to_string_pretty(&outcome).expect("outcome serialization cannot fail");
    fs::write(&path, doc + "\n").map_err(|e| io_failure("write", &path, e))?;
    println!("stored: {}", path.display());
    Ok(())
}

fn sinr_sweep_cmd(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(args, true)?;
    let output = run_sinr_sweep(&cfg).map_err(core_failure)?;
    emit(&args.out, &render_sweep_csv(&output))
}

fn sum_se_cdf_cmd(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(args, true)?;
    let output = run_sum_se_cdf(&cfg).map_err(core_failure)?;
    emit(&args.out, &render_cdf_csv(&output))
}

/// Turns a finished report into the process outcome (exit 2 on failure;
/// the report has already been written by then).
fn validation_verdict(report: &ValidationReport) -> Result<(), Failure> {
    if report.passed {
        return Ok(());
    }
    let passing = report.checks.iter().filter(|c| c.passed).count();
    Err(Failure {
        code: EXIT_VALIDATION_FAILURE,
        message: format!("validation failed ({passing}/{} checks passed)", report.checks.len()),
    })
}

fn validate_cmd(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(args, true)?;
    let report = run_validate(&cfg).map_err(core_failure)?;
    let rendered = report.render();
    print!("{rendered}");
    if let Some(path) = &args.out {
        fs::write(path, &rendered).map_err(|e| io_failure("write", path, e))?;
    }
    validation_verdict(&report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests print to stdout and succeed; genuine
            // usage errors are invalid invocations (exit 1), never clap's
            // default exit 2, which this tool reserves for validation.
            let code = if e.use_stderr() { EXIT_INVALID_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Calibrate(args) => calibrate_cmd(args),
        Command::SinrSweep(args) => sinr_sweep_cmd(args),
        Command::SumSeCdf(args) => sum_se_cdf_cmd(args),
        Command::Validate(args) => validate_cmd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mrclab_core::experiment::CheckResult;

    #[test]
    fn config_errors_map_to_exit_one() {
        let invalid_config =
            Error::InvalidConfig { field: "trials", reason: "must be at least 100".into() };
        assert_eq!(core_failure(invalid_config).code, EXIT_INVALID_CONFIG);
        let invalid_parameter =
            Error::InvalidParameter { name: "angular_spread", reason: "too small".into() };
        assert_eq!(core_failure(invalid_parameter).code, EXIT_INVALID_CONFIG);
    }

    #[test]
    fn numerical_errors_map_to_exit_three() {
        let mismatch = Error::DimensionMismatch { expected: 4, actual: 2 };
        assert_eq!(core_failure(mismatch).code, EXIT_NUMERICAL);
        let bracket =
            Error::CalibrationBracket { lo: 1e-12, hi: 1e12, lo_db: -3.0, hi_db: -1.0 };
        assert_eq!(core_failure(bracket).code, EXIT_NUMERICAL);
    }

    #[test]
    fn failed_validation_maps_to_exit_two() {
        let failing = ValidationReport {
            checks: vec![CheckResult {
                name: "example",
                measured: 2.0,
                tolerance: 1.0,
                must_exceed: false,
                passed: false,
            }],
            passed: false,
        };
        let failure = validation_verdict(&failing).unwrap_err();
        assert_eq!(failure.code, EXIT_VALIDATION_FAILURE);
        assert!(failure.message.contains("0/1"));

        let passing = ValidationReport { checks: vec![], passed: true };
        assert!(validation_verdict(&passing).is_ok());
    }
}
