//! Experiment orchestration: JSON-configurable scenario families, the four
//! runners behind the CLI (calibration, expected-SINR sweeps, sum-SE CDFs,
//! the validation suite), and CSV rendering.
//!
//! Unit conventions at this boundary: angles in degrees, SNR / Rice factors
//! / percentiles in dB, distances in meters. Everything is converted to
//! radians and linear scale on entry and stays there.
//!
//! Determinism: each runner derives per-stage seeds from the master seed
//! with fixed labels (placement, fading trials, calibration), then per-unit
//! substreams by index, so outputs are byte-identical across runs and
//! worker counts. Mode overrides (forcing Rayleigh / fixed-K / shared
//! correlation) are applied after the drop is realized, so every mode sees
//! identical terminal positions, link gains, and angles under one seed —
//! which is what makes cross-mode comparisons paired rather than merely
//! distributionally matched.

use serde::{Deserialize, Serialize};

use crate::analytic::{
    expected_sinr, special_case_sinr, sum_se_approx, AnalyticTerminal, SpecialCase,
};
use crate::correlation::{one_ring_matrix, CorrelationCache, OneRingParams};
use crate::largescale::{
    calibrate_rho_constant, drop_terminals, realize_terminal, Band, BandProfile,
    CalibrationSettings, CellGeometry, LosModel, RingSpec, TerminalProfile,
};
use crate::montecarlo::{
    empirical_cdf, ergodic_sum_se, estimate_expected_sinr_all, moment_oracle, par_map_indexed,
    Scenario, SystemConfig,
};
use crate::numerics::{derive_seed, hermitian_eig, psd_sqrt, substream};
use crate::{Error, Result};

use rand::RngExt;

/// Default fading trials per sweep point.
pub const DEFAULT_SWEEP_TRIALS: usize = 100_000;
/// Default fading trials per CDF drop.
pub const DEFAULT_CDF_TRIALS: usize = 200;
/// Default number of drops in a CDF build.
pub const DEFAULT_CDF_DROPS: usize = 500;
/// Rice factor standing in for "pure line of sight" (large but finite so
/// the simulated channel keeps a nonzero — vanishing — scatter component).
pub const PURE_LOS_RICE_K: f64 = 1e12;

// Per-stage seed labels ("plac", "simu", "calb", "vali" in ASCII).
const LABEL_PLACEMENT: u64 = 0x706c_6163;
const LABEL_TRIALS: u64 = 0x7369_6d75;
const LABEL_CALIBRATE: u64 = 0x6361_6c62;
const LABEL_VALIDATE: u64 = 0x7661_6c69;

/// dB → linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power ratio → dB.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Which propagation parameter set to use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandChoice {
    /// Built-in sub-6 GHz urban-microcell table.
    Microwave,
    /// Built-in millimeter-wave urban-microcell table.
    MmWave,
    /// Explicit parameter set.
    Custom(CustomBand),
}

/// A fully explicit large-scale parameter set for [`BandChoice::Custom`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomBand {
    /// Attenuation exponent on LoS links.
    pub alpha_los: f64,
    /// Attenuation exponent on NLoS links.
    pub alpha_nlos: f64,
    /// Shadow-fading standard deviation on LoS links (dB).
    pub shadow_std_los_db: f64,
    /// Shadow-fading standard deviation on NLoS links (dB).
    pub shadow_std_nlos_db: f64,
    /// Mean of `10·log10 K` (dB).
    pub k_mean_db: f64,
    /// Standard deviation of `10·log10 K` (dB).
    pub k_std_db: f64,
    /// LoS-probability model.
    pub los_model: LosModel,
}

/// Spatial-correlation assignment across terminals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// Every terminal gets its own ring central angle (drawn per drop).
    Unequal,
    /// All terminals share one ring central angle.
    Equal {
        /// The shared central angle (degrees). 11.25° = π/16 rad.
        #[serde(default = "default_phi_fixed_deg")]
        phi_fixed_deg: f64,
    },
}

fn default_phi_fixed_deg() -> f64 {
    11.25
}

/// Rice-factor assignment across terminals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KFactorMode {
    /// LoS terminals draw `10·log10 K` from the band's normal law; NLoS
    /// terminals get K = 0.
    Statistical,
    /// Every terminal gets the same fixed Rice factor.
    Fixed {
        /// The shared Rice factor (dB).
        #[serde(default = "default_fixed_k_db")]
        k_db: f64,
    },
    /// Every terminal is forced to K = 0 (pure scatter).
    Rayleigh,
    /// Every terminal is forced to K = [`PURE_LOS_RICE_K`].
    PureLos,
}

fn default_fixed_k_db() -> f64 {
    5.0
}

/// How the global attenuation constant ϱ is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoConstantMode {
    /// Run the percentile calibration at the reference operating point.
    Calibrate,
    /// Use the given linear value (e.g. from an earlier `calibrate` run).
    Explicit(f64),
}

/// One experiment definition — a single JSON document, every field
/// defaulted so partial configs are valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Propagation parameter set.
    pub band: BandChoice,
    /// Receive antennas M.
    pub antennas: usize,
    /// Terminals L.
    pub terminals: usize,
    /// Uplink SNR grid in dB. Sweeps cover every point (ascending); CDF
    /// builds use the first point.
    pub rho_sweep_db: Vec<f64>,
    /// One-ring angular half-spread Δ (degrees).
    pub angular_spread_deg: f64,
    /// Antenna spacing (wavelengths).
    pub spacing_wavelengths: f64,
    /// Correlation assignment.
    pub correlation: CorrelationMode,
    /// Rice-factor assignment.
    pub k_factor: KFactorMode,
    /// Fading trials per estimate (None → per-command default).
    pub trials: Option<usize>,
    /// Drops for CDF builds (None → [`DEFAULT_CDF_DROPS`]).
    pub drops: Option<usize>,
    /// Master seed; every random stage derives from it.
    pub seed: u64,
    /// Attenuation-constant source.
    pub rho_constant: RhoConstantMode,
    /// Reuse the LoS azimuth as the ring central angle.
    pub tie_los_to_ring: bool,
    /// Cell geometry (meters).
    pub cell: CellGeometry,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            band: BandChoice::Microwave,
            antennas: 64,
            terminals: 4,
            rho_sweep_db: vec![10.0],
            angular_spread_deg: 20.0,
            spacing_wavelengths: 0.5,
            correlation: CorrelationMode::Unequal,
            k_factor: KFactorMode::Statistical,
            trials: None,
            drops: None,
            seed: 1,
            rho_constant: RhoConstantMode::Calibrate,
            tie_los_to_ring: false,
            cell: CellGeometry::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a JSON config document (strict: unknown fields are errors).
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig {
            field: "json",
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The resolved config as a single JSON line (for self-describing
    /// output files).
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialization cannot fail")
    }

    /// Field-by-field validation with the offending field named.
    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 {
            return Err(invalid("antennas", "must be at least 1"));
        }
        if self.terminals == 0 {
            return Err(invalid("terminals", "must be at least 1"));
        }
        if self.rho_sweep_db.is_empty() {
            return Err(invalid("rho_sweep_db", "must contain at least one point"));
        }
        if self.rho_sweep_db.iter().any(|x| !x.is_finite()) {
            return Err(invalid("rho_sweep_db", "all points must be finite"));
        }
        if !(self.angular_spread_deg > 0.0 && self.angular_spread_deg <= 360.0) {
            return Err(invalid("angular_spread_deg", "must lie in (0, 360]"));
        }
        if !(self.spacing_wavelengths > 0.0 && self.spacing_wavelengths.is_finite()) {
            return Err(invalid("spacing_wavelengths", "must be positive and finite"));
        }
        if let Some(t) = self.trials {
            if t < 100 {
                return Err(invalid("trials", "must be at least 100"));
            }
        }
        if let Some(d) = self.drops {
            if d < 2 {
                return Err(invalid("drops", "must be at least 2"));
            }
        }
        match self.correlation {
            CorrelationMode::Equal { phi_fixed_deg } if !phi_fixed_deg.is_finite() => {
                return Err(invalid("correlation.phi_fixed_deg", "must be finite"));
            }
            _ => {}
        }
        match self.k_factor {
            KFactorMode::Fixed { k_db } if !k_db.is_finite() => {
                return Err(invalid("k_factor.k_db", "must be finite"));
            }
            _ => {}
        }
        if let RhoConstantMode::Explicit(v) = self.rho_constant {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid("rho_constant", "explicit value must be positive and finite"));
            }
        }
        if let BandChoice::Custom(c) = self.band {
            if !(c.alpha_los > 0.0 && c.alpha_nlos > 0.0) {
                return Err(invalid("band.alpha", "attenuation exponents must be positive"));
            }
            if c.shadow_std_los_db < 0.0 || c.shadow_std_nlos_db < 0.0 || c.k_std_db < 0.0 {
                return Err(invalid("band.std", "standard deviations must be nonnegative"));
            }
            if !c.k_mean_db.is_finite() {
                return Err(invalid("band.k_mean_db", "must be finite"));
            }
            let decay_ok = match c.los_model {
                LosModel::ThresholdExponential { near_m, decay_m } => near_m >= 0.0 && decay_m > 0.0,
                LosModel::ExponentialDecay { decay_m } => decay_m > 0.0,
            };
            if !decay_ok {
                return Err(invalid("band.los_model", "distances must be positive"));
            }
        }
        CellGeometry::new(self.cell.radius_m, self.cell.exclusion_radius_m).map_err(|e| {
            Error::InvalidConfig { field: "cell", reason: e.to_string() }
        })?;
        Ok(())
    }

    /// The large-scale parameter set this config selects.
    pub fn band_profile(&self) -> BandProfile {
        match self.band {
            BandChoice::Microwave => BandProfile::microwave(),
            BandChoice::MmWave => BandProfile::mmwave(),
            BandChoice::Custom(c) => BandProfile {
                band: Band::Custom,
                alpha_los: c.alpha_los,
                alpha_nlos: c.alpha_nlos,
                shadow_std_los_db: c.shadow_std_los_db,
                shadow_std_nlos_db: c.shadow_std_nlos_db,
                k_mean_db: c.k_mean_db,
                k_std_db: c.k_std_db,
                los_model: c.los_model,
            },
        }
    }

    /// The ring template (radians/wavelengths) this config selects.
    pub fn ring_spec(&self) -> RingSpec {
        RingSpec {
            angular_spread: self.angular_spread_deg.to_radians(),
            spacing: self.spacing_wavelengths,
            antennas: self.antennas,
        }
    }

    /// A copy of the SNR grid in ascending order (output row order is
    /// sorted by ρ, not by config order).
    fn sorted_sweep_db(&self) -> Vec<f64> {
        let mut points = self.rho_sweep_db.clone();
        points.sort_unstable_by(f64::total_cmp);
        points
    }
}

fn invalid(field: &'static str, reason: &str) -> Error {
    Error::InvalidConfig { field, reason: reason.to_string() }
}

/// The attenuation constant actually used by a run, and where it came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRho {
    /// Linear value.
    pub value: f64,
    /// Whether it was produced by calibration (versus given explicitly).
    pub calibrated: bool,
}

/// Obtains ϱ per the config: passthrough for explicit values, otherwise a
/// full calibration run at the reference operating point.
pub fn resolve_rho_constant(cfg: &ExperimentConfig) -> Result<ResolvedRho> {
    match cfg.rho_constant {
        RhoConstantMode::Explicit(value) => Ok(ResolvedRho { value, calibrated: false }),
        RhoConstantMode::Calibrate => {
            let outcome = run_calibrate(cfg)?;
            Ok(ResolvedRho { value: outcome.rho_constant, calibrated: true })
        }
    }
}

/// One drop: places `cfg.terminals` terminals, realizes their large-scale
/// state under the statistical model, then applies the configured
/// correlation / Rice-factor overrides.
///
/// The overrides are post-hoc on purpose: a drop at a given (seed, index)
/// has identical positions, LoS classes, link gains, and angles in every
/// mode, so mode comparisons are paired sample by sample.
pub fn build_drop(
    cfg: &ExperimentConfig,
    rho_constant: f64,
    drop_index: u64,
) -> Result<Vec<TerminalProfile>> {
    let band = cfg.band_profile();
    let ring = cfg.ring_spec();
    let placement_seed = derive_seed(cfg.seed, LABEL_PLACEMENT);
    let mut rng = substream(placement_seed, drop_index);
    let positions = drop_terminals(cfg.terminals, &cfg.cell, &mut rng);
    let mut profiles = Vec::with_capacity(cfg.terminals);
    for pos in positions {
        profiles.push(realize_terminal(
            pos,
            &band,
            rho_constant,
            &ring,
            &cfg.cell,
            cfg.tie_los_to_ring,
            &mut rng,
        )?);
    }
    match cfg.k_factor {
        KFactorMode::Statistical => {}
        KFactorMode::Rayleigh => {
            for p in &mut profiles {
                p.rice_k = 0.0;
            }
        }
        KFactorMode::PureLos => {
            for p in &mut profiles {
                p.rice_k = PURE_LOS_RICE_K;
            }
        }
        KFactorMode::Fixed { k_db } => {
            let k = db_to_linear(k_db);
            for p in &mut profiles {
                p.rice_k = k;
            }
        }
    }
    if let CorrelationMode::Equal { phi_fixed_deg } = cfg.correlation {
        let shared = ring.with_central_angle(phi_fixed_deg.to_radians())?;
        for p in &mut profiles {
            p.ring = shared;
        }
    }
    Ok(profiles)
}

fn scenario_at(
    cfg: &ExperimentConfig,
    profiles: &[TerminalProfile],
    snr: f64,
    cache: &CorrelationCache,
) -> Result<Scenario> {
    let config = SystemConfig { antennas: cfg.antennas, terminals: cfg.terminals, snr };
    Scenario::build(config, profiles.to_vec(), cache)
}

/// One output row of an expected-SINR sweep (dB quantities are 10·log10 of
/// the linear values; half-widths are 95% confidence).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    /// Uplink SNR of this point (dB).
    pub rho_db: f64,
    /// Terminal index.
    pub terminal: usize,
    /// Closed-form expected SINR (dB).
    pub sinr_analytic_db: f64,
    /// Simulated expected SINR (dB of the linear-domain sample mean).
    pub sinr_sim_db: f64,
    /// Upper 95% half-width of the simulated SINR, in dB:
    /// `10·log10(1 + hw/mean)`.
    pub sinr_sim_halfwidth_db: f64,
    /// Closed-form sum spectral efficiency of this ρ point (bits/s/Hz;
    /// repeated on each of the point's terminal rows).
    pub sumse_analytic: f64,
    /// Simulated ergodic sum spectral efficiency (bits/s/Hz).
    pub sumse_sim: f64,
    /// 95% half-width of the simulated sum SE (bits/s/Hz).
    pub sumse_sim_halfwidth: f64,
}

/// Everything a sweep run produces (render with [`render_sweep_csv`]).
#[derive(Clone, Debug)]
pub struct SweepOutput {
    /// Experiment identifier ("sinr-sweep").
    pub experiment: &'static str,
    /// The resolved config.
    pub config: ExperimentConfig,
    /// The attenuation constant used.
    pub rho_constant: ResolvedRho,
    /// Rows ordered by (ρ ascending, terminal ascending).
    pub rows: Vec<SweepRow>,
}

/// Expected-SINR sweep: freezes one drop (index 0 of the placement
/// stream), then walks the SNR grid computing the closed-form prediction
/// and an independent Monte Carlo estimate per (ρ, terminal), plus both
/// pipelines' sum SE per ρ.
pub fn run_sinr_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let rho = resolve_rho_constant(cfg)?;
    let profiles = build_drop(cfg, rho.value, 0)?;
    let cache = CorrelationCache::new();
    let trials = cfg.trials.unwrap_or(DEFAULT_SWEEP_TRIALS);
    let trial_seed = derive_seed(cfg.seed, LABEL_TRIALS);
    let mut rows = Vec::with_capacity(cfg.rho_sweep_db.len() * cfg.terminals);
    for (point, &rho_db) in cfg.sorted_sweep_db().iter().enumerate() {
        let snr = db_to_linear(rho_db);
        let scenario = scenario_at(cfg, &profiles, snr, &cache)?;
        let analytic = AnalyticTerminal::from_scenario(&scenario)?;
        let point_seed = derive_seed(trial_seed, point as u64);
        // Both estimators replay the same substreams, so the sum SE is
        // measured on exactly the channel draws behind the SINR estimates.
        let sinr_estimates = estimate_expected_sinr_all(&scenario, trials, point_seed)?;
        let se_estimate = ergodic_sum_se(&scenario, trials, point_seed)?;
        let sumse_analytic = sum_se_approx(&analytic, snr)?;
        for (terminal, est) in sinr_estimates.iter().enumerate() {
            rows.push(SweepRow {
                rho_db,
                terminal,
                sinr_analytic_db: linear_to_db(expected_sinr(&analytic, snr, terminal)?),
                sinr_sim_db: linear_to_db(est.mean),
                sinr_sim_halfwidth_db: linear_to_db(1.0 + est.half_width_95 / est.mean),
                sumse_analytic,
                sumse_sim: se_estimate.mean,
                sumse_sim_halfwidth: se_estimate.half_width_95,
            });
        }
    }
    Ok(SweepOutput { experiment: "sinr-sweep", config: cfg.clone(), rho_constant: rho, rows })
}

/// Everything a CDF run produces (render with [`render_cdf_csv`]).
#[derive(Clone, Debug)]
pub struct CdfOutput {
    /// Experiment identifier ("sum-se-cdf").
    pub experiment: &'static str,
    /// The resolved config.
    pub config: ExperimentConfig,
    /// The attenuation constant used.
    pub rho_constant: ResolvedRho,
    /// Empirical CDF of the closed-form sum SE over drops.
    pub analytic: Vec<(f64, f64)>,
    /// Empirical CDF of the simulated ergodic sum SE over drops.
    pub simulated: Vec<(f64, f64)>,
}

/// Sum-SE CDF over drops at the first SNR point of the grid: every drop
/// resamples positions, link gains, and Rice factors; both pipelines are
/// evaluated on the identical drop.
///
/// The pipelines measure different functionals of the same drop: the
/// closed form maps each terminal's mean SINR through `log2(1 + ·)`,
/// while the simulated value averages the instantaneous log over fading.
/// Concavity of the log puts the simulated curve a few percent below the
/// closed-form curve; the offset shrinks as the antenna count grows and
/// the per-trial SINR concentrates.
pub fn run_sum_se_cdf(cfg: &ExperimentConfig) -> Result<CdfOutput> {
    cfg.validate()?;
    let rho = resolve_rho_constant(cfg)?;
    let snr = db_to_linear(cfg.sorted_sweep_db()[0]);
    let drops = cfg.drops.unwrap_or(DEFAULT_CDF_DROPS);
    let trials = cfg.trials.unwrap_or(DEFAULT_CDF_TRIALS);
    let trial_seed = derive_seed(cfg.seed, LABEL_TRIALS);
    let per_drop = par_map_indexed(drops, |d| -> Result<(f64, f64)> {
        let profiles = build_drop(cfg, rho.value, d as u64)?;
        // A local cache per drop: unequal-correlation drops never repeat a
        // ring angle, so sharing across drops would only grow memory.
        let cache = CorrelationCache::new();
        let scenario = scenario_at(cfg, &profiles, snr, &cache)?;
        let analytic_terminals = AnalyticTerminal::from_scenario(&scenario)?;
        let closed = sum_se_approx(&analytic_terminals, snr)?;
        let simulated = ergodic_sum_se(&scenario, trials, derive_seed(trial_seed, d as u64))?;
        Ok((closed, simulated.mean))
    });
    let mut closed = Vec::with_capacity(drops);
    let mut simulated = Vec::with_capacity(drops);
    for r in per_drop {
        let (c, s) = r?;
        closed.push(c);
        simulated.push(s);
    }
    Ok(CdfOutput {
        experiment: "sum-se-cdf",
        config: cfg.clone(),
        rho_constant: rho,
        analytic: empirical_cdf(&closed)?,
        simulated: empirical_cdf(&simulated)?,
    })
}

/// A calibration run's result (serializable as the sidecar document).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    /// Calibrated attenuation constant (linear).
    pub rho_constant: f64,
    /// The same in dB.
    pub rho_constant_db: f64,
    /// Band the calibration ran against.
    pub band: Band,
    /// Settings of the operating point.
    pub settings: CalibrationSettings,
    /// Master seed the run derived from.
    pub seed: u64,
}

/// Calibrates ϱ at the reference operating point (M=64, L=4, 0 dB SNR,
/// 5th percentile of the noise-limited SINR pinned to 0 dB) using the
/// config's band, geometry, spread, and spacing.
pub fn run_calibrate(cfg: &ExperimentConfig) -> Result<CalibrationOutcome> {
    run_calibrate_with(cfg, &CalibrationSettings::default())
}

/// [`run_calibrate`] with explicit operating-point settings (scaled-down
/// points are useful in tests; the CLI maps its `--drops`/`--trials`
/// flags onto the operating point's drop and fading-trial counts).
pub fn run_calibrate_with(
    cfg: &ExperimentConfig,
    settings: &CalibrationSettings,
) -> Result<CalibrationOutcome> {
    cfg.validate()?;
    let band = cfg.band_profile();
    let ring = RingSpec {
        angular_spread: cfg.angular_spread_deg.to_radians(),
        spacing: cfg.spacing_wavelengths,
        antennas: settings.antennas,
    };
    let rho = calibrate_rho_constant(
        &band,
        &ring,
        &cfg.cell,
        cfg.tie_los_to_ring,
        settings,
        derive_seed(cfg.seed, LABEL_CALIBRATE),
    )?;
    Ok(CalibrationOutcome {
        rho_constant: rho,
        rho_constant_db: linear_to_db(rho),
        band: band.band,
        settings: *settings,
        seed: cfg.seed,
    })
}

/// One validation check: a measured quantity against its tolerance.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    /// What was checked.
    pub name: &'static str,
    /// The measured value.
    pub measured: f64,
    /// The acceptance threshold.
    pub tolerance: f64,
    /// Pass direction: `true` means `measured` must exceed `tolerance`
    /// (detection margins), otherwise it must stay at or below it.
    pub must_exceed: bool,
    /// Whether the check passed.
    pub passed: bool,
}

impl CheckResult {
    fn within(name: &'static str, measured: f64, tolerance: f64) -> Self {
        Self { name, measured, tolerance, must_exceed: false, passed: measured <= tolerance }
    }

    fn exceeds(name: &'static str, measured: f64, tolerance: f64) -> Self {
        Self { name, measured, tolerance, must_exceed: true, passed: measured > tolerance }
    }
}

/// The validation suite's outcome.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    /// Every check, in execution order.
    pub checks: Vec<CheckResult>,
    /// True iff every check passed.
    pub passed: bool,
}

impl ValidationReport {
    /// Human-readable report: one line per check plus a verdict.
    pub fn render(&self) -> String {
        let mut out = String::from("validation report\n");
        for c in &self.checks {
            let direction = if c.must_exceed { ">" } else { "<=" };
            out.push_str(&format!(
                "{} {:42} measured {:.6e} (required {} {:.6e})\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                direction,
                c.tolerance
            ));
        }
        let passing = self.checks.iter().filter(|c| c.passed).count();
        out.push_str(&format!(
            "overall: {} ({passing}/{} checks passed)\n",
            if self.passed { "PASS" } else { "FAIL" },
            self.checks.len()
        ));
        out
    }
}

/// Runs the library's cross-checks: correlation-matrix invariants at the
/// config's array size, closed-form moments against the Monte Carlo oracle
/// (including the mis-weighted negative controls, which must be *detected*),
/// special-case identities, and the headline analytic trends.
///
/// The moment and trend checks run on fixed small scenarios (so the oracle
/// is sharp within seconds); the config contributes its band, array size,
/// spacing, and seed.
pub fn run_validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    cfg.validate()?;
    let mut checks = Vec::new();
    let seed = derive_seed(cfg.seed, LABEL_VALIDATE);

    // --- Correlation-matrix invariants over a random parameter batch. ---
    let mut rng = substream(seed, 0);
    let m = cfg.antennas;
    let mut worst_trace = 0.0f64;
    let mut worst_diag = 0.0f64;
    let mut worst_neg_eig = 0.0f64;
    let mut worst_sqrt = 0.0f64;
    for i in 0..50 {
        let spread = 1e-3 + rng.random::<f64>() * (std::f64::consts::TAU - 1e-3);
        let phi = rng.random::<f64>() * std::f64::consts::TAU;
        let params = OneRingParams::new(spread, phi, cfg.spacing_wavelengths, m)?;
        let r = one_ring_matrix(&params);
        worst_trace = worst_trace.max((r.trace_re() - m as f64).abs() / m as f64);
        for j in 0..m {
            worst_diag = worst_diag.max((r.matrix()[(j, j)].re - 1.0).abs());
        }
        let eig = hermitian_eig(&r)?;
        let lam_min = eig.eigenvalues[0];
        let lam_max = eig.eigenvalues[m - 1].max(f64::MIN_POSITIVE);
        worst_neg_eig = worst_neg_eig.max((-lam_min / lam_max).max(0.0));
        // Square-root roundtrip on a subset (the expensive part).
        if i % 10 == 0 {
            let s = psd_sqrt(&r)?;
            let back = s.matrix() * s.matrix();
            let err = (back - r.matrix()).norm() / r.matrix().norm().max(f64::MIN_POSITIVE);
            worst_sqrt = worst_sqrt.max(err);
        }
    }
    checks.push(CheckResult::within("correlation.trace_per_antenna", worst_trace, 1e-12));
    checks.push(CheckResult::within("correlation.unit_diagonal", worst_diag, 1e-12));
    checks.push(CheckResult::within("correlation.negative_eigenvalue", worst_neg_eig, 1e-10));
    checks.push(CheckResult::within("correlation.sqrt_roundtrip", worst_sqrt, 1e-9));

    // --- Closed-form moments vs the Monte Carlo oracle (fixed Ricean
    // scenario with K > 0 so the weight-swap control is detectable). ---
    let mini = mini_scenario(8)?;
    let analytic = AnalyticTerminal::from_scenario(&mini)?;
    let oracle = moment_oracle(&mini, 0, 1, 200_000, derive_seed(seed, 1))?;
    let closed_fourth = analytic[0].norm_fourth_moment();
    let closed_cross = analytic[0].cross_moment(&analytic[1])?;
    checks.push(CheckResult::within(
        "moments.norm_fourth_vs_oracle",
        (closed_fourth - oracle.norm_fourth.mean).abs(),
        3.0 * oracle.norm_fourth.half_width_95 + 0.01 * closed_fourth,
    ));
    checks.push(CheckResult::within(
        "moments.cross_second_vs_oracle",
        (closed_cross - oracle.cross_second.mean).abs(),
        3.0 * oracle.cross_second.half_width_95 + 0.01 * closed_cross,
    ));
    checks.push(CheckResult::within(
        "moments.norm_second_per_antenna",
        (oracle.norm_second.mean / analytic[0].norm_second_moment() - 1.0).abs(),
        0.01,
    ));
    // The mis-weighted controls must sit far outside the error bars —
    // this check failing would mean the oracle cannot catch the slip.
    let swapped_fourth = analytic[0].norm_fourth_moment_weight_swapped();
    let swapped_cross = analytic[0].cross_moment_weight_swapped(&analytic[1])?;
    checks.push(CheckResult::exceeds(
        "moments.weight_swap_detection_fourth",
        (swapped_fourth - oracle.norm_fourth.mean).abs()
            / oracle.norm_fourth.half_width_95.max(f64::MIN_POSITIVE),
        5.0,
    ));
    checks.push(CheckResult::exceeds(
        "moments.weight_swap_detection_cross",
        (swapped_cross - oracle.cross_second.mean).abs()
            / oracle.cross_second.half_width_95.max(f64::MIN_POSITIVE),
        5.0,
    ));

    // --- Special-case routes agree with the general formula. ---
    checks.push(CheckResult::within(
        "special_cases.max_relative_deviation",
        special_case_deviation(seed)?,
        1e-12,
    ));

    // --- Headline analytic trends on paired drops. ---
    let base = ExperimentConfig {
        antennas: 32,
        terminals: 3,
        rho_sweep_db: vec![10.0],
        rho_constant: RhoConstantMode::Explicit(1e-4),
        seed: derive_seed(seed, 2),
        ..cfg.clone()
    };
    let wide = ExperimentConfig { angular_spread_deg: 90.0, ..base.clone() };
    let narrow = ExperimentConfig { angular_spread_deg: 20.0, ..base.clone() };
    checks.push(CheckResult::exceeds(
        "trends.wider_spread_raises_mean_sinr",
        mean_analytic_sinr(&wide)? / mean_analytic_sinr(&narrow)?,
        1.0,
    ));
    let rayleigh = ExperimentConfig { k_factor: KFactorMode::Rayleigh, ..base.clone() };
    let ricean = ExperimentConfig { k_factor: KFactorMode::Fixed { k_db: 5.0 }, ..base.clone() };
    checks.push(CheckResult::exceeds(
        "trends.rayleigh_beats_fixed_rice_sum_se",
        mean_analytic_sum_se(&rayleigh)? / mean_analytic_sum_se(&ricean)?,
        1.0,
    ));
    // Saturation is checked on the fixed scenario (O(1) link gains put the
    // noise/interference crossover near ρ = 1, so 40 dB is deep inside the
    // interference-limited region regardless of drop randomness).
    let sat = |snr: f64| -> Result<f64> {
        let mut acc = 0.0;
        for l in 0..analytic.len() {
            acc += expected_sinr(&analytic, snr, l)?;
        }
        Ok(acc / analytic.len() as f64)
    };
    let low = sat(db_to_linear(40.0))?;
    let high = sat(db_to_linear(50.0))?;
    checks.push(CheckResult::within("trends.sinr_saturates_at_high_snr", (high - low) / low, 0.01));

    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { checks, passed })
}

/// Fixed Ricean validation scenario: three terminals, mixed Rice factors
/// (two of them strictly positive), distinct rings.
fn mini_scenario(m: usize) -> Result<Scenario> {
    let cache = CorrelationCache::new();
    let mk = |k: f64, gain: f64, az: f64, phi: f64, spread: f64| -> Result<TerminalProfile> {
        Ok(TerminalProfile {
            distance_m: 50.0,
            is_los: k > 0.0,
            rice_k: k,
            link_gain: gain,
            shadow: 1.0,
            los_azimuth: az,
            ring: OneRingParams::new(spread, phi, 0.5, m)?,
        })
    };
    let profiles = vec![
        mk(3.16, 1.0, 0.4, 0.9, 0.35)?,
        mk(1.0, 0.5, 2.0, 2.1, 0.6)?,
        mk(0.0, 0.25, 4.0, 4.2, 0.35)?,
    ];
    let config = SystemConfig { antennas: m, terminals: profiles.len(), snr: 1.0 };
    Scenario::build(config, profiles, &cache)
}

/// Worst relative deviation between each special-case route and the general
/// formula over its class.
fn special_case_deviation(seed: u64) -> Result<f64> {
    let m = 8;
    let cache = CorrelationCache::new();
    let mut rng = substream(seed, 3);
    let mut worst = 0.0f64;
    for instance in 0..10 {
        let shared_ring = OneRingParams::new(
            0.1 + rng.random::<f64>() * 1.5,
            rng.random::<f64>() * std::f64::consts::TAU,
            0.5,
            m,
        )?;
        let shared = cache.matrix(&shared_ring);
        let mut rayleigh_unequal = Vec::new();
        let mut rayleigh_equal = Vec::new();
        let mut ricean_equal = Vec::new();
        for _ in 0..3 {
            let gain = 0.1 + rng.random::<f64>();
            let az = rng.random::<f64>() * std::f64::consts::TAU;
            let k = rng.random::<f64>() * 5.0;
            let own_ring = OneRingParams::new(
                0.1 + rng.random::<f64>() * 1.5,
                rng.random::<f64>() * std::f64::consts::TAU,
                0.5,
                m,
            )?;
            let own = cache.matrix(&own_ring);
            let steer = crate::channel::steering(az, m, 0.5);
            rayleigh_unequal.push(AnalyticTerminal::new(0.0, gain, own, steer.clone())?);
            rayleigh_equal.push(AnalyticTerminal::new(0.0, gain, shared.clone(), steer.clone())?);
            ricean_equal.push(AnalyticTerminal::new(k, gain, shared.clone(), steer)?);
        }
        let snr = db_to_linear(-10.0 + 5.0 * (instance as f64));
        for l in 0..3 {
            for (case, set) in [
                (SpecialCase::RayleighUnequal, &rayleigh_unequal),
                (SpecialCase::RayleighEqual, &rayleigh_equal),
                (SpecialCase::RiceanEqual, &ricean_equal),
            ] {
                let general = expected_sinr(set, snr, l)?;
                let special = special_case_sinr(case, set, snr, l)?;
                worst = worst.max((general - special).abs() / general);
            }
        }
    }
    Ok(worst)
}

/// Mean closed-form expected SINR across terminals for drop 0 at the first
/// sweep point.
fn mean_analytic_sinr(cfg: &ExperimentConfig) -> Result<f64> {
    let rho = resolve_rho_constant(cfg)?;
    let profiles = build_drop(cfg, rho.value, 0)?;
    let cache = CorrelationCache::new();
    let snr = db_to_linear(cfg.sorted_sweep_db()[0]);
    let scenario = scenario_at(cfg, &profiles, snr, &cache)?;
    let analytic = AnalyticTerminal::from_scenario(&scenario)?;
    let mut acc = 0.0;
    for l in 0..cfg.terminals {
        acc += expected_sinr(&analytic, snr, l)?;
    }
    Ok(acc / cfg.terminals as f64)
}

/// Mean closed-form sum SE over a handful of drops at the first sweep
/// point.
fn mean_analytic_sum_se(cfg: &ExperimentConfig) -> Result<f64> {
    let rho = resolve_rho_constant(cfg)?;
    let cache = CorrelationCache::new();
    let snr = db_to_linear(cfg.sorted_sweep_db()[0]);
    let drops = 20;
    let mut acc = 0.0;
    for d in 0..drops {
        let profiles = build_drop(cfg, rho.value, d)?;
        let scenario = scenario_at(cfg, &profiles, snr, &cache)?;
        let analytic = AnalyticTerminal::from_scenario(&scenario)?;
        acc += sum_se_approx(&analytic, snr)?;
    }
    Ok(acc / drops as f64)
}

/// Formats a float with 12 significant digits ('.' decimal, exponent
/// notation, no separators).
fn fmt_sig(x: f64) -> String {
    format!("{x:.11e}")
}

fn csv_preamble(experiment: &str, config: &ExperimentConfig, rho: &ResolvedRho) -> String {
    format!(
        "# experiment: {experiment}\n# config: {}\n# rho_constant: {} ({})\n",
        config.to_json(),
        fmt_sig(rho.value),
        if rho.calibrated { "calibrated" } else { "explicit" },
    )
}

/// Renders a sweep as CSV: '#' comment lines carrying the resolved config,
/// a units note, the pinned header, then one row per (ρ, terminal).
pub fn render_sweep_csv(out: &SweepOutput) -> String {
    let mut s = csv_preamble(out.experiment, &out.config, &out.rho_constant);
    s.push_str(
        "# units: rho_db and sinr_* columns in dB; sumse_* columns in bits/s/Hz; \
         halfwidths are 95% confidence (sinr halfwidth as 10*log10(1 + hw/mean))\n",
    );
    s.push_str(
        "rho_db,terminal,sinr_analytic_db,sinr_sim_db,sinr_sim_halfwidth_db,\
         sumse_analytic,sumse_sim,sumse_sim_halfwidth\n",
    );
    for r in &out.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_sig(r.rho_db),
            r.terminal,
            fmt_sig(r.sinr_analytic_db),
            fmt_sig(r.sinr_sim_db),
            fmt_sig(r.sinr_sim_halfwidth_db),
            fmt_sig(r.sumse_analytic),
            fmt_sig(r.sumse_sim),
            fmt_sig(r.sumse_sim_halfwidth),
        ));
    }
    s
}

/// Renders a CDF build as CSV: the analytic pipeline's points (ascending),
/// then the simulated pipeline's.
pub fn render_cdf_csv(out: &CdfOutput) -> String {
    let mut s = csv_preamble(out.experiment, &out.config, &out.rho_constant);
    s.push_str("# units: sum_se_bits in bits/s/Hz; cdf_level is cumulative probability\n");
    s.push_str("pipeline,sum_se_bits,cdf_level\n");
    for (name, cdf) in [("analytic", &out.analytic), ("simulated", &out.simulated)] {
        for &(value, level) in cdf.iter() {
            s.push_str(&format!("{name},{},{}\n", fmt_sig(value), fmt_sig(level)));
        }
    }
    s
}
