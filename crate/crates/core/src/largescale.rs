//! Terminal drops and large-scale link state.
//!
//! Covers everything that changes per drop but not per fading trial:
//! area-uniform terminal placement in an annular cell, distance-dependent
//! LoS/NLoS classification, path loss with per-class attenuation exponents,
//! log-normal shadow fading, log-normal Rice factors for LoS links, and the
//! calibration of the global attenuation constant ϱ that pins the 5th
//! percentile of the instantaneous SINR to 0 dB at the reference operating
//! point (M=64, L=4, 0 dB SNR).
//!
//! Two built-in urban-microcell band profiles are provided (microwave and
//! millimeter-wave); all their constants are printable for audit via the
//! CLI.

use std::f64::consts::PI;

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{rice_mix, steering};
use crate::correlation::{scatter_factor, OneRingParams};
use crate::montecarlo::par_map_indexed;
use crate::numerics::{derive_seed, gemm, sample_cn, substream, C64, CMatrix};
use crate::{Error, Result};

/// Propagation band selector for the built-in profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    /// Sub-6 GHz urban microcell.
    Microwave,
    /// Millimeter-wave urban microcell.
    MmWave,
    /// User-supplied parameter set (no built-in table).
    Custom,
}

/// Distance-dependent LoS-probability model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LosModel {
    /// `min(near/r, 1)·(1 − e^{−r/decay}) + e^{−r/decay}` — street-canyon
    /// model with a guaranteed-LoS near field.
    ThresholdExponential { near_m: f64, decay_m: f64 },
    /// `e^{−r/decay}` — pure exponential decay (no outage state).
    ExponentialDecay { decay_m: f64 },
}

/// Large-scale propagation parameters of one band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandProfile {
    /// Which built-in band this is.
    pub band: Band,
    /// Attenuation exponent on LoS links.
    pub alpha_los: f64,
    /// Attenuation exponent on NLoS links.
    pub alpha_nlos: f64,
    /// Shadow-fading standard deviation on LoS links (dB).
    pub shadow_std_los_db: f64,
    /// Shadow-fading standard deviation on NLoS links (dB).
    pub shadow_std_nlos_db: f64,
    /// Mean of the log-normal Rice factor: `10·log10 K ~ N(mean, std²)` (dB).
    pub k_mean_db: f64,
    /// Standard deviation of the log-normal Rice factor (dB).
    pub k_std_db: f64,
    /// LoS-probability model.
    pub los_model: LosModel,
}

impl BandProfile {
    /// Sub-6 GHz urban-microcell profile.
    pub fn microwave() -> Self {
        Self {
            band: Band::Microwave,
            alpha_los: 2.2,
            alpha_nlos: 3.67,
            shadow_std_los_db: 3.0,
            shadow_std_nlos_db: 4.0,
            k_mean_db: 9.0,
            k_std_db: 5.0,
            los_model: LosModel::ThresholdExponential { near_m: 18.0, decay_m: 36.0 },
        }
    }

    /// Millimeter-wave urban-microcell profile.
    pub fn mmwave() -> Self {
        Self {
            band: Band::MmWave,
            alpha_los: 2.0,
            alpha_nlos: 2.92,
            shadow_std_los_db: 5.8,
            shadow_std_nlos_db: 8.7,
            k_mean_db: 12.0,
            k_std_db: 3.0,
            los_model: LosModel::ExponentialDecay { decay_m: 67.1 },
        }
    }

    /// The built-in profile for `band`.
    ///
    /// Panics for [`Band::Custom`], which by definition has no table —
    /// custom profiles are constructed field by field from a config.
    pub fn of(band: Band) -> Self {
        match band {
            Band::Microwave => Self::microwave(),
            Band::MmWave => Self::mmwave(),
            Band::Custom => panic!("custom band profiles are built from explicit parameters"),
        }
    }
}

/// Annular cell: terminals live between the exclusion radius and the cell
/// radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellGeometry {
    /// Cell radius (meters).
    pub radius_m: f64,
    /// Exclusion radius around the base station (meters).
    pub exclusion_radius_m: f64,
}

impl CellGeometry {
    /// Validated constructor (`0 < exclusion < radius`).
    pub fn new(radius_m: f64, exclusion_radius_m: f64) -> Result<Self> {
        if !(exclusion_radius_m > 0.0 && radius_m > exclusion_radius_m) {
            return Err(Error::InvalidParameter {
                name: "cell_geometry",
                reason: format!(
                    "need 0 < exclusion ({exclusion_radius_m} m) < radius ({radius_m} m)"
                ),
            });
        }
        Ok(Self { radius_m, exclusion_radius_m })
    }
}

impl Default for CellGeometry {
    /// 100 m cell with a 10 m exclusion area.
    fn default() -> Self {
        Self { radius_m: 100.0, exclusion_radius_m: 10.0 }
    }
}

/// A dropped terminal's position in the cell (polar, base station at the
/// origin).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TerminalPosition {
    /// Distance from the base station (meters).
    pub distance_m: f64,
    /// Position azimuth in the cell plane (radians); note this is distinct
    /// from the arrival angles drawn in [`realize_terminal`].
    pub azimuth: f64,
}

/// Array-geometry template shared by all terminals of a scenario: the
/// one-ring parameters minus the per-terminal central angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingSpec {
    /// Angular half-spread Δ (radians).
    pub angular_spread: f64,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    /// Number of array elements M.
    pub antennas: usize,
}

impl RingSpec {
    /// One-ring parameters for a terminal with central angle `phi`.
    pub fn with_central_angle(&self, phi: f64) -> Result<OneRingParams> {
        OneRingParams::new(self.angular_spread, phi, self.spacing, self.antennas)
    }
}

/// Complete large-scale state of one terminal.
#[derive(Clone, Debug, PartialEq)]
pub struct TerminalProfile {
    /// Distance from the base station (meters).
    pub distance_m: f64,
    /// Whether the link has a line-of-sight ray.
    pub is_los: bool,
    /// Linear Rice factor (0 for NLoS links).
    pub rice_k: f64,
    /// Linear link gain β = ϱ·ζ·(r₀/r)^α.
    pub link_gain: f64,
    /// Linear shadow-fading realization ζ.
    pub shadow: f64,
    /// LoS azimuth φ′ driving the steering vector (radians).
    pub los_azimuth: f64,
    /// One-ring correlation parameters (central angle φ drawn per terminal).
    pub ring: OneRingParams,
}

/// LoS probability at distance `r` under the band's model.
pub fn p_los(r: f64, profile: &BandProfile) -> f64 {
    assert!(r > 0.0, "distance must be positive");
    match profile.los_model {
        LosModel::ThresholdExponential { near_m, decay_m } => {
            let e = (-r / decay_m).exp();
            (near_m / r).min(1.0) * (1.0 - e) + e
        }
        LosModel::ExponentialDecay { decay_m } => (-r / decay_m).exp(),
    }
}

/// Drops `count` terminals uniformly over the cell area: the radius is
/// `sqrt(r₀² + u·(R² − r₀²))` with `u ~ U[0,1]` (area-uniform over the
/// annulus) and the azimuth is `U[0, 2π)`.
pub fn drop_terminals<R: Rng + ?Sized>(
    count: usize,
    geom: &CellGeometry,
    rng: &mut R,
) -> Vec<TerminalPosition> {
    let r0_sq = geom.exclusion_radius_m * geom.exclusion_radius_m;
    let rc_sq = geom.radius_m * geom.radius_m;
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let azimuth = rng.random::<f64>() * 2.0 * PI;
            TerminalPosition {
                distance_m: (r0_sq + u * (rc_sq - r0_sq)).sqrt(),
                azimuth,
            }
        })
        .collect()
}

/// Linear link gain β = ϱ·ζ·(r₀/r)^α.
pub fn link_gain(rho_constant: f64, shadow: f64, r: f64, r0: f64, alpha: f64) -> f64 {
    rho_constant * shadow * (r0 / r).powf(alpha)
}

/// Draws the full large-scale state of one dropped terminal.
///
/// Draw order is part of the determinism contract: LoS coin, shadow-fading
/// normal, Rice-factor normal (always drawn so the stream advances
/// identically for LoS and NLoS links; discarded as K=0 when NLoS), LoS
/// azimuth, ring central angle. With `tie_los_to_ring` the ring reuses the
/// LoS azimuth (the second angle draw is discarded, keeping alignment).
pub fn realize_terminal<R: Rng + ?Sized>(
    position: TerminalPosition,
    profile: &BandProfile,
    rho_constant: f64,
    ring: &RingSpec,
    geom: &CellGeometry,
    tie_los_to_ring: bool,
    rng: &mut R,
) -> Result<TerminalProfile> {
    if rho_constant <= 0.0 || !rho_constant.is_finite() {
        return Err(Error::InvalidParameter {
            name: "rho_constant",
            reason: format!("must be positive, got {rho_constant}"),
        });
    }
    let r = position.distance_m;
    let is_los = rng.random::<f64>() < p_los(r, profile);
    let (alpha, shadow_std_db) = if is_los {
        (profile.alpha_los, profile.shadow_std_los_db)
    } else {
        (profile.alpha_nlos, profile.shadow_std_nlos_db)
    };
    let shadow_db: f64 = rng.sample::<f64, _>(StandardNormal) * shadow_std_db;
    let shadow = 10f64.powf(shadow_db / 10.0);
    let k_db: f64 = profile.k_mean_db + rng.sample::<f64, _>(StandardNormal) * profile.k_std_db;
    let rice_k = if is_los { 10f64.powf(k_db / 10.0) } else { 0.0 };
    let los_azimuth = rng.random::<f64>() * 2.0 * PI;
    let ring_angle_draw = rng.random::<f64>() * 2.0 * PI;
    let ring_angle = if tie_los_to_ring { los_azimuth } else { ring_angle_draw };
    Ok(TerminalProfile {
        distance_m: r,
        is_los,
        rice_k,
        link_gain: link_gain(rho_constant, shadow, r, geom.exclusion_radius_m, alpha),
        shadow,
        los_azimuth,
        ring: ring.with_central_angle(ring_angle)?,
    })
}

/// Settings of the attenuation-constant calibration. Defaults match the
/// reference operating point: M=64, L=4, 0 dB SNR, 5th percentile of the
/// noise-limited instantaneous SINR at 0 dB, estimated over 2·10⁴ drops ×
/// 20 fading trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    /// Array size M at the calibration operating point.
    pub antennas: usize,
    /// Number of terminals L.
    pub terminals: usize,
    /// Uplink SNR ρ (linear).
    pub snr: f64,
    /// Number of independent drops.
    pub drops: usize,
    /// Fading trials per drop.
    pub fading_trials: usize,
    /// Percentile being pinned (0.05 = 5th).
    pub percentile: f64,
    /// Target percentile value (dB).
    pub target_db: f64,
    /// Bisection stopping width on the percentile (dB); well under the
    /// ±0.1 dB contract so sampling error dominates.
    pub tolerance_db: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            antennas: 64,
            terminals: 4,
            snr: 1.0,
            drops: 20_000,
            fading_trials: 20,
            percentile: 0.05,
            target_db: 0.0,
            tolerance_db: 0.01,
        }
    }
}

impl CalibrationSettings {
    /// Rejects operating points the sampler cannot act on (too few samples
    /// for a percentile, nonpositive SNR, out-of-range percentile, ...).
    pub fn validate(&self) -> Result<()> {
        let reject = |reason: String| {
            Err(Error::InvalidParameter { name: "calibration_settings", reason })
        };
        if self.antennas == 0 || self.terminals == 0 {
            return reject("antennas and terminals must be at least 1".into());
        }
        if self.drops < 2 || self.fading_trials == 0 {
            return reject(format!(
                "need at least 2 drops and 1 fading trial, got {} and {}",
                self.drops, self.fading_trials
            ));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return reject(format!("snr must be positive, got {}", self.snr));
        }
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return reject(format!("percentile must lie in (0, 1), got {}", self.percentile));
        }
        if !self.target_db.is_finite() || !(self.tolerance_db > 0.0) {
            return reject(format!(
                "target {} dB / tolerance {} dB out of range",
                self.target_db, self.tolerance_db
            ));
        }
        Ok(())
    }
}

/// Noise-limited instantaneous-SINR sample decomposed so that rescaling ϱ
/// is free: `SINR(ϱ) = ϱ·signal / noise`.
struct SinrSample {
    signal: f64,
    noise: f64,
}

/// Collects pooled noise-limited instantaneous-SINR samples (every drop ×
/// trial × terminal) at unit attenuation constant, so the percentile can be
/// re-evaluated at any ϱ without re-simulating.
///
/// "Noise-limited" means each terminal's SINR is evaluated with the
/// interference term dropped — `ϱ·ρ·β_l·‖g_l‖⁴ / ‖g_l‖²` — i.e. the
/// cell-edge SNR after combining. The full SINR is unusable as a
/// calibration objective here: its low percentiles saturate as ϱ grows
/// (signal and interference scale together while only the noise is fixed),
/// and the measured ceiling of the pooled 5th percentile sits near −11 dB
/// at the reference operating point — below the 0 dB target, which would
/// make the operating point unreachable for every ϱ.
fn collect_sinr_samples(
    profile: &BandProfile,
    ring: &RingSpec,
    geom: &CellGeometry,
    tie_los_to_ring: bool,
    settings: &CalibrationSettings,
    seed: u64,
) -> Result<Vec<SinrSample>> {
    settings.validate()?;
    let l_count = settings.terminals;
    let trials = settings.fading_trials;
    let drop_seed = derive_seed(seed, 0x6472_6f70); // "drop"
    let fade_seed = derive_seed(seed, 0x6661_6465); // "fade"
    let per_drop = par_map_indexed(settings.drops, |d| -> Result<Vec<SinrSample>> {
        let mut ls_rng = substream(drop_seed, d as u64);
        let positions = drop_terminals(l_count, geom, &mut ls_rng);
        let mut terminals = Vec::with_capacity(l_count);
        for pos in positions {
            terminals
                .push(realize_terminal(pos, profile, 1.0, ring, geom, tie_los_to_ring, &mut ls_rng)?);
        }
        let mut fade_rng = substream(fade_seed, d as u64);
        let mut out = Vec::with_capacity(trials * l_count);
        // Only ‖g‖² is needed per (terminal, trial), so all of a terminal's
        // trials are drawn as one batched product F·Z (the pooled percentile
        // does not care about sample order).
        for t in &terminals {
            let mix = rice_mix(t.rice_k)?;
            let los = steering(t.los_azimuth, ring.antennas, ring.spacing)
                * C64::new(mix.los_weight, 0.0);
            let factor = scatter_factor(&t.ring);
            let mut z = CMatrix::zeros(factor.ncols(), trials);
            for col in 0..trials {
                z.set_column(col, &sample_cn(factor.ncols(), &mut fade_rng));
            }
            let scattered = gemm(&factor, &z);
            let gamma = C64::new(mix.scatter_weight, 0.0);
            for col in 0..trials {
                let norm: f64 = (0..ring.antennas)
                    .map(|i| (los[i] + scattered[(i, col)] * gamma).norm_sqr())
                    .sum();
                out.push(SinrSample {
                    signal: settings.snr * t.link_gain * norm * norm,
                    noise: norm,
                });
            }
        }
        Ok(out)
    });
    let mut samples = Vec::with_capacity(settings.drops * settings.fading_trials * l_count);
    for drop in per_drop {
        samples.extend(drop?);
    }
    Ok(samples)
}

/// The q-th percentile (nearest-rank) of the noise-limited instantaneous
/// SINR at a given attenuation constant, in dB.
fn percentile_db(samples: &mut [SinrSample], rho_constant: f64, q: f64) -> f64 {
    let n = samples.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    let value = |s: &SinrSample| rho_constant * s.signal / s.noise;
    let (_, pivot, _) =
        samples.select_nth_unstable_by(idx, |a, b| value(a).total_cmp(&value(b)));
    10.0 * value(pivot).log10()
}

/// Calibrates the attenuation constant ϱ so that the chosen percentile of
/// the pooled noise-limited instantaneous SINR hits the target, by monotone
/// bisection on ln ϱ over [1e-12, 1e12].
///
/// The percentile is monotone increasing in ϱ (every sample is), so
/// bisection is exact up to the stopping width; sampling error is governed
/// by `settings.drops × settings.fading_trials`. See
/// [`collect_sinr_samples`] for why the objective excludes interference.
pub fn calibrate_rho_constant(
    profile: &BandProfile,
    ring: &RingSpec,
    geom: &CellGeometry,
    tie_los_to_ring: bool,
    settings: &CalibrationSettings,
    seed: u64,
) -> Result<f64> {
    let mut samples =
        collect_sinr_samples(profile, ring, geom, tie_los_to_ring, settings, seed)?;
    let (mut lo, mut hi) = (1e-12f64, 1e12f64);
    let q = settings.percentile;
    let target = settings.target_db;
    let mut lo_db = percentile_db(&mut samples, lo, q);
    let mut hi_db = percentile_db(&mut samples, hi, q);
    if lo_db > target || hi_db < target {
        return Err(Error::CalibrationBracket { lo, hi, lo_db, hi_db });
    }
    // The percentile is Lipschitz ≤ 1 in dB per dB of ϱ, so the dB window
    // at least halves with the ln-ϱ interval and the loop terminates.
    while hi_db - lo_db > settings.tolerance_db {
        let mid = ((lo.ln() + hi.ln()) * 0.5).exp();
        let mid_db = percentile_db(&mut samples, mid, q);
        if mid_db < target {
            lo = mid;
            lo_db = mid_db;
        } else {
            hi = mid;
            hi_db = mid_db;
        }
    }
    Ok(((lo.ln() + hi.ln()) * 0.5).exp())
}

/// Evaluates the calibration percentile (noise-limited, dB) at a fixed
/// attenuation constant — the replay oracle for calibration and the
/// building block for its tests.
pub fn evaluate_sinr_percentile_db(
    profile: &BandProfile,
    ring: &RingSpec,
    geom: &CellGeometry,
    tie_los_to_ring: bool,
    settings: &CalibrationSettings,
    rho_constant: f64,
    seed: u64,
) -> Result<f64> {
    let mut samples =
        collect_sinr_samples(profile, ring, geom, tie_los_to_ring, settings, seed)?;
    Ok(percentile_db(&mut samples, rho_constant, settings.percentile))
}
