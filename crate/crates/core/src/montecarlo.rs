//! Direct simulator of the per-terminal uplink SINR and the ergodic sum
//! spectral efficiency, by fading-trial averaging.
//!
//! This module is the ground truth the closed-form approximations are
//! tested against: it also provides the moment oracle (sample moments of
//! the channel norm and cross products) and empirical CDFs over drops.
//!
//! Determinism contract: every estimator is a pure function of
//! `(scenario, seed, trials)`. Each trial draws from its own counter-based
//! substream keyed by trial index, and reductions run as a pairwise tree in
//! index order — worker count and scheduling never change any digit of the
//! output. The transmitted symbols and additive noise are never sampled:
//! conditioned on the channel matrix, the SINR expression already embodies
//! unit symbol energy and unit noise power, which is exactly the quantity
//! of interest and has lower variance.

use std::sync::Arc;

use rand::Rng;

use crate::channel::{rice_mix, steering, synthesize_from_parts, RiceMix};
use crate::correlation::CorrelationCache;
use crate::largescale::TerminalProfile;
use crate::numerics::{substream, CMatrix, CVector, HermitianMatrix};
use crate::{Error, Result};

/// Two-sided 95% normal quantile used for estimator half-widths.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// System-level constants of a simulation scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemConfig {
    /// Receive antennas M.
    pub antennas: usize,
    /// Number of terminals L.
    pub terminals: usize,
    /// Average uplink SNR ρ (linear; noise power is one).
    pub snr: f64,
}

/// A frozen large-scale scenario with everything per-trial work needs
/// precomputed: Ricean mixture weights, steering vectors, correlation
/// matrices and their square roots (shared through a [`CorrelationCache`]).
#[derive(Clone)]
pub struct Scenario {
    config: SystemConfig,
    terminals: Vec<TerminalProfile>,
    mixes: Vec<RiceMix>,
    steers: Vec<CVector>,
    matrices: Vec<Arc<HermitianMatrix>>,
    roots: Vec<Arc<CMatrix>>,
}

impl Scenario {
    /// Validates the profiles against the config and precomputes the
    /// per-terminal state.
    pub fn build(
        config: SystemConfig,
        terminals: Vec<TerminalProfile>,
        cache: &CorrelationCache,
    ) -> Result<Self> {
        if terminals.is_empty() {
            return Err(Error::InvalidParameter {
                name: "terminals",
                reason: "scenario needs at least one terminal".into(),
            });
        }
        if terminals.len() != config.terminals {
            return Err(Error::DimensionMismatch {
                expected: config.terminals,
                actual: terminals.len(),
            });
        }
        if !(config.snr > 0.0 && config.snr.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "snr",
                reason: format!("must be positive and finite, got {}", config.snr),
            });
        }
        let mut mixes = Vec::with_capacity(terminals.len());
        let mut steers = Vec::with_capacity(terminals.len());
        let mut matrices = Vec::with_capacity(terminals.len());
        let mut roots = Vec::with_capacity(terminals.len());
        for t in &terminals {
            if t.ring.antennas != config.antennas {
                return Err(Error::DimensionMismatch {
                    expected: config.antennas,
                    actual: t.ring.antennas,
                });
            }
            if !(t.link_gain > 0.0 && t.link_gain.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "link_gain",
                    reason: format!("must be positive and finite, got {}", t.link_gain),
                });
            }
            mixes.push(rice_mix(t.rice_k)?);
            steers.push(steering(t.los_azimuth, t.ring.antennas, t.ring.spacing));
            matrices.push(cache.matrix(&t.ring));
            roots.push(cache.sqrt(&t.ring)?);
        }
        Ok(Self { config, terminals, mixes, steers, matrices, roots })
    }

    /// System constants.
    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    /// The terminal profiles in terminal order.
    pub fn terminals(&self) -> &[TerminalProfile] {
        &self.terminals
    }

    /// Linear link gains in terminal order.
    pub fn link_gains(&self) -> Vec<f64> {
        self.terminals.iter().map(|t| t.link_gain).collect()
    }

    /// Correlation matrix of terminal `l`.
    pub fn correlation(&self, l: usize) -> &Arc<HermitianMatrix> {
        &self.matrices[l]
    }

    /// Steering vector of terminal `l`.
    pub fn steering(&self, l: usize) -> &CVector {
        &self.steers[l]
    }

    /// One fast-fading realization of the M×L channel matrix (column per
    /// terminal, drawn in terminal order from the given stream).
    pub fn draw_channel<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CMatrix> {
        let m = self.config.antennas;
        let l_count = self.terminals.len();
        let mut g = CMatrix::zeros(m, l_count);
        for l in 0..l_count {
            let col = synthesize_from_parts(&self.mixes[l], &self.steers[l], &self.roots[l], rng)?;
            g.set_column(l, &col);
        }
        Ok(g)
    }
}

/// Monte Carlo estimate: sample mean, 95% confidence half-width under the
/// normal approximation, and the trial count it came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorOutput {
    /// Sample mean.
    pub mean: f64,
    /// 95% confidence half-width (`Z_95 · sd / sqrt(trials)`).
    pub half_width_95: f64,
    /// Number of trials averaged.
    pub trials: usize,
}

impl EstimatorOutput {
    /// Builds the estimate from raw per-trial samples (at least 2), using
    /// tree summation for order-independent reproducibility.
    pub fn from_samples(samples: &[f64]) -> Self {
        assert!(samples.len() >= 2, "estimator needs at least two samples");
        // Constant samples (degenerate distributions, e.g. a deterministic
        // channel) get an exact zero spread instead of summation roundoff.
        let first = samples[0];
        if samples.iter().all(|&x| x == first) {
            return EstimatorOutput { mean: first, half_width_95: 0.0, trials: samples.len() };
        }
        let n = samples.len() as f64;
        let mean = tree_sum(samples) / n;
        let centered: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = tree_sum(&centered) / (n - 1.0);
        EstimatorOutput {
            mean,
            half_width_95: Z_95 * (var / n).sqrt(),
            trials: samples.len(),
        }
    }
}

/// Pairwise tree summation in index order: deterministic regardless of how
/// the samples were produced, and with O(log n) roundoff growth.
pub fn tree_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let mid = n / 2;
            tree_sum(&xs[..mid]) + tree_sum(&xs[mid..])
        }
    }
}

/// Maps `f` over `0..count`, in parallel when the `parallel` feature is on.
/// The output is ordered by index, so downstream reductions are
/// deterministic either way.
#[cfg(feature = "parallel")]
pub(crate) fn par_map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..count`, in parallel when the `parallel` feature is on.
/// The output is ordered by index, so downstream reductions are
/// deterministic either way.
#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

/// Instantaneous SINR of terminal `l` for one channel realization `g`
/// (M×L), link gains `β`, and SNR `ρ`:
///
/// ```text
/// ρ·β_l·‖g_l‖⁴ / (‖g_l‖² + ρ·Σ_{k≠l} β_k·|g_lᴴ·g_k|²)
/// ```
pub fn instantaneous_sinr(g: &CMatrix, gains: &[f64], snr: f64, l: usize) -> Result<f64> {
    let l_count = g.ncols();
    if gains.len() != l_count {
        return Err(Error::DimensionMismatch { expected: l_count, actual: gains.len() });
    }
    if l >= l_count {
        return Err(Error::DimensionMismatch { expected: l_count, actual: l });
    }
    let gl = g.column(l);
    let norm_sq = gl.norm_squared();
    if norm_sq == 0.0 {
        return Err(Error::ZeroChannelColumn { terminal: l });
    }
    let mut interference = 0.0;
    for k in 0..l_count {
        if k != l {
            interference += gains[k] * gl.dotc(&g.column(k)).norm_sqr();
        }
    }
    Ok(snr * gains[l] * norm_sq * norm_sq / (norm_sq + snr * interference))
}

/// All L instantaneous SINRs of one realization, sharing the pairwise
/// cross-product work (the hot path of every estimator).
fn instantaneous_sinr_all(g: &CMatrix, gains: &[f64], snr: f64) -> Result<Vec<f64>> {
    let l_count = g.ncols();
    let norms: Vec<f64> = (0..l_count).map(|l| g.column(l).norm_squared()).collect();
    let mut cross = vec![0.0; l_count * l_count];
    for l in 0..l_count {
        if norms[l] == 0.0 {
            return Err(Error::ZeroChannelColumn { terminal: l });
        }
        for k in (l + 1)..l_count {
            let c = g.column(l).dotc(&g.column(k)).norm_sqr();
            cross[l * l_count + k] = c;
            cross[k * l_count + l] = c;
        }
    }
    Ok((0..l_count)
        .map(|l| {
            let interference: f64 = (0..l_count)
                .filter(|&k| k != l)
                .map(|k| gains[k] * cross[l * l_count + k])
                .sum();
            snr * gains[l] * norms[l] * norms[l] / (norms[l] + snr * interference)
        })
        .collect())
}

/// Per-trial samples of every terminal's SINR: `samples[l][t]`.
fn sinr_samples(s: &Scenario, trials: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let gains = s.link_gains();
    let snr = s.config.snr;
    let per_trial = par_map_indexed(trials, |t| {
        let mut rng = substream(seed, t as u64);
        let g = s.draw_channel(&mut rng)?;
        instantaneous_sinr_all(&g, &gains, snr)
    });
    let l_count = s.terminals.len();
    let mut by_terminal = vec![Vec::with_capacity(trials); l_count];
    for trial in per_trial {
        for (l, v) in trial?.into_iter().enumerate() {
            by_terminal[l].push(v);
        }
    }
    Ok(by_terminal)
}

/// Monte Carlo estimate of the expected SINR of terminal `l` over i.i.d.
/// fading (large-scale state frozen in the scenario).
pub fn estimate_expected_sinr(
    s: &Scenario,
    l: usize,
    trials: usize,
    seed: u64,
) -> Result<EstimatorOutput> {
    Ok(estimate_expected_sinr_all(s, trials, seed)?.swap_remove(l))
}

/// Expected-SINR estimates for all terminals from a single set of channel
/// draws (one result per terminal, in terminal order).
pub fn estimate_expected_sinr_all(
    s: &Scenario,
    trials: usize,
    seed: u64,
) -> Result<Vec<EstimatorOutput>> {
    require_trials(trials, 100)?;
    let by_terminal = sinr_samples(s, trials, seed)?;
    Ok(by_terminal.iter().map(|v| EstimatorOutput::from_samples(v)).collect())
}

/// Monte Carlo evaluation of the moment ratio behind the closed-form
/// expected-SINR approximation, for every terminal: the sample means of
/// `‖g_l‖⁴`, `‖g_l‖²`, and the gain-weighted cross moments are plugged
/// into the same signal/(noise+interference) ratio the closed form uses.
///
/// This is the comparator for validating the closed forms at scale: the
/// approximation targets the ratio of expectations, which parts ways with
/// the mean of the instantaneous ratio ([`estimate_expected_sinr`])
/// whenever the denominator spreads — most visibly deep in saturation,
/// where the mean of ratios sits well above the ratio of means.
pub fn moment_ratio_sinr_all(s: &Scenario, trials: usize, seed: u64) -> Result<Vec<f64>> {
    require_trials(trials, 100)?;
    let gains = s.link_gains();
    let snr = s.config.snr;
    let l_count = s.terminals.len();
    // Per trial, per terminal: ‖g_l‖⁴, ‖g_l‖², Σ_{k≠l} β_k·|g_lᴴ·g_k|².
    let per_trial = par_map_indexed(trials, |t| -> Result<Vec<[f64; 3]>> {
        let mut rng = substream(seed, t as u64);
        let g = s.draw_channel(&mut rng)?;
        let norms: Vec<f64> = (0..l_count).map(|l| g.column(l).norm_squared()).collect();
        let mut cross = vec![0.0; l_count * l_count];
        for l in 0..l_count {
            for k in (l + 1)..l_count {
                let c = g.column(l).dotc(&g.column(k)).norm_sqr();
                cross[l * l_count + k] = c;
                cross[k * l_count + l] = c;
            }
        }
        Ok((0..l_count)
            .map(|l| {
                let interference: f64 = (0..l_count)
                    .filter(|&k| k != l)
                    .map(|k| gains[k] * cross[l * l_count + k])
                    .sum();
                [norms[l] * norms[l], norms[l], interference]
            })
            .collect())
    });
    let mut fourth = vec![Vec::with_capacity(trials); l_count];
    let mut second = vec![Vec::with_capacity(trials); l_count];
    let mut interference = vec![Vec::with_capacity(trials); l_count];
    for trial in per_trial {
        for (l, [f, s2, i]) in trial?.into_iter().enumerate() {
            fourth[l].push(f);
            second[l].push(s2);
            interference[l].push(i);
        }
    }
    let n = trials as f64;
    Ok((0..l_count)
        .map(|l| {
            let signal = snr * gains[l] * tree_sum(&fourth[l]) / n;
            let denom = tree_sum(&second[l]) / n + snr * tree_sum(&interference[l]) / n;
            signal / denom
        })
        .collect())
}

/// Monte Carlo estimate of the ergodic sum spectral efficiency
/// `E[Σ_l log2(1 + SINR_l)]` (bits/s/Hz) over i.i.d. fading.
pub fn ergodic_sum_se(s: &Scenario, trials: usize, seed: u64) -> Result<EstimatorOutput> {
    require_trials(trials, 100)?;
    let gains = s.link_gains();
    let snr = s.config.snr;
    let per_trial = par_map_indexed(trials, |t| {
        let mut rng = substream(seed, t as u64);
        let g = s.draw_channel(&mut rng)?;
        let sinrs = instantaneous_sinr_all(&g, &gains, snr)?;
        Ok(sinrs.iter().map(|&v| (1.0 + v).log2()).sum::<f64>())
    });
    let samples = per_trial.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(EstimatorOutput::from_samples(&samples))
}

/// Sample moments the closed forms are validated against.
#[derive(Clone, Copy, Debug)]
pub struct MomentEstimates {
    /// Sample mean of `‖g_l‖⁴`.
    pub norm_fourth: EstimatorOutput,
    /// Sample mean of `|g_lᴴ·g_k|²`.
    pub cross_second: EstimatorOutput,
    /// Sample mean of `‖g_l‖²`.
    pub norm_second: EstimatorOutput,
}

/// Estimates the channel moments of terminals `l` and `k ≠ l` over i.i.d.
/// fading: the fourth moment of the norm, the squared cross product, and
/// the second moment of the norm.
pub fn moment_oracle(
    s: &Scenario,
    l: usize,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<MomentEstimates> {
    require_trials(trials, 10_000)?;
    if l == k || l >= s.terminals.len() || k >= s.terminals.len() {
        return Err(Error::InvalidParameter {
            name: "terminal_indices",
            reason: format!("need two distinct terminals, got l={l}, k={k}"),
        });
    }
    let per_trial = par_map_indexed(trials, |t| {
        let mut rng = substream(seed, t as u64);
        let g = s.draw_channel(&mut rng)?;
        let gl = g.column(l);
        let norm_sq = gl.norm_squared();
        let cross = gl.dotc(&g.column(k)).norm_sqr();
        Ok([norm_sq * norm_sq, cross, norm_sq])
    });
    let mut fourth = Vec::with_capacity(trials);
    let mut cross = Vec::with_capacity(trials);
    let mut second = Vec::with_capacity(trials);
    for trial in per_trial {
        let [f, c, s2]: [f64; 3] = trial?;
        fourth.push(f);
        cross.push(c);
        second.push(s2);
    }
    Ok(MomentEstimates {
        norm_fourth: EstimatorOutput::from_samples(&fourth),
        cross_second: EstimatorOutput::from_samples(&cross),
        norm_second: EstimatorOutput::from_samples(&second),
    })
}

/// Right-continuous empirical CDF: the sorted unique sample values paired
/// with their cumulative probabilities (the final level is exactly 1).
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: format!("empirical CDF needs at least 2 samples, got {}", samples.len()),
        });
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "NaN sample".into(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut cdf: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (i, &v) in sorted.iter().enumerate() {
        let level = (i + 1) as f64 / n;
        match cdf.last_mut() {
            Some(last) if last.0 == v => last.1 = level,
            _ => cdf.push((v, level)),
        }
    }
    Ok(cdf)
}

fn require_trials(trials: usize, minimum: usize) -> Result<()> {
    if trials < minimum {
        return Err(Error::InvalidParameter {
            name: "trials",
            reason: format!("need at least {minimum}, got {trials}"),
        });
    }
    Ok(())
}
