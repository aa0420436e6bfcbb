//! Fast-fading channel synthesis.
//!
//! A terminal's channel to the array is a Ricean mixture of a deterministic
//! line-of-sight ray and a spatially correlated scattered component:
//!
//! ```text
//! g = η·h̄ + γ·R^{1/2}·h̃,    η² = K/(K+1),  γ² = 1/(K+1),  h̃ ~ CN(0, I)
//! ```
//!
//! where `h̄` is the uniform-linear-array steering vector of the LoS azimuth
//! and `R` the terminal's one-ring correlation matrix. The mixture keeps
//! `E[‖g‖²] = M` for every `(K, R, φ′)`.

use std::f64::consts::PI;

use rand::Rng;

use crate::largescale::TerminalProfile;
use crate::numerics::{sample_cn, C64, CMatrix, CVector};
use crate::{Error, Result};

/// Amplitude weights of the LoS and scattered parts of the Ricean mixture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiceMix {
    /// LoS amplitude weight η = sqrt(K/(K+1)).
    pub los_weight: f64,
    /// Scattered amplitude weight γ = sqrt(1/(K+1)).
    pub scatter_weight: f64,
}

/// Splits a linear Rice factor K ≥ 0 into amplitude weights with
/// η² + γ² = 1. `K = +∞` maps to the pure-LoS limit (1, 0).
pub fn rice_mix(k: f64) -> Result<RiceMix> {
    if k.is_nan() || k < 0.0 {
        return Err(Error::InvalidParameter {
            name: "rice_k",
            reason: format!("must be a nonnegative linear Rice factor, got {k}"),
        });
    }
    if k.is_infinite() {
        return Ok(RiceMix { los_weight: 1.0, scatter_weight: 0.0 });
    }
    Ok(RiceMix {
        los_weight: (k / (k + 1.0)).sqrt(),
        scatter_weight: (1.0 / (k + 1.0)).sqrt(),
    })
}

/// Uniform-linear-array response to a plane wave from azimuth `φ′`:
/// entry m (0-based) is `exp(j·2π·d·m·cos φ′)`, so `‖h̄‖² = M`.
pub fn steering(azimuth: f64, antennas: usize, spacing: f64) -> CVector {
    assert!(antennas >= 1, "steering vector needs at least one antenna");
    let step = 2.0 * PI * spacing * azimuth.cos();
    CVector::from_fn(antennas, |m, _| {
        let phase = step * m as f64;
        C64::new(phase.cos(), phase.sin())
    })
}

/// One fast-fading realization for a terminal: `g = η·h̄ + γ·F·h̃`.
///
/// `factor` must satisfy `F·Fᴴ = R` for the terminal's correlation matrix
/// — the M×M PSD square root or the rectangular quadrature factor from
/// [`crate::correlation::scatter_factor`] both qualify. The caller caches
/// it; recomputing per trial would dominate.
pub fn synthesize<R: Rng + ?Sized>(
    profile: &TerminalProfile,
    factor: &CMatrix,
    rng: &mut R,
) -> Result<CVector> {
    let mix = rice_mix(profile.rice_k)?;
    let los = steering(profile.los_azimuth, profile.ring.antennas, profile.ring.spacing);
    synthesize_from_parts(&mix, &los, factor, rng)
}

/// Hot-path variant of [`synthesize`] with the deterministic parts
/// (mixture weights, steering vector) precomputed by the caller.
///
/// The i.i.d. vector h̃ has `factor.ncols()` entries, so the scattered part
/// `F·h̃` is CN(0, F·Fᴴ) = CN(0, R) for any shape of factor.
pub fn synthesize_from_parts<R: Rng + ?Sized>(
    mix: &RiceMix,
    los: &CVector,
    factor: &CMatrix,
    rng: &mut R,
) -> Result<CVector> {
    if los.len() != factor.nrows() {
        return Err(Error::DimensionMismatch {
            expected: factor.nrows(),
            actual: los.len(),
        });
    }
    let scattered = factor * sample_cn(factor.ncols(), rng);
    Ok(los * C64::new(mix.los_weight, 0.0) + scattered * C64::new(mix.scatter_weight, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::{one_ring_matrix, OneRingParams};
    use crate::numerics::{hermitian_eig, psd_sqrt, quad_form, substream, CMatrix};

    #[test]
    fn rice_mix_limits() {
        let rayleigh = rice_mix(0.0).unwrap();
        assert_eq!(rayleigh.los_weight, 0.0);
        assert_eq!(rayleigh.scatter_weight, 1.0);

        let equal = rice_mix(1.0).unwrap();
        assert!((equal.los_weight - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((equal.scatter_weight - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);

        let los = rice_mix(1e12).unwrap();
        assert!((los.los_weight - 1.0).abs() < 1e-12);
        assert!((los.scatter_weight - 1e-6).abs() < 1e-18);

        let pure = rice_mix(f64::INFINITY).unwrap();
        assert_eq!((pure.los_weight, pure.scatter_weight), (1.0, 0.0));

        assert!(rice_mix(-0.1).is_err());
        assert!(rice_mix(f64::NAN).is_err());
    }

    #[test]
    fn rice_mix_weights_are_normalized() {
        for &k in &[0.0, 0.01, 0.5, 1.0, 3.16, 10.0, 1e6] {
            let mix = rice_mix(k).unwrap();
            let sum = mix.los_weight.powi(2) + mix.scatter_weight.powi(2);
            assert!((sum - 1.0).abs() < 1e-12, "K={k}: η²+γ²={sum}");
        }
    }

    #[test]
    fn steering_broadside_is_all_ones() {
        let h = steering(PI / 2.0, 6, 0.5);
        for m in 0..6 {
            assert!((h[m] - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn steering_endfire_two_elements() {
        // cos(0) = 1, half-wavelength spacing: second entry is e^{j·pi} = −1.
        let h = steering(0.0, 2, 0.5);
        assert!((h[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((h[1] - C64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_norm_is_antenna_count() {
        for &(az, m, d) in &[(0.3, 1usize, 0.5), (1.1, 16, 0.5), (4.0, 64, 0.7)] {
            let h = steering(az, m, d);
            assert!((h.norm_squared() - m as f64).abs() < 1e-11 * m as f64);
            for i in 0..m {
                assert!((h[i].norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn steering_quadratic_form_respects_eigenvalue_bound() {
        // xᴴRx for a unit-modulus vector of norm² M is at most M·λ_max.
        let p = OneRingParams::new(2.0 * PI, 0.0, 0.5, 4).unwrap();
        let r = one_ring_matrix(&p);
        let x = steering(PI / 2.0, 4, 0.5);
        let v = quad_form(&x, &r).unwrap();
        let lam_max = hermitian_eig(&r).unwrap().eigenvalues[3];
        assert!(v >= 0.0);
        assert!(v <= 4.0 * lam_max + 1e-12);
    }

    fn test_profile(k: f64, spread: f64, phi: f64, m: usize) -> TerminalProfile {
        TerminalProfile {
            distance_m: 50.0,
            is_los: k > 0.0,
            rice_k: k,
            link_gain: 1.0,
            shadow: 1.0,
            los_azimuth: 0.9,
            ring: OneRingParams::new(spread, phi, 0.5, m).unwrap(),
        }
    }

    #[test]
    fn synthesize_pure_los_equals_steering() {
        let profile = test_profile(1e12, 0.3, 1.0, 8);
        let r_sqrt = psd_sqrt(&one_ring_matrix(&profile.ring)).unwrap().into_matrix();
        let g = synthesize(&profile, &r_sqrt, &mut substream(3, 0)).unwrap();
        let h = steering(profile.los_azimuth, 8, 0.5);
        for i in 0..8 {
            assert!((g[i] - h[i]).norm() < 1e-5, "entry {i}: {} vs {}", g[i], h[i]);
        }
    }

    #[test]
    fn synthesize_rejects_dimension_mismatch() {
        let profile = test_profile(1.0, 0.3, 1.0, 8);
        let wrong = CMatrix::identity(4, 4);
        assert!(matches!(
            synthesize(&profile, &wrong, &mut substream(3, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn synthesize_mean_power_is_antenna_count() {
        // E[‖g‖²] = M for arbitrary (K, R): Rayleigh-identity and a Ricean
        // correlated case, 10⁵ trials each.
        for &(k, spread) in &[(0.0, 2.0 * PI), (3.16, 0.35)] {
            let m = 4;
            let profile = test_profile(k, spread, 0.7, m);
            let r_sqrt = psd_sqrt(&one_ring_matrix(&profile.ring)).unwrap().into_matrix();
            let trials = 100_000;
            let mut acc = 0.0;
            for t in 0..trials {
                let g = synthesize(&profile, &r_sqrt, &mut substream(11, t)).unwrap();
                acc += g.norm_squared();
            }
            let ratio = acc / (trials as f64 * m as f64);
            assert!(
                ratio > 0.99 && ratio < 1.01,
                "K={k}, spread={spread}: mean power ratio {ratio}"
            );
        }
    }

    #[test]
    fn synthesize_mean_is_los_part() {
        let m = 4;
        let profile = test_profile(2.0, 0.5, 2.2, m);
        let r_sqrt = psd_sqrt(&one_ring_matrix(&profile.ring)).unwrap().into_matrix();
        let trials = 100_000u64;
        let mut mean = CVector::zeros(m);
        for t in 0..trials {
            mean += synthesize(&profile, &r_sqrt, &mut substream(17, t)).unwrap();
        }
        mean /= C64::new(trials as f64, 0.0);
        let mix = rice_mix(profile.rice_k).unwrap();
        let los = steering(profile.los_azimuth, m, 0.5) * C64::new(mix.los_weight, 0.0);
        // Sample mean of the scattered part has standard error
        // γ/sqrt(trials) per entry; 5σ across M entries.
        let tol = 5.0 * mix.scatter_weight * (m as f64 / trials as f64).sqrt();
        assert!((mean - los).norm() < tol);
    }

    #[test]
    fn synthesize_scattered_covariance_matches_correlation() {
        // Sample covariance of (g − η·h̄) converges to γ²·R entrywise.
        let m = 4;
        let profile = test_profile(1.0, 0.6, 1.4, m);
        let r = one_ring_matrix(&profile.ring);
        let r_sqrt = psd_sqrt(&r).unwrap().into_matrix();
        let mix = rice_mix(profile.rice_k).unwrap();
        let los = steering(profile.los_azimuth, m, 0.5) * C64::new(mix.los_weight, 0.0);
        let trials = 1_000_000u64;
        let mut cov = CMatrix::zeros(m, m);
        for t in 0..trials {
            let d = synthesize(&profile, &r_sqrt, &mut substream(23, t)).unwrap() - &los;
            for i in 0..m {
                for j in 0..m {
                    cov[(i, j)] += d[i] * d[j].conj();
                }
            }
        }
        cov /= C64::new(trials as f64, 0.0);
        let target = r.matrix() * C64::new(mix.scatter_weight.powi(2), 0.0);
        let rel = (cov - &target).norm() / target.norm();
        assert!(rel < 0.01, "covariance relative error {rel}");
    }

    #[test]
    fn synthesize_accepts_rectangular_factors() {
        // The quadrature factor draws from the same law as the PSD square
        // root: scattered covariance converges to γ²·R entrywise.
        let m = 4;
        let profile = test_profile(1.0, 0.6, 1.4, m);
        let r = one_ring_matrix(&profile.ring);
        let factor = crate::correlation::scatter_factor(&profile.ring);
        assert!(factor.ncols() > factor.nrows());
        let mix = rice_mix(profile.rice_k).unwrap();
        let los = steering(profile.los_azimuth, m, 0.5) * C64::new(mix.los_weight, 0.0);
        let trials = 200_000u64;
        let mut cov = CMatrix::zeros(m, m);
        for t in 0..trials {
            let d = synthesize(&profile, &factor, &mut substream(29, t)).unwrap() - &los;
            for i in 0..m {
                for j in 0..m {
                    cov[(i, j)] += d[i] * d[j].conj();
                }
            }
        }
        cov /= C64::new(trials as f64, 0.0);
        let target = r.matrix() * C64::new(mix.scatter_weight.powi(2), 0.0);
        let rel = (cov - &target).norm() / target.norm();
        assert!(rel < 0.02, "covariance relative error {rel}");
    }

    #[test]
    fn synthesize_is_deterministic_per_substream() {
        let profile = test_profile(1.0, 0.4, 0.2, 8);
        let r_sqrt = psd_sqrt(&one_ring_matrix(&profile.ring)).unwrap().into_matrix();
        let a = synthesize(&profile, &r_sqrt, &mut substream(9, 5)).unwrap();
        let b = synthesize(&profile, &r_sqrt, &mut substream(9, 5)).unwrap();
        assert_eq!(a, b);
    }
}
