//! Browser bindings for the MU-MIMO/MRC laboratory: a thin JSON facade
//! over the core crate for a single static demo page.
//!
//! Three operations, all returning JSON strings so the page needs no
//! generated TypeScript: [`correlation_summary`] inspects a one-ring
//! correlation matrix, [`sinr_sweep`] runs a small expected-SINR sweep,
//! and [`sum_se_cdf`] builds a sum-spectral-efficiency CDF over drops.
//!
//! The sweep and CDF calls take the same JSON experiment config as the
//! CLI, with sizes capped to keep a single-threaded browser tab
//! responsive, and they require an explicit attenuation constant — the
//! reference calibration run is far too heavy for a page.

use mrclab_core::correlation::{one_ring_matrix, OneRingParams};
use mrclab_core::experiment::{
    run_sinr_sweep, run_sum_se_cdf, ExperimentConfig, RhoConstantMode,
};
use mrclab_core::numerics::hermitian_eig;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Largest array the correlation explorer will build (an M×M heatmap plus
/// an eigendecomposition stay interactive up to this size).
const MAX_EXPLORER_ANTENNAS: u32 = 128;
/// Caps for the simulation calls (fixed, page-scale budgets).
const MAX_ANTENNAS: usize = 64;
const MAX_TERMINALS: usize = 8;
const MAX_TRIALS: usize = 20_000;
const MAX_DROPS: usize = 300;
const MAX_SWEEP_POINTS: usize = 25;

fn correlation_summary_impl(
    spread_deg: f64,
    central_deg: f64,
    spacing: f64,
    antennas: u32,
) -> Result<String, String> {
    if antennas == 0 || antennas > MAX_EXPLORER_ANTENNAS {
        return Err(format!("antennas must lie in 1..={MAX_EXPLORER_ANTENNAS}"));
    }
    let m = antennas as usize;
    let params = OneRingParams::new(
        spread_deg.to_radians(),
        central_deg.to_radians(),
        spacing,
        m,
    )
    .map_err(|e| e.to_string())?;
    let r = one_ring_matrix(&params);
    let magnitude: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| r.matrix()[(i, j)].norm()).collect())
        .collect();
    let eigenvalues: Vec<f64> = hermitian_eig(&r).map_err(|e| e.to_string())?.eigenvalues.iter().copied().collect();
    let effective_rank = r.trace_re() * r.trace_re() / r.squared_trace();
    Ok(json!({
        "antennas": m,
        "magnitude": magnitude,
        "eigenvalues": eigenvalues,
        "effective_rank": effective_rank,
    })
    .to_string())
}

/// Parses a config and enforces the page-scale budgets.
fn page_config(config_json: &str) -> Result<ExperimentConfig, String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(|e| e.to_string())?;
    if cfg.antennas > MAX_ANTENNAS {
        return Err(format!("antennas capped at {MAX_ANTENNAS} in the browser demo"));
    }
    if cfg.terminals > MAX_TERMINALS {
        return Err(format!("terminals capped at {MAX_TERMINALS} in the browser demo"));
    }
    if cfg.trials.unwrap_or(0) > MAX_TRIALS {
        return Err(format!("trials capped at {MAX_TRIALS} in the browser demo"));
    }
    if cfg.drops.unwrap_or(0) > MAX_DROPS {
        return Err(format!("drops capped at {MAX_DROPS} in the browser demo"));
    }
    if cfg.rho_sweep_db.len() > MAX_SWEEP_POINTS {
        return Err(format!("rho_sweep_db capped at {MAX_SWEEP_POINTS} points in the browser demo"));
    }
    if matches!(cfg.rho_constant, RhoConstantMode::Calibrate) {
        return Err(
            "the reference calibration is too heavy for the page; set \
             rho_constant to {\"explicit\": <value>} (e.g. a constant from \
             a native `mrclab calibrate` run)"
                .to_string(),
        );
    }
    Ok(cfg)
}

fn sinr_sweep_impl(config_json: &str) -> Result<String, String> {
    let cfg = page_config(config_json)?;
    let out = run_sinr_sweep(&cfg).map_err(|e| e.to_string())?;
    let rows: Vec<_> = out
        .rows
        .iter()
        .map(|r| {
            json!({
                "rho_db": r.rho_db,
                "terminal": r.terminal,
                "analytic_db": r.sinr_analytic_db,
                "simulated_db": r.sinr_sim_db,
                "halfwidth_db": r.sinr_sim_halfwidth_db,
            })
        })
        .collect();
    let sum_se: Vec<_> = out
        .rows
        .iter()
        .filter(|r| r.terminal == 0)
        .map(|r| {
            json!({
                "rho_db": r.rho_db,
                "analytic": r.sumse_analytic,
                "simulated": r.sumse_sim,
                "halfwidth": r.sumse_sim_halfwidth,
            })
        })
        .collect();
    Ok(json!({
        "rho_constant": out.rho_constant.value,
        "terminals": out.config.terminals,
        "rows": rows,
        "sum_se": sum_se,
    })
    .to_string())
}

fn sum_se_cdf_impl(config_json: &str) -> Result<String, String> {
    let cfg = page_config(config_json)?;
    let out = run_sum_se_cdf(&cfg).map_err(|e| e.to_string())?;
    Ok(json!({
        "rho_constant": out.rho_constant.value,
        "analytic": out.analytic,
        "simulated": out.simulated,
    })
    .to_string())
}

/// One-ring correlation matrix explorer: entry magnitudes (row-major),
/// ascending eigenvalues, and the effective rank `tr(R)²/tr(R²)`.
/// Angles in degrees, spacing in wavelengths.
#[wasm_bindgen]
pub fn correlation_summary(
    spread_deg: f64,
    central_deg: f64,
    spacing: f64,
    antennas: u32,
) -> Result<String, JsError> {
    correlation_summary_impl(spread_deg, central_deg, spacing, antennas)
        .map_err(|m| JsError::new(&m))
}

/// Expected-SINR sweep on one frozen drop (JSON config in, JSON rows out).
#[wasm_bindgen]
pub fn sinr_sweep(config_json: &str) -> Result<String, JsError> {
    sinr_sweep_impl(config_json).map_err(|m| JsError::new(&m))
}

/// Sum-SE CDF over drops at the grid's first SNR point.
#[wasm_bindgen]
pub fn sum_se_cdf(config_json: &str) -> Result<String, JsError> {
    sum_se_cdf_impl(config_json).map_err(|m| JsError::new(&m))
}
