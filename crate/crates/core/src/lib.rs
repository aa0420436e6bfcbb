//! Simulation and analysis core for the uplink of a multiuser MIMO system
//! with maximum-ratio combining under spatially correlated Ricean fading.
//!
//! The crate has two pipelines that must agree:
//! - `analytic`: closed-form moment formulas for the per-terminal expected
//!   SINR and the ergodic sum spectral efficiency,
//! - `montecarlo`: a direct simulator of the same quantities by fading-trial
//!   averaging, which doubles as the oracle that validates the closed forms.
//!
//! Supporting layers: `numerics` (Hermitian linear algebra + seeded
//! sampling), `correlation` (one-ring spatial correlation matrices by
//! quadrature), `largescale` (cell geometry, path loss, shadowing, Rice
//! factors, noise calibration), `channel` (fast-fading synthesis), and
//! `experiment` (config-driven sweeps, CDFs, validation, CSV rendering —
//! shared by the CLI and the browser demo).
//!
//! Everything is deterministic for a fixed seed: random streams are
//! counter-based substreams per work unit and reductions run in a fixed
//! tree order, so results never depend on thread count.

pub mod analytic;
pub mod channel;
pub mod correlation;
mod error;
pub mod experiment;
pub mod largescale;
pub mod montecarlo;
pub mod numerics;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
