//! Core computations for multi-factor systematic crypto strategies.
//!
//! Everything here is pure and allocation-only (`no_std` + `alloc`): factor-panel
//! alignment, rule-based momentum and reversion signals, volatility-targeted
//! portfolio construction, performance statistics, a small reverse-mode
//! autodiff engine and the Multi-Factor Inception Network built on top of it.
//! File formats, orchestration and the command line live in `mfin-cli`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod calendar;
pub mod ew;
pub mod frame;
pub mod ingest;
pub mod math;
pub mod metrics;
pub mod mfin;
pub mod portfolio;
pub mod signals;
pub mod splits;
pub mod strategies;

/// Trading days per year used for every annualisation.
pub const TRADING_DAYS: f64 = 252.0;

/// Annualised volatility target for both scaling layers.
pub const VOL_TARGET: f64 = 0.15;
