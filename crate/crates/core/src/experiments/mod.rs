//! Dataset I/O, synthetic generation, splits, metrics, baselines, sweeps.

pub mod baselines;
pub mod config;
pub mod data;
pub mod metrics;
pub mod split;
pub mod sweep;
pub mod synthetic;
