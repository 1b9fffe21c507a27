//! Experiment runner for optimized initial design domains: the outer
//! MAP-Elites loop, the plain SIMP baseline, statistics and image export.

pub mod baseline;
pub mod config;
pub mod export;
pub mod oidd;
pub mod pgm;
pub mod rng;
pub mod stats;

pub use config::{RunConfig, Settings};
