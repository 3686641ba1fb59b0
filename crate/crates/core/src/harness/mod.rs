//! Monte-Carlo harness.

pub mod config;
pub mod experiments;
pub mod sweep;

pub use config::HarnessConfig;
pub use sweep::{run_sweep, Method, SweepSpec, SweepVariable, TrialRecord};
