//! Near-field channel estimation from compressed sample covariances.
//!
//! A hybrid receiver observes `y(n) = Wᴴx(n)` through an `M × N_RF` combiner
//! and keeps only the `N_RF × N_RF` sample covariance. This crate provides:
//!
//! - [`manifold`]: ULA geometry and near-field steering vectors (exact
//!   spherical wave and the Fresnel chirp form).
//! - [`scene`]: seeded Monte-Carlo scenario generation and hybrid combining.
//! - [`clkl`]: the curvature-learning KL covariance-fitting estimator.
//! - [`psomp`]: a polar-dictionary simultaneous OMP baseline.
//! - [`crb`]: the compressed-domain stochastic Cramér–Rao bound.
//! - [`metrics`]: channel NMSE, Hungarian path matching and failure rules.
//! - [`harness`]: sweeps, ablations and diagnostics writing CSV records.

pub mod atoms;
pub mod clkl;
pub mod crb;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod linalg;
pub mod manifold;
pub mod metrics;
pub mod psomp;
pub mod scene;

pub use error::{Error, Result};
pub use estimate::{EstimateResult, EstimatedPath};
pub use manifold::{ArrayConfig, PathParam};
pub use scene::{CompressedObservation, ScenarioConfig, Scene, SourceModel, TruthModel};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;
