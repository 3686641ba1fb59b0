use crate::manifold::ArrayConfig;
use crate::CMat;

/// One estimated path. `theta` in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedPath {
    pub theta: f64,
    /// Inverse range `u`; zero for a far-field atom.
    pub inverse_range: f64,
    /// `1/u`, or the upper range bound for far-field atoms.
    pub range: f64,
    pub power: f64,
    /// Curvature `κ = c(θ)·u`.
    pub kappa: f64,
}

impl EstimatedPath {
    pub fn new(array: &ArrayConfig, theta: f64, inverse_range: f64, power: f64, range_max: f64) -> Self {
        let range = if inverse_range > 0.0 {
            (1.0 / inverse_range).min(range_max)
        } else {
            range_max
        };
        Self {
            theta,
            inverse_range,
            range,
            power,
            kappa: array.chirp_constant(theta) * inverse_range,
        }
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta.to_degrees()
    }
}

/// Warm-start initialisation of the per-angle inverse ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartKind {
    /// Ring-indexed `u_i = 1/(Z_Δ sin²θ_i)`, clipped to the bounds.
    Ring,
    /// Every atom at the nearest range, `u = u_max`.
    Near,
    /// Every atom at the farthest range, `u = u_min`.
    Far,
}

impl StartKind {
    /// One-based label (1 = ring, 2 = near, 3 = far).
    pub fn label(self) -> u8 {
        match self {
            Self::Ring => 1,
            Self::Near => 2,
            Self::Far => 3,
        }
    }
}

/// Per-start record of the power-only loop.
#[derive(Debug, Clone, PartialEq)]
pub struct StartSummary {
    pub kind: StartKind,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    /// Objective at `p = 0` followed by one entry per accepted iteration.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClklDiagnostics {
    /// Zero-based index into the starts that were run.
    pub winning_start: usize,
    pub starts: Vec<StartSummary>,
    /// Frozen noise estimate actually used by the loop.
    pub noise_estimate: f64,
    /// Atoms added to the active set from outside `{p > 0}`.
    pub padded_atoms: usize,
    pub empty_active_set: bool,
    pub scan_performed: bool,
}

impl ClklDiagnostics {
    pub fn winner(&self) -> &StartSummary {
        &self.starts[self.winning_start]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsompDiagnostics {
    pub selected_atoms: Vec<usize>,
    /// Frobenius norm of the pseudo-snapshot residual before each selection
    /// and after the last one.
    pub residual_norms: Vec<f64>,
    pub dictionary_size: usize,
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub paths: Vec<EstimatedPath>,
    /// Reconstructed channel `Ĥ` (`M × N`).
    pub channel: CMat,
    pub noise_estimate: f64,
    /// Least-squares reconstruction had to fall back to a rank-deficient
    /// pseudoinverse.
    pub rank_deficient: bool,
    pub clkl: Option<ClklDiagnostics>,
    pub psomp: Option<PsompDiagnostics>,
}
