//! Stochastic Cramér–Rao bound for the compressed snapshot model.
//!
//! Parameters are ordered `η = [ω₁..ω_d, κ₁..κ_d, p₁..p_d, N₀]`. The FIM is
//! `J_ij = N·Re tr(R⁻¹ ∂_iR R⁻¹ ∂_jR)`; it is inverted by a truncated SVD and
//! the `(ω, κ)` diagonal is propagated to angle and range.

use nalgebra::DMatrix;

use crate::linalg::{cholesky, hermitian_part, truncated_pinv_real};
use crate::manifold::{ArrayConfig, PathParam};
use crate::scene::{draw_combiner, draw_paths, ScenarioConfig, SceneRng};
use crate::{CMat, CVec, Result, C64};

/// Relative singular-value cutoff of the FIM pseudoinverse.
pub const SV_TOLERANCE: f64 = 1e-6;
/// A dropped singular direction with more than this mass on the `(ω, κ)`
/// block marks the trial invalid.
pub const SIGNAL_MASS_LIMIT: f64 = 1e-3;

/// Largest path count the compressed covariance can identify, `⌊(N_RF−1)/2⌋`.
pub fn max_identifiable_paths(n_rf: usize) -> usize {
    n_rf.saturating_sub(1) / 2
}

/// `(∂a/∂ω, ∂a/∂κ) = (j m̄ ⊙ a, −j m̄² ⊙ a)` at `a = a(ω, κ)`.
pub fn steering_derivatives(array: &ArrayConfig, omega: f64, kappa: f64) -> (CVec, CVec) {
    let a = array.steering_omega_kappa(omega, kappa);
    let m = array.centred();
    let d_omega = CVec::from_iterator(a.len(), a.iter().zip(m).map(|(z, &k)| z * C64::new(0.0, k)));
    let d_kappa = CVec::from_iterator(a.len(), a.iter().zip(m).map(|(z, &k)| z * C64::new(0.0, -k * k)));
    (d_omega, d_kappa)
}

/// Point in the `η` parameterisation.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbPoint {
    pub omega: Vec<f64>,
    pub kappa: Vec<f64>,
    pub power: Vec<f64>,
    pub noise: f64,
}

impl CrbPoint {
    pub fn from_paths(array: &ArrayConfig, paths: &[PathParam], noise: f64) -> Self {
        Self {
            omega: paths.iter().map(|p| array.omega(p.theta)).collect(),
            kappa: paths.iter().map(|p| array.chirp_constant(p.theta) / p.range).collect(),
            power: paths.iter().map(|p| p.power).collect(),
            noise,
        }
    }

    pub fn paths(&self) -> usize {
        self.omega.len()
    }

    /// `3d + 1`.
    pub fn dim(&self) -> usize {
        3 * self.paths() + 1
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend(&self.omega);
        v.extend(&self.kappa);
        v.extend(&self.power);
        v.push(self.noise);
        v
    }

    pub fn from_vec(v: &[f64]) -> Self {
        let d = (v.len() - 1) / 3;
        Self {
            omega: v[..d].to_vec(),
            kappa: v[d..2 * d].to_vec(),
            power: v[2 * d..3 * d].to_vec(),
            noise: v[3 * d],
        }
    }
}

/// `R_y(η) = Σ p_ℓ d_ℓ d_ℓᴴ + N₀ WᴴW` on the chirp manifold.
pub fn model_covariance(array: &ArrayConfig, combiner: &CMat, point: &CrbPoint) -> CMat {
    let mut r = (combiner.adjoint() * combiner) * C64::new(point.noise, 0.0);
    for l in 0..point.paths() {
        let d = combiner.adjoint() * array.steering_omega_kappa(point.omega[l], point.kappa[l]);
        r += (&d * d.adjoint()) * C64::new(point.power[l], 0.0);
    }
    hermitian_part(&r)
}

/// `∂R_y/∂η_i` for every component of `η`, in `η` order.
pub fn covariance_derivatives(array: &ArrayConfig, combiner: &CMat, point: &CrbPoint) -> Vec<CMat> {
    let d = point.paths();
    let wh = combiner.adjoint();
    let mut by_omega = Vec::with_capacity(d);
    let mut by_kappa = Vec::with_capacity(d);
    let mut by_power = Vec::with_capacity(d);
    for l in 0..d {
        let (omega, kappa, p) = (point.omega[l], point.kappa[l], point.power[l]);
        let dl = &wh * array.steering_omega_kappa(omega, kappa);
        let (a_w, a_k) = steering_derivatives(array, omega, kappa);
        let rank2 = |dot: CVec| {
            let m = &dot * dl.adjoint();
            (&m + m.adjoint()) * C64::new(p, 0.0)
        };
        by_omega.push(rank2(&wh * a_w));
        by_kappa.push(rank2(&wh * a_k));
        by_power.push(&dl * dl.adjoint());
    }
    let mut out = by_omega;
    out.extend(by_kappa);
    out.extend(by_power);
    out.push(&wh * combiner);
    out
}

#[derive(Debug, Clone)]
pub struct FimReport {
    pub fim: DMatrix<f64>,
    /// Truncated pseudoinverse of the FIM.
    pub inverse: DMatrix<f64>,
    /// `σ_max/σ_min`; infinite when the FIM is exactly singular.
    pub condition_number: f64,
    /// No dropped singular direction touches the `(ω, κ)` block.
    pub valid: bool,
    /// Number of truncated singular values.
    pub truncated: usize,
}

/// Fisher information of `N` i.i.d. compressed snapshots.
pub fn fim(array: &ArrayConfig, combiner: &CMat, point: &CrbPoint, snapshots: usize) -> Result<FimReport> {
    let r = model_covariance(array, combiner, point);
    let chol = cholesky(&r)?;
    let derivs = covariance_derivatives(array, combiner, point);
    // R⁻¹ ∂_iR, so J_ij = N Re tr(A_i A_j)
    let whitened: Vec<CMat> = derivs.iter().map(|dr| chol.solve(dr)).collect();
    let n = derivs.len();
    let mut j = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = snapshots as f64 * crate::linalg::trace_product_re(&whitened[a], &whitened[b]);
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    let trunc = truncated_pinv_real(&j, SV_TOLERANCE);
    let s_max = trunc.singular_values.iter().copied().fold(0.0, f64::max);
    let s_min = trunc.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let condition_number = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    let signal = 2 * point.paths();
    let valid = trunc
        .dropped
        .iter()
        .all(|v| v[..signal].iter().map(|x| x * x).sum::<f64>() <= SIGNAL_MASS_LIMIT);
    Ok(FimReport {
        fim: j,
        inverse: trunc.inverse,
        condition_number,
        valid,
        truncated: trunc.dropped.len(),
    })
}

/// Per-path `√CRB` in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathCrb {
    pub theta_deg: f64,
    pub range_m: f64,
}

/// `CRB_θ = [J⁻¹]_ℓℓ / (∂ω/∂θ)²`, `CRB_r = [J⁻¹]_{d+ℓ} (r²/c)²`.
/// Endfire paths (`sin θ = 0`) get an infinite bound.
pub fn propagate_crb(array: &ArrayConfig, report: &FimReport, paths: &[PathParam]) -> Vec<PathCrb> {
    let d = paths.len();
    paths
        .iter()
        .enumerate()
        .map(|(l, p)| {
            let slope = array.omega_derivative(p.theta);
            let c = array.chirp_constant(p.theta);
            let var_w = report.inverse[(l, l)].max(0.0);
            let var_k = report.inverse[(d + l, d + l)].max(0.0);
            let theta = if slope == 0.0 { f64::INFINITY } else { (var_w / (slope * slope)).sqrt() };
            let range = if c == 0.0 {
                f64::INFINITY
            } else {
                (var_k * (p.range * p.range / c).powi(2)).sqrt()
            };
            PathCrb {
                theta_deg: theta.to_degrees(),
                range_m: range,
            }
        })
        .collect()
}

/// One trial of a CRB sweep: path-averaged `√CRB`, NaN when invalid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbTrial {
    pub theta_deg: f64,
    pub range_m: f64,
    pub condition_number: f64,
    pub valid: bool,
}

/// Evaluates the bound for a given scene.
pub fn crb_trial(
    array: &ArrayConfig,
    combiner: &CMat,
    paths: &[PathParam],
    noise: f64,
    snapshots: usize,
) -> Result<CrbTrial> {
    let point = CrbPoint::from_paths(array, paths, noise);
    let report = fim(array, combiner, &point, snapshots)?;
    let (theta_deg, range_m) = if report.valid {
        let per_path = propagate_crb(array, &report, paths);
        let d = per_path.len() as f64;
        (
            per_path.iter().map(|c| c.theta_deg).sum::<f64>() / d,
            per_path.iter().map(|c| c.range_m).sum::<f64>() / d,
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(CrbTrial {
        theta_deg,
        range_m,
        condition_number: report.condition_number,
        valid: report.valid,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrbSummary {
    pub paths: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub valid_trials: usize,
    /// NaN when no trial is valid.
    pub median_theta_deg: f64,
    pub median_range_m: f64,
    pub median_condition: f64,
}

impl CrbSummary {
    pub fn invalid_rate(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        (self.trials - self.valid_trials) as f64 / self.trials as f64
    }

    pub fn is_empty(&self) -> bool {
        self.valid_trials == 0
    }
}

/// Median ignoring NaNs; NaN for an empty input.
pub fn nan_median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// CRB trials for seeds `base_seed + k`, paths and combiner drawn from the
/// same streams the Monte-Carlo sweeps use.
pub fn crb_trials(sc: &ScenarioConfig, n_trials: usize, base_seed: u64) -> Result<Vec<CrbTrial>> {
    sc.validate()?;
    (0..n_trials as u64)
        .map(|k| {
            let mut rng = SceneRng::new(base_seed.wrapping_add(k));
            let paths = draw_paths(sc, &mut rng.paths)?;
            let w = draw_combiner(sc.array.elements(), sc.rf_chains, &mut rng.combiner)?;
            crb_trial(&sc.array, &w, &paths, sc.noise_power(), sc.snapshots)
        })
        .collect()
}

pub fn summarize(sc: &ScenarioConfig, trials: &[CrbTrial]) -> CrbSummary {
    let theta: Vec<f64> = trials.iter().map(|t| t.theta_deg).collect();
    let range: Vec<f64> = trials.iter().map(|t| t.range_m).collect();
    let cond: Vec<f64> = trials.iter().map(|t| t.condition_number).collect();
    CrbSummary {
        paths: sc.paths,
        snr_db: sc.snr_db,
        trials: trials.len(),
        valid_trials: trials.iter().filter(|t| t.valid).count(),
        median_theta_deg: nan_median(&theta),
        median_range_m: nan_median(&range),
        median_condition: nan_median(&cond),
    }
}

/// Nan-median `√CRB` over `n_trials` random scenes.
pub fn crb_sweep(sc: &ScenarioConfig, n_trials: usize, base_seed: u64) -> Result<CrbSummary> {
    let trials = crb_trials(sc, n_trials, base_seed)?;
    Ok(summarize(sc, &trials))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifiability_limit() {
        assert_eq!(max_identifiable_paths(8), 3);
        assert_eq!(max_identifiable_paths(4), 1);
        assert_eq!(max_identifiable_paths(16), 7);
        assert_eq!(max_identifiable_paths(1), 0);
    }

    #[test]
    fn derivative_modulus_and_odd_centre() {
        let array = ArrayConfig::new(28e9, 7).unwrap();
        let (a_w, a_k) = steering_derivatives(&array, 0.8, 0.01);
        for (m, (x, y)) in array.centred().iter().zip(a_w.iter().zip(a_k.iter())) {
            assert!((x.norm() - m.abs()).abs() < 1e-14);
            assert!((y.norm() - m * m).abs() < 1e-13);
        }
        assert_eq!(a_w[3], C64::new(0.0, 0.0));
    }

    #[test]
    fn nan_median_ignores_nan() {
        assert_eq!(nan_median(&[3.0, f64::NAN, 1.0, 2.0]), 2.0);
        assert_eq!(nan_median(&[4.0, 1.0]), 2.5);
        assert!(nan_median(&[f64::NAN]).is_nan());
    }

    #[test]
    fn eta_round_trip() {
        let p = CrbPoint {
            omega: vec![1.0, 2.0],
            kappa: vec![0.1, 0.2],
            power: vec![0.5, 0.5],
            noise: 0.1,
        };
        assert_eq!(CrbPoint::from_vec(&p.to_vec()), p);
        assert_eq!(p.dim(), 7);
    }
}
