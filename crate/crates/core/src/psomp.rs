//! Compressed-domain P-SOMP baseline.
//!
//! A polar dictionary with per-angle beam-depth range rings is searched by
//! simultaneous OMP. The MMV problem comes from the sample covariance: the
//! pseudo-snapshots are the top-`d` eigenvectors of `R̂_y` scaled by
//! `√max(λ_k − N̂₀, 0)`.

use std::f64::consts::PI;

use crate::atoms::AtomCompressor;
use crate::clkl::{angle_grid, estimate_noise_frozen, reconstruct_channel, NOISE_FLOOR};
use crate::estimate::{EstimateResult, EstimatedPath, PsompDiagnostics};
use crate::linalg::{hermitian_eigen, pseudo_inverse};
use crate::manifold::ArrayConfig;
use crate::scene::CompressedObservation;
use crate::{CMat, Error, Result, C64};

/// Adjacent-ring coherence target.
pub const COHERENCE_TARGET: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryParams {
    pub angles: usize,
    pub angle_span_deg: (f64, f64),
    /// `(u_min, u_max)`.
    pub curvature_bounds: (f64, f64),
}

impl DictionaryParams {
    pub fn new(range_min: f64, range_max: f64) -> Self {
        Self {
            angles: 512,
            angle_span_deg: (5.0, 85.0),
            curvature_bounds: (1.0 / range_max, 1.0 / range_min),
        }
    }
}

/// Angle × inverse-range dictionary. Atoms of one angle are contiguous, the
/// far-field atom (`u = 0`) first.
#[derive(Debug, Clone)]
pub struct PolarDictionary {
    pub theta: Vec<f64>,
    pub u: Vec<f64>,
    /// Atoms per grid angle, far-field atom included.
    pub ring_counts: Vec<usize>,
    /// Multiple of the one-beam-depth spacing actually used.
    pub spacing_factor: f64,
    /// Largest `|a(θ,u)ᴴ a(θ,u+Δu)|/M` between adjacent rings.
    pub max_adjacent_coherence: f64,
}

/// `|Σ_m exp(−j Δφ m̄²)| / M` for a quadratic-phase excursion `Δφ` per `m̄²`.
pub fn chirp_coherence(centred: &[f64], delta_kappa: f64) -> f64 {
    let sum: C64 = centred
        .iter()
        .map(|&m| C64::from_polar(1.0, -delta_kappa * m * m))
        .sum();
    sum.norm() / centred.len() as f64
}

impl PolarDictionary {
    /// Beam-depth construction.
    ///
    /// Ring spacing at angle `θ` is `Δu = f·π / (c(θ)·((M−1)/2)²)`, i.e. `f`
    /// times a π quadratic-phase excursion across the semi-aperture. Rings
    /// sit at `u = kΔu`, `k ≥ 1`, inside the curvature bounds. `f` starts at
    /// 1 and grows in 5% steps until adjacent coherence is at most
    /// [`COHERENCE_TARGET`]; coherence only depends on `c·Δu = f·π/((M−1)/2)²`.
    pub fn build(array: &ArrayConfig, params: &DictionaryParams) -> Result<Self> {
        let (u_min, u_max) = params.curvature_bounds;
        if !(u_max > u_min && u_min >= 0.0) {
            return Err(Error::InvalidConfig(format!("bad curvature bounds [{u_min}, {u_max}]")));
        }
        let half = (array.elements() as f64 - 1.0) / 2.0;
        let excursion = |f: f64| f * PI / (half * half);
        let mut factor = 1.0;
        while chirp_coherence(array.centred(), excursion(factor)) > COHERENCE_TARGET && factor < 4.0 {
            factor *= 1.05;
        }
        let coherence = chirp_coherence(array.centred(), excursion(factor));

        let grid = angle_grid(params.angles, params.angle_span_deg);
        let (mut theta, mut u, mut ring_counts) = (Vec::new(), Vec::new(), Vec::new());
        for &t in &grid {
            theta.push(t);
            u.push(0.0);
            let mut count = 1;
            let c = array.chirp_constant(t);
            if c > 0.0 {
                let du = excursion(factor) / c;
                let mut k = (u_min / du).ceil().max(1.0);
                while k * du <= u_max {
                    theta.push(t);
                    u.push(k * du);
                    count += 1;
                    k += 1.0;
                }
            }
            ring_counts.push(count);
        }
        Ok(Self {
            theta,
            u,
            ring_counts,
            spacing_factor: factor,
            max_adjacent_coherence: coherence,
        })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Uncompressed atom `a(θ_i, u_i)`.
    pub fn atom(&self, array: &ArrayConfig, i: usize) -> crate::CVec {
        array.steering_chirp(self.theta[i], self.u[i])
    }

    /// Largest measured `|a_iᴴ a_{i+1}|/M` over adjacent same-angle rings
    /// (far-field atom excluded). Direct evaluation, used as a check on
    /// [`Self::max_adjacent_coherence`].
    pub fn measured_adjacent_coherence(&self, array: &ArrayConfig) -> f64 {
        let m = array.elements() as f64;
        let mut worst: f64 = 0.0;
        for i in 1..self.len() {
            if self.theta[i] == self.theta[i - 1] && self.u[i - 1] > 0.0 {
                let a = self.atom(array, i - 1);
                let b = self.atom(array, i);
                worst = worst.max(a.dotc(&b).norm() / m);
            }
        }
        worst
    }

    /// `N_RF × S` matrix of compressed atoms `Wᴴ a_i`.
    pub fn compress(&self, array: &ArrayConfig, combiner: &CMat) -> CMat {
        let comp = AtomCompressor::new(combiner, array.centred());
        let n_rf = combiner.ncols();
        let mut out = CMat::zeros(n_rf, self.len());
        let mut scratch = vec![C64::new(0.0, 0.0); n_rf];
        for i in 0..self.len() {
            let t = self.theta[i];
            comp.compress_into(array.omega(t), array.chirp_constant(t) * self.u[i], &mut scratch);
            out.column_mut(i).copy_from_slice(&scratch);
        }
        out
    }
}

/// Top-`d` eigenvectors of `R̂_y` scaled by `√max(λ − N̂₀, 0)`.
pub fn pseudo_snapshots(sample_cov: &CMat, paths: usize, noise: f64) -> CMat {
    let (values, vectors) = hermitian_eigen(sample_cov);
    let n = values.len();
    let k = paths.min(n);
    let mut z = CMat::zeros(n, k);
    for j in 0..k {
        let idx = n - 1 - j;
        let scale = (values[idx] - noise).max(0.0).sqrt();
        z.set_column(j, &(vectors.column(idx) * C64::new(scale, 0.0)));
    }
    z
}

#[derive(Debug, Clone)]
pub struct SompOutcome {
    pub selected: Vec<usize>,
    /// Least-squares coefficients on the selected atoms (`k × L`).
    pub coefficients: CMat,
    /// Residual Frobenius norm before each selection and after the last.
    pub residual_norms: Vec<f64>,
}

/// Simultaneous OMP: `iterations` greedy selections by row-ℓ2 correlation
/// against unit-normalised columns, each followed by least-squares
/// re-projection of `z` on the selected set.
pub fn somp(dict: &CMat, z: &CMat, iterations: usize) -> SompOutcome {
    let s = dict.ncols();
    let norms: Vec<f64> = (0..s).map(|i| dict.column(i).norm()).collect();
    let mut residual = z.clone();
    let mut selected: Vec<usize> = Vec::with_capacity(iterations);
    let mut coefficients = CMat::zeros(0, z.ncols());
    let mut residual_norms = vec![residual.norm()];
    for _ in 0..iterations.min(s) {
        let corr = dict.adjoint() * &residual;
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..s {
            if selected.contains(&i) || norms[i] == 0.0 {
                continue;
            }
            let score = corr.row(i).norm() / norms[i];
            if score > best.0 {
                best = (score, i);
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        selected.push(best.1);
        let sub = dict.select_columns(&selected);
        let (pinv, _) = pseudo_inverse(&sub, 1e-12);
        coefficients = pinv * z;
        residual = z - &sub * &coefficients;
        residual_norms.push(residual.norm());
    }
    SompOutcome {
        selected,
        coefficients,
        residual_norms,
    }
}

/// P-SOMP on a compressed observation; whitens first if needed.
pub fn psomp_estimate(
    obs: &CompressedObservation,
    array: &ArrayConfig,
    paths: usize,
    dict: &PolarDictionary,
    range_max: f64,
) -> Result<EstimateResult> {
    let n_rf = obs.rf_chains();
    if paths == 0 {
        return Err(Error::InvalidConfig("need at least one path".into()));
    }
    if paths > n_rf {
        return Err(Error::Identifiability { paths, n_rf });
    }
    let whitened;
    let obs = if obs.whitened {
        obs
    } else {
        whitened = obs.whiten()?;
        &whitened
    };
    let noise = if paths < n_rf {
        estimate_noise_frozen(&obs.sample_cov, paths)?
    } else {
        NOISE_FLOOR
    };
    let z = pseudo_snapshots(&obs.sample_cov, paths, noise);
    let compressed = dict.compress(array, &obs.combiner);
    let out = somp(&compressed, &z, paths);

    let est_paths: Vec<EstimatedPath> = out
        .selected
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let power = out.coefficients.row(k).norm_squared();
            EstimatedPath::new(array, dict.theta[i], dict.u[i], power, range_max)
        })
        .collect();
    let atoms: Vec<(f64, f64)> = out.selected.iter().map(|&i| (dict.theta[i], dict.u[i])).collect();
    let (channel, rank_deficient) = reconstruct_channel(array, &atoms, &obs.combiner, &obs.snapshots);

    Ok(EstimateResult {
        paths: est_paths,
        channel,
        noise_estimate: noise,
        rank_deficient,
        clkl: None,
        psomp: Some(PsompDiagnostics {
            selected_atoms: out.selected,
            residual_norms: out.residual_norms,
            dictionary_size: dict.len(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_dict() -> (ArrayConfig, PolarDictionary) {
        let array = ArrayConfig::new(28e9, 64).unwrap();
        let r_rd = array.rayleigh_distance();
        let dict = PolarDictionary::build(&array, &DictionaryParams::new(0.05 * r_rd, r_rd)).unwrap();
        (array, dict)
    }

    #[test]
    fn default_size_and_coherence() {
        let (array, dict) = default_dict();
        assert!((900..=1150).contains(&dict.len()), "S = {}", dict.len());
        assert!(dict.max_adjacent_coherence <= COHERENCE_TARGET);
        assert!(dict.measured_adjacent_coherence(&array) <= 0.55);
        assert_eq!(dict.ring_counts.iter().sum::<usize>(), dict.len());
    }

    #[test]
    fn near_endfire_angle_has_only_far_field_atom() {
        let array = ArrayConfig::new(28e9, 64).unwrap();
        let r_rd = array.rayleigh_distance();
        let params = DictionaryParams {
            angles: 8,
            angle_span_deg: (0.0, 60.0),
            ..DictionaryParams::new(0.05 * r_rd, r_rd)
        };
        let dict = PolarDictionary::build(&array, &params).unwrap();
        assert_eq!(dict.ring_counts[0], 1);
        assert_eq!(dict.u[0], 0.0);
    }

    #[test]
    fn rings_respect_bounds() {
        let (_, dict) = default_dict();
        let (u_lo, u_hi) = DictionaryParams::new(1.0, 2.0).curvature_bounds;
        assert_eq!((u_lo, u_hi), (0.5, 1.0));
        let array = ArrayConfig::new(28e9, 64).unwrap();
        let r_rd = array.rayleigh_distance();
        for &u in &dict.u {
            assert!(u == 0.0 || (u >= 1.0 / r_rd - 1e-12 && u <= 1.0 / (0.05 * r_rd) + 1e-12));
        }
    }

    #[test]
    fn somp_residual_decreases_and_atoms_distinct() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let dict = CMat::from_fn(6, 40, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let x = CMat::from_fn(3, 2, |_, _| C64::new(rng.random::<f64>() + 0.5, 0.0));
        let z = dict.select_columns(&[4, 17, 30]) * x;
        let out = somp(&dict, &z, 3);
        let mut sel = out.selected.clone();
        sel.sort();
        sel.dedup();
        assert_eq!(sel.len(), 3);
        for w in out.residual_norms.windows(2) {
            assert!(w[1] < w[0]);
        }
    }
}
