//! Monte-Carlo scenario generation and hybrid combining.
//!
//! A trial draws `d` paths with i.i.d. uniform angles and ranges, equal powers
//! `1/d`, a random phase-only combiner, source symbols and white noise, then
//! forms `X = A S + W_n`, `Y = Wᴴ X` and `R̂_y = Y Yᴴ / N`.
//!
//! Every random quantity comes from its own ChaCha stream keyed by the trial
//! seed, so changing e.g. the source model leaves paths, combiner and noise
//! untouched.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::inverse_sqrt_hermitian;
use crate::manifold::{ArrayConfig, PathParam};
use crate::{CMat, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceModel {
    Gaussian,
    Qpsk,
}

impl FromStr for SourceModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" => Ok(Self::Gaussian),
            "qpsk" => Ok(Self::Qpsk),
            other => Err(Error::InvalidConfig(format!("unknown source model '{other}'"))),
        }
    }
}

impl std::fmt::Display for SourceModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::Qpsk => "qpsk",
        })
    }
}

/// Manifold used to synthesise the ground-truth channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthModel {
    Usw,
    Fresnel,
}

impl FromStr for TruthModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "usw" => Ok(Self::Usw),
            "fresnel" => Ok(Self::Fresnel),
            other => Err(Error::InvalidConfig(format!("unknown truth model '{other}'"))),
        }
    }
}

impl std::fmt::Display for TruthModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Usw => "usw",
            Self::Fresnel => "fresnel",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub array: ArrayConfig,
    pub rf_chains: usize,
    pub snapshots: usize,
    pub paths: usize,
    pub snr_db: f64,
    /// Angle support in degrees.
    pub angle_support_deg: (f64, f64),
    /// Range support as fractions of the Rayleigh distance.
    pub range_support: (f64, f64),
    pub source_model: SourceModel,
    pub truth_model: TruthModel,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            array: ArrayConfig::new(28e9, 64).expect("default array is valid"),
            rf_chains: 8,
            snapshots: 64,
            paths: 3,
            snr_db: 10.0,
            angle_support_deg: (20.0, 60.0),
            range_support: (0.05, 1.0),
            source_model: SourceModel::Gaussian,
            truth_model: TruthModel::Usw,
            seed: 42,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.array.elements();
        if self.rf_chains == 0 || self.rf_chains > m {
            return Err(Error::InvalidConfig(format!(
                "N_RF must be in 1..={m}, got {}",
                self.rf_chains
            )));
        }
        if self.snapshots == 0 {
            return Err(Error::InvalidConfig("need at least one snapshot".into()));
        }
        if self.paths == 0 {
            return Err(Error::InvalidConfig("need at least one path".into()));
        }
        let (lo, hi) = self.angle_support_deg;
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::InvalidConfig(format!("empty angle support [{lo}, {hi}]")));
        }
        let (lo, hi) = self.range_support;
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo > hi {
            return Err(Error::InvalidConfig(format!("empty range support [{lo}, {hi}]")));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidConfig("SNR must be finite".into()));
        }
        Ok(())
    }

    /// Linear noise power; with unit-modulus steering and `Σp = 1` the SNR
    /// reduces to `1/N₀`.
    pub fn noise_power(&self) -> f64 {
        snr_to_noise(self.snr_db)
    }

    pub fn range_min(&self) -> f64 {
        self.range_support.0 * self.array.rayleigh_distance()
    }

    pub fn range_max(&self) -> f64 {
        self.range_support.1 * self.array.rayleigh_distance()
    }

    /// Equal per-path powers summing to one.
    pub fn path_powers(&self) -> Vec<f64> {
        vec![1.0 / self.paths as f64; self.paths]
    }
}

/// `N₀ = 10^(−SNR/10)`.
pub fn snr_to_noise(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Independent random streams for one trial.
#[derive(Debug, Clone)]
pub struct SceneRng {
    pub paths: ChaCha8Rng,
    pub combiner: ChaCha8Rng,
    pub sources: ChaCha8Rng,
    pub noise: ChaCha8Rng,
}

impl SceneRng {
    pub fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            paths: stream(0),
            combiner: stream(1),
            sources: stream(2),
            noise: stream(3),
        }
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

/// Random phase-only combiner with entries `e^{jφ}/√M`.
pub fn draw_combiner<R: Rng + ?Sized>(elements: usize, rf_chains: usize, rng: &mut R) -> Result<CMat> {
    if rf_chains > elements {
        return Err(Error::InvalidConfig(format!(
            "N_RF = {rf_chains} exceeds M = {elements}"
        )));
    }
    let scale = 1.0 / (elements as f64).sqrt();
    // column-major fill keeps the draw order independent of nalgebra internals
    let mut w = CMat::zeros(elements, rf_chains);
    for k in 0..rf_chains {
        for m in 0..elements {
            let phi: f64 = rng.random::<f64>() * 2.0 * PI;
            w[(m, k)] = C64::from_polar(scale, phi);
        }
    }
    Ok(w)
}

/// `d × N` source symbols with `E|s_ℓ|² = p_ℓ`.
pub fn draw_sources<R: Rng + ?Sized>(
    model: SourceModel,
    powers: &[f64],
    snapshots: usize,
    rng: &mut R,
) -> Result<CMat> {
    if let Some(p) = powers.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidConfig(format!("source power must be >= 0, got {p}")));
    }
    let mut s = CMat::zeros(powers.len(), snapshots);
    for n in 0..snapshots {
        for (l, &p) in powers.iter().enumerate() {
            s[(l, n)] = match model {
                SourceModel::Gaussian => complex_normal(rng, p),
                SourceModel::Qpsk => {
                    let k = rng.random_range(0..4u32);
                    let phase = PI * (2 * k + 1) as f64 / 4.0;
                    C64::from_polar(p.sqrt(), phase)
                }
            };
        }
    }
    Ok(s)
}

/// The estimator-visible part of a trial.
#[derive(Debug, Clone)]
pub struct CompressedObservation {
    pub combiner: CMat,
    pub snapshots: CMat,
    pub sample_cov: CMat,
    pub whitened: bool,
}

impl CompressedObservation {
    pub fn new(combiner: CMat, snapshots: CMat) -> Result<Self> {
        if combiner.ncols() != snapshots.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "combiner has {} columns but snapshots have {} rows",
                combiner.ncols(),
                snapshots.nrows()
            )));
        }
        let sample_cov = sample_covariance(&snapshots);
        Ok(Self {
            combiner,
            snapshots,
            sample_cov,
            whitened: false,
        })
    }

    pub fn rf_chains(&self) -> usize {
        self.combiner.ncols()
    }

    pub fn snapshot_count(&self) -> usize {
        self.snapshots.ncols()
    }

    /// `WᴴW`.
    pub fn gram(&self) -> CMat {
        self.combiner.adjoint() * &self.combiner
    }

    /// Applies `(WᴴW)^{-1/2}` to the snapshots and folds it into the combiner
    /// so that the returned observation has `WᴴW = I`.
    pub fn whiten(&self) -> Result<Self> {
        let t = inverse_sqrt_hermitian(&self.gram())?;
        let combiner = &self.combiner * &t;
        let snapshots = &t * &self.snapshots;
        let sample_cov = sample_covariance(&snapshots);
        Ok(Self {
            combiner,
            snapshots,
            sample_cov,
            whitened: true,
        })
    }
}

/// `(1/N) Y Yᴴ`, exactly Hermitian.
pub fn sample_covariance(y: &CMat) -> CMat {
    let n = y.ncols().max(1) as f64;
    let r = (y * y.adjoint()) / C64::new(n, 0.0);
    crate::linalg::hermitian_part(&r)
}

/// Ground truth and observations of one trial.
#[derive(Debug, Clone)]
pub struct Scene {
    pub paths: Vec<PathParam>,
    pub noise_power: f64,
    /// `d × N` source symbols.
    pub sources: CMat,
    pub combiner: CMat,
    /// Noisy full-array snapshots `X` (`M × N`).
    pub full_snapshots: CMat,
    /// Compressed snapshots `Y = WᴴX`.
    pub compressed: CMat,
    pub sample_cov: CMat,
    /// Noise-free channel `H = A S`.
    pub channel: CMat,
    pub truth_model: TruthModel,
}

impl Scene {
    pub fn observation(&self) -> CompressedObservation {
        CompressedObservation {
            combiner: self.combiner.clone(),
            snapshots: self.compressed.clone(),
            sample_cov: self.sample_cov.clone(),
            whitened: false,
        }
    }

    /// Model covariance `Σ p_ℓ d_ℓ d_ℓᴴ + N₀ WᴴW` built from the truth manifold.
    pub fn true_covariance(&self, array: &ArrayConfig) -> Result<CMat> {
        let steering = truth_steering(array, self.truth_model, &self.paths)?;
        let d = self.combiner.adjoint() * steering;
        let mut r = (self.combiner.adjoint() * &self.combiner) * C64::new(self.noise_power, 0.0);
        for (l, path) in self.paths.iter().enumerate() {
            let col = d.column(l);
            r += (&col * col.adjoint()) * C64::new(path.power, 0.0);
        }
        Ok(r)
    }
}

/// `M × d` steering matrix of the given paths.
pub fn truth_steering(array: &ArrayConfig, model: TruthModel, paths: &[PathParam]) -> Result<CMat> {
    let mut a = CMat::zeros(array.elements(), paths.len());
    for (l, p) in paths.iter().enumerate() {
        let col = match model {
            TruthModel::Usw => array.steering_usw(p.theta, p.range)?,
            TruthModel::Fresnel => array.steering_fresnel(p.theta, p.range)?,
        };
        a.set_column(l, &col);
    }
    Ok(a)
}

/// Draws paths `θ ~ U[θ_min, θ_max]`, `r ~ U[ρ_min, ρ_max]·r_RD`.
pub fn draw_paths<R: Rng + ?Sized>(sc: &ScenarioConfig, rng: &mut R) -> Result<Vec<PathParam>> {
    sc.validate()?;
    let (t_lo, t_hi) = sc.angle_support_deg;
    let (r_lo, r_hi) = (sc.range_min(), sc.range_max());
    sc.path_powers()
        .into_iter()
        .map(|power| {
            let theta = (t_lo + (t_hi - t_lo) * rng.random::<f64>()).to_radians();
            let range = r_lo + (r_hi - r_lo) * rng.random::<f64>();
            PathParam::new(theta, range, power)
        })
        .collect()
}

/// Draws a full trial; the combiner comes from the trial's combiner stream.
pub fn draw_scene(sc: &ScenarioConfig, rng: &mut SceneRng) -> Result<Scene> {
    sc.validate()?;
    let combiner = draw_combiner(sc.array.elements(), sc.rf_chains, &mut rng.combiner)?;
    draw_scene_with_combiner(sc, rng, combiner)
}

/// Draws a trial around a caller-supplied combiner (fixed-combiner sweeps).
pub fn draw_scene_with_combiner(
    sc: &ScenarioConfig,
    rng: &mut SceneRng,
    combiner: CMat,
) -> Result<Scene> {
    sc.validate()?;
    let m = sc.array.elements();
    if combiner.shape() != (m, sc.rf_chains) {
        return Err(Error::DimensionMismatch(format!(
            "combiner is {:?}, expected ({m}, {})",
            combiner.shape(),
            sc.rf_chains
        )));
    }
    let paths = draw_paths(sc, &mut rng.paths)?;
    let powers: Vec<f64> = paths.iter().map(|p| p.power).collect();
    let sources = draw_sources(sc.source_model, &powers, sc.snapshots, &mut rng.sources)?;
    let noise_power = sc.noise_power();

    let steering = truth_steering(&sc.array, sc.truth_model, &paths)?;
    let channel = &steering * &sources;
    let mut full_snapshots = channel.clone();
    for n in 0..sc.snapshots {
        for i in 0..m {
            full_snapshots[(i, n)] += complex_normal(&mut rng.noise, noise_power);
        }
    }
    let compressed = combiner.adjoint() * &full_snapshots;
    let sample_cov = sample_covariance(&compressed);
    Ok(Scene {
        paths,
        noise_power,
        sources,
        combiner,
        full_snapshots,
        compressed,
        sample_cov,
        channel,
        truth_model: sc.truth_model,
    })
}
