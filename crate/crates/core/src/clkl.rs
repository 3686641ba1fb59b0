//! Curvature-learning KL covariance fitting (CL-KL).
//!
//! Only the angle axis is gridded. Every grid angle carries its own inverse
//! range `u_i ∈ [u_min, u_max]`, so the compressed covariance model is
//!
//! ```text
//! R_y(p, u, N₀) = Σ_i p_i d_i(u_i) d_i(u_i)ᴴ + N₀ WᴴW,   d_i = Wᴴ a(θ_i, u_i)
//! ```
//!
//! and the fit minimises `log det R_y + tr(R_y⁻¹ R̂_y) + λ‖p‖₁` over `p ≥ 0`.
//!
//! The estimator runs in two phases:
//!
//! 1. A power-only projected-gradient loop with Armijo backtracking, `u` held
//!    at a warm start and `N₀` frozen at a noise-subspace estimate. Three warm
//!    starts are tried (ring-indexed, near, far) and the lowest objective wins.
//! 2. A matched-filter scan over the top-`d` atoms that alternates angle and
//!    inverse-range updates against a deflated residual covariance.
//!
//! The channel is then recovered by least squares on the compressed snapshots.

use log::warn;

use crate::atoms::{quadratic_form, AtomCompressor};
use crate::estimate::{ClklDiagnostics, EstimateResult, EstimatedPath, StartKind, StartSummary};
use crate::linalg::{cholesky, hermitian_eigenvalues, log_det, pseudo_inverse, trace_product_re};
use crate::manifold::ArrayConfig;
use crate::scene::{CompressedObservation, ScenarioConfig};
use crate::{CMat, Error, Result, C64};

/// Floor applied to every noise estimate.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoParams {
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartSet {
    /// Ring, near and far starts.
    All,
    /// Far-range start only.
    FarOnly,
}

impl StartSet {
    fn kinds(self) -> &'static [StartKind] {
        match self {
            Self::All => &[StartKind::Ring, StartKind::Near, StartKind::Far],
            Self::FarOnly => &[StartKind::Far],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Estimated once from the noise subspace and never touched again.
    Frozen,
    /// Re-estimated from residual eigenvalues every `every` iterations.
    Reestimate { every: usize },
}

/// Initial powers of every warm start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerInit {
    /// `p⁰ = 0`.
    Zero,
    /// [`greedy_powers`] on the start's dictionary.
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClklConfig {
    pub coarse_angles: usize,
    pub fine_angles: usize,
    pub fine_curvatures: usize,
    /// Span of both angle grids in degrees; grids are uniform in `cos θ`.
    pub angle_span_deg: (f64, f64),
    /// ℓ1 weight λ.
    pub sparsity: f64,
    pub max_iterations: usize,
    pub rel_tolerance: f64,
    pub armijo: ArmijoParams,
    /// β_δ in the ring-indexed start.
    pub ring_beta: f64,
    /// `(r_min, r_max)` in metres.
    pub range_bounds: (f64, f64),
    pub starts: StartSet,
    /// Alternating scan passes (odd: angle, even: inverse range); 0 skips the scan.
    pub scan_passes: usize,
    pub noise_mode: NoiseMode,
    pub power_init: PowerInit,
    /// Run on the whitened observation (`WᴴW = I`).
    pub whiten: bool,
}

impl ClklConfig {
    pub fn new(range_min: f64, range_max: f64) -> Self {
        Self {
            coarse_angles: 256,
            fine_angles: 512,
            fine_curvatures: 256,
            angle_span_deg: (5.0, 85.0),
            sparsity: 1e-3,
            max_iterations: 150,
            rel_tolerance: 5e-4,
            armijo: ArmijoParams::default(),
            ring_beta: 1.2,
            range_bounds: (range_min, range_max),
            starts: StartSet::All,
            scan_passes: 4,
            noise_mode: NoiseMode::Frozen,
            power_init: PowerInit::Zero,
            whiten: true,
        }
    }

    /// Range bounds taken from the scenario's range support.
    pub fn for_scenario(sc: &ScenarioConfig) -> Self {
        Self::new(sc.range_min(), sc.range_max())
    }

    /// `(u_min, u_max) = (1/r_max, 1/r_min)`.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        (1.0 / self.range_bounds.1, 1.0 / self.range_bounds.0)
    }

    pub fn validate(&self) -> Result<()> {
        let (r_lo, r_hi) = self.range_bounds;
        if !(r_lo > 0.0 && r_hi >= r_lo && r_hi.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad range bounds [{r_lo}, {r_hi}]")));
        }
        if self.coarse_angles < 2 || self.fine_angles < 2 || self.fine_curvatures < 2 {
            return Err(Error::InvalidConfig("angle and curvature grids need >= 2 points".into()));
        }
        let (a_lo, a_hi) = self.angle_span_deg;
        if !(a_lo < a_hi) {
            return Err(Error::InvalidConfig(format!("bad angle span [{a_lo}, {a_hi}]")));
        }
        if self.sparsity < 0.0 || self.rel_tolerance <= 0.0 {
            return Err(Error::InvalidConfig("sparsity and tolerance must be non-negative".into()));
        }
        if let NoiseMode::Reestimate { every: 0 } = self.noise_mode {
            return Err(Error::InvalidConfig("noise re-estimation period must be >= 1".into()));
        }
        Ok(())
    }
}

/// `n` angles (radians) over `[lo, hi]` degrees, uniformly spaced in `cos θ`.
pub fn angle_grid(n: usize, span_deg: (f64, f64)) -> Vec<f64> {
    let c_lo = span_deg.0.to_radians().cos();
    let c_hi = span_deg.1.to_radians().cos();
    let step = (c_hi - c_lo) / (n as f64 - 1.0);
    (0..n).map(|i| (c_lo + step * i as f64).clamp(-1.0, 1.0).acos()).collect()
}

/// `n` inverse ranges uniformly spaced over `[u_min, u_max]`.
pub fn curvature_grid(n: usize, bounds: (f64, f64)) -> Vec<f64> {
    let step = (bounds.1 - bounds.0) / (n as f64 - 1.0);
    (0..n).map(|i| bounds.0 + step * i as f64).collect()
}

/// Mean of the smallest `N_RF − d` eigenvalues of the Hermitian part of
/// `R̂_y`, floored at [`NOISE_FLOOR`].
pub fn estimate_noise_frozen(sample_cov: &CMat, paths: usize) -> Result<f64> {
    let n_rf = sample_cov.nrows();
    if n_rf <= paths {
        return Err(Error::Identifiability { paths, n_rf });
    }
    let eig = hermitian_eigenvalues(sample_cov);
    let k = n_rf - paths;
    Ok((eig[..k].iter().sum::<f64>() / k as f64).max(NOISE_FLOOR))
}

/// Angle grid with per-atom inverse ranges and their compressed atoms.
#[derive(Debug, Clone)]
pub struct DictionaryState {
    pub theta: Vec<f64>,
    omega: Vec<f64>,
    chirp: Vec<f64>,
    pub u: Vec<f64>,
    atoms: Vec<C64>,
    rf_chains: usize,
}

impl DictionaryState {
    pub fn new(array: &ArrayConfig, compressor: &AtomCompressor, theta: Vec<f64>, u: Vec<f64>) -> Self {
        assert_eq!(theta.len(), u.len());
        let rf_chains = compressor.rf_chains();
        let omega: Vec<f64> = theta.iter().map(|&t| array.omega(t)).collect();
        let chirp: Vec<f64> = theta.iter().map(|&t| array.chirp_constant(t)).collect();
        let mut atoms = vec![C64::new(0.0, 0.0); theta.len() * rf_chains];
        for (i, out) in atoms.chunks_exact_mut(rf_chains).enumerate() {
            compressor.compress_into(omega[i], chirp[i] * u[i], out);
        }
        Self {
            theta,
            omega,
            chirp,
            u,
            atoms,
            rf_chains,
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Compressed atom `d_i`.
    pub fn atom(&self, i: usize) -> &[C64] {
        &self.atoms[i * self.rf_chains..(i + 1) * self.rf_chains]
    }

    pub fn chirp_constant(&self, i: usize) -> f64 {
        self.chirp[i]
    }

    pub fn omega(&self, i: usize) -> f64 {
        self.omega[i]
    }

    /// Moves atom `i` to a new inverse range and rebuilds `d_i`.
    pub fn set_u(&mut self, compressor: &AtomCompressor, i: usize, u: f64) {
        self.u[i] = u;
        let (omega, kappa) = (self.omega[i], self.chirp[i] * u);
        let rf = self.rf_chains;
        compressor.compress_into(omega, kappa, &mut self.atoms[i * rf..(i + 1) * rf]);
    }
}

/// Adds `weight · d dᴴ` to the upper triangle of a row-major `n × n` buffer.
fn add_outer_upper(buf: &mut [C64], n: usize, d: &[C64], weight: f64) {
    for a in 0..n {
        let da = d[a] * weight;
        let row = &mut buf[a * n..(a + 1) * n];
        for b in a..n {
            row[b] += da * d[b].conj();
        }
    }
}

fn finish_hermitian(mut buf: Vec<C64>, n: usize) -> CMat {
    for a in 0..n {
        buf[a * n + a].im = 0.0;
        for b in (a + 1)..n {
            buf[b * n + a] = buf[a * n + b].conj();
        }
    }
    CMat::from_row_slice(n, n, &buf)
}

/// Objective value and matrix gradient `G = R⁻¹ − R⁻¹ R̂ R⁻¹` at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub gradient_matrix: CMat,
}

/// Data and hyper-parameters of the KL fit; the noise level is fixed at
/// construction.
#[derive(Debug, Clone)]
pub struct KlProblem {
    sample_cov: CMat,
    gram: CMat,
    noise: f64,
    sparsity: f64,
}

impl KlProblem {
    pub fn new(sample_cov: CMat, gram: CMat, noise: f64, sparsity: f64) -> Self {
        Self {
            sample_cov,
            gram,
            noise,
            sparsity,
        }
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn sample_cov(&self) -> &CMat {
        &self.sample_cov
    }

    fn with_noise(&self, noise: f64) -> Self {
        Self {
            noise,
            ..self.clone()
        }
    }

    /// `Σ p_i d_i d_iᴴ + N₀ WᴴW`.
    pub fn model_covariance(&self, dict: &DictionaryState, p: &[f64]) -> CMat {
        let n = self.gram.nrows();
        let mut buf = vec![C64::new(0.0, 0.0); n * n];
        for a in 0..n {
            for b in a..n {
                buf[a * n + b] = self.gram[(a, b)] * self.noise;
            }
        }
        for (i, &pi) in p.iter().enumerate() {
            if pi > 0.0 {
                add_outer_upper(&mut buf, n, dict.atom(i), pi);
            }
        }
        finish_hermitian(buf, n)
    }

    fn penalty(&self, p: &[f64]) -> f64 {
        self.sparsity * p.iter().sum::<f64>()
    }

    /// `log det R_y + tr(R_y⁻¹ R̂_y) + λ‖p‖₁`.
    pub fn objective(&self, dict: &DictionaryState, p: &[f64]) -> Result<f64> {
        let r = self.model_covariance(dict, p);
        let chol = cholesky(&r)?;
        let fit = chol.solve(&self.sample_cov);
        let trace: f64 = (0..fit.nrows()).map(|i| fit[(i, i)].re).sum();
        Ok(log_det(&chol) + trace + self.penalty(p))
    }

    pub fn evaluate(&self, dict: &DictionaryState, p: &[f64]) -> Result<Evaluation> {
        let r = self.model_covariance(dict, p);
        let chol = cholesky(&r)?;
        let r_inv = crate::linalg::hermitian_part(&chol.inverse());
        let objective = log_det(&chol) + trace_product_re(&r_inv, &self.sample_cov) + self.penalty(p);
        let g = &r_inv - &r_inv * &self.sample_cov * &r_inv;
        Ok(Evaluation {
            objective,
            gradient_matrix: crate::linalg::hermitian_part(&g),
        })
    }

    /// `∂L/∂p_i = d_iᴴ G d_i + λ` for every atom.
    pub fn power_gradient_from(&self, dict: &DictionaryState, g: &CMat) -> Vec<f64> {
        (0..dict.len())
            .map(|i| quadratic_form(g, dict.atom(i)) + self.sparsity)
            .collect()
    }

    pub fn power_gradient(&self, dict: &DictionaryState, p: &[f64]) -> Result<Vec<f64>> {
        let eval = self.evaluate(dict, p)?;
        Ok(self.power_gradient_from(dict, &eval.gradient_matrix))
    }

    /// `∂L/∂u_i = 2 p_i Re{(∂d_i/∂u_i)ᴴ G d_i}`.
    ///
    /// Not used by the estimator; the inverse ranges are refined by the
    /// post-loop scan instead.
    pub fn curvature_gradient(
        &self,
        array: &ArrayConfig,
        compressor: &AtomCompressor,
        dict: &DictionaryState,
        p: &[f64],
        i: usize,
    ) -> Result<f64> {
        let eval = self.evaluate(dict, p)?;
        let c = dict.chirp_constant(i);
        let a = array.steering_chirp(dict.theta[i], dict.u[i]);
        let da: Vec<C64> = a
            .iter()
            .zip(array.centred())
            .map(|(z, &m)| z * C64::new(0.0, -c * m * m))
            .collect();
        let dd = compressor.compress_vector(&da);
        let gd = &eval.gradient_matrix * nalgebra::DVector::from_column_slice(dict.atom(i));
        let inner: C64 = dd.iter().zip(gd.iter()).map(|(x, y)| x.conj() * y).sum();
        Ok(2.0 * p[i] * inner.re)
    }

    /// Residual-based noise re-estimate used by the non-frozen ablation.
    fn residual_noise(&self, dict: &DictionaryState, p: &[f64], paths: usize) -> Result<f64> {
        let n = self.gram.nrows();
        let mut signal = vec![C64::new(0.0, 0.0); n * n];
        for (i, &pi) in p.iter().enumerate() {
            if pi > 0.0 {
                add_outer_upper(&mut signal, n, dict.atom(i), pi);
            }
        }
        let residual = &self.sample_cov - finish_hermitian(signal, n);
        estimate_noise_frozen(&residual, paths)
    }
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub powers: Vec<f64>,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Noise level at exit (equals the frozen estimate unless re-estimating).
    pub noise: f64,
}

/// Projected-gradient descent on `p ≥ 0` with `u` frozen, starting at `p = 0`.
///
/// Each iteration backtracks from `α = α_p` until
/// `L(p⁺) ≤ L(p) − σ (p − p⁺)ᵀ∇L`. Stops when `|ΔL|/|L|` drops below the
/// tolerance or after `max_iterations`. If no step length gives a decrease the
/// iterate is kept and the loop reports convergence.
pub fn power_loop(
    problem: &KlProblem,
    dict: &DictionaryState,
    cfg: &ClklConfig,
    paths: usize,
) -> Result<LoopOutcome> {
    power_loop_from(problem, dict, cfg, paths, vec![0.0; dict.len()])
}

/// [`power_loop`] from an arbitrary non-negative starting point.
pub fn power_loop_from(
    problem: &KlProblem,
    dict: &DictionaryState,
    cfg: &ClklConfig,
    paths: usize,
    initial: Vec<f64>,
) -> Result<LoopOutcome> {
    assert_eq!(initial.len(), dict.len());
    let mut problem = problem.clone();
    let armijo = cfg.armijo;
    let mut p: Vec<f64> = initial.into_iter().map(|x| x.max(0.0)).collect();
    let mut eval = problem.evaluate(dict, &p)?;
    let mut trace = vec![eval.objective];
    let mut iterations = 0;
    let mut converged = false;

    for t in 1..=cfg.max_iterations {
        if let NoiseMode::Reestimate { every } = cfg.noise_mode {
            if t > 1 && (t - 1) % every == 0 {
                problem = problem.with_noise(problem.residual_noise(dict, &p, paths)?);
                eval = problem.evaluate(dict, &p)?;
            }
        }
        let grad = problem.power_gradient_from(dict, &eval.gradient_matrix);
        let mut alpha = armijo.initial_step;
        let mut accepted = None;
        for _ in 0..=armijo.max_backtracks {
            let candidate: Vec<f64> = p
                .iter()
                .zip(&grad)
                .map(|(&pi, &gi)| (pi - alpha * gi).max(0.0))
                .collect();
            let predicted: f64 = p
                .iter()
                .zip(&candidate)
                .zip(&grad)
                .map(|((&old, &new), &gi)| (old - new) * gi)
                .sum();
            let value = problem.objective(dict, &candidate)?;
            if value <= eval.objective - armijo.sufficient_decrease * predicted {
                accepted = Some((candidate, value));
                break;
            }
            alpha *= armijo.shrink;
        }
        let Some((candidate, value)) = accepted else {
            converged = true;
            break;
        };
        iterations = t;
        let previous = eval.objective;
        p = candidate;
        eval = problem.evaluate(dict, &p)?;
        debug_assert!((eval.objective - value).abs() <= 1e-9 * value.abs().max(1.0));
        trace.push(eval.objective);
        if (eval.objective - previous).abs() < cfg.rel_tolerance * eval.objective.abs() {
            converged = true;
            break;
        }
    }
    Ok(LoopOutcome {
        powers: p,
        trace,
        iterations,
        converged,
        noise: problem.noise(),
    })
}

/// Initial inverse ranges for one warm start.
pub fn warm_start(array: &ArrayConfig, cfg: &ClklConfig, theta: &[f64], kind: StartKind) -> Vec<f64> {
    let (u_min, u_max) = cfg.curvature_bounds();
    match kind {
        StartKind::Near => vec![u_max; theta.len()],
        StartKind::Far => vec![u_min; theta.len()],
        StartKind::Ring => {
            let z = ring_distance(array, cfg.ring_beta);
            theta
                .iter()
                .map(|&t| (1.0 / (z * t.sin().powi(2))).clamp(u_min, u_max))
                .collect()
        }
    }
}

/// `Z_Δ = D²/(2 β_δ² λ)`.
pub fn ring_distance(array: &ArrayConfig, beta: f64) -> f64 {
    array.aperture().powi(2) / (2.0 * beta * beta * array.wavelength())
}

#[derive(Debug, Clone)]
pub struct StartRun {
    pub summary: StartSummary,
    pub dict: DictionaryState,
    pub powers: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MultiStartOutcome {
    pub runs: Vec<StartRun>,
    pub winner: usize,
}

impl MultiStartOutcome {
    pub fn winning_run(&self) -> &StartRun {
        &self.runs[self.winner]
    }
}

/// Greedy matched-filter power initialisation on a fixed-`u` dictionary.
///
/// Starting from `R̂_y − N̂₀WᴴW`, picks the atom with the largest normalised
/// score `d_iᴴ R d_i / ‖d_i‖²`, gives it the power `d_iᴴ R d_i / ‖d_i‖⁴` and
/// deflates it; repeated `paths` times.
pub fn greedy_powers(problem: &KlProblem, dict: &DictionaryState, paths: usize) -> Vec<f64> {
    let n = problem.gram.nrows();
    let mut residual = &problem.sample_cov - &problem.gram * C64::new(problem.noise, 0.0);
    let mut p = vec![0.0; dict.len()];
    for _ in 0..paths {
        let mut best = (f64::NEG_INFINITY, 0, 0.0);
        for i in 0..dict.len() {
            let d = dict.atom(i);
            let energy: f64 = d.iter().map(|z| z.norm_sqr()).sum();
            if energy == 0.0 {
                continue;
            }
            let score = quadratic_form(&residual, d);
            if score / energy > best.0 {
                best = (score / energy, i, energy);
            }
        }
        let (_, i, energy) = best;
        let power = (best.0 / energy).max(0.0);
        p[i] += power;
        let mut deflation = vec![C64::new(0.0, 0.0); n * n];
        add_outer_upper(&mut deflation, n, dict.atom(i), power);
        residual -= finish_hermitian(deflation, n);
    }
    p
}

/// Runs the power loop from every configured warm start and keeps the one
/// with the lowest final objective (earliest start on ties).
pub fn multi_start(
    problem: &KlProblem,
    array: &ArrayConfig,
    compressor: &AtomCompressor,
    cfg: &ClklConfig,
    paths: usize,
) -> Result<MultiStartOutcome> {
    let theta = angle_grid(cfg.coarse_angles, cfg.angle_span_deg);
    let mut runs = Vec::new();
    for &kind in cfg.starts.kinds() {
        let u = warm_start(array, cfg, &theta, kind);
        let dict = DictionaryState::new(array, compressor, theta.clone(), u);
        let initial = match cfg.power_init {
            PowerInit::Zero => vec![0.0; dict.len()],
            PowerInit::Greedy => greedy_powers(problem, &dict, paths),
        };
        let out = power_loop_from(problem, &dict, cfg, paths, initial)?;
        let final_objective = *out.trace.last().expect("trace is never empty");
        runs.push(StartRun {
            summary: StartSummary {
                kind,
                iterations: out.iterations,
                converged: out.converged,
                final_objective,
                trace: out.trace,
            },
            dict,
            powers: out.powers,
        });
    }
    let winner = runs
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| {
            if r.summary.final_objective < runs[best].summary.final_objective {
                i
            } else {
                best
            }
        });
    Ok(MultiStartOutcome { runs, winner })
}

/// An atom in the post-loop active set.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveAtom {
    pub grid_index: usize,
    pub theta: f64,
    pub u: f64,
    pub power: f64,
    pub atom: Vec<C64>,
}

/// Top-`d` atoms by power (ties by grid index). If fewer than `d` atoms carry
/// power, the set is padded with the inactive atoms of highest matched-filter
/// score `d_iᴴ R̂_y d_i`. Returns the set and the number of padded atoms.
pub fn select_active_set(
    dict: &DictionaryState,
    p: &[f64],
    paths: usize,
    sample_cov: &CMat,
) -> (Vec<ActiveAtom>, usize) {
    let mut order: Vec<usize> = (0..dict.len()).filter(|&i| p[i] > 0.0).collect();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    order.truncate(paths);
    let padded = paths.saturating_sub(order.len()).min(dict.len() - order.len());
    if padded > 0 {
        let mut rest: Vec<(usize, f64)> = (0..dict.len())
            .filter(|i| !order.contains(i))
            .map(|i| (i, quadratic_form(sample_cov, dict.atom(i))))
            .collect();
        rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        order.extend(rest.iter().take(padded).map(|&(i, _)| i));
    }
    let active = order
        .into_iter()
        .map(|i| ActiveAtom {
            grid_index: i,
            theta: dict.theta[i],
            u: dict.u[i],
            power: p[i],
            atom: dict.atom(i).to_vec(),
        })
        .collect();
    (active, padded)
}

/// `R̂_y − Σ_{j ≠ skip} p_j d_j d_jᴴ`.
pub fn residual_covariance(sample_cov: &CMat, active: &[ActiveAtom], skip: usize) -> CMat {
    let n = sample_cov.nrows();
    let mut deflation = vec![C64::new(0.0, 0.0); n * n];
    for (j, atom) in active.iter().enumerate() {
        if j != skip && atom.power > 0.0 {
            add_outer_upper(&mut deflation, n, &atom.atom, atom.power);
        }
    }
    sample_cov - finish_hermitian(deflation, n)
}

/// Alternating matched-filter refinement of the active set.
///
/// Pass `k` (1-based) updates every angle when `k` is odd and every inverse
/// range when `k` is even, each by exhaustive search of
/// `d(θ', u)ᴴ R_res,i d(θ', u)` over the fine grids. Atoms are rebuilt after
/// each update so later atoms see the refined deflation.
pub fn post_loop_scan(
    active: &mut [ActiveAtom],
    sample_cov: &CMat,
    array: &ArrayConfig,
    compressor: &AtomCompressor,
    cfg: &ClklConfig,
) {
    if active.is_empty() {
        return;
    }
    let fine_theta = angle_grid(cfg.fine_angles, cfg.angle_span_deg);
    let fine_omega: Vec<f64> = fine_theta.iter().map(|&t| array.omega(t)).collect();
    let fine_chirp: Vec<f64> = fine_theta.iter().map(|&t| array.chirp_constant(t)).collect();
    let fine_u = curvature_grid(cfg.fine_curvatures, cfg.curvature_bounds());
    let mut scratch = vec![C64::new(0.0, 0.0); compressor.rf_chains()];

    for pass in 1..=cfg.scan_passes {
        for i in 0..active.len() {
            let r_res = residual_covariance(sample_cov, active, i);
            let mut best = (f64::NEG_INFINITY, 0usize);
            if pass % 2 == 1 {
                let u = active[i].u;
                for k in 0..fine_theta.len() {
                    compressor.compress_into(fine_omega[k], fine_chirp[k] * u, &mut scratch);
                    let score = quadratic_form(&r_res, &scratch);
                    if score > best.0 {
                        best = (score, k);
                    }
                }
                active[i].theta = fine_theta[best.1];
            } else {
                let (omega, chirp) = (array.omega(active[i].theta), array.chirp_constant(active[i].theta));
                for (k, &u) in fine_u.iter().enumerate() {
                    compressor.compress_into(omega, chirp * u, &mut scratch);
                    let score = quadratic_form(&r_res, &scratch);
                    if score > best.0 {
                        best = (score, k);
                    }
                }
                active[i].u = fine_u[best.1];
            }
            let (theta, u) = (active[i].theta, active[i].u);
            compressor.compress_into(array.omega(theta), array.chirp_constant(theta) * u, &mut active[i].atom);
        }
    }
}

/// Least-squares channel reconstruction `Ĥ = Â (WᴴÂ)⁺ Y` with Fresnel atoms
/// at `(θ̂, û)`. Returns the channel and whether `WᴴÂ` was rank deficient.
pub fn reconstruct_channel(
    array: &ArrayConfig,
    atoms: &[(f64, f64)],
    combiner: &CMat,
    snapshots: &CMat,
) -> (CMat, bool) {
    let m = array.elements();
    let n = snapshots.ncols();
    if atoms.is_empty() {
        return (CMat::zeros(m, n), false);
    }
    let mut a_hat = CMat::zeros(m, atoms.len());
    for (l, &(theta, u)) in atoms.iter().enumerate() {
        a_hat.set_column(l, &array.steering_chirp(theta, u));
    }
    let d = combiner.adjoint() * &a_hat;
    let (pinv, rank) = pseudo_inverse(&d, 1e-10);
    let s_hat = pinv * snapshots;
    (a_hat * s_hat, rank < atoms.len())
}

/// Full CL-KL pipeline. The observation is whitened first when
/// [`ClklConfig::whiten`] is set and it is not already white.
pub fn clkl_estimate(
    obs: &CompressedObservation,
    array: &ArrayConfig,
    paths: usize,
    cfg: &ClklConfig,
) -> Result<EstimateResult> {
    cfg.validate()?;
    let n_rf = obs.rf_chains();
    if obs.combiner.nrows() != array.elements() {
        return Err(Error::DimensionMismatch(format!(
            "combiner has {} rows, array has {} elements",
            obs.combiner.nrows(),
            array.elements()
        )));
    }
    if paths == 0 {
        return Err(Error::InvalidConfig("need at least one path".into()));
    }
    let whitened;
    let obs = if cfg.whiten && !obs.whitened {
        whitened = obs.whiten()?;
        &whitened
    } else {
        obs
    };
    let noise = estimate_noise_frozen(&obs.sample_cov, paths)?;
    if paths > crate::crb::max_identifiable_paths(n_rf) {
        warn!(
            "d = {paths} exceeds the identifiability limit {} for N_RF = {n_rf}",
            crate::crb::max_identifiable_paths(n_rf)
        );
    }

    let compressor = AtomCompressor::new(&obs.combiner, array.centred());
    let problem = KlProblem::new(obs.sample_cov.clone(), obs.gram(), noise, cfg.sparsity);
    let outcome = multi_start(&problem, array, &compressor, cfg, paths)?;
    let run = outcome.winning_run();

    let (mut active, padded) = select_active_set(&run.dict, &run.powers, paths, &obs.sample_cov);
    let empty_active_set = run.powers.iter().all(|&p| p <= 0.0);
    let scan_performed = cfg.scan_passes > 0;
    if scan_performed {
        post_loop_scan(&mut active, &obs.sample_cov, array, &compressor, cfg);
    }

    let range_max = cfg.range_bounds.1;
    let est_paths: Vec<EstimatedPath> = active
        .iter()
        .map(|a| EstimatedPath::new(array, a.theta, a.u, a.power, range_max))
        .collect();
    let atoms: Vec<(f64, f64)> = active.iter().map(|a| (a.theta, a.u)).collect();
    let (channel, rank_deficient) = reconstruct_channel(array, &atoms, &obs.combiner, &obs.snapshots);

    Ok(EstimateResult {
        paths: est_paths,
        channel,
        noise_estimate: noise,
        rank_deficient,
        clkl: Some(ClklDiagnostics {
            winning_start: outcome.winner,
            starts: outcome.runs.iter().map(|r| r.summary.clone()).collect(),
            noise_estimate: noise,
            padded_atoms: padded,
            empty_active_set,
            scan_performed,
        }),
        psomp: None,
    })
}
