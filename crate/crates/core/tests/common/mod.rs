#![allow(dead_code)]

use nearfield_core::atoms::AtomCompressor;
use nearfield_core::clkl::{angle_grid, ClklConfig, DictionaryState, KlProblem};
use nearfield_core::crb::{covariance_derivatives, model_covariance, CrbPoint};
use nearfield_core::manifold::{ArrayConfig, PathParam};
use nearfield_core::scene::{draw_combiner, draw_scene, ScenarioConfig, SceneRng};
use nearfield_core::CMat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn default_array() -> ArrayConfig {
    ArrayConfig::new(28e9, 64).unwrap()
}

/// Five-point central difference of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// Five-point central difference of a matrix-valued function.
pub fn central_diff_mat(f: impl Fn(f64) -> CMat, x: f64, h: f64) -> CMat {
    let s = |k: f64| -> nearfield_core::C64 { nearfield_core::C64::new(k / (12.0 * h), 0.0) };
    f(x - 2.0 * h) * s(1.0) - f(x - h) * s(8.0) + f(x + h) * s(8.0) - f(x + 2.0 * h) * s(1.0)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// A KL problem built from a random default-scenario scene, with a sparse
/// random power vector on a random subset of a 32-atom dictionary.
pub struct KlState {
    pub array: ArrayConfig,
    pub compressor: AtomCompressor,
    pub dict: DictionaryState,
    pub problem: KlProblem,
    pub powers: Vec<f64>,
}

pub fn random_kl_state(seed: u64) -> KlState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sc = ScenarioConfig::default();
    sc.snr_db = rng.random_range(-10.0..20.0);
    let scene = draw_scene(&sc, &mut SceneRng::new(seed)).unwrap();
    let obs = scene.observation().whiten().unwrap();
    let array = sc.array.clone();
    let compressor = AtomCompressor::new(&obs.combiner, array.centred());
    let cfg = ClklConfig::for_scenario(&sc);
    let (u_lo, u_hi) = cfg.curvature_bounds();
    let theta = angle_grid(32, cfg.angle_span_deg);
    let u: Vec<f64> = (0..theta.len()).map(|_| rng.random_range(u_lo..u_hi)).collect();
    let dict = DictionaryState::new(&array, &compressor, theta, u);
    let powers: Vec<f64> = (0..dict.len())
        .map(|_| if rng.random_bool(0.3) { rng.random_range(0.05..1.0) } else { 0.0 })
        .collect();
    let noise = rng.random_range(0.2..2.0) * sc.noise_power();
    let problem = KlProblem::new(obs.sample_cov.clone(), obs.gram(), noise, cfg.sparsity);
    KlState {
        array,
        compressor,
        dict,
        problem,
        powers,
    }
}

/// Max relative error of the analytic power gradient against finite
/// differences, over all atoms.
pub fn power_gradient_error(s: &KlState) -> f64 {
    (0..s.dict.len())
        .map(|i| {
            // stay inside p_i > 0, where the ℓ1 term is linear
            let mut p = s.powers.clone();
            if p[i] <= 0.0 {
                p[i] = 0.05;
            }
            let an = s.problem.power_gradient(&s.dict, &p).unwrap()[i];
            let f = |x: f64| {
                let mut q = p.clone();
                q[i] = x;
                s.problem.objective(&s.dict, &q).unwrap()
            };
            rel_err(an, central_diff(f, p[i], 1e-3 * p[i]))
        })
        .fold(0.0, f64::max)
}

/// Max relative error of the curvature gradient over atoms with power.
pub fn curvature_gradient_error(s: &KlState) -> f64 {
    (0..s.dict.len())
        .filter(|&i| s.powers[i] > 0.0)
        .map(|i| {
            let an = s
                .problem
                .curvature_gradient(&s.array, &s.compressor, &s.dict, &s.powers, i)
                .unwrap();
            let f = |u: f64| {
                let mut d = s.dict.clone();
                d.set_u(&s.compressor, i, u);
                s.problem.objective(&d, &s.powers).unwrap()
            };
            // u enters as phases c·u·m̄² with c·m̄² ≲ 90 rad per unit u; a
            // fixed 1e-3 step balances stencil truncation against roundoff
            // in L when the gradient is small
            let fd = central_diff(f, s.dict.u[i], 1e-3);
            rel_err(an, fd)
        })
        .fold(0.0, f64::max)
}

pub struct CrbState {
    pub array: ArrayConfig,
    pub combiner: CMat,
    pub point: CrbPoint,
}

pub fn random_crb_state(seed: u64) -> CrbState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let array = default_array();
    let d = rng.random_range(1..=3);
    let combiner = draw_combiner(64, 8, &mut rng).unwrap();
    let r_rd = array.rayleigh_distance();
    let paths: Vec<PathParam> = (0..d)
        .map(|_| {
            PathParam::new(
                rng.random_range(20f64..60.0).to_radians(),
                rng.random_range(0.05 * r_rd..r_rd),
                rng.random_range(0.2..1.5),
            )
            .unwrap()
        })
        .collect();
    let point = CrbPoint::from_paths(&array, &paths, rng.random_range(0.01..1.0));
    CrbState { array, combiner, point }
}

/// Max over η components of `‖∂R − FD‖_F / ‖∂R‖_F`.
pub fn covariance_derivative_error(s: &CrbState) -> f64 {
    let analytic = covariance_derivatives(&s.array, &s.combiner, &s.point);
    let eta = s.point.to_vec();
    let d = s.point.paths();
    (0..eta.len())
        .map(|k| {
            // ω and κ enter as phases m̄ω and m̄²κ with |m̄| ≤ 32
            let h = if k < d {
                1e-4
            } else if k < 2 * d {
                1e-7
            } else {
                1e-3 * eta[k].abs()
            };
            let f = |x: f64| {
                let mut v = eta.clone();
                v[k] = x;
                model_covariance(&s.array, &s.combiner, &CrbPoint::from_vec(&v))
            };
            let fd = central_diff_mat(f, eta[k], h);
            (&analytic[k] - &fd).norm() / analytic[k].norm().max(1e-12)
        })
        .fold(0.0, f64::max)
}

/// Minimum assignment cost by exhaustive permutation search.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for c in 0..cost.len() {
            if !used[c] {
                used[c] = true;
                rec(cost, row + 1, used, acc + cost[row][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best
}
