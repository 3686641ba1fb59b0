mod common;

use common::*;
use nearfield_core::clkl::{clkl_estimate, estimate_noise_frozen, ClklConfig};
use nearfield_core::linalg::{hermitian_eigenvalues, pseudo_inverse};
use nearfield_core::manifold::ArrayConfig;
use nearfield_core::metrics::{channel_nmse, hungarian, assignment_cost, match_paths};
use nearfield_core::scene::{draw_scene, ScenarioConfig, SceneRng};
use nearfield_core::{CMat, C64};
use proptest::prelude::*;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn power_gradient_matches_finite_differences(seed in any::<u64>()) {
        let s = random_kl_state(seed);
        let e = power_gradient_error(&s);
        prop_assert!(e <= 1e-5, "rel err {e}");
    }

    #[test]
    fn curvature_gradient_matches_finite_differences(seed in any::<u64>()) {
        let s = random_kl_state(seed);
        let e = curvature_gradient_error(&s);
        prop_assert!(e <= 1e-5, "rel err {e}");
    }

    #[test]
    fn covariance_derivatives_match_finite_differences(seed in any::<u64>()) {
        let s = random_crb_state(seed);
        let e = covariance_derivative_error(&s);
        prop_assert!(e <= 1e-5, "rel err {e}");
    }
}

proptest! {
    #![proptest_config(cases(256))]

    #[test]
    fn hungarian_is_optimal(
        n in 1usize..=4,
        flat in prop::collection::vec(0.0f64..10.0, 16),
    ) {
        let cost: Vec<Vec<f64>> = (0..n).map(|i| flat[i * 4..i * 4 + n].to_vec()).collect();
        let a = hungarian(&cost);
        let mut seen = a.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        prop_assert!((assignment_cost(&cost, &a) - brute_force_assignment(&cost)).abs() < 1e-9);
    }

    #[test]
    fn matching_is_permutation_invariant(
        pts in prop::collection::vec((0.35f64..1.05, 1.0f64..21.0), 1..=4),
        shift in 0usize..4,
    ) {
        let mut rotated = pts.clone();
        let k = shift % pts.len();
        rotated.rotate_left(k);
        let m = match_paths(&rotated, &pts).unwrap();
        prop_assert!(m.cost.abs() < 1e-12);
        for (i, &j) in m.assignment.iter().enumerate() {
            prop_assert_eq!(rotated[i], pts[j]);
        }
    }

    #[test]
    fn steering_vectors_have_unit_modulus(theta_deg in 5.0f64..85.0, frac in 0.05f64..5.0) {
        let array = default_array();
        let r = frac * array.rayleigh_distance();
        let t = theta_deg.to_radians();
        for v in [
            array.steering_usw(t, r).unwrap(),
            array.steering_fresnel(t, r).unwrap(),
            array.steering_chirp(t, 1.0 / r),
        ] {
            prop_assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn chirp_parameterisation_matches_fresnel(theta_deg in 5.0f64..85.0, frac in 0.05f64..5.0) {
        let array = default_array();
        let r = frac * array.rayleigh_distance();
        let t = theta_deg.to_radians();
        let a = array.steering_fresnel(t, r).unwrap();
        let b = array.steering_omega_kappa(array.omega(t), array.chirp_constant(t) / r);
        prop_assert!((a - b).norm() < 1e-9);
    }

    #[test]
    fn nmse_of_scaled_channel(alpha in -3.0f64..3.0, seed in any::<u64>()) {
        let h = CMat::from_fn(8, 4, |i, j| {
            C64::new(((seed >> (i % 8)) & 7) as f64 + 1.0, (i * j) as f64)
        });
        let e = channel_nmse(&(&h * C64::new(alpha, 0.0)), &h).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert!((e - (alpha - 1.0).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn pseudo_inverse_is_moore_penrose(flat in prop::collection::vec(-1.0f64..1.0, 48)) {
        let a = CMat::from_fn(6, 4, |i, j| C64::new(flat[i * 4 + j], flat[24 + i * 4 + j]));
        let (p, rank) = pseudo_inverse(&a, 1e-10);
        prop_assert!(rank <= 4);
        prop_assert!((&a * &p * &a - &a).norm() < 1e-8);
        prop_assert!((&p * &a * &p - &p).norm() < 1e-8);
        let ap = &a * &p;
        prop_assert!((&ap - ap.adjoint()).norm() < 1e-8);
    }
}

proptest! {
    #![proptest_config(cases(12))]

    #[test]
    fn whitened_observation_has_identity_gram(seed in any::<u64>(), snr in -10.0f64..20.0) {
        let mut sc = ScenarioConfig::default();
        sc.snr_db = snr;
        let scene = draw_scene(&sc, &mut SceneRng::new(seed)).unwrap();
        let w = scene.observation().whiten().unwrap();
        prop_assert!(w.whitened);
        prop_assert!((w.gram() - CMat::identity(8, 8)).norm() < 1e-9);
    }

    #[test]
    fn frozen_noise_is_bounded_by_the_spectrum(seed in any::<u64>(), d in 1usize..=5) {
        let sc = ScenarioConfig::default();
        let scene = draw_scene(&sc, &mut SceneRng::new(seed)).unwrap();
        let eig = hermitian_eigenvalues(&scene.sample_cov);
        let n0 = estimate_noise_frozen(&scene.sample_cov, d).unwrap();
        prop_assert!(n0 >= eig[0] - 1e-12 && n0 <= eig[8 - d - 1] + 1e-12);
    }

    #[test]
    fn estimator_traces_never_increase(seed in any::<u64>(), snr in -10.0f64..20.0) {
        let mut sc = ScenarioConfig::default();
        sc.snr_db = snr;
        let scene = draw_scene(&sc, &mut SceneRng::new(seed)).unwrap();
        let est = clkl_estimate(&scene.observation(), &sc.array, sc.paths, &ClklConfig::for_scenario(&sc)).unwrap();
        let diag = est.clkl.unwrap();
        for s in &diag.starts {
            prop_assert!(s.trace.windows(2).all(|t| t[1] <= t[0] + 1e-12 * t[0].abs()));
        }
        prop_assert_eq!(est.paths.len(), sc.paths);
        prop_assert!(est.paths.iter().all(|p| p.range >= sc.range_min() * (1.0 - 1e-9) && p.range <= sc.range_max() * (1.0 + 1e-9)));
    }

    #[test]
    fn array_geometry_scales(m in 8usize..300, ghz in 10.0f64..100.0) {
        let a = ArrayConfig::new(ghz * 1e9, m).unwrap();
        prop_assert!((a.aperture() - (m - 1) as f64 * a.spacing()).abs() < 1e-12);
        prop_assert!((a.rayleigh_distance() - 2.0 * a.aperture().powi(2) / a.wavelength()).abs() < 1e-9 * a.rayleigh_distance());
        let c = a.centred();
        prop_assert!(c.iter().sum::<f64>().abs() < 1e-9);
    }
}
