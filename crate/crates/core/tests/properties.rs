mod common;

use proptest::prelude::*;
use quantum_otto::algebra::{gibbs_b, BVector};
use quantum_otto::cycle::{evaluate_cycle, EngineParams, Integrator, Schedule};
use quantum_otto::dynamics::{
    adiabat_map, adiabat_propagate, isochore_generator, AdiabatParams, IsochoreParams,
    SegmentGenerator,
};
use quantum_otto::noise::{lambda_for_sigma, sigma_for_lambda};
use quantum_otto::optimize::{fractions_from_logits, logits_from_fractions};
use quantum_otto::thermo::{energy_entropy, power_field, power_friction, von_neumann_entropy_of};

fn physical_state() -> impl Strategy<Value = BVector> {
    (any::<u64>()).prop_map(|seed| BVector::new(common::random_states(1, seed)[0]))
}

fn coarse() -> Integrator {
    Integrator {
        n_seg: 32,
        ..Integrator::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adiabats_preserve_positivity_and_b45(
        b in physical_state(),
        tau in 0.0..1.0f64,
        lambda in 0.0..5.0f64,
        omega_end in 0.5..15.0f64,
    ) {
        let params = AdiabatParams { n_seg: 16, ..AdiabatParams::new(5.0, omega_end, tau, lambda) };
        let out = adiabat_propagate(&params, 2.0, &b).unwrap();
        prop_assert!(out.b_final.min_eigenvalue() > -1e-12);
        prop_assert!((out.b_final.0[3] - b.0[3]).abs() < 1e-14);
        prop_assert!((out.b_final.0[4] - b.0[4]).abs() < 1e-14);
    }

    #[test]
    fn unitary_adiabats_conserve_purity(b in physical_state(), tau in 0.0..2.0f64) {
        let params = AdiabatParams { n_seg: 8, ..AdiabatParams::new(3.0, 9.0, tau, 0.0) };
        let out = adiabat_map(&params, 1.5).unwrap().apply(&b);
        prop_assert!((out.0.norm() - b.0.norm()).abs() < 1e-12);
    }

    #[test]
    fn dephasing_only_shrinks_the_rotating_plane(
        omega in 0.1..20.0f64, j in -4.0..4.0f64, t in -1.0..1.0f64, lambda in 0.0..3.0f64,
    ) {
        let seg = SegmentGenerator::new(omega, j);
        let m = seg.map(t.abs(), lambda);
        let sv = m.fixed_view::<3, 3>(0, 0).into_owned().singular_values();
        prop_assert!(sv.max() <= 1.0 + 1e-12);
        // Unitary segments invert under time reversal.
        let back = seg.map(-t, 0.0) * seg.map(t, 0.0);
        prop_assert!((back - nalgebra::Matrix5::identity()).amax() < 1e-12);
    }

    #[test]
    fn isochores_relax_to_gibbs(
        omega in 0.2..15.0f64, j in 0.1..4.0f64, temperature in 0.3..10.0f64, gamma in 0.2..3.0f64,
        b in physical_state(),
    ) {
        let iso = IsochoreParams { omega, temperature, gamma_rate: gamma, pure_dephasing: -0.05 };
        let g = isochore_generator(&iso, j).unwrap();
        let late = g.exp(60.0 / gamma).apply(&b);
        prop_assert!(late.max_abs_diff(&gibbs_b(omega, j, temperature).unwrap()) < 1e-9);
    }

    #[test]
    fn energy_entropy_bounds_von_neumann(b in physical_state(), omega in 0.1..15.0f64, j in -4.0..4.0f64) {
        let se = energy_entropy(&b, omega, j).unwrap();
        let svn = von_neumann_entropy_of(&b).unwrap();
        prop_assert!(se >= svn - 1e-10);
        prop_assert!(se <= 4f64.ln() + 1e-12);
    }

    #[test]
    fn friction_is_odd_in_the_drive(b in physical_state(), omega in 0.1..15.0f64, j in 0.1..4.0f64, rate in -50.0..50.0f64) {
        let f = power_friction(omega, rate, j, &b).unwrap();
        let r = power_friction(omega, -rate, j, &b).unwrap();
        prop_assert!((f + r).abs() < 1e-12);
        let p = power_field(omega, rate, j, &b).unwrap();
        prop_assert!((p + power_field(omega, -rate, j, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sigma_and_lambda_invert(lambda in 0.0..100.0f64, tau in 1e-4..5.0f64, n in 1usize..1000) {
        let s = sigma_for_lambda(lambda, tau, n).unwrap();
        prop_assert!((lambda_for_sigma(s, tau, n).unwrap() - lambda).abs() <= 1e-12 * (1.0 + lambda));
    }

    #[test]
    fn softmax_fractions_stay_on_the_simplex(x in proptest::collection::vec(-30.0..30.0f64, 3)) {
        let f = fractions_from_logits(&x, 1e-6);
        prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(f.iter().all(|&v| v >= 1e-6));
        let back = fractions_from_logits(&logits_from_fractions(&f, 1e-6), 1e-6);
        for (a, b) in f.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cycles_obey_the_first_and_second_law(
        f in proptest::collection::vec(0.01..1.0f64, 4),
        total in 0.2..4.0f64,
        lambda in 0.0..3.0f64,
    ) {
        let sum: f64 = f.iter().sum();
        let s = Schedule::from_array(std::array::from_fn(|k| total * f[k] / sum));
        let p = EngineParams::reference().with_lambdas(lambda, 2.0 * lambda);
        let c = evaluate_cycle(&p, &s, &coarse()).unwrap();
        prop_assert!(c.first_law_residual().abs() < 1e-10);
        prop_assert!(c.ds_ext >= -1e-9);
    }
}
