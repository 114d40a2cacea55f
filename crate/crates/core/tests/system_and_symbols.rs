use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pdhyp::symbol_analysis::{
    direction_pair, elliptic_block_check, kalman_rank, sk_condition, spectral_abscissa, symbol_at, DirectionSample,
};
use pdhyp::system_model::{isentropic_euler, linearized_euler, random_system, EulerParams, RandomSystemOptions};

#[test]
fn linearized_euler_2d_kalman_rank_is_d_plus_one() {
    let spec = linearized_euler(2, 1.0).unwrap();
    for w in DirectionSample::new(2, 12).directions {
        let (a, b) = direction_pair(&spec, &w).unwrap();
        assert_eq!(kalman_rank(&a, &b).rank, 3);
    }
}

#[test]
fn isentropic_euler_2d_has_every_structure_flag() {
    let spec = isentropic_euler(EulerParams { d: 2, gamma: 1.4, ..Default::default() }).unwrap();
    let f = spec.flux.flags;
    assert!(f.relaxation_ready());
    let v = spec.validate();
    assert!(v.passed(), "{:?}", v.failures);
    assert_eq!(v.detected_flags, f);
}

#[test]
fn isentropic_euler_sk_holds_in_every_dimension() {
    for d in 1..=3 {
        let spec = isentropic_euler(EulerParams { d, ..Default::default() }).unwrap();
        assert!(sk_condition(&spec, &DirectionSample::default_for(d)).unwrap().holds);
    }
}

#[test]
fn symbol_at_zero_frequency_is_the_damping() {
    let spec = linearized_euler(2, 1.5).unwrap();
    let s = symbol_at(&spec, &[0.0, 0.0]);
    assert_eq!(s.e, s.b);
    let b = spec.b_matrix();
    assert!((s.b.map(|c| c.re) - b).norm() == 0.0);
}

fn random_specs(seed: u64, count: usize, zero_a11: bool) -> Vec<pdhyp::system_model::SystemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let opts = RandomSystemOptions {
                n1: 1 + k % 2,
                n2: 1 + (k / 2) % 2,
                d: 1 + k % 3,
                zero_a11,
                break_sk: k % 4 == 3,
                nonsymmetric_l2: k % 5 == 0,
            };
            random_system(&mut rng, opts).unwrap()
        })
        .collect()
}

#[test]
fn elliptic_block_check_matches_sk_on_structured_systems() {
    for spec in random_specs(11, 100, true) {
        let sample = DirectionSample::new(spec.d(), 8);
        let sk = sk_condition(&spec, &sample).unwrap();
        let el = elliptic_block_check(&spec, &sample).unwrap();
        assert_eq!(sk.holds, el.lambda_min > 1e-10, "lambda_min {}", el.lambda_min);
        assert_eq!(sk.holds, el.sk_holds);
    }
}

#[test]
fn positive_abscissa_iff_sk_on_sampled_frequencies() {
    for spec in random_specs(12, 40, false) {
        let sample = DirectionSample::new(spec.d(), 6);
        let sk = sk_condition(&spec, &sample).unwrap();
        let all_positive = sample.directions.iter().all(|w| {
            [0.1, 1.0, 10.0].iter().all(|&r| {
                let xi: Vec<f64> = w.iter().map(|x| r * x).collect();
                spectral_abscissa(&spec, &xi).unwrap().0 > 1e-9
            })
        });
        assert_eq!(sk.holds, all_positive);
    }
}

#[test]
fn coercivity_is_the_symmetric_part_minimum() {
    for spec in random_specs(13, 20, false) {
        let l2 = &spec.relax.l2;
        let sym: DMatrix<f64> = (l2 + l2.transpose()) * 0.5;
        let want = sym.symmetric_eigenvalues().min();
        assert!((spec.relax.coercivity() - want).abs() < 1e-12);
        let v = spec.validate();
        assert!(v.symmetry_residual == 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn isentropic_euler_always_validates(gamma in 1.0001f64..=5.0, a in 1e-3f64..=10.0, rhobar in 1e-3f64..=10.0, d in 1usize..=3) {
        let spec = isentropic_euler(EulerParams { d, gamma, a, rhobar, epsilon: 1.0 }).unwrap();
        let v = spec.validate();
        prop_assert!(v.passed(), "{:?}", v.failures);
    }

    #[test]
    fn symbol_is_homogeneous(rho in 1e-3f64..1e3, t in 0.0f64..6.3) {
        let spec = linearized_euler(2, 1.0).unwrap();
        let w = [t.cos(), t.sin()];
        let a1 = symbol_at(&spec, &[rho * w[0], rho * w[1]]).a;
        let a0 = symbol_at(&spec, &w).a;
        prop_assert!((a1 - a0 * num_complex::Complex64::new(rho, 0.0)).norm() <= 1e-12 * rho);
    }
}
