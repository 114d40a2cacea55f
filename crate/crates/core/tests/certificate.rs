use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pdhyp::linalg::expm;
use pdhyp::linear_propagator::PropagatorPlan;
use pdhyp::lyapunov_certificate::{default_r_grid, euler_explicit_functional, LyapunovCertificate};
use pdhyp::spectral::{Grid, PhysicalField, SpectralField};
use pdhyp::symbol_analysis::{direction_pair, DirectionSample};
use pdhyp::system_model::linearized_euler;

fn euler_cert(d: usize) -> (pdhyp::system_model::SystemSpec, LyapunovCertificate) {
    let spec = linearized_euler(d, 1.0).unwrap();
    let cert = LyapunovCertificate::construct(&spec, &DirectionSample::new(d, 14), &default_r_grid()).unwrap();
    (spec, cert)
}

#[test]
fn shrinking_the_weights_keeps_the_certificate_valid() {
    for d in [1, 2] {
        let (spec, cert) = euler_cert(d);
        for shrink in [1.0, 0.5, 0.1, 1e-3] {
            assert!(cert.reverify(&spec, shrink).unwrap().valid, "d={d} shrink={shrink}");
        }
    }
}

#[test]
fn weights_decrease_and_n_min_is_positive() {
    let (spec, cert) = euler_cert(2);
    assert_eq!(cert.epsilons[0], 1.0);
    assert!(cert.epsilons.windows(2).all(|w| w[1] < w[0]));
    assert!(cert.n_min > 0.0);
    for w in &cert.directions {
        assert!(cert.n_omega(&spec, w).unwrap() >= cert.n_min * (1.0 - 1e-12));
    }
}

#[test]
fn envelope_starts_at_two_and_saturates_above_unit_frequency() {
    let (_, cert) = euler_cert(1);
    assert_eq!(cert.decay_envelope(0.3, 0.0), 2.0);
    let e = cert.decay_envelope(1.0 / cert.kappa, 7.0);
    assert_eq!(cert.decay_envelope(5.0 / cert.kappa, 7.0), e);
    assert!(cert.decay_envelope(0.5 / cert.kappa, 7.0) > e);
}

#[test]
fn certificate_json_round_trip() {
    let (spec, cert) = euler_cert(2);
    let text = serde_json::to_string(&cert).unwrap();
    let back: LyapunovCertificate = serde_json::from_str(&text).unwrap();
    assert_eq!(back.epsilons, cert.epsilons);
    assert!(back.reverify(&spec, 1.0).unwrap().valid);
}

#[test]
fn functional_decays_along_the_exact_flow() {
    let (spec, cert) = euler_cert(2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = [0.6, 0.8];
    let (a, b) = direction_pair(&spec, &w).unwrap();
    let n_w = cert.n_omega(&spec, &w).unwrap();
    for r in [1e-2, 0.3, 1.0, 30.0] {
        let z0 = nalgebra::DVector::from_fn(3, |_, _| Complex64::new(rng.random(), rng.random()));
        let e = &a * Complex64::new(r, 0.0) + &b;
        let l0 = cert.functional_value(&spec, r, &w, &z0).unwrap();
        for k in 1..=10 {
            let tau = k as f64 * 2.0;
            let z = expm(&(&e * Complex64::new(-tau, 0.0))) * &z0;
            let l = cert.functional_value(&spec, r, &w, &z).unwrap();
            assert!(l <= (-0.25 * (r * r).min(1.0) * n_w * tau).exp() * l0 * (1.0 + 1e-9));
        }
    }
}

fn sample_field(grid: &Grid) -> SpectralField {
    let l = grid.periods()[0];
    let mut z = PhysicalField::from_fn(grid, 2, |x| {
        let y = x[0] / l - std::f64::consts::PI;
        vec![(-y * y).exp(), 0.3 * (y * (-y * y).exp())]
    })
    .to_spectral();
    z.remove_mean();
    z
}

#[test]
fn explicit_functional_without_cross_term_is_the_energy() {
    let grid = Grid::cubic(1, 128, 2.0).unwrap();
    let z = sample_field(&grid);
    let e = euler_explicit_functional(0.0, &z).unwrap();
    let energy = z.l2_norm().powi(2);
    assert!((e - energy).abs() <= 1e-12 * energy);
}

#[test]
fn explicit_functional_single_mode_by_parseval() {
    // One complex mode at xi0 = 3 / L: a_hat = 1, u_hat = 2 i.
    let grid = Grid::cubic(1, 32, 2.0).unwrap();
    let idx = (0..grid.len()).find(|&i| grid.wavevector(i) == vec![3]).unwrap();
    let xi0 = grid.xi(idx)[0];
    let mut z = SpectralField::zeros(&grid, 2);
    let (a, u) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0));
    z.comps[0][idx] = a;
    z.comps[1][idx] = u;
    let eps1 = 0.3;
    let vol = grid.volume();
    let want = vol * (a.norm_sqr() + u.norm_sqr() + eps1 * (u * (Complex64::new(0.0, xi0) * a).conj()).re / (1.0 + xi0 * xi0));
    let got = euler_explicit_functional(eps1, &z).unwrap();
    assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
}

#[test]
fn explicit_functional_is_monotone_along_linear_euler() {
    let spec = linearized_euler(1, 1.0).unwrap();
    let grid = Grid::cubic(1, 128, 2.0).unwrap();
    let plan = PropagatorPlan::new(&spec, &grid).unwrap();
    let z0 = sample_field(&grid);
    let mut prev = euler_explicit_functional(0.1, &z0).unwrap();
    for k in 1..=40 {
        let z = plan.propagate(&z0, 0.25 * k as f64).unwrap();
        let v = euler_explicit_functional(0.1, &z).unwrap();
        assert!(v <= prev * (1.0 + 1e-12), "step {k}: {v} > {prev}");
        prev = v;
    }
}
