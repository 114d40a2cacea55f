use nalgebra::DVector;
use num_complex::Complex64;

use pdhyp::linear_propagator::{a_priori_residual, semigroup_lp_bound, verify_mode_decay, DampedForm, HomogeneousSymbol, PropagatorPlan};
use pdhyp::littlewood_paley::FilterBank;
use pdhyp::lyapunov_certificate::{default_r_grid, LyapunovCertificate};
use pdhyp::nonlinear_solver::gaussian_data;
use pdhyp::spectral::{Grid, Lp, PhysicalField, SpectralField};
use pdhyp::symbol_analysis::{symbol_at, DirectionSample};
use pdhyp::system_model::linearized_euler;

fn setup(d: usize, modes: usize, period: f64) -> (PropagatorPlan, LyapunovCertificate, Grid) {
    let spec = linearized_euler(d, 1.0).unwrap();
    let grid = Grid::cubic(d, modes, period).unwrap();
    let cert = LyapunovCertificate::construct(&spec, &DirectionSample::default_for(d), &default_r_grid()).unwrap();
    (PropagatorPlan::new(&spec, &grid).unwrap(), cert, grid)
}

fn data(grid: &Grid) -> SpectralField {
    let center: Vec<f64> = grid.periods().iter().map(|l| std::f64::consts::PI * l).collect();
    gaussian_data(grid, &vec![1.0; grid.dim() + 1], 1.0, &center)
}

#[test]
fn propagate_at_zero_time_is_identity() {
    let (plan, _, grid) = setup(2, 16, 1.0);
    let z = data(&grid);
    assert!(plan.propagate(&z, 0.0).unwrap().max_diff(&z) == 0.0);
}

#[test]
fn duhamel_without_source_is_the_propagator() {
    let (plan, _, grid) = setup(1, 64, 2.0);
    let z = data(&grid);
    let zero = SpectralField::zeros(&grid, 2);
    let a = plan.duhamel(&z, &|_| zero.clone(), 3.0, 4).unwrap();
    let b = plan.propagate(&z, 3.0).unwrap();
    assert!(a.max_diff(&b) <= 1e-13 * b.l2_norm());
}

#[test]
fn constant_source_reaches_the_stationary_state() {
    // For xi != 0 the symbol E(xi) is invertible with positive abscissa, so
    // z(t) -> E(xi)^{-1} F_hat(xi) mode by mode.
    let (plan, _, grid) = setup(1, 16, 1.0);
    let f = data(&grid);
    let zero = SpectralField::zeros(&grid, 2);
    let z = plan.duhamel(&zero, &|_| f.clone(), 60.0, 600).unwrap();
    for i in (0..grid.len()).filter(|&i| grid.retained(i) && grid.xi_norm(i) > 0.0) {
        let e = symbol_at(&plan.spec, grid.xi(i)).e;
        let want = e.lu().solve(&DVector::from_vec(f.mode(i))).unwrap();
        let got = DVector::from_vec(z.mode(i));
        let err = (got - &want).norm();
        assert!(err <= 1e-8 * want.norm().max(1e-300), "mode {i}: {err:e} vs {:e}", want.norm());
    }
}

#[test]
fn euler_damped_mode_is_u_plus_grad_a() {
    let (plan, _, grid) = setup(2, 16, 1.0);
    let z = data(&grid);
    let w = plan.damped_mode(&z, DampedForm::Normalized).unwrap();
    for k in 0..2 {
        let mut want = z.select(k + 1..k + 2);
        want.axpy(Complex64::new(1.0, 0.0), &z.select(0..1).derivative(k));
        assert!(w.select(k..k + 1).max_diff(&want) <= 1e-13 * want.l2_norm());
    }
    let mut flat = SpectralField::zeros(&grid, 3);
    let idx0 = (0..grid.len()).find(|&i| grid.xi_norm(i) == 0.0).unwrap();
    flat.comps[0][idx0] = Complex64::new(2.0, 0.0);
    assert_eq!(plan.damped_mode(&flat, DampedForm::Normalized).unwrap().l2_norm(), 0.0);
}

#[test]
fn damped_forms_agree_on_random_fields() {
    let (plan, _, grid) = setup(1, 64, 2.0);
    let f = PhysicalField::from_fn(&grid, 2, |x| vec![(x[0] / 2.0).sin() + 0.2 * (3.0 * x[0] / 2.0).cos(), (2.0 * x[0] / 2.0).cos()]);
    let z = f.to_spectral();
    let p = plan.damped_mode(&z, DampedForm::Projected).unwrap();
    let n = plan.damped_mode(&z, DampedForm::Normalized).unwrap();
    // friction 1: L2 = 1, so the forms coincide on the damped block
    assert!(p.select(1..2).max_diff(&n) <= 1e-12 * n.l2_norm());
    let proj = plan.projector();
    assert_eq!(&proj * &proj, proj);
    assert_eq!(proj.transpose(), proj);
}

#[test]
fn envelope_ratio_is_one_half_at_time_zero() {
    let (plan, cert, grid) = setup(1, 64, 2.0);
    let rep = verify_mode_decay(&plan, &cert, &[data(&grid)], &[0.0, 1.0, 5.0]).unwrap();
    assert!((rep.ratio_at_zero - 0.5).abs() < 1e-12);
    assert_eq!(rep.violations, 0);
}

#[test]
fn a_priori_estimate_holds_for_data_and_pulses() {
    let (plan, cert, grid) = setup(1, 128, 8.0);
    let bank = FilterBank::new(&grid, Default::default());
    let times: Vec<f64> = (0..=40).map(|k| 0.5 * k as f64).collect();
    let z0 = gaussian_data(&grid, &[1.0, 0.0], 3.0, &[8.0 * std::f64::consts::PI]);
    let zero = SpectralField::zeros(&grid, 2);
    let free = a_priori_residual(&plan, &cert, &bank, &z0, &|_| zero.clone(), &times, -0.5, 0.5).unwrap();
    assert!(free.residual <= 0.0, "{free:?}");
    let g = gaussian_data(&grid, &[0.0, 1.0], 1.0, &[8.0 * std::f64::consts::PI]);
    let pulse = move |t: f64| g.scaled(if (1.0..2.0).contains(&t) { 1.0 } else { 0.0 });
    let forced = a_priori_residual(&plan, &cert, &bank, &zero, &pulse, &times, -0.5, 0.5).unwrap();
    assert!(forced.residual <= 0.0, "{forced:?}");
    let trivial = a_priori_residual(&plan, &cert, &bank, &z0, &|_| zero.clone(), &[0.0], -0.5, 0.5).unwrap();
    assert!(trivial.residual <= 0.0 && (trivial.measured_constant - 1.0).abs() < 1e-12);
}

#[test]
fn localized_semigroup_bound_for_heat_and_porous_symbols() {
    let grid = Grid::cubic(1, 1024, 16.0).unwrap();
    let bank = FilterBank::new(&grid, Default::default());
    let z = PhysicalField::from_fn(&grid, 1, |x| vec![(1..120).map(|k| (k as f64 * x[0] / 16.0 + k as f64).sin() / k as f64).sum()]).to_spectral();
    for sym in [HomogeneousSymbol::laplacian(1.0), HomogeneousSymbol::laplacian(2.0)] {
        for j in -3..=3 {
            for p in [Lp::One, Lp::Two, Lp::Inf] {
                for t in [0.0, 0.5, 2.0] {
                    let r = semigroup_lp_bound(&sym, &bank, &z, j, t * 4f64.powi(-j), p).unwrap();
                    assert!(r.ratio <= 4.0, "j={j} p={p:?}: {r:?}");
                }
            }
        }
    }
    let degenerate = HomogeneousSymbol::new(2.0, |xi: &[f64]| xi[0] * xi[0] * 0.0);
    assert!(semigroup_lp_bound(&degenerate, &bank, &z, 0, 1.0, Lp::Two).is_err());
}
