use pdhyp::decay_diagnostics::negative_besov_track;
use pdhyp::nonlinear_solver::{functional_x, functional_y, gaussian_data, lyapunov_monitor, Abort, NonlinearSolver, SolverConfig};
use pdhyp::spectral::{Grid, SpectralField};
use pdhyp::system_model::{isentropic_euler, linearized_euler, EulerParams, SystemSpec};

fn run(spec: &SystemSpec, amps: &[f64], cfg: SolverConfig) -> pdhyp::nonlinear_solver::TrajectoryReport {
    let grid = Grid::cubic(1, 128, 4.0).unwrap();
    let solver = NonlinearSolver::new(spec, &grid, None).unwrap();
    let z0 = gaussian_data(&grid, amps, 1.5, &[4.0 * std::f64::consts::PI]);
    solver.solve(&z0, &cfg).unwrap()
}

fn cfg(t_end: f64, stride: usize) -> SolverConfig {
    SolverConfig { dt: 0.02, t_end, record_stride: stride, ..Default::default() }
}

#[test]
fn zero_data_gives_a_zero_trajectory() {
    let spec = isentropic_euler(EulerParams::default()).unwrap();
    let r = run(&spec, &[0.0, 0.0], cfg(2.0, 10));
    assert!(r.abort.is_none());
    assert!(r.records.iter().all(|x| x.energy == 0.0 && x.sup_norm == 0.0 && x.lyap == 0.0));
    assert!(negative_besov_track(&r, 0.5).unwrap().values.iter().all(|&v| v == 0.0));
}

#[test]
fn final_state_does_not_depend_on_the_record_stride() {
    let spec = isentropic_euler(EulerParams::default()).unwrap();
    let a = run(&spec, &[1e-2, 5e-3], cfg(3.0, 5));
    let b = run(&spec, &[1e-2, 5e-3], cfg(3.0, 15));
    assert_eq!(a.final_hash, b.final_hash);
    assert_ne!(a.records.len(), b.records.len());
}

#[test]
fn linear_run_keeps_the_lyapunov_inequality_with_margin() {
    let spec = linearized_euler(1, 1.0).unwrap();
    let r = run(&spec, &[1.0, 0.5], cfg(10.0, 5));
    let v = lyapunov_monitor(&r, 1e-8);
    assert!(v.holds && v.worst_excess <= 0.0, "{v:?}");
    assert!(r.energy_residual_max < 1e-7);
}

#[test]
fn euler_run_keeps_the_lyapunov_inequality() {
    let spec = isentropic_euler(EulerParams::default()).unwrap();
    let r = run(&spec, &[1e-2, 1e-2], cfg(10.0, 5));
    assert!(lyapunov_monitor(&r, 1e-8).holds);
    let last = r.records.len() - 1;
    assert!(functional_y(&r, last).total <= 10.0 * functional_y(&r, 0).total);
    let neg = negative_besov_track(&r, 0.5).unwrap();
    assert!(neg.ratio <= 3.0 && neg.bounded_by(3.0));
}

#[test]
fn functionals_start_from_data_norms_and_never_decrease() {
    let spec = isentropic_euler(EulerParams::default()).unwrap();
    let r = run(&spec, &[1e-2, 5e-3], cfg(5.0, 5));
    let x0 = functional_x(&r, 0);
    let rec = &r.records[0];
    // the integral terms vanish at t = 0
    let h = r.d as f64 / 2.0;
    let direct = rec.z.low(h - 1.0, r.threshold) + rec.z.high(h + 1.0, r.threshold);
    assert!((x0.total - direct).abs() <= 1e-14 * x0.total, "{:?} vs {direct}", x0.terms);
    let mut prev = x0.total;
    let mut prev_y = functional_y(&r, 0).total;
    for k in 1..r.records.len() {
        let x = functional_x(&r, k).total;
        let y = functional_y(&r, k).total;
        assert!(x >= prev && y >= prev_y);
        prev = x;
        prev_y = y;
    }
}

#[test]
fn oversized_step_aborts_on_cfl() {
    let spec = isentropic_euler(EulerParams::default()).unwrap();
    let r = run(&spec, &[1e-2, 0.0], SolverConfig { dt: 1.0, t_end: 2.0, record_stride: 1, ..Default::default() });
    assert!(matches!(r.abort, Some(Abort::Cfl { .. })), "{:?}", r.abort);
    assert!(r.into_result().is_err());
}

#[test]
fn large_data_aborts_on_smallness() {
    let spec = isentropic_euler(EulerParams::default()).unwrap();
    let r = run(&spec, &[1e-2, 0.0], SolverConfig { smallness: Some(1e-6), ..cfg(1.0, 1) });
    assert!(matches!(r.abort, Some(Abort::Smallness { .. })), "{:?}", r.abort);
}

#[test]
fn damped_mode_of_a_constant_undamped_state_is_zero() {
    let spec = isentropic_euler(EulerParams::default()).unwrap();
    let grid = Grid::cubic(1, 32, 1.0).unwrap();
    let solver = NonlinearSolver::new(&spec, &grid, None).unwrap();
    let mut z = SpectralField::zeros(&grid, 2);
    let idx0 = (0..grid.len()).find(|&i| grid.xi_norm(i) == 0.0).unwrap();
    z.comps[0][idx0] = num_complex::Complex64::new(0.3, 0.0);
    assert!(solver.damped_mode(&z).l2_norm() < 1e-15);
    assert_eq!(solver.step(&SpectralField::zeros(&grid, 2), 0.01).unwrap().l2_norm(), 0.0);
}
