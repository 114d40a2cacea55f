//! Small-data run of 1-D isentropic Euler with Lyapunov and energy monitoring.

use pdhyp::nonlinear_solver::{functional_y, gaussian_data, lyapunov_monitor, NonlinearSolver, SolverConfig};
use pdhyp::spectral::Grid;
use pdhyp::system_model::{isentropic_euler, EulerParams};

fn main() -> pdhyp::Result<()> {
    let spec = isentropic_euler(EulerParams::default())?;
    let grid = Grid::cubic(1, 256, 6.0)?;
    let solver = NonlinearSolver::new(&spec, &grid, None)?;
    let z0 = gaussian_data(&grid, &[1e-2, 5e-3], 2.0, &[6.0 * std::f64::consts::PI]);
    let cfg = SolverConfig { dt: 0.4 / grid.max_retained_xi(), t_end: 50.0, record_stride: 50, ..Default::default() };
    let report = solver.solve(&z0, &cfg)?.into_result()?;

    println!("{:>7} {:>11} {:>11} {:>11}", "t", "energy", "sup|Z|", "Lyapunov");
    for r in &report.records {
        println!("{:>7.2} {:>11.4e} {:>11.4e} {:>11.4e}", r.t, r.energy, r.sup_norm, r.lyap);
    }
    let last = report.records.len() - 1;
    let lyap = lyapunov_monitor(&report, 1e-8);
    println!("\nsteps {}   energy residual {:.2e}", report.steps_taken, report.energy_residual_max);
    println!("Lyapunov monotone: {}   Y(T)/Y(0) = {:.3}", lyap.holds, functional_y(&report, last).total / functional_y(&report, 0).total);
    Ok(())
}
