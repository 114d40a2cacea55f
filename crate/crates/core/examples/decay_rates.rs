//! Decay exponents: the linear radial oracle in 2-D and a nonlinear
//! Euler run on a large 1-D torus.

use pdhyp::decay_diagnostics::{DecayStudy, DecayVariant, RadialOracle};
use pdhyp::nonlinear_solver::{gaussian_data, NonlinearSolver, SolverConfig};
use pdhyp::spectral::Grid;
use pdhyp::system_model::{isentropic_euler, EulerParams};

fn main() -> pdhyp::Result<()> {
    let oracle = RadialOracle::new(2, 1.0, 1.0)?;
    let (spec, fit) = oracle.fit_low((10.0, 1e3), 60)?;
    println!("oracle d=2 sigma1=1: alpha1 = {}, fitted slope {:.4} (residual {:.1e})", spec.alpha1, fit.slope, fit.residual);

    let euler = isentropic_euler(EulerParams::default())?;
    let grid = Grid::cubic(1, 1024, 64.0)?;
    let solver = NonlinearSolver::new(&euler, &grid, None)?;
    let z0 = gaussian_data(&grid, &[1e-2, 0.0], 2.0, &[64.0 * std::f64::consts::PI]);
    let cfg = SolverConfig { dt: 0.4 / grid.max_retained_xi(), t_end: 32.0, record_stride: 2, ..Default::default() };
    let report = solver.solve(&z0, &cfg)?.into_result()?;
    let study = DecayStudy::run(&report, 0.5, DecayVariant::Strong, (1.0, 32.0))?;
    println!("\nnonlinear Euler d=1, sigma1=1/2, c0 = {:.1}", study.spec.c0);
    for (name, f) in [("low", &study.low), ("high", &study.high), ("damped", &study.damped), ("z2 low", &study.z2_low)] {
        println!("  {name:<7} slope {:>7.3}  (theory {:>5.2})", f.slope, f.theory);
    }
    println!("  negative-norm ratio {:.3}", study.negative.ratio);
    Ok(())
}
