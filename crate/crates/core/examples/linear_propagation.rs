//! Exact per-mode propagation of linearized Euler, checked against the
//! certified pointwise envelope.

use pdhyp::linear_propagator::{verify_mode_decay, PropagatorPlan};
use pdhyp::lyapunov_certificate::{default_r_grid, LyapunovCertificate};
use pdhyp::nonlinear_solver::gaussian_data;
use pdhyp::spectral::Grid;
use pdhyp::symbol_analysis::DirectionSample;
use pdhyp::system_model::linearized_euler;

fn main() -> pdhyp::Result<()> {
    let spec = linearized_euler(1, 1.0)?;
    let grid = Grid::cubic(1, 256, 8.0)?;
    let plan = PropagatorPlan::new(&spec, &grid)?;
    let cert = LyapunovCertificate::construct(&spec, &DirectionSample::new(1, 0), &default_r_grid())?;
    let z0 = gaussian_data(&grid, &[1.0, 0.5], 2.0, &[8.0 * std::f64::consts::PI]);

    println!("{:>6} {:>12} {:>12}", "t", "||Z1||", "||Z2||");
    for t in [0.0, 1.0, 4.0, 16.0, 64.0] {
        let z = plan.propagate(&z0, t)?;
        println!("{t:>6} {:>12.4e} {:>12.4e}", z.l2_norm_of(0..1), z.l2_norm_of(1..2));
    }
    let times: Vec<f64> = (0..=40).map(|k| 0.5 * k as f64).collect();
    let rep = verify_mode_decay(&plan, &cert, &[z0], &times)?;
    println!("\nenvelope: {} checks, {} violations, worst ratio {:.3}", rep.checked, rep.violations, rep.max_ratio);
    Ok(())
}
