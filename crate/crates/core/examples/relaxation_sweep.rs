//! Strong relaxation limit of 1-D isentropic Euler: errors against the
//! limit parabolic equation as epsilon shrinks.

use pdhyp::relaxation_limit::{convergence_study, extract_limit_equation, sweep_data, SweepConfig};
use pdhyp::system_model::{isentropic_euler, EulerParams};

fn main() -> pdhyp::Result<()> {
    let spec = isentropic_euler(EulerParams::default())?;
    let eq = extract_limit_equation(&spec)?;
    println!("limit symbol at xi = 1: {}", eq.symbol(&[1.0])[(0, 0)]);

    let cfg = SweepConfig::default();
    let z0 = sweep_data(1, 1, 1, &cfg, 0.05)?;
    let sweep = convergence_study(&spec, &[0.1, 0.05, 0.025], &z0, &cfg)?;
    println!("{:>7} {:>11} {:>11} {:>11}", "eps", "sup dN", "L1 W", "L2 Z2");
    for r in &sweep.rows {
        println!("{:>7} {:>11.4e} {:>11.4e} {:>11.4e}", r.epsilon, r.dn_sup, r.w_l1, r.z2_l2);
    }
    let s = &sweep.slopes;
    println!("slopes: {:.3} {:.3} {:.3}   monotone {}", s.dn_sup, s.w_l1, s.z2_l2, sweep.monotone);
    Ok(())
}
