//! Builds a frequency-wise Lyapunov certificate for linearized Euler and
//! prints the envelope it yields.

use pdhyp::lyapunov_certificate::{default_r_grid, LyapunovCertificate};
use pdhyp::symbol_analysis::DirectionSample;
use pdhyp::system_model::linearized_euler;

fn main() -> pdhyp::Result<()> {
    for d in [1, 2] {
        let spec = linearized_euler(d, 1.0)?;
        let sample = DirectionSample::new(d, if d == 1 { 0 } else { 28 });
        let cert = LyapunovCertificate::construct(&spec, &sample, &default_r_grid())?;
        let check = cert.reverify(&spec, 1.0)?;
        println!("d = {d}");
        println!("  weights          {:?}", cert.epsilons);
        println!("  eta (critical)   {:.4} ({:.4})", cert.eta, cert.eta_critical);
        println!("  n_min, kappa     {:.4}, {:.4}", cert.n_min, cert.kappa);
        println!("  max residual     {:.2e}   cross-form norm {:.3}", check.max_residual, check.cross_norm);
        for (r, t) in [(0.1, 10.0), (1.0, 10.0), (10.0, 10.0)] {
            println!("  envelope |xi|={r:<4} t={t}: {:.3e}", cert.decay_envelope(r, t));
        }
    }
    Ok(())
}
