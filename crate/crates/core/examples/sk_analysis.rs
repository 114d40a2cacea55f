//! Shizuta-Kawashima analysis of the built-in systems and a few random ones.

use pdhyp::symbol_analysis::{check_structural_equivalences, direction_pair, sk_condition, DirectionSample};
use pdhyp::system_model::{isentropic_euler, linearized_euler, random_system, sk_counterexample, EulerParams, RandomSystemOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pdhyp::Result<()> {
    let systems = vec![
        linearized_euler(2, 1.0)?,
        isentropic_euler(EulerParams::default())?,
        sk_counterexample()?,
    ];
    for spec in &systems {
        let sample = DirectionSample::default_for(spec.d());
        let verdict = sk_condition(spec, &sample)?;
        println!("{:<20} n1={} n2={} d={}  SK holds: {}", spec.name, spec.dims.n1, spec.dims.n2, spec.d(), verdict.holds);
        if let Some(w) = &verdict.witness {
            println!("    undamped eigenvector along omega={:?}, residual {:.1e}", w.omega, w.residual);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    println!("\nrandom systems, one direction each:");
    println!("{:>4} {:>10} {:>6} {:>12} {:>9}", "n", "gram", "rank", "abscissa", "agree");
    for k in 0..6 {
        let opts = RandomSystemOptions { n1: 1 + k % 2, n2: 1 + k % 3, d: 1 + k % 3, zero_a11: false, break_sk: k == 5, nonsymmetric_l2: false };
        let spec = random_system(&mut rng, opts)?;
        let omega = &DirectionSample::default_for(spec.d()).directions[0];
        let (a, b) = direction_pair(&spec, omega)?;
        let r = check_structural_equivalences(&a, &b)?;
        println!("{:>4} {:>10.3e} {:>6} {:>12.3e} {:>9}", spec.n(), r.gram_ratio, r.kalman_rank, r.abscissa, r.agree);
    }
    Ok(())
}
