//! Dyadic blocks and hybrid Besov norms of a two-scale field.

use pdhyp::littlewood_paley::{besov_norm, FilterBank, Summation};
use pdhyp::spectral::{Grid, Lp, PhysicalField};

fn main() -> pdhyp::Result<()> {
    let grid = Grid::cubic(1, 512, 8.0)?;
    let bank = FilterBank::new(&grid, Default::default());
    println!("partition-of-unity residual: {:.2e}", bank.partition_residual());

    let f = PhysicalField::from_fn(&grid, 1, |x| {
        let y = x[0] / 8.0 - std::f64::consts::PI;
        vec![(-y * y).exp() + 0.05 * (40.0 * x[0] / 8.0).sin()]
    });
    let mut u = f.to_spectral();
    u.remove_mean();

    let blocks = bank.block_norms(&u, 0..1);
    println!("\n{:>4} {:>12}", "j", "||D_j u||");
    for (j, v) in blocks.iter().filter(|(_, v)| *v > 1e-14) {
        println!("{j:>4} {v:>12.4e}");
    }
    for s in [-0.5, 0.5, 1.5] {
        println!("B^{s:+}_(2,1) = {:.4e}", blocks.besov(s, Summation::Sum));
    }
    println!("hybrid (s=-1/2 low, 3/2 high, threshold 1): {:.4e}", blocks.hybrid(-0.5, 1.5, 1.0));
    println!("B^0_(inf,1) = {:.4e}", besov_norm(&bank, &u, 0.0, Lp::Inf, Summation::Sum));
    Ok(())
}
