//! Dyadic Littlewood-Paley blocks on periodic grids and the Besov-type
//! norms built from them.
//!
//! The cutoff `chi` equals 1 on `|x| <= 1`, 0 on `|x| >= 2`, and the block
//! masks are `phi_j(xi) = chi(xi / 2^j) - chi(xi / 2^(j-1))`, supported in
//! the annulus `2^(j-1) <= |xi| <= 2^(j+1)`. A frequency `rho` with
//! `2^m <= rho < 2^(m+1)` only sees the two blocks `m` and `m + 1`.
//! The zero mode belongs to no block.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::CMat;
use crate::spectral::{Grid, Lp, SpectralField};

/// Profile of the transition region of `chi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cutoff {
    /// `6u^5 - 15u^4 + 10u^3`, a C^2 step.
    #[default]
    Quintic,
    /// `f(u) / (f(u) + f(1-u))` with `f(u) = exp(-1/u)`, a C^inf step.
    Smooth,
}

impl Cutoff {
    fn step(self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            Cutoff::Quintic => u * u * u * (10.0 + u * (-15.0 + 6.0 * u)),
            Cutoff::Smooth => {
                let f = |v: f64| if v <= 0.0 { 0.0 } else { (-1.0 / v).exp() };
                let (a, b) = (f(u), f(1.0 - u));
                a / (a + b)
            }
        }
    }

    /// Radial cutoff `chi(x)`.
    pub fn chi(self, x: f64) -> f64 {
        let x = x.abs();
        if x <= 1.0 {
            1.0
        } else if x >= 2.0 {
            0.0
        } else {
            1.0 - self.step(x - 1.0)
        }
    }

    /// Block mask `phi_j(rho)` for an arbitrary radius.
    pub fn phi(self, j: i32, rho: f64) -> f64 {
        let s = 2f64.powi(j);
        self.chi(rho / s) - self.chi(2.0 * rho / s)
    }
}

/// Block assignment of every grid frequency.
#[derive(Clone, Debug)]
pub struct FilterBank {
    pub grid: Grid,
    pub cutoff: Cutoff,
    /// For each flat index: `(m, w)` with `phi_m = w`, `phi_{m+1} = 1 - w`;
    /// `None` for the zero mode.
    weights: Vec<Option<(i32, f64)>>,
    pub j_min: i32,
    pub j_max: i32,
}

impl FilterBank {
    pub fn new(grid: &Grid, cutoff: Cutoff) -> Self {
        let mut j_min = i32::MAX;
        let mut j_max = i32::MIN;
        let weights: Vec<Option<(i32, f64)>> = grid
            .xi_norms()
            .iter()
            .map(|&rho| {
                if rho == 0.0 {
                    return None;
                }
                let m = rho.log2().floor() as i32;
                // Guard against log2 rounding at exact powers of two.
                let m = if 2f64.powi(m) > rho { m - 1 } else if 2f64.powi(m + 1) <= rho { m + 1 } else { m };
                let w = cutoff.chi(rho / 2f64.powi(m));
                Some((m, w))
            })
            .collect();
        for &(m, _) in weights.iter().flatten() {
            j_min = j_min.min(m);
            j_max = j_max.max(m + 1);
        }
        Self { grid: grid.clone(), cutoff, weights, j_min, j_max }
    }

    /// `phi_j` evaluated at grid index `idx`.
    pub fn phi(&self, j: i32, idx: usize) -> f64 {
        match self.weights[idx] {
            Some((m, w)) if j == m => w,
            Some((m, w)) if j == m + 1 => 1.0 - w,
            _ => 0.0,
        }
    }

    /// `phi_j(rho)` for an arbitrary radius.
    pub fn phi_at(&self, j: i32, rho: f64) -> f64 {
        self.cutoff.phi(j, rho)
    }

    pub fn j_range(&self) -> std::ops::RangeInclusive<i32> {
        self.j_min..=self.j_max
    }

    /// The two (block, weight) pairs seen by one grid index.
    pub fn blocks_of(&self, idx: usize) -> Option<[(i32, f64); 2]> {
        self.weights[idx].map(|(m, w)| [(m, w), (m + 1, 1.0 - w)])
    }

    /// `Delta_j u`.
    pub fn block(&self, u: &SpectralField, j: i32) -> SpectralField {
        let mut out = u.clone();
        for c in out.comps.iter_mut() {
            for (idx, v) in c.iter_mut().enumerate() {
                *v *= self.phi(j, idx);
            }
        }
        out
    }

    /// `max_{xi != 0} |sum_j phi_j(xi) - 1|` over the grid.
    pub fn partition_residual(&self) -> f64 {
        (0..self.grid.len())
            .filter(|&i| self.grid.xi_norm(i) > 0.0)
            .map(|i| (self.j_range().map(|j| self.phi(j, i)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `L^2` norms of every block of the components in `comps`.
    pub fn block_norms(&self, u: &SpectralField, comps: std::ops::Range<usize>) -> BlockNorms {
        let len = (self.j_max - self.j_min + 1) as usize;
        let mut sq = vec![0.0; len];
        for idx in 0..self.grid.len() {
            let Some((m, w)) = self.weights[idx] else { continue };
            let e: f64 = u.comps[comps.clone()].iter().map(|c| c[idx].norm_sqr()).sum();
            if e == 0.0 {
                continue;
            }
            let k = (m - self.j_min) as usize;
            sq[k] += w * w * e;
            sq[k + 1] += (1.0 - w) * (1.0 - w) * e;
        }
        let vol = self.grid.volume();
        BlockNorms { j_min: self.j_min, norms: sq.into_iter().map(|s| (vol * s).sqrt()).collect() }
    }

    /// `L^p` norms of every block, computed on the physical grid.
    pub fn block_lp_norms(&self, u: &SpectralField, p: Lp) -> BlockNorms {
        if p == Lp::Two {
            return self.block_norms(u, 0..u.n());
        }
        let norms = self.j_range().collect::<Vec<_>>().par_iter().map(|&j| self.block(u, j).to_physical().lp_norm(p)).collect();
        BlockNorms { j_min: self.j_min, norms }
    }
}

/// Per-block norms `||Delta_j u||` for `j = j_min, j_min + 1, ...`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockNorms {
    pub j_min: i32,
    pub norms: Vec<f64>,
}

/// Summation rule over blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Summation {
    Sum,
    Sup,
}

impl BlockNorms {
    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.norms.iter().enumerate().map(move |(k, &n)| (self.j_min + k as i32, n))
    }

    pub fn get(&self, j: i32) -> f64 {
        let k = j - self.j_min;
        if k < 0 { 0.0 } else { self.norms.get(k as usize).copied().unwrap_or(0.0) }
    }

    fn reduce(&self, s: f64, q: Summation, keep: impl Fn(i32) -> bool) -> f64 {
        let terms = self.iter().filter(|&(j, _)| keep(j)).map(|(j, n)| 2f64.powf(j as f64 * s) * n);
        match q {
            Summation::Sum => {
                // Kahan summation keeps the result independent of block count.
                let (mut sum, mut comp) = (0.0f64, 0.0f64);
                for t in terms {
                    let y = t - comp;
                    let z = sum + y;
                    comp = (z - sum) - y;
                    sum = z;
                }
                sum
            }
            Summation::Sup => terms.fold(0.0, f64::max),
        }
    }

    /// `sum_j` (or `sup_j`) of `2^(js) ||Delta_j u||`.
    pub fn besov(&self, s: f64, q: Summation) -> f64 {
        self.reduce(s, q, |_| true)
    }

    /// Blocks with `2^j < threshold`.
    pub fn low(&self, s: f64, threshold: f64) -> f64 {
        self.reduce(s, Summation::Sum, |j| 2f64.powi(j) < threshold)
    }

    /// Blocks with `2^j >= threshold`.
    pub fn high(&self, s: f64, threshold: f64) -> f64 {
        self.reduce(s, Summation::Sum, |j| 2f64.powi(j) >= threshold)
    }

    /// Low part at regularity `s` plus high part at `s_high`.
    pub fn hybrid(&self, s: f64, s_high: f64, threshold: f64) -> f64 {
        self.low(s, threshold) + self.high(s_high, threshold)
    }
}

/// Parameters of a hybrid Besov norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridNormSpec {
    pub s: f64,
    pub s_high: f64,
    /// Blocks with `2^j < threshold` are low frequency.
    pub threshold: f64,
    pub p: Lp,
    pub q: Summation,
}

impl HybridNormSpec {
    pub fn evaluate(&self, bank: &FilterBank, u: &SpectralField) -> f64 {
        let b = bank.block_lp_norms(u, self.p);
        match self.q {
            Summation::Sum => b.hybrid(self.s, self.s_high, self.threshold),
            Summation::Sup => {
                let low = b.reduce(self.s, Summation::Sup, |j| 2f64.powi(j) < self.threshold);
                let high = b.reduce(self.s_high, Summation::Sup, |j| 2f64.powi(j) >= self.threshold);
                low.max(high)
            }
        }
    }
}

/// `sum_j` or `sup_j` of `2^(js) ||Delta_j u||_{L^p}`.
pub fn besov_norm(bank: &FilterBank, u: &SpectralField, s: f64, p: Lp, q: Summation) -> f64 {
    bank.block_lp_norms(u, p).besov(s, q)
}

/// `M(xi) u_hat(xi)` for a scalar symbol; the zero mode is sent to 0.
pub fn multiplier_apply(u: &SpectralField, m: impl Fn(&[f64]) -> Complex64 + Sync) -> SpectralField {
    let mut out = u.clone();
    for c in out.comps.iter_mut() {
        for (idx, v) in c.iter_mut().enumerate() {
            let xi = u.grid.xi(idx);
            *v = if u.grid.xi_norm(idx) == 0.0 { Complex64::default() } else { m(xi) * *v };
        }
    }
    out
}

/// `M(xi) u_hat(xi)` for a matrix symbol mapping `u.n()` components to
/// `M.nrows()` components; the zero mode is sent to 0.
pub fn matrix_multiplier_apply(u: &SpectralField, m: impl Fn(&[f64]) -> CMat + Sync) -> SpectralField {
    let grid = &u.grid;
    let rows: Vec<Vec<Complex64>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if grid.xi_norm(idx) == 0.0 {
                return Vec::new();
            }
            let mat = m(grid.xi(idx));
            let v = nalgebra::DVector::from_vec(u.mode(idx));
            (mat * v).iter().copied().collect()
        })
        .collect();
    let nout = rows.iter().find(|r| !r.is_empty()).map_or(0, |r| r.len());
    let mut out = SpectralField::zeros(grid, nout);
    for (idx, r) in rows.iter().enumerate() {
        if !r.is_empty() {
            out.set_mode(idx, r);
        }
    }
    out
}

/// Direction of a Bernstein inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BernsteinKind {
    /// `||D^alpha u||_q <= C lambda^(|alpha| + d(1/p - 1/q)) ||u||_p` for
    /// `supp u_hat` inside the ball of radius `lambda`.
    Direct,
    /// `lambda ||u||_p <= C ||grad u||_p` for `supp u_hat` in the annulus
    /// `lambda/2 <= |xi| <= 2 lambda`.
    Reverse,
}

/// Outcome of one Bernstein comparison.
#[derive(Debug, Clone, Serialize)]
pub struct BernsteinReport {
    pub kind: BernsteinKind,
    pub lambda: f64,
    /// Measured normalized ratio.
    pub ratio: f64,
    /// Young-inequality constant computed from the kernel on this grid.
    pub constant: f64,
}

impl BernsteinReport {
    pub fn within(&self) -> bool {
        self.ratio <= self.constant * (1.0 + 1e-10)
    }
}

fn kernel_lr_norm(grid: &Grid, symbol: impl Fn(&[f64]) -> Complex64, r_inv: f64) -> f64 {
    // Periodic convolution kernel K with coefficients symbol / vol, so that
    // (K * u) has coefficients symbol * u_hat.
    let vol = grid.volume();
    let coeffs: Vec<Complex64> = (0..grid.len()).map(|i| symbol(grid.xi(i)) / vol).collect();
    let vals = grid.inverse_complex(&coeffs);
    let w = vol / grid.len() as f64;
    if r_inv == 0.0 {
        vals.iter().map(|c| c.norm()).fold(0.0, f64::max)
    } else {
        let r = 1.0 / r_inv;
        (w * vals.iter().map(|c| c.norm().powf(r)).sum::<f64>()).powf(r_inv)
    }
}

/// Multi-index derivative `D^alpha` as a Fourier multiplier.
fn derivative_symbol(alpha: &[usize], xi: &[f64]) -> Complex64 {
    alpha.iter().zip(xi).fold(Complex64::new(1.0, 0.0), |acc, (&a, &x)| acc * Complex64::new(0.0, x).powu(a as u32))
}

/// Checks a Bernstein inequality for a spectrally localized scalar field.
///
/// For `Direct`, `alpha` is the derivative multi-index; `lambda` is the
/// ball radius. For `Reverse`, `alpha` is ignored, `p` is used on both
/// sides and `lambda` is the annulus center.
pub fn bernstein_check(
    bank: &FilterBank,
    u: &SpectralField,
    kind: BernsteinKind,
    lambda: f64,
    alpha: &[usize],
    p: Lp,
    q: Lp,
) -> Result<BernsteinReport> {
    let grid = &u.grid;
    let d = grid.dim();
    if alpha.len() != d && kind == BernsteinKind::Direct {
        return Err(param("alpha", "multi-index length must equal the dimension"));
    }
    let support_ok = (0..grid.len()).all(|i| {
        let r = grid.xi_norm(i);
        let zero = u.comps.iter().all(|c| c[i].norm() == 0.0);
        zero || match kind {
            BernsteinKind::Direct => r <= lambda,
            BernsteinKind::Reverse => r >= lambda / 2.0 && r <= 2.0 * lambda,
        }
    });
    if !support_ok {
        return Err(Error::InvalidSystem("field violates the spectral support precondition".into()));
    }
    let cut = bank.cutoff;
    match kind {
        BernsteinKind::Direct => {
            let order: usize = alpha.iter().sum();
            let dalpha = multiplier_apply(u, |xi| derivative_symbol(alpha, xi));
            let lhs = dalpha.to_physical().lp_norm(q);
            let rhs = u.to_physical().lp_norm(p);
            let expo = order as f64 + d as f64 * (p.inv() - q.inv());
            let ratio = lhs / (lambda.powf(expo) * rhs);
            // 1 + 1/q = 1/r + 1/p.
            let r_inv = 1.0 + q.inv() - p.inv();
            let knorm = kernel_lr_norm(grid, |xi| {
                let rho = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
                derivative_symbol(alpha, xi) * cut.chi(rho / lambda)
            }, r_inv);
            Ok(BernsteinReport { kind, lambda, ratio, constant: knorm / lambda.powf(expo) })
        }
        BernsteinKind::Reverse => {
            let lhs = u.to_physical().lp_norm(p);
            let mut grad = SpectralField::zeros(grid, d * u.n());
            for a in 0..d {
                let da = u.derivative(a);
                for (c, comp) in da.comps.into_iter().enumerate() {
                    grad.comps[a * u.n() + c] = comp;
                }
            }
            let rhs = grad.to_physical().lp_norm(p);
            let ratio = lambda * lhs / rhs;
            let theta = |rho: f64| cut.chi(rho / (2.0 * lambda)) - cut.chi(4.0 * rho / lambda);
            let constant: f64 = (0..d)
                .map(|a| {
                    kernel_lr_norm(grid, |xi| {
                        let rho2 = xi.iter().map(|x| x * x).sum::<f64>();
                        if rho2 == 0.0 {
                            return Complex64::default();
                        }
                        Complex64::new(0.0, -xi[a] / rho2) * theta(rho2.sqrt())
                    }, 1.0)
                })
                .sum::<f64>()
                * lambda;
            Ok(BernsteinReport { kind, lambda, ratio, constant })
        }
    }
}

/// Norm table keyed by a human-readable label, in insertion-independent order.
pub type NormTable = BTreeMap<String, f64>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::PhysicalField;

    fn single_mode(grid: &Grid, k: f64) -> SpectralField {
        PhysicalField::from_fn(grid, 1, |x| vec![(k * x[0] / grid.periods()[0]).cos()]).to_spectral()
    }

    #[test]
    fn chi_profiles() {
        for c in [Cutoff::Quintic, Cutoff::Smooth] {
            assert_eq!(c.chi(0.5), 1.0);
            assert_eq!(c.chi(2.5), 0.0);
            assert!((c.chi(1.5) - 0.5).abs() < 1e-15);
            assert!(c.chi(1.2) > c.chi(1.7));
        }
    }

    #[test]
    fn partition_of_unity() {
        let g = Grid::new(&[64, 48], &[3.0, 0.7]).unwrap();
        for c in [Cutoff::Quintic, Cutoff::Smooth] {
            assert!(FilterBank::new(&g, c).partition_residual() < 1e-14);
        }
    }

    #[test]
    fn mode_at_power_of_two_is_recovered_by_adjacent_blocks() {
        let g = Grid::cubic(1, 64, 1.0).unwrap();
        let bank = FilterBank::new(&g, Cutoff::Quintic);
        let u = single_mode(&g, 4.0);
        let sum = bank.block(&u, 2).l2_norm() + bank.block(&u, 1).l2_norm();
        assert!((sum - u.l2_norm()).abs() < 1e-13);
        assert!(bank.block(&u, 4).l2_norm() < 1e-14 && bank.block(&u, 0).l2_norm() < 1e-14);
    }

    #[test]
    fn sup_below_sum_and_single_block_scaling() {
        let g = Grid::cubic(1, 128, 1.0).unwrap();
        let bank = FilterBank::new(&g, Cutoff::Quintic);
        let u = single_mode(&g, 6.0);
        let b = bank.block_norms(&u, 0..1);
        for s in [-1.0, 0.0, 0.5, 2.0] {
            assert!(b.besov(s, Summation::Sup) <= b.besov(s, Summation::Sum));
            let unit = b.besov(s, Summation::Sum) / u.l2_norm();
            let rho: f64 = 6.0;
            assert!(unit >= rho.powf(s) * 2f64.powf(-s.abs()) - 1e-12 && unit <= rho.powf(s) * 2f64.powf(s.abs()) + 1e-12);
        }
        assert!((b.low(1.0, 1e-9) - 0.0).abs() == 0.0);
        assert!((b.high(1.0, 1e-9) - b.besov(1.0, Summation::Sum)).abs() < 1e-12);
        assert!((b.low(0.3, 4.0) + b.high(0.3, 4.0) - b.besov(0.3, Summation::Sum)).abs() < 1e-12);
    }

    #[test]
    fn multiplier_roundtrip() {
        let g = Grid::cubic(2, 16, 1.0).unwrap();
        let mut u = PhysicalField::from_fn(&g, 1, |x| vec![(x[0]).sin() * (2.0 * x[1]).cos() + (x[1]).sin()]).to_spectral();
        u.remove_mean();
        let r2 = |xi: &[f64]| Complex64::new(xi.iter().map(|x| x * x).sum::<f64>(), 0.0);
        let back = multiplier_apply(&multiplier_apply(&u, r2), |xi| r2(xi).inv());
        assert!(back.max_diff(&u) < 1e-14);
        assert!(multiplier_apply(&u, |_| Complex64::new(1.0, 0.0)).max_diff(&u) == 0.0);
    }

    #[test]
    fn reverse_bernstein_l2_window() {
        let g = Grid::cubic(1, 256, 4.0).unwrap();
        let bank = FilterBank::new(&g, Cutoff::Quintic);
        let u = single_mode(&g, 12.0);
        let blk = bank.block(&u, 2);
        let r = bernstein_check(&bank, &blk, BernsteinKind::Reverse, 4.0, &[], Lp::Two, Lp::Two).unwrap();
        assert!(r.ratio >= 0.5 && r.ratio <= 2.0 && r.within());
        let d = bernstein_check(&bank, &blk, BernsteinKind::Direct, 8.0, &[1], Lp::Two, Lp::Two).unwrap();
        assert!((d.ratio - 3.0 / 8.0).abs() < 1e-12 && d.within());
    }
}
