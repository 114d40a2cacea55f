//! Frequency-wise Lyapunov functionals for `z' = -(r A_omega + B_omega) z`.
//!
//! With `A_omega = i sum_k omega_k Abar^k` and `B_omega = kappa B`, where
//! `kappa` is the largest constant with `Re(kappa B z . z) >= |kappa B z|^2`,
//! the functional
//!
//! ```text
//! L(z) = |z|^2 + min(r, 1/r) sum_{l>=1} eps_l Re(B A^(l-1) z . B A^l z)
//! ```
//!
//! is certified to satisfy `dL/dtau + (min(1,r^2)/2) sum_{l>=0} eps_l |B A^l z|^2 <= 0`
//! and `|z|^2 / 2 <= L <= 2 |z|^2` on a sampled `(r, omega)` grid, with
//! `eps_l = eta^l`. The physical frequency is `xi = r omega / kappa` and the
//! physical time is `t = kappa tau`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::spectral::SpectralField;
use crate::symbol_analysis::{direction_pair, DirectionSample};
use crate::system_model::SystemSpec;

/// Tolerance on `lambda_max(M) / ||B_omega||^2`.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Log-spaced radii `r` in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Default `r` grid: 64 points over `[1e-3, 1e3]`.
pub fn default_r_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 64)
}

/// Precomputed powers `B A^l` at one direction.
#[derive(Debug, Clone)]
pub struct DirectionData {
    pub omega: Vec<f64>,
    pub a: CMat,
    pub b: CMat,
    /// `B A^l`, `l = 0..n`.
    pub bal: Vec<CMat>,
}

impl DirectionData {
    pub fn new(spec: &SystemSpec, omega: &[f64]) -> Result<Self> {
        let (a, b) = direction_pair(spec, omega)?;
        let n = a.nrows();
        let mut bal = Vec::with_capacity(n);
        let mut m = b.clone();
        for _ in 0..n {
            bal.push(m.clone());
            m = &m * &a;
        }
        Ok(Self { omega: omega.to_vec(), a, b, bal })
    }

    /// Hermitian matrix of `z -> sum_{l>=1} w_l Re(B A^(l-1) z . B A^l z)`.
    pub fn cross_form(&self, weights: &[f64]) -> CMat {
        let n = self.a.nrows();
        let mut x = CMat::zeros(n, n);
        for l in 1..n.min(weights.len()) {
            if weights[l] != 0.0 {
                let xl = self.bal[l].adjoint() * &self.bal[l - 1];
                x += linalg::hermitian_part(&xl) * Complex64::new(weights[l], 0.0);
            }
        }
        x
    }

    /// `sum_{l>=0} w_l (B A^l)^* (B A^l)`.
    pub fn dissipation_form(&self, weights: &[f64]) -> CMat {
        let n = self.a.nrows();
        let mut g = CMat::zeros(n, n);
        for (l, &w) in weights.iter().enumerate().take(n) {
            if w != 0.0 {
                g += self.bal[l].adjoint() * &self.bal[l] * Complex64::new(w, 0.0);
            }
        }
        g
    }

    /// Matrix `P` of the functional, `L(z) = z^* P z`.
    pub fn functional_matrix(&self, weights: &[f64], r: f64) -> CMat {
        let n = self.a.nrows();
        let m = r.min(1.0 / r);
        linalg::identity_c(n) + self.cross_form(weights) * Complex64::new(m, 0.0)
    }

    /// `E = r A + B`.
    pub fn generator(&self, r: f64) -> CMat {
        &self.a * Complex64::new(r, 0.0) + &self.b
    }

    /// Hermitian `M` with `z^* M z = dL/dtau + (min(1,r^2)/2) sum eps_l |B A^l z|^2`.
    pub fn derivative_matrix(&self, weights: &[f64], r: f64) -> CMat {
        let p = self.functional_matrix(weights, r);
        let e = self.generator(r);
        let dl = -(e.adjoint() * &p + &p * &e);
        let diss = self.dissipation_form(weights) * Complex64::new(0.5 * (r * r).min(1.0), 0.0);
        linalg::hermitian_part(&(dl + diss))
    }
}

/// Result of verifying one weight vector on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub valid: bool,
    /// Largest `lambda_max(M) / ||B||^2` over the grid.
    pub max_residual: f64,
    /// Largest spectral norm of the cross form (equivalence needs <= 1/2).
    pub cross_norm: f64,
    pub worst_r: f64,
    pub worst_omega: Vec<f64>,
}

/// Checks the differential inequality and the norm equivalence for given
/// weights (`weights[0]` is the weight of `|Bz|^2`, normally 1).
pub fn verify_weights(dirs: &[DirectionData], weights: &[f64], r_grid: &[f64]) -> Verification {
    let results: Vec<(f64, f64, f64, usize)> = dirs
        .par_iter()
        .enumerate()
        .map(|(di, dir)| {
            let bnorm = linalg::spectral_norm(&dir.b).max(f64::MIN_POSITIVE);
            let cross = linalg::spectral_norm(&dir.cross_form(weights));
            let (worst, worst_r) = r_grid
                .iter()
                .map(|&r| (linalg::lambda_max(&dir.derivative_matrix(weights, r)) / (bnorm * bnorm), r))
                .fold((f64::NEG_INFINITY, 0.0), |acc, x| if x.0 > acc.0 { x } else { acc });
            (worst, worst_r, cross, di)
        })
        .collect();
    let (mut max_residual, mut worst_r, mut cross_norm, mut worst_dir) = (f64::NEG_INFINITY, 0.0, 0.0f64, 0);
    for (w, r, c, di) in results {
        if w > max_residual {
            max_residual = w;
            worst_r = r;
            worst_dir = di;
        }
        cross_norm = cross_norm.max(c);
    }
    Verification {
        valid: max_residual <= RESIDUAL_TOL && cross_norm <= 0.5,
        max_residual,
        cross_norm,
        worst_r,
        worst_omega: dirs.get(worst_dir).map(|d| d.omega.clone()).unwrap_or_default(),
    }
}

/// Machine-checkable witness of the frequency-wise Lyapunov inequality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    /// `eps_0 = 1, eps_1, ..., eps_{n-1}`.
    pub epsilons: Vec<f64>,
    /// Geometric ratio with `eps_l = eta^l`.
    pub eta: f64,
    /// Largest admissible ratio found by the search (the certificate uses half of it).
    pub eta_critical: f64,
    /// Amplitude decay constant: `|z(tau)| <= 2 exp(-c_decay min(1,r^2) tau) |z(0)|`.
    pub c_decay: f64,
    /// Decay rate of the functional itself, `n_min / 4`.
    pub l_rate: f64,
    pub n_min: f64,
    pub kappa: f64,
    pub r_grid: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub max_residual: f64,
    pub cross_norm: f64,
}

impl LyapunovCertificate {
    /// Searches the largest `eta` (halving from 1, then 40 bisection steps)
    /// for which the inequality holds on the grid, and certifies `eta/2`.
    pub fn construct(spec: &SystemSpec, sample: &DirectionSample, r_grid: &[f64]) -> Result<Self> {
        if r_grid.is_empty() || r_grid.iter().any(|&r| !(r > 0.0)) {
            return Err(param("r_grid", "radii must be positive and non-empty"));
        }
        let dirs: Vec<DirectionData> =
            sample.directions.iter().map(|w| DirectionData::new(spec, w)).collect::<Result<_>>()?;
        let n = spec.n();
        let schedule = |eta: f64| (0..n).map(|l| eta.powi(l as i32)).collect::<Vec<_>>();

        // N_omega must be positive for any positive schedule; check SK first.
        let probe = schedule(0.5);
        let nmin_probe = dirs.iter().map(|d| linalg::lambda_min(&d.dissipation_form(&probe))).fold(f64::INFINITY, f64::min);
        let scale = dirs.iter().map(|d| linalg::spectral_norm(&d.b).powi(2)).fold(0.0, f64::max).max(1.0);
        if nmin_probe <= 1e-12 * scale {
            return Err(Error::Certificate(format!(
                "N_omega vanishes (min {nmin_probe:.3e}): the dissipation does not reach every direction"
            )));
        }

        let mut eta = 1.0;
        let mut lo = None;
        for _ in 0..60 {
            if verify_weights(&dirs, &schedule(eta), r_grid).valid {
                lo = Some(eta);
                break;
            }
            eta *= 0.5;
        }
        let mut lo = lo.ok_or_else(|| Error::Certificate("no admissible eta down to 2^-60".into()))?;
        if lo < 1.0 {
            let mut hi = 2.0 * lo;
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if verify_weights(&dirs, &schedule(mid), r_grid).valid {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        let eta_critical = lo;
        let eta = 0.5 * eta_critical;
        let epsilons = schedule(eta);
        let v = verify_weights(&dirs, &epsilons, r_grid);
        if !v.valid {
            return Err(Error::Certificate(format!(
                "halved schedule failed re-verification (residual {:.3e})",
                v.max_residual
            )));
        }
        let n_min = dirs.iter().map(|d| linalg::lambda_min(&d.dissipation_form(&epsilons))).fold(f64::INFINITY, f64::min);
        Ok(Self {
            epsilons,
            eta,
            eta_critical,
            c_decay: n_min / 8.0,
            l_rate: n_min / 4.0,
            n_min,
            kappa: spec.relax.kappa()?,
            r_grid: r_grid.to_vec(),
            directions: sample.directions.clone(),
            max_residual: v.max_residual,
            cross_norm: v.cross_norm,
        })
    }

    /// Re-runs the verification on the stored grid, optionally with all
    /// weights `eps_l` (`l >= 1`) multiplied by `shrink`.
    pub fn reverify(&self, spec: &SystemSpec, shrink: f64) -> Result<Verification> {
        let dirs: Vec<DirectionData> =
            self.directions.iter().map(|w| DirectionData::new(spec, w)).collect::<Result<_>>()?;
        let mut w = self.epsilons.clone();
        for x in w.iter_mut().skip(1) {
            *x *= shrink;
        }
        Ok(verify_weights(&dirs, &w, &self.r_grid))
    }

    /// `L_{r,omega}(z)`.
    pub fn functional_value(&self, spec: &SystemSpec, r: f64, omega: &[f64], z: &CVec) -> Result<f64> {
        let dir = DirectionData::new(spec, omega)?;
        let p = dir.functional_matrix(&self.epsilons, r);
        Ok((z.adjoint() * p * z)[(0, 0)].re)
    }

    pub fn derivative_form(&self, spec: &SystemSpec, r: f64, omega: &[f64]) -> Result<CMat> {
        Ok(DirectionData::new(spec, omega)?.derivative_matrix(&self.epsilons, r))
    }

    /// `lambda_min(sum_l eps_l (B A^l)^* (B A^l))` at one direction.
    pub fn n_omega(&self, spec: &SystemSpec, omega: &[f64]) -> Result<f64> {
        Ok(linalg::lambda_min(&DirectionData::new(spec, omega)?.dissipation_form(&self.epsilons)))
    }

    /// `2 exp(-c_decay min(1, kappa^2 |xi|^2) t / kappa)`.
    pub fn decay_envelope(&self, xi_norm: f64, t: f64) -> f64 {
        let r = self.kappa * xi_norm;
        2.0 * (-self.c_decay * (r * r).min(1.0) * t / self.kappa).exp()
    }
}

/// `||a||^2 + ||u||^2 + eps1 int u . (Id - Lap)^{-1} grad a` for a field whose
/// first component is `a` and remaining `d` components are `u`.
pub fn euler_explicit_functional(eps1: f64, field: &SpectralField) -> Result<f64> {
    let d = field.grid.dim();
    if field.n() != d + 1 {
        return Err(Error::Dimension(format!("expected {} components (a, u)", d + 1)));
    }
    let vol = field.grid.volume();
    let mut cross = 0.0;
    for idx in 0..field.grid.len() {
        let xi = field.grid.xi(idx);
        let a = field.comps[0][idx];
        let denom = 1.0 + xi.iter().map(|x| x * x).sum::<f64>();
        for k in 0..d {
            let grad = Complex64::new(0.0, xi[k]) * a / denom;
            cross += (field.comps[k + 1][idx] * grad.conj()).re;
        }
    }
    let energy = field.l2_norm().powi(2);
    Ok(energy + eps1 * vol * cross)
}
