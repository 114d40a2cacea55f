//! Time-decay diagnostics: the decay exponent and time scale attached to
//! negative-regularity data, tracking of the negative Besov norm, power-law
//! fitting, and a continuous-frequency oracle for the linearized Euler flow.
//!
//! On a torus the lowest nonzero frequency eventually forces exponential
//! decay, so algebraic rates are only visible over intermediate windows on
//! large boxes. The radial oracle sidesteps this for the linear flow by
//! integrating over `|xi|` directly.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linear_propagator::gauss_nodes;
use crate::littlewood_paley::{BlockNorms, Cutoff, Summation};
use crate::nonlinear_solver::TrajectoryReport;

/// Which admissible range of `sigma1` applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayVariant {
    /// `sigma1 in (1 - d/2, d/2]`, `alpha1 = (sigma1 + d/2 - 1)/2`.
    Baseline,
    /// Stronger structure: `sigma1 in (-d/2, d/2]`, `alpha1 = (sigma1 + d/2)/2`.
    Strong,
}

impl DecayVariant {
    /// Low-frequency regularity of the decaying norms.
    pub fn low_regularity(self, d: usize) -> f64 {
        let h = d as f64 / 2.0;
        match self {
            DecayVariant::Baseline => h - 1.0,
            DecayVariant::Strong => h,
        }
    }
}

pub fn alpha1(sigma1: f64, d: usize, variant: DecayVariant) -> Result<f64> {
    let h = d as f64 / 2.0;
    let (lo, shift) = match variant {
        DecayVariant::Baseline => (1.0 - h, h - 1.0),
        DecayVariant::Strong => (-h, h),
    };
    if !(sigma1.is_finite() && sigma1 <= h) {
        return Err(param("sigma1", format!("must not exceed d/2 = {h}, got {sigma1}")));
    }
    if sigma1 <= lo {
        return Err(param("sigma1", format!("must exceed {lo} (alpha1 would be {} <= 0)", (sigma1 + shift) / 2.0)));
    }
    Ok((sigma1 + shift) / 2.0)
}

/// `c0 = (||Z0||_{B^{-sigma1}_{2,inf}} + ||Z0||_hybrid)^{-1/alpha1}`.
pub fn c0_from_data(negative_norm: f64, hybrid_norm: f64, alpha1: f64) -> Result<f64> {
    if !(alpha1 > 0.0) {
        return Err(param("alpha1", "must be positive"));
    }
    let total = negative_norm + hybrid_norm;
    if !(total > 0.0 && total.is_finite()) {
        return Err(param("data norms", format!("sum must be positive and finite, got {total}")));
    }
    Ok(total.powf(-1.0 / alpha1))
}

/// Decay exponent bundle for one data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySpec {
    pub d: usize,
    pub sigma1: f64,
    pub variant: DecayVariant,
    pub alpha1: f64,
    pub c0: f64,
}

impl DecaySpec {
    /// Computes `alpha1` and `c0` from the block norms of the data.
    pub fn from_data(z0: &BlockNorms, d: usize, sigma1: f64, variant: DecayVariant, threshold: f64) -> Result<Self> {
        let a = alpha1(sigma1, d, variant)?;
        let s = variant.low_regularity(d);
        let hybrid = z0.hybrid(s, d as f64 / 2.0 + 1.0, threshold);
        let c0 = c0_from_data(negative_norm(z0, sigma1), hybrid, a)?;
        Ok(Self { d, sigma1, variant, alpha1: a, c0 })
    }
}

/// `||u||_{B^{-sigma1}_{2,inf}} = sup_j 2^{-j sigma1} ||Delta_j u||`.
pub fn negative_norm(blocks: &BlockNorms, sigma1: f64) -> f64 {
    blocks.besov(-sigma1, Summation::Sup)
}

#[derive(Debug, Clone, Serialize)]
pub struct NegativeTrack {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `sup_t ||Z(t)|| / ||Z0||`.
    pub ratio: f64,
}

impl NegativeTrack {
    pub fn bounded_by(&self, c: f64) -> bool {
        self.ratio <= c
    }
}

pub fn negative_besov_track(report: &TrajectoryReport, sigma1: f64) -> Result<NegativeTrack> {
    if report.records.is_empty() {
        return Err(Error::InsufficientData("trajectory has no records".into()));
    }
    let times = report.times();
    let values: Vec<f64> = report.records.iter().map(|r| negative_norm(&r.z, sigma1)).collect();
    let v0 = values[0];
    let peak = values.iter().copied().fold(0.0, f64::max);
    let ratio = if v0 > 0.0 { peak / v0 } else if peak == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(NegativeTrack { times, values, ratio })
}

/// Least-squares fit of `log(norm) = a + slope * log(1 + c0 t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub points: usize,
    /// Expected slope (negative).
    pub theory: f64,
}

impl DecayFit {
    pub fn within(&self, tol: f64) -> bool {
        (self.slope - self.theory).abs() <= tol
    }

    /// `norm(t)` predicted by the fitted power law.
    pub fn envelope(&self, c0: f64, t: f64) -> f64 {
        (self.intercept + self.slope * (1.0 + c0 * t).ln()).exp()
    }
}

pub fn fit_decay(times: &[f64], norms: &[f64], c0: f64, window: (f64, f64), theory: f64) -> Result<DecayFit> {
    if times.len() != norms.len() {
        return Err(param("series", "times and norms differ in length"));
    }
    if !(c0 > 0.0) {
        return Err(param("c0", "must be positive"));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(norms)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(&t, &n)| ((1.0 + c0 * t).ln(), n))
        .unzip();
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points in window [{}, {}]", x.len(), window.0, window.1)));
    }
    if let Some(bad) = y.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InsufficientData(format!("nonpositive norm {bad} in window")));
    }
    let y: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("window spans a single time".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / m).sqrt();
    Ok(DecayFit { slope, intercept, residual, points: x.len(), theory })
}

/// Interpolation weight `theta0` with
/// `(1 - theta0)(1 + d/2) - sigma1 theta0 = d/2 - 1`.
pub fn theta0(d: usize, sigma1: f64) -> f64 {
    2.0 / (1.0 + d as f64 / 2.0 + sigma1)
}

/// Measured constant in
/// `||u||^l_{d/2-1} <= C (||u||^l_{d/2+1})^(1-theta0) (||u||^l_{B^{-sigma1}_{2,inf}})^theta0`.
pub fn interpolation_constant(blocks: &BlockNorms, d: usize, sigma1: f64, threshold: f64) -> f64 {
    let h = d as f64 / 2.0;
    let th = theta0(d, sigma1);
    let low_only = BlockNorms {
        j_min: blocks.j_min,
        norms: blocks.iter().map(|(j, n)| if 2f64.powi(j) < threshold { n } else { 0.0 }).collect(),
    };
    let lhs = low_only.besov(h - 1.0, Summation::Sum);
    let rhs = low_only.besov(h + 1.0, Summation::Sum).powf(1.0 - th) * negative_norm(&low_only, sigma1).powf(th);
    if rhs == 0.0 { 0.0 } else { lhs / rhs }
}

/// Fitted exponents of one nonlinear run.
#[derive(Debug, Clone, Serialize)]
pub struct DecayStudy {
    pub spec: DecaySpec,
    pub window: (f64, f64),
    /// `||Z||^l` at the variant's low regularity, target `-alpha1`.
    pub low: DecayFit,
    /// `||Z||^h_{B^{d/2+1}}`, target `-2 alpha1`.
    pub high: DecayFit,
    /// `||dZ2/dt||^l` at the variant's low regularity, target `-2 alpha1`.
    pub damped: DecayFit,
    /// Low-frequency `||Z2||` at the same regularity (informational).
    pub z2_low: DecayFit,
    pub negative: NegativeTrack,
}

impl DecayStudy {
    pub fn series(report: &TrajectoryReport, variant: DecayVariant) -> [Vec<f64>; 4] {
        let s = variant.low_regularity(report.d);
        let sh = report.d as f64 / 2.0 + 1.0;
        let thr = report.threshold;
        let map = |f: &dyn Fn(&crate::nonlinear_solver::Record) -> f64| report.records.iter().map(f).collect();
        [
            map(&|r| r.z.low(s, thr)),
            map(&|r| r.z.high(sh, thr)),
            map(&|r| r.dtz2.low(s, thr)),
            map(&|r| r.z2.low(s, thr)),
        ]
    }

    pub fn run(report: &TrajectoryReport, sigma1: f64, variant: DecayVariant, window: (f64, f64)) -> Result<Self> {
        let first = report.records.first().ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
        let spec = DecaySpec::from_data(&first.z, report.d, sigma1, variant, report.threshold)?;
        let t = report.times();
        let [low, high, damped, z2] = Self::series(report, variant);
        let a = spec.alpha1;
        Ok(Self {
            spec,
            window,
            low: fit_decay(&t, &low, spec.c0, window, -a)?,
            high: fit_decay(&t, &high, spec.c0, window, -2.0 * a)?,
            damped: fit_decay(&t, &damped, spec.c0, window, -2.0 * a)?,
            z2_low: fit_decay(&t, &z2, spec.c0, window, -2.0 * a)?,
            negative: negative_besov_track(report, sigma1)?,
        })
    }
}

/// Continuous-frequency model of the linearized damped Euler flow in `R^d`
/// with unit sound speed: along each direction the longitudinal pair
/// `(a, i u.omega)` evolves by `y' = -[[0, rho], [-rho, f]] y`.
/// Data are radial, `a0(rho) = amp rho^(sigma1 - d/2) exp(-rho^2)`, `u0 = 0`.
/// The flow is linear, so `amp` only enters through `c0 ~ amp^(-1/alpha1)`.
#[derive(Debug, Clone)]
pub struct RadialOracle {
    pub d: usize,
    pub sigma1: f64,
    pub friction: f64,
    pub amplitude: f64,
    pub cutoff: Cutoff,
    pub j_min: i32,
    pub j_max: i32,
    /// Gauss panels per block.
    pub panels: usize,
}

impl RadialOracle {
    pub fn new(d: usize, sigma1: f64, friction: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(param("d", "must be 1, 2 or 3"));
        }
        if !(friction > 0.0) {
            return Err(param("friction", "must be positive"));
        }
        Ok(Self { d, sigma1, friction, amplitude: 1e-2, cutoff: Cutoff::Quintic, j_min: -40, j_max: 8, panels: 8 })
    }

    pub fn data(&self, rho: f64) -> f64 {
        self.amplitude * rho.powf(self.sigma1 - self.d as f64 / 2.0) * (-rho * rho).exp()
    }

    /// `|exp(-tM) (a0, 0)|^2` in closed form.
    pub fn mode_energy(&self, rho: f64, t: f64) -> f64 {
        let f = self.friction;
        let a0 = self.data(rho);
        let disc = 0.25 * f * f - rho * rho;
        // exp(-tM) = e^{-tf/2} [C I - S (M - f/2 I)] with C, S from the discriminant.
        let (c, s_over) = if disc > 0.0 {
            let s = disc.sqrt();
            let ep = (-t * (0.5 * f - s)).exp();
            let em = (-t * (0.5 * f + s)).exp();
            (0.5 * (ep + em), 0.5 * (ep - em) / s)
        } else if disc < 0.0 {
            let w = (-disc).sqrt();
            let e = (-0.5 * f * t).exp();
            (e * (w * t).cos(), e * (w * t).sin() / w)
        } else {
            let e = (-0.5 * f * t).exp();
            (e, e * t)
        };
        // First column of C I - S (M - f/2): (C + S f/2, S rho).
        let y0 = (c + s_over * 0.5 * f) * a0;
        let y1 = s_over * rho * a0;
        y0 * y0 + y1 * y1
    }

    fn sphere_area(&self) -> f64 {
        match self.d {
            1 => 2.0,
            2 => 2.0 * std::f64::consts::PI,
            _ => 4.0 * std::f64::consts::PI,
        }
    }

    /// `||Delta_j Z(t)||_{L^2}` up to the Plancherel constant.
    pub fn block_norms(&self, t: f64) -> BlockNorms {
        let area = self.sphere_area();
        let norms = (self.j_min..=self.j_max)
            .map(|j| {
                let lo = 2f64.powi(j - 1);
                let hi = 2f64.powi(j + 1);
                let sum: f64 = gauss_nodes(lo, hi, self.panels)
                    .iter()
                    .map(|&(rho, w)| {
                        let p = self.cutoff.phi(j, rho);
                        w * p * p * self.mode_energy(rho, t) * rho.powi(self.d as i32 - 1)
                    })
                    .sum();
                (area * sum).sqrt()
            })
            .collect();
        BlockNorms { j_min: self.j_min, norms }
    }

    /// Fits the low-frequency `B^{d/2-1}` norm over `window` at `samples`
    /// log-spaced times, with `c0` from the data norms.
    pub fn fit_low(&self, window: (f64, f64), samples: usize) -> Result<(DecaySpec, DecayFit)> {
        let threshold = self.friction;
        let spec = DecaySpec::from_data(&self.block_norms(0.0), self.d, self.sigma1, DecayVariant::Baseline, threshold)?;
        let times = crate::lyapunov_certificate::log_grid(window.0, window.1, samples);
        let s = self.d as f64 / 2.0 - 1.0;
        let norms: Vec<f64> = times.iter().map(|&t| self.block_norms(t).low(s, threshold)).collect();
        let fit = fit_decay(&times, &norms, spec.c0, window, -spec.alpha1)?;
        Ok((spec, fit))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha1_values() {
        assert_eq!(alpha1(1.0, 2, DecayVariant::Baseline).unwrap(), 0.5);
        assert_eq!(alpha1(0.5, 1, DecayVariant::Strong).unwrap(), 0.5);
        assert!(alpha1(0.0, 2, DecayVariant::Baseline).is_err());
        assert!(alpha1(1.5, 2, DecayVariant::Baseline).is_err());
    }

    #[test]
    fn c0_power_law() {
        assert_eq!(c0_from_data(0.5, 0.5, 0.5).unwrap(), 1.0);
        let a = c0_from_data(0.3, 0.2, 0.5).unwrap();
        let b = c0_from_data(0.6, 0.4, 0.5).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let t: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let n: Vec<f64> = t.iter().map(|t| 3.0 * (1.0 + t).powf(-0.5)).collect();
        let f = fit_decay(&t, &n, 1.0, (0.0, 49.0), -0.5).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12 && f.residual < 1e-12);
    }

    #[test]
    fn mode_energy_matches_matrix_exponential() {
        let o = RadialOracle::new(2, 1.0, 1.3).unwrap();
        for &rho in &[0.1, 0.65, 2.0] {
            let m = crate::linalg::RMat::from_row_slice(2, 2, &[0.0, rho, -rho, 1.3]);
            let e = (m * -2.5).exp();
            let a0 = o.data(rho);
            let want = (e[(0, 0)] * a0).powi(2) + (e[(1, 0)] * a0).powi(2);
            assert!((o.mode_energy(rho, 2.5) - want).abs() < 1e-12 * want.max(1e-300));
        }
    }
}
