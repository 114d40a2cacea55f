//! Periodic grids, FFT plans and vector-valued Fourier fields.
//!
//! A field is stored through its Fourier coefficients `c_k` with the
//! convention `u(x) = sum_k c_k exp(i xi_k . x)`, `xi_k = k / L` per axis,
//! on the torus `prod_a [0, 2 pi L_a)`. Hence `c = FFT(u) / N_total` and
//! `||u||_{L^2}^2 = vol * sum_k |c_k|^2` with `vol = prod_a 2 pi L_a`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{param, Error, Result};

struct AxisPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

struct GridInner {
    modes: Vec<usize>,
    periods: Vec<f64>,
    axes: Vec<AxisPlan>,
    /// Signed integer wave numbers, per axis.
    wavenumbers: Vec<Vec<i64>>,
    /// Frequency vector of each flat index (unused axes are 0).
    xi: Vec<[f64; 3]>,
    xi_norm: Vec<f64>,
    dealias: Vec<bool>,
    nyquist: Vec<bool>,
}

/// A `d`-dimensional periodic grid. Cloning is cheap (shared plans).
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("modes", &self.inner.modes).field("periods", &self.inner.periods).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.inner.modes == other.inner.modes && self.inner.periods == other.inner.periods
    }
}

fn signed(k: usize, n: usize) -> i64 {
    if k <= n / 2 { k as i64 } else { k as i64 - n as i64 }
}

impl Grid {
    /// `modes[a]` points on axis `a`, which has length `2 pi periods[a]`.
    pub fn new(modes: &[usize], periods: &[f64]) -> Result<Self> {
        let d = modes.len();
        if !(1..=3).contains(&d) || periods.len() != d {
            return Err(param("grid", format!("need 1 to 3 axes with matching periods, got {d}")));
        }
        if modes.iter().any(|&n| n < 4) {
            return Err(param("modes", "each axis needs at least 4 points"));
        }
        if periods.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(param("period", "periods must be positive"));
        }
        let mut planner = FftPlanner::new();
        let axes = modes
            .iter()
            .map(|&n| AxisPlan { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) })
            .collect();
        let wavenumbers: Vec<Vec<i64>> = modes.iter().map(|&n| (0..n).map(|k| signed(k, n)).collect()).collect();
        let total: usize = modes.iter().product();
        let mut xi = Vec::with_capacity(total);
        let mut dealias = Vec::with_capacity(total);
        let mut nyquist = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let mut v = [0.0; 3];
            let mut keep = true;
            let mut nyq = false;
            for a in (0..d).rev() {
                let n = modes[a];
                let i = rem % n;
                rem /= n;
                let k = wavenumbers[a][i];
                v[a] = k as f64 / periods[a];
                // Strict 2/3 rule: cubic products of retained modes never alias.
                keep &= 3 * k.unsigned_abs() < n as u64;
                nyq |= n.is_multiple_of(2) && i == n / 2;
            }
            xi.push(v);
            dealias.push(keep);
            nyquist.push(nyq);
        }
        let xi_norm = xi.iter().map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()).collect();
        Ok(Self {
            inner: Arc::new(GridInner {
                modes: modes.to_vec(),
                periods: periods.to_vec(),
                axes,
                wavenumbers,
                xi,
                xi_norm,
                dealias,
                nyquist,
            }),
        })
    }

    /// Same number of points and period on every axis.
    pub fn cubic(d: usize, modes: usize, period: f64) -> Result<Self> {
        Self::new(&vec![modes; d], &vec![period; d])
    }

    pub fn dim(&self) -> usize {
        self.inner.modes.len()
    }

    pub fn modes(&self) -> &[usize] {
        &self.inner.modes
    }

    pub fn periods(&self) -> &[f64] {
        &self.inner.periods
    }

    pub fn len(&self) -> usize {
        self.inner.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.xi.is_empty()
    }

    /// Domain volume `prod 2 pi L_a`.
    pub fn volume(&self) -> f64 {
        self.inner.periods.iter().map(|l| 2.0 * std::f64::consts::PI * l).product()
    }

    /// Frequency vector of a flat index (first `dim()` entries meaningful).
    pub fn xi(&self, idx: usize) -> &[f64] {
        &self.inner.xi[idx][..self.dim()]
    }

    pub fn xi_norm(&self, idx: usize) -> f64 {
        self.inner.xi_norm[idx]
    }

    pub fn xi_norms(&self) -> &[f64] {
        &self.inner.xi_norm
    }

    /// Whether the index survives the 2/3 dealiasing rule.
    pub fn retained(&self, idx: usize) -> bool {
        self.inner.dealias[idx]
    }

    pub fn is_nyquist(&self, idx: usize) -> bool {
        self.inner.nyquist[idx]
    }

    /// Largest `|xi|` over the dealiased band.
    pub fn max_retained_xi(&self) -> f64 {
        (0..self.len()).filter(|&i| self.retained(i)).map(|i| self.xi_norm(i)).fold(0.0, f64::max)
    }

    /// Smallest nonzero `|xi|`.
    pub fn min_nonzero_xi(&self) -> f64 {
        self.inner.xi_norm.iter().copied().filter(|&r| r > 0.0).fold(f64::INFINITY, f64::min)
    }

    /// Integer wave numbers of a flat index.
    pub fn wavevector(&self, idx: usize) -> Vec<i64> {
        let mut rem = idx;
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            let n = self.inner.modes[a];
            out[a] = self.inner.wavenumbers[a][rem % n];
            rem /= n;
        }
        out
    }

    /// Physical coordinates of a flat index.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut rem = idx;
        let mut out = vec![0.0; self.dim()];
        for a in (0..self.dim()).rev() {
            let n = self.inner.modes[a];
            out[a] = 2.0 * std::f64::consts::PI * self.inner.periods[a] * (rem % n) as f64 / n as f64;
            rem /= n;
        }
        out
    }

    /// Copy with every period multiplied by `factor` (same coefficients
    /// then describe the field `u(x / factor)`).
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        let periods: Vec<f64> = self.inner.periods.iter().map(|l| l * factor).collect();
        Self::new(&self.inner.modes, &periods)
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let d = self.dim();
        let modes = &self.inner.modes;
        for a in 0..d {
            let n = modes[a];
            let stride: usize = modes[a + 1..].iter().product();
            let outer: usize = modes[..a].iter().product();
            let plan = if forward { &self.inner.axes[a].forward } else { &self.inner.axes[a].inverse };
            if stride == 1 {
                plan.process(data);
                continue;
            }
            let mut line = vec![Complex64::default(); n];
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for (i, c) in line.iter_mut().enumerate() {
                        *c = data[base + i * stride];
                    }
                    plan.process(&mut line);
                    for (i, c) in line.iter().enumerate() {
                        data[base + i * stride] = *c;
                    }
                }
            }
        }
    }

    /// Coefficients of a real grid function (Nyquist modes dropped).
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut data, true);
        let scale = 1.0 / self.len() as f64;
        for (i, c) in data.iter_mut().enumerate() {
            *c = if self.is_nyquist(i) { Complex64::default() } else { *c * scale };
        }
        data
    }

    /// Grid values of the real part of `sum_k c_k exp(i xi_k x)`.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        self.inverse_complex(coeffs).into_iter().map(|c| c.re).collect()
    }

    pub fn inverse_complex(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut data = coeffs.to_vec();
        self.transform(&mut data, false);
        data
    }
}

/// Fourier coefficients of an `n`-component field on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    pub comps: Vec<Vec<Complex64>>,
}

/// Grid values of an `n`-component real field.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalField {
    pub grid: Grid,
    pub comps: Vec<Vec<f64>>,
}

impl PhysicalField {
    pub fn zeros(grid: &Grid, n: usize) -> Self {
        Self { grid: grid.clone(), comps: vec![vec![0.0; grid.len()]; n] }
    }

    /// Samples `f(x) -> [u_0, ..., u_{n-1}]` at every grid point.
    pub fn from_fn(grid: &Grid, n: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut out = Self::zeros(grid, n);
        for idx in 0..grid.len() {
            let v = f(&grid.point(idx));
            for (c, x) in out.comps.iter_mut().zip(v) {
                c[idx] = x;
            }
        }
        out
    }

    pub fn to_spectral(&self) -> SpectralField {
        SpectralField { grid: self.grid.clone(), comps: self.comps.iter().map(|c| self.grid.forward(c)).collect() }
    }

    /// `max_x |u(x)|` with the Euclidean norm over components.
    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `||u||_{L^p}` for `p` in {1, 2, inf}, pointwise Euclidean norm.
    pub fn lp_norm(&self, p: Lp) -> f64 {
        let w = self.grid.volume() / self.grid.len() as f64;
        let pts = (0..self.grid.len()).map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt());
        match p {
            Lp::One => w * pts.sum::<f64>(),
            Lp::Two => (w * pts.map(|x| x * x).sum::<f64>()).sqrt(),
            Lp::Inf => pts.fold(0.0, f64::max),
        }
    }
}

/// Integrability exponent for block norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lp {
    One,
    Two,
    Inf,
}

impl Lp {
    /// `1 / p`.
    pub fn inv(self) -> f64 {
        match self {
            Lp::One => 1.0,
            Lp::Two => 0.5,
            Lp::Inf => 0.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Lp::One),
            "2" => Ok(Lp::Two),
            "inf" | "infinity" => Ok(Lp::Inf),
            _ => Err(param("p", format!("expected 1, 2 or inf, got {s}"))),
        }
    }
}

impl SpectralField {
    pub fn zeros(grid: &Grid, n: usize) -> Self {
        Self { grid: grid.clone(), comps: vec![vec![Complex64::default(); grid.len()]; n] }
    }

    pub fn n(&self) -> usize {
        self.comps.len()
    }

    pub fn to_physical(&self) -> PhysicalField {
        PhysicalField { grid: self.grid.clone(), comps: self.comps.iter().map(|c| self.grid.inverse(c)).collect() }
    }

    /// Coefficient vector of all components at one flat index.
    pub fn mode(&self, idx: usize) -> Vec<Complex64> {
        self.comps.iter().map(|c| c[idx]).collect()
    }

    pub fn set_mode(&mut self, idx: usize, v: &[Complex64]) {
        for (c, &x) in self.comps.iter_mut().zip(v) {
            c[idx] = x;
        }
    }

    /// `||u||_{L^2}` by Parseval.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.comps.iter().flatten().map(|c| c.norm_sqr()).sum();
        (self.grid.volume() * s).sqrt()
    }

    /// `vol * sum_k |c_k|^2` restricted to a component range.
    pub fn l2_norm_of(&self, comps: std::ops::Range<usize>) -> f64 {
        let s: f64 = self.comps[comps].iter().flatten().map(|c| c.norm_sqr()).sum();
        (self.grid.volume() * s).sqrt()
    }

    /// `L^2` inner product `int u . conj(v)`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        let s: Complex64 = self
            .comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y.conj()))
            .sum();
        s * self.grid.volume()
    }

    /// Sub-field of consecutive components.
    pub fn select(&self, comps: std::ops::Range<usize>) -> Self {
        Self { grid: self.grid.clone(), comps: self.comps[comps].to_vec() }
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.n() != other.n() {
            return Err(Error::Dimension("fields live on different grids or have different sizes".into()));
        }
        Ok(())
    }

    pub fn axpy(&mut self, a: Complex64, x: &Self) {
        for (c, xc) in self.comps.iter_mut().zip(&x.comps) {
            for (v, w) in c.iter_mut().zip(xc) {
                *v += a * w;
            }
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        for v in out.comps.iter_mut().flatten() {
            *v *= a;
        }
        out
    }

    /// Largest coefficient-wise difference.
    pub fn max_diff(&self, other: &Self) -> f64 {
        self.comps
            .iter()
            .flatten()
            .zip(other.comps.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `d/dx_k` of every component.
    pub fn derivative(&self, axis: usize) -> Self {
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            for (idx, v) in c.iter_mut().enumerate() {
                *v *= Complex64::new(0.0, self.grid.xi(idx)[axis]);
            }
        }
        out
    }

    /// Zeroes every mode removed by the 2/3 rule.
    pub fn dealias(&mut self) {
        for c in self.comps.iter_mut() {
            for (idx, v) in c.iter_mut().enumerate() {
                if !self.grid.retained(idx) {
                    *v = Complex64::default();
                }
            }
        }
    }

    /// Zeroes the mean (zero-frequency) coefficient.
    pub fn remove_mean(&mut self) {
        for c in self.comps.iter_mut() {
            c[0] = Complex64::default();
        }
    }

    /// SHA-256 of the little-endian coefficient bytes, as hex.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in self.comps.iter().flatten() {
            h.update(v.re.to_le_bytes());
            h.update(v.im.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
