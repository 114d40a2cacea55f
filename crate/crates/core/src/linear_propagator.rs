//! Exact per-mode solution of the constant-coefficient system
//! `dZ/dt + sum_k Abar^k d_k Z + B Z = F`, i.e. `Z_hat(t, xi) = exp(-t E(xi)) Z_hat_0`
//! plus the Duhamel integral, together with the linear damped mode and the
//! checks of the frequency-wise and block-wise decay estimates.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::linalg::{self, CMat, CVec, RMat};
use crate::littlewood_paley::FilterBank;
use crate::lyapunov_certificate::LyapunovCertificate;
use crate::spectral::{Grid, Lp, SpectralField};
use crate::symbol_analysis::{symbol_at, DirectionSample};
use crate::system_model::SystemSpec;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, 4 points.
pub const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_2),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_2),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
];

/// Composite 4-point Gauss-Legendre rule on `[a, b]` with `panels` panels.
pub fn gauss_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    (0..panels)
        .flat_map(|p| {
            let mid = a + (p as f64 + 0.5) * h;
            GAUSS4.iter().map(move |&(x, w)| (mid + 0.5 * h * x, 0.5 * h * w))
        })
        .collect()
}

/// Per-mode symbols of a system on a grid.
#[derive(Clone)]
pub struct PropagatorPlan {
    pub spec: SystemSpec,
    pub grid: Grid,
    generators: Arc<Vec<CMat>>,
    /// `L2_eff^{-1}`, cached for the normalized damped mode.
    l2_inv: RMat,
}

impl PropagatorPlan {
    pub fn new(spec: &SystemSpec, grid: &Grid) -> Result<Self> {
        if grid.dim() != spec.d() {
            return Err(Error::Dimension(format!("grid is {}-D but the system is {}-D", grid.dim(), spec.d())));
        }
        let generators: Vec<CMat> = (0..grid.len()).into_par_iter().map(|i| symbol_at(spec, grid.xi(i)).e).collect();
        let l2_inv = linalg::inverse(&spec.relax.effective())?;
        Ok(Self { spec: spec.clone(), grid: grid.clone(), generators: Arc::new(generators), l2_inv })
    }

    /// `E(xi)` at a flat index.
    pub fn generator(&self, idx: usize) -> &CMat {
        &self.generators[idx]
    }

    fn check(&self, z: &SpectralField) -> Result<()> {
        if z.grid != self.grid || z.n() != self.spec.n() {
            return Err(Error::Dimension("field does not match the propagator grid or system size".into()));
        }
        Ok(())
    }

    /// `exp(-h E(xi))` for every mode.
    pub fn step_operators(&self, h: f64) -> Vec<CMat> {
        self.generators.par_iter().map(|e| linalg::expm(&(e * Complex64::new(-h, 0.0)))).collect()
    }

    /// Applies per-mode matrices.
    pub fn apply(ops: &[CMat], z: &SpectralField) -> SpectralField {
        let modes: Vec<Vec<Complex64>> = ops
            .par_iter()
            .enumerate()
            .map(|(i, op)| (op * CVec::from_vec(z.mode(i))).iter().copied().collect())
            .collect();
        let mut out = z.clone();
        for (i, m) in modes.iter().enumerate() {
            out.set_mode(i, m);
        }
        out
    }

    /// `T(t) Z0`.
    pub fn propagate(&self, z0: &SpectralField, t: f64) -> Result<SpectralField> {
        self.check(z0)?;
        if !(t >= 0.0) {
            return Err(param("t", "time must be nonnegative"));
        }
        if t == 0.0 {
            return Ok(z0.clone());
        }
        Ok(Self::apply(&self.step_operators(t), z0))
    }

    /// `T(k dt) Z0` for `k = 0..=steps`, reusing one set of step matrices.
    pub fn propagate_series(&self, z0: &SpectralField, dt: f64, steps: usize) -> Result<Vec<SpectralField>> {
        self.check(z0)?;
        let ops = self.step_operators(dt);
        let mut out = Vec::with_capacity(steps + 1);
        out.push(z0.clone());
        for k in 0..steps {
            out.push(Self::apply(&ops, &out[k]));
        }
        Ok(out)
    }

    /// `T(t) Z0 + int_0^t T(t - s) F(s) ds` with a composite 4-point Gauss rule
    /// on `panels` panels.
    pub fn duhamel(
        &self,
        z0: &SpectralField,
        source: &(dyn Fn(f64) -> SpectralField + Sync),
        t: f64,
        panels: usize,
    ) -> Result<SpectralField> {
        if panels == 0 {
            return Err(param("panels", "need at least one quadrature panel"));
        }
        let mut out = self.propagate(z0, t)?;
        if t == 0.0 {
            return Ok(out);
        }
        for (s, w) in gauss_nodes(0.0, t, panels) {
            let f = source(s);
            self.check(&f)?;
            let contrib = Self::apply(&self.step_operators(t - s), &f);
            out.axpy(Complex64::new(w, 0.0), &contrib);
        }
        Ok(out)
    }

    /// Linear damped mode. `Projected` returns `P E(D) Z` (n components,
    /// first block zero); `Normalized` returns
    /// `Z2 + L2_eff^{-1} (A21(D) Z1 + A22(D) Z2)` (n2 components).
    pub fn damped_mode(&self, z: &SpectralField, form: DampedForm) -> Result<SpectralField> {
        self.check(z)?;
        let (n1, n2) = (self.spec.dims.n1, self.spec.dims.n2);
        let proj: Vec<Vec<Complex64>> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let v = self.generators[i].rows(n1, n2) * CVec::from_vec(z.mode(i));
                v.iter().copied().collect()
            })
            .collect();
        match form {
            DampedForm::Projected => {
                let mut out = SpectralField::zeros(&self.grid, n1 + n2);
                for (i, v) in proj.iter().enumerate() {
                    for (k, x) in v.iter().enumerate() {
                        out.comps[n1 + k][i] = *x;
                    }
                }
                Ok(out)
            }
            DampedForm::Normalized => {
                let linv = linalg::to_complex(&self.l2_inv);
                let mut out = SpectralField::zeros(&self.grid, n2);
                for (i, v) in proj.into_iter().enumerate() {
                    let w = &linv * CVec::from_vec(v);
                    for (k, x) in w.iter().enumerate() {
                        out.comps[k][i] = *x;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Orthogonal projector onto `{0} x R^{n2}`.
    pub fn projector(&self) -> RMat {
        let n1 = self.spec.dims.n1;
        RMat::from_fn(self.spec.n(), self.spec.n(), |r, c| if r == c && r >= n1 { 1.0 } else { 0.0 })
    }
}

/// Normalization of the linear damped mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DampedForm {
    Projected,
    Normalized,
}

/// Worst ratio `|Z_hat(t, xi)| / (envelope(xi, t) |Z_hat_0(xi)|)`.
#[derive(Debug, Clone, Serialize)]
pub struct ModeDecayReport {
    pub max_ratio: f64,
    pub ratio_at_zero: f64,
    pub violations: usize,
    pub checked: usize,
}

/// Compares the exact propagator against the certified envelope for every
/// mode, time and initial field.
pub fn verify_mode_decay(
    plan: &PropagatorPlan,
    cert: &LyapunovCertificate,
    data: &[SpectralField],
    times: &[f64],
) -> Result<ModeDecayReport> {
    for z in data {
        plan.check(z)?;
    }
    let per_time: Vec<(f64, usize, usize)> = times
        .par_iter()
        .map(|&t| {
            let (mut worst, mut bad, mut count) = (0.0f64, 0usize, 0usize);
            for i in 0..plan.grid.len() {
                let op = linalg::expm(&(plan.generator(i) * Complex64::new(-t, 0.0)));
                let env = cert.decay_envelope(plan.grid.xi_norm(i), t);
                for z in data {
                    let v0 = CVec::from_vec(z.mode(i));
                    let n0 = v0.norm();
                    if n0 == 0.0 {
                        continue;
                    }
                    let ratio = (&op * &v0).norm() / (env * n0);
                    worst = worst.max(ratio);
                    count += 1;
                    if ratio > 1.0 + 1e-12 {
                        bad += 1;
                    }
                }
            }
            (worst, bad, count)
        })
        .collect();
    let ratio_at_zero = times
        .iter()
        .zip(&per_time)
        .filter(|(t, _)| **t == 0.0)
        .map(|(_, r)| r.0)
        .fold(f64::NAN, f64::max);
    Ok(ModeDecayReport {
        max_ratio: per_time.iter().map(|r| r.0).fold(0.0, f64::max),
        ratio_at_zero,
        violations: per_time.iter().map(|r| r.1).sum(),
        checked: per_time.iter().map(|r| r.2).sum(),
    })
}

/// Block-wise a-priori estimate on a time grid.
#[derive(Debug, Clone, Serialize)]
pub struct APrioriReport {
    /// `LHS - C * RHS` at the final time, with `C = APRIORI_CONSTANT`.
    pub residual: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `LHS / RHS`, the measured constant.
    pub measured_constant: f64,
}

/// Constant derived from the factor-2 envelope: 2 for `||Z_j(t)||` and 2 for
/// the time integral.
pub const APRIORI_CONSTANT: f64 = 4.0;

/// Evaluates
/// `sum_j w_j (||Z_j(t)|| + c m_j int_0^t ||Z_j||)` against
/// `C sum_j w_j (||Z_0j|| + int_0^t ||F_j||)`, with `w_j = 2^(js)` below the
/// threshold `1/kappa` and `2^(j s_high)` above it, `c = c_decay / kappa`
/// and `m_j = min(1, kappa^2 2^(2j-2))`. Time integrals use the trapezoid
/// rule on `times`, which must start at 0.
#[allow(clippy::too_many_arguments)]
pub fn a_priori_residual(
    plan: &PropagatorPlan,
    cert: &LyapunovCertificate,
    bank: &FilterBank,
    z0: &SpectralField,
    source: &(dyn Fn(f64) -> SpectralField + Sync),
    times: &[f64],
    s: f64,
    s_high: f64,
) -> Result<APrioriReport> {
    if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(param("times", "must start at 0 and increase strictly"));
    }
    let kappa = cert.kappa;
    let c = cert.c_decay / kappa;
    let n = plan.spec.n();
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        let panels = ((t / 0.25).ceil() as usize).max(1);
        states.push(plan.duhamel(z0, source, t, panels)?);
    }
    let blocks: Vec<_> = states.iter().map(|z| bank.block_norms(z, 0..n)).collect();
    let fblocks: Vec<_> = times.iter().map(|&t| bank.block_norms(&source(t), 0..n)).collect();
    let z0b = bank.block_norms(z0, 0..n);
    let last = times.len() - 1;
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for j in bank.j_range() {
        let weight = if 2f64.powi(j) * kappa < 1.0 { 2f64.powf(j as f64 * s) } else { 2f64.powf(j as f64 * s_high) };
        let m_j = (kappa * kappa * 2f64.powi(2 * j - 2)).min(1.0);
        let trap = |series: &dyn Fn(usize) -> f64| {
            (0..last).map(|k| 0.5 * (times[k + 1] - times[k]) * (series(k) + series(k + 1))).sum::<f64>()
        };
        let int_z = trap(&|k| blocks[k].get(j));
        let int_f = trap(&|k| fblocks[k].get(j));
        lhs += weight * (blocks[last].get(j) + c * m_j * int_z);
        rhs += weight * (z0b.get(j) + int_f);
    }
    Ok(APrioriReport {
        residual: lhs - APRIORI_CONSTANT * rhs,
        lhs,
        rhs,
        measured_constant: if rhs > 0.0 { lhs / rhs } else { 0.0 },
    })
}

type Profile = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Scalar symbol homogeneous of degree `degree`, e.g. `|xi|^2` or a
/// quadratic form `xi . K xi`.
#[derive(Clone)]
pub struct HomogeneousSymbol {
    pub degree: f64,
    eval: Profile,
}

impl std::fmt::Debug for HomogeneousSymbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HomogeneousSymbol").field("degree", &self.degree).finish_non_exhaustive()
    }
}

impl HomogeneousSymbol {
    pub fn new(degree: f64, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { degree, eval: Arc::new(eval) }
    }

    /// `coeff * |xi|^2`.
    pub fn laplacian(coeff: f64) -> Self {
        Self::new(2.0, move |xi| coeff * xi.iter().map(|x| x * x).sum::<f64>())
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        (self.eval)(xi)
    }

    /// `min_{|omega| = 1} a(omega)` over a direction sample.
    pub fn ellipticity(&self, dim: usize) -> f64 {
        DirectionSample::new(dim, 256).directions.iter().map(|w| self.eval(w)).fold(f64::INFINITY, f64::min)
    }

    /// Rejects symbols that are not strictly positive on the sphere.
    pub fn require_elliptic(&self, dim: usize) -> Result<f64> {
        let e = self.ellipticity(dim);
        if !(e > 0.0) {
            return Err(Error::InvalidSystem(format!("symbol is not elliptic (min on sphere {e:.3e})")));
        }
        Ok(e)
    }

    /// `exp(-t a(D)) u` for a scalar field (applied to every component).
    pub fn semigroup(&self, u: &SpectralField, t: f64) -> SpectralField {
        let mut out = u.clone();
        for c in out.comps.iter_mut() {
            for (idx, v) in c.iter_mut().enumerate() {
                *v *= (-t * self.eval(u.grid.xi(idx))).exp();
            }
        }
        out
    }
}

/// `||Delta_j exp(-t A(D)) z||_p / (exp(-c0 2^(gamma j) t) ||Delta_j z||_p)`.
#[derive(Debug, Clone, Serialize)]
pub struct SemigroupRatio {
    pub j: i32,
    pub t: f64,
    pub c0: f64,
    pub ratio: f64,
}

/// `c0` is half the minimum of the symbol over the unit annulus
/// `1/2 <= |xi| <= 2`.
pub fn semigroup_lp_bound(
    symbol: &HomogeneousSymbol,
    bank: &FilterBank,
    z: &SpectralField,
    j: i32,
    t: f64,
    p: Lp,
) -> Result<SemigroupRatio> {
    let dim = z.grid.dim();
    let ell = symbol.require_elliptic(dim)?;
    let c0 = 0.5 * ell * 0.5f64.powf(symbol.degree);
    let zj = bank.block(z, j);
    let den = zj.to_physical().lp_norm(p);
    if den == 0.0 {
        return Err(Error::InsufficientData(format!("block {j} of the test field is empty")));
    }
    let num = symbol.semigroup(&zj, t).to_physical().lp_norm(p);
    let ratio = num / ((-c0 * 2f64.powf(symbol.degree * j as f64) * t).exp() * den);
    Ok(SemigroupRatio { j, t, c0, ratio })
}
