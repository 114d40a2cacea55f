//! Pseudo-spectral integration of the full quasilinear system with an
//! integrating-factor (Lawson) RK4 scheme, plus online monitoring of the
//! energy identity, the smallness of the state, the block Lyapunov
//! functional and the trajectory functionals.
//!
//! The linear part `E(xi) = i sum_k xi_k Abar^k + B` is integrated exactly
//! per mode; the quadratic remainder
//! `N(Z) = -sum_{k,m} Z_m G^{k,m} d_k Z` is evaluated on the grid and
//! dealiased with the 2/3 rule.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::{self, CMat, RMat};
use crate::littlewood_paley::{BlockNorms, FilterBank};
use crate::lyapunov_certificate::{DirectionData, LyapunovCertificate};
use crate::spectral::{Grid, PhysicalField, SpectralField};
use crate::symbol_analysis::{symbol_at, DirectionSample};
use crate::system_model::SystemSpec;

/// Time stepping parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Record diagnostics every `record_stride` steps.
    pub record_stride: usize,
    /// Bound on `dt * max|xi| * max_k ||A^k(Z)||_F`.
    pub cfl_safety: f64,
    /// Overrides the default smallness threshold when set.
    pub smallness: Option<f64>,
    /// Keep spectral snapshots at every record (needed by decay and relaxation studies).
    pub keep_snapshots: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { dt: 1e-2, t_end: 1.0, record_stride: 10, cfl_safety: 1.5, smallness: None, keep_snapshots: false }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(param("dt", "must be positive"));
        }
        if !(self.t_end >= 0.0) {
            return Err(param("t_end", "must be nonnegative"));
        }
        if self.record_stride == 0 {
            return Err(param("record_stride", "must be at least 1"));
        }
        Ok((self.t_end / self.dt).round().max(0.0) as usize)
    }
}

/// Per-mode `n x n` matrices stored contiguously (row-major).
struct ModeOps {
    n: usize,
    data: Vec<Complex64>,
}

impl ModeOps {
    fn from_mats(n: usize, mats: &[CMat]) -> Self {
        let mut data = Vec::with_capacity(mats.len() * n * n);
        for m in mats {
            for r in 0..n {
                for c in 0..n {
                    data.push(m[(r, c)]);
                }
            }
        }
        Self { n, data }
    }

    /// `out = scale * M z`, or `out += scale * M z` when `accumulate`.
    fn apply_into(&self, z: &SpectralField, scale: f64, out: &mut SpectralField, accumulate: bool) {
        let n = self.n;
        let len = z.grid.len();
        let mut tmp = vec![Complex64::default(); n];
        for idx in 0..len {
            let m = &self.data[idx * n * n..(idx + 1) * n * n];
            for (r, t) in tmp.iter_mut().enumerate() {
                let mut acc = Complex64::default();
                for c in 0..n {
                    acc += m[r * n + c] * z.comps[c][idx];
                }
                *t = acc * scale;
            }
            for (r, t) in tmp.iter().enumerate() {
                if accumulate {
                    out.comps[r][idx] += *t;
                } else {
                    out.comps[r][idx] = *t;
                }
            }
        }
    }

    fn apply(&self, z: &SpectralField) -> SpectralField {
        let mut out = SpectralField::zeros(&z.grid, z.n());
        self.apply_into(z, 1.0, &mut out, false);
        out
    }
}

/// Nonzero entries `(k, m, i, l, value)` of the gradient tensors `G^{k,m}_{il}`.
#[derive(Debug, Clone)]
struct GradientEntry {
    k: usize,
    m: usize,
    i: usize,
    l: usize,
    value: f64,
}

/// Grid values of a state and its first derivatives.
struct PhysicalState {
    z: Vec<Vec<f64>>,
    dz: Vec<Vec<Vec<f64>>>,
}

/// Why a run stopped before its horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Abort {
    Cfl { time: f64, value: f64, limit: f64 },
    Smallness { time: f64, norm: f64, threshold: f64 },
    NonFinite { time: f64 },
}

impl Abort {
    pub fn to_error(&self) -> Error {
        match *self {
            Abort::Cfl { time, value, limit } => Error::Cfl { time, value, limit },
            Abort::Smallness { time, norm, threshold } => Error::Smallness { time, norm, threshold },
            Abort::NonFinite { time } => Error::Numerical(format!("non-finite state at t = {time}")),
        }
    }
}

/// Diagnostics at one recorded time.
#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub t: f64,
    /// `||Z||_{L^2}^2 / 2`.
    pub energy: f64,
    pub sup_norm: f64,
    /// `||Z||` in the homogeneous `B^{d/2}_{2,1}` norm (smallness monitor).
    pub smallness_norm: f64,
    /// Block Lyapunov functional and its dissipation.
    pub lyap: f64,
    pub lyap_h: f64,
    pub z: BlockNorms,
    pub z1: BlockNorms,
    pub z2: BlockNorms,
    pub dtz2: BlockNorms,
    /// Nonlinear damped mode.
    pub w: BlockNorms,
}

/// Time series produced by [`NonlinearSolver::solve`].
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryReport {
    pub d: usize,
    pub dt: f64,
    pub steps_taken: usize,
    /// Blocks with `2^j < threshold` are low frequency (threshold `1/kappa`).
    pub threshold: f64,
    pub s_low: f64,
    pub s_high: f64,
    /// Constant in the Lyapunov inequality.
    pub c_l: f64,
    pub smallness_threshold: f64,
    pub energy_residual_max: f64,
    pub records: Vec<Record>,
    pub abort: Option<Abort>,
    pub final_hash: String,
    #[serde(skip)]
    pub snapshots: Vec<SpectralField>,
}

impl TrajectoryReport {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// Turns an aborted run into an error.
    pub fn into_result(self) -> Result<Self> {
        match &self.abort {
            Some(a) => Err(a.to_error()),
            None => Ok(self),
        }
    }
}

/// Integrator for one system on one grid.
pub struct NonlinearSolver {
    pub spec: SystemSpec,
    pub grid: Grid,
    pub bank: FilterBank,
    cert: LyapunovCertificate,
    /// Functional matrices `P(kappa |xi|, xi/|xi|)` per mode (identity at 0).
    pmats: ModeOps,
    entries: Vec<GradientEntry>,
    generators: Vec<CMat>,
    l2_inv: RMat,
    b_full: RMat,
    pub s_low: f64,
    pub s_high: f64,
}

/// `d/2 - 1` for `d >= 2`; in one dimension the low-frequency regularity is
/// raised to `d/2`, the framework where `A^k_11` depends on `Z2` only.
pub fn lyapunov_regularities(d: usize) -> (f64, f64) {
    let half = d as f64 / 2.0;
    if d == 1 { (half, half + 1.0) } else { (half - 1.0, half + 1.0) }
}

impl NonlinearSolver {
    /// Builds the solver; a Lyapunov certificate for the linearized system
    /// is constructed when none is supplied.
    pub fn new(spec: &SystemSpec, grid: &Grid, cert: Option<LyapunovCertificate>) -> Result<Self> {
        if grid.dim() != spec.d() {
            return Err(Error::Dimension(format!("grid is {}-D but the system is {}-D", grid.dim(), spec.d())));
        }
        let n = spec.n();
        let cert = match cert {
            Some(c) => c,
            None => {
                let sample = DirectionSample::new(spec.d(), 16 * (spec.d() - 1));
                LyapunovCertificate::construct(spec, &sample, &crate::lyapunov_certificate::log_grid(1e-3, 1e3, 32))?
            }
        };
        let kappa = cert.kappa;
        let pm: Vec<CMat> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let rho = grid.xi_norm(idx);
                if rho == 0.0 {
                    return Ok(CMat::identity(n, n));
                }
                let omega: Vec<f64> = grid.xi(idx).iter().map(|x| x / rho).collect();
                Ok(DirectionData::new(spec, &omega)?.functional_matrix(&cert.epsilons, kappa * rho))
            })
            .collect::<Result<_>>()?;
        let mut entries = Vec::new();
        for k in 0..spec.d() {
            for m in 0..n {
                let g = &spec.flux.gradient[k][m];
                for i in 0..n {
                    for l in 0..n {
                        if g[(i, l)] != 0.0 {
                            entries.push(GradientEntry { k, m, i, l, value: g[(i, l)] });
                        }
                    }
                }
            }
        }
        let generators = (0..grid.len()).into_par_iter().map(|i| symbol_at(spec, grid.xi(i)).e).collect();
        let (s_low, s_high) = lyapunov_regularities(spec.d());
        Ok(Self {
            spec: spec.clone(),
            grid: grid.clone(),
            bank: FilterBank::new(grid, Default::default()),
            pmats: ModeOps::from_mats(n, &pm),
            cert,
            entries,
            generators,
            l2_inv: linalg::inverse(&spec.relax.effective())?,
            b_full: spec.b_matrix(),
            s_low,
            s_high,
        })
    }

    pub fn certificate(&self) -> &LyapunovCertificate {
        &self.cert
    }

    /// Default smallness threshold `0.1 * coercivity(L2_eff) / gradient_scale`.
    pub fn default_smallness(&self) -> f64 {
        let g = self.spec.flux.gradient_scale();
        let c = linalg::real_sym_eigenvalues(&self.spec.relax.effective())[0];
        if g == 0.0 { f64::INFINITY } else { 0.1 * c / g }
    }

    /// `(N / (8 sqrt 2)) min(1/kappa, kappa/4)`.
    pub fn lyapunov_constant(&self) -> f64 {
        let k = self.cert.kappa;
        self.cert.n_min / (8.0 * 2f64.sqrt()) * (1.0 / k).min(k / 4.0)
    }

    fn mode_ops(&self, h: f64) -> ModeOps {
        let mats: Vec<CMat> = self
            .generators
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                if self.grid.retained(i) {
                    linalg::expm(&(e * Complex64::new(-h, 0.0)))
                } else {
                    CMat::zeros(e.nrows(), e.ncols())
                }
            })
            .collect();
        ModeOps::from_mats(self.spec.n(), &mats)
    }

    fn physical(&self, z: &SpectralField) -> PhysicalState {
        let zc: Vec<Vec<f64>> = z.comps.iter().map(|c| self.grid.inverse(c)).collect();
        let dz = (0..self.grid.dim()).map(|k| z.derivative(k).comps.iter().map(|c| self.grid.inverse(c)).collect()).collect();
        PhysicalState { z: zc, dz }
    }

    fn nonlinear_from(&self, ps: &PhysicalState) -> SpectralField {
        let n = self.spec.n();
        let len = self.grid.len();
        let mut out = vec![vec![0.0; len]; n];
        for e in &self.entries {
            let zm = &ps.z[e.m];
            let dzl = &ps.dz[e.k][e.l];
            for ((o, a), b) in out[e.i].iter_mut().zip(zm).zip(dzl) {
                *o -= e.value * a * b;
            }
        }
        let mut f = PhysicalField { grid: self.grid.clone(), comps: out }.to_spectral();
        f.dealias();
        f
    }

    /// `N(Z) = -sum Z_m G^{k,m} d_k Z`, dealiased.
    pub fn nonlinear_term(&self, z: &SpectralField) -> SpectralField {
        self.nonlinear_from(&self.physical(z))
    }

    /// Right-hand side of the energy identity,
    /// `1/2 sum_k int Z^T (sum_m d_k Z_m G^{k,m}) Z - int B Z . Z`.
    fn energy_production(&self, ps: &PhysicalState) -> f64 {
        let w = self.grid.volume() / self.grid.len() as f64;
        let n = self.spec.n();
        let mut acc = 0.0;
        for e in &self.entries {
            let dzm = &ps.dz[e.k][e.m];
            let (zi, zl) = (&ps.z[e.i], &ps.z[e.l]);
            acc += 0.5 * e.value * dzm.iter().zip(zi).zip(zl).map(|((a, b), c)| a * b * c).sum::<f64>();
        }
        for i in 0..n {
            for l in 0..n {
                let b = self.b_full[(i, l)];
                if b != 0.0 {
                    acc -= b * ps.z[i].iter().zip(&ps.z[l]).map(|(a, c)| a * c).sum::<f64>();
                }
            }
        }
        acc * w
    }

    /// `dt * max|xi| * max_{k,x} ||A^k(Z(x))||_F`.
    fn cfl_number(&self, ps: &PhysicalState, dt: f64) -> f64 {
        let n = self.spec.n();
        let len = self.grid.len();
        let mut worst: f64 = 0.0;
        for k in 0..self.grid.dim() {
            let base = &self.spec.flux.base[k];
            let local = (0..len)
                .into_par_iter()
                .map(|x| {
                    let mut a = base.clone();
                    for m in 0..n {
                        let zm = ps.z[m][x];
                        if zm != 0.0 {
                            a += &self.spec.flux.gradient[k][m] * zm;
                        }
                    }
                    a.norm()
                })
                .reduce(|| 0.0, f64::max);
            worst = worst.max(local);
        }
        dt * self.grid.max_retained_xi() * worst
    }

    fn energy(z: &SpectralField) -> f64 {
        0.5 * z.l2_norm().powi(2)
    }

    /// One Lawson RK4 step with precomputed `exp(-hE/2)` and `exp(-hE)`.
    fn lawson_step(&self, u: &SpectralField, k1: SpectralField, h: f64, half: &ModeOps, full: &ModeOps) -> SpectralField {
        let mut a = u.clone();
        a.axpy(Complex64::new(0.5 * h, 0.0), &k1);
        let u2 = half.apply(&a);
        let k2 = self.nonlinear_term(&u2);
        let hu = half.apply(u);
        let mut u3 = hu.clone();
        u3.axpy(Complex64::new(0.5 * h, 0.0), &k2);
        let k3 = self.nonlinear_term(&u3);
        let fu = full.apply(u);
        let mut u4 = fu.clone();
        half.apply_into(&k3, h, &mut u4, true);
        let k4 = self.nonlinear_term(&u4);
        let mut out = fu;
        full.apply_into(&k1, h / 6.0, &mut out, true);
        let mut k23 = k2;
        k23.axpy(Complex64::new(1.0, 0.0), &k3);
        half.apply_into(&k23, h / 3.0, &mut out, true);
        out.axpy(Complex64::new(h / 6.0, 0.0), &k4);
        out
    }

    /// Single step (dealiases the input first); recomputes the exponentials,
    /// so repeated stepping should go through [`NonlinearSolver::stepper`].
    pub fn step(&self, z: &SpectralField, dt: f64) -> Result<SpectralField> {
        let mut u = z.clone();
        u.dealias();
        self.stepper(dt, 2.8).advance(&u)
    }

    /// Fixed-step integrator with precomputed exponentials.
    pub fn stepper(&self, dt: f64, cfl_safety: f64) -> Stepper<'_> {
        Stepper { solver: self, dt, cfl_safety, half: self.mode_ops(0.5 * dt), full: self.mode_ops(dt) }
    }

    /// `dZ/dt = -E(D) Z + N(Z)`.
    pub fn time_derivative(&self, z: &SpectralField) -> SpectralField {
        let mut lin = SpectralField::zeros(&self.grid, self.spec.n());
        let mats = ModeOps::from_mats(self.spec.n(), &self.generators);
        mats.apply_into(z, -1.0, &mut lin, false);
        lin.axpy(Complex64::new(1.0, 0.0), &self.nonlinear_term(z));
        lin.dealias();
        lin
    }

    /// Nonlinear damped mode
    /// `W = Z2 + L2_eff^{-1} sum_k (A^k_21(Z) d_k Z1 + A^k_22(Z) d_k Z2)`.
    pub fn damped_mode(&self, z: &SpectralField) -> SpectralField {
        let (n1, n2) = (self.spec.dims.n1, self.spec.dims.n2);
        let n = n1 + n2;
        let ps = self.physical(z);
        let len = self.grid.len();
        let mut flux = vec![vec![0.0; len]; n2];
        for k in 0..self.grid.dim() {
            let base = &self.spec.flux.base[k];
            for r in 0..n2 {
                for c in 0..n {
                    let b = base[(n1 + r, c)];
                    if b != 0.0 {
                        for (f, dz) in flux[r].iter_mut().zip(&ps.dz[k][c]) {
                            *f += b * dz;
                        }
                    }
                }
            }
        }
        for e in &self.entries {
            if e.i >= n1 {
                for ((f, zm), dz) in flux[e.i - n1].iter_mut().zip(&ps.z[e.m]).zip(&ps.dz[e.k][e.l]) {
                    *f += e.value * zm * dz;
                }
            }
        }
        let mut w = vec![vec![0.0; len]; n2];
        for x in 0..len {
            for r in 0..n2 {
                let mut acc = ps.z[n1 + r][x];
                for c in 0..n2 {
                    acc += self.l2_inv[(r, c)] * flux[c][x];
                }
                w[r][x] = acc;
            }
        }
        let mut out = PhysicalField { grid: self.grid.clone(), comps: w }.to_spectral();
        out.dealias();
        out
    }

    /// `L_j = vol sum phi_j^2 Z^* P Z`, combined into
    /// `sum_{low} 2^(j s_low) sqrt(L_j) + sum_{high} 2^(j s_high) sqrt(L_j)`.
    pub fn lyapunov_value(&self, z: &SpectralField) -> f64 {
        let n = self.spec.n();
        let bank = &self.bank;
        let len = (bank.j_max - bank.j_min + 1) as usize;
        let mut lj = vec![0.0; len];
        let mut tmp = vec![Complex64::default(); n];
        for idx in 0..self.grid.len() {
            let Some(blocks) = bank.blocks_of(idx) else { continue };
            let p = &self.pmats.data[idx * n * n..(idx + 1) * n * n];
            for (r, t) in tmp.iter_mut().enumerate() {
                *t = (0..n).map(|c| p[r * n + c] * z.comps[c][idx]).sum();
            }
            let q: f64 = (0..n).map(|r| (z.comps[r][idx].conj() * tmp[r]).re).sum();
            if q == 0.0 {
                continue;
            }
            for (j, w) in blocks {
                lj[(j - bank.j_min) as usize] += w * w * q;
            }
        }
        let vol = self.grid.volume();
        let thr = 1.0 / self.cert.kappa;
        lj.iter()
            .enumerate()
            .map(|(k, &v)| {
                let j = bank.j_min + k as i32;
                let s = if 2f64.powi(j) < thr { self.s_low } else { self.s_high };
                2f64.powf(j as f64 * s) * (vol * v.max(0.0)).sqrt()
            })
            .sum()
    }

    fn record(&self, t: f64, z: &SpectralField) -> Record {
        let n = self.spec.n();
        let n1 = self.spec.dims.n1;
        let d = self.grid.dim() as f64;
        let zb = self.bank.block_norms(z, 0..n);
        let dtz = self.time_derivative(z);
        let thr = 1.0 / self.cert.kappa;
        Record {
            t,
            energy: Self::energy(z),
            sup_norm: z.to_physical().sup_norm(),
            smallness_norm: zb.besov(d / 2.0, crate::littlewood_paley::Summation::Sum),
            lyap: self.lyapunov_value(z),
            lyap_h: zb.low(self.s_low + 2.0, thr) + zb.high(self.s_high, thr),
            z1: self.bank.block_norms(z, 0..n1),
            z2: self.bank.block_norms(z, n1..n),
            dtz2: self.bank.block_norms(&dtz, n1..n),
            w: {
                let w = self.damped_mode(z);
                self.bank.block_norms(&w, 0..w.n())
            },
            z: zb,
        }
    }

    /// Integrates from `z0` to `config.t_end`. Monitoring failures stop the
    /// run and are reported in `abort`; the records up to that point are kept.
    pub fn solve(&self, z0: &SpectralField, config: &SolverConfig) -> Result<TrajectoryReport> {
        let steps = config.validate()?;
        if z0.grid != self.grid || z0.n() != self.spec.n() {
            return Err(Error::Dimension("initial state does not match the solver".into()));
        }
        let dt = if steps > 0 { config.t_end / steps as f64 } else { config.dt };
        let half = self.mode_ops(0.5 * dt);
        let full = self.mode_ops(dt);
        let threshold = config.smallness.unwrap_or_else(|| self.default_smallness());
        let mut u = z0.clone();
        u.dealias();
        let e0 = Self::energy(&u);
        let mut report = TrajectoryReport {
            d: self.grid.dim(),
            dt,
            steps_taken: 0,
            threshold: 1.0 / self.cert.kappa,
            s_low: self.s_low,
            s_high: self.s_high,
            c_l: self.lyapunov_constant(),
            smallness_threshold: threshold,
            energy_residual_max: 0.0,
            records: Vec::new(),
            abort: None,
            final_hash: String::new(),
            snapshots: Vec::new(),
        };
        // Rolling window of (energy, production) for the Simpson residual.
        let mut window: Vec<(f64, f64)> = Vec::with_capacity(3);
        for step in 0..=steps {
            let t = step as f64 * dt;
            let ps = self.physical(&u);
            if u.comps.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                report.abort = Some(Abort::NonFinite { time: t });
                break;
            }
            let energy = Self::energy(&u);
            let prod = self.energy_production(&ps);
            window.push((energy, prod));
            if window.len() == 3 {
                let simpson = 2.0 * dt / 6.0 * (window[0].1 + 4.0 * window[1].1 + window[2].1);
                if e0 > 0.0 {
                    let res = (window[2].0 - window[0].0 - simpson).abs() / (2.0 * dt * e0);
                    report.energy_residual_max = report.energy_residual_max.max(res);
                }
                window.remove(0);
            }
            if step % config.record_stride == 0 || step == steps {
                let rec = self.record(t, &u);
                let small = rec.smallness_norm;
                report.records.push(rec);
                if config.keep_snapshots {
                    report.snapshots.push(u.clone());
                }
                if small > threshold {
                    report.abort = Some(Abort::Smallness { time: t, norm: small, threshold });
                    break;
                }
            }
            if step == steps {
                break;
            }
            let cfl = self.cfl_number(&ps, dt);
            if cfl > config.cfl_safety {
                report.abort = Some(Abort::Cfl { time: t, value: cfl, limit: config.cfl_safety });
                break;
            }
            let k1 = self.nonlinear_from(&ps);
            u = self.lawson_step(&u, k1, dt, &half, &full);
            report.steps_taken = step + 1;
        }
        report.final_hash = u.content_hash();
        Ok(report)
    }
}

/// Repeated fixed-size steps of one solver.
pub struct Stepper<'a> {
    solver: &'a NonlinearSolver,
    pub dt: f64,
    pub cfl_safety: f64,
    half: ModeOps,
    full: ModeOps,
}

impl Stepper<'_> {
    /// One Lawson RK4 step; rejects CFL violations and non-finite output.
    pub fn advance(&self, u: &SpectralField) -> Result<SpectralField> {
        let s = self.solver;
        if u.grid != s.grid || u.n() != s.spec.n() {
            return Err(Error::Dimension("state does not match the solver".into()));
        }
        let ps = s.physical(u);
        let cfl = s.cfl_number(&ps, self.dt);
        if cfl > self.cfl_safety {
            return Err(Error::Cfl { time: f64::NAN, value: cfl, limit: self.cfl_safety });
        }
        let k1 = s.nonlinear_from(&ps);
        let out = s.lawson_step(u, k1, self.dt, &self.half, &self.full);
        if out.comps.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Numerical("non-finite state after step".into()));
        }
        Ok(out)
    }
}

/// Six-term trajectory functional at the final recorded time.
#[derive(Debug, Clone, Serialize)]
pub struct FunctionalValue {
    pub terms: [f64; 6],
    pub total: f64,
}

fn trapezoid(times: &[f64], vals: &[f64]) -> f64 {
    times.windows(2).zip(vals.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

fn l2_time(times: &[f64], vals: &[f64]) -> f64 {
    let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
    trapezoid(times, &sq).sqrt()
}

fn sup(vals: &[f64]) -> f64 {
    vals.iter().copied().fold(0.0, f64::max)
}

fn series(report: &TrajectoryReport, upto: usize, f: impl Fn(&Record) -> f64) -> (Vec<f64>, Vec<f64>) {
    let recs = &report.records[..=upto.min(report.records.len().saturating_sub(1))];
    (recs.iter().map(|r| r.t).collect(), recs.iter().map(f).collect())
}

/// `||Z||^l_{Linf(B^{d/2-1})} + ||Z||^h_{Linf(B^{d/2+1})} + ||Z||_{L1(B^{d/2+1})}
/// + ||dZ2/dt||_{L1(B^{d/2-1})} + ||Z2||^l_{L1(B^{d/2})} + ||Z2||^l_{L2(B^{d/2-1})}`
/// over the records `0..=upto`.
pub fn functional_x(report: &TrajectoryReport, upto: usize) -> FunctionalValue {
    let h = report.d as f64 / 2.0;
    let thr = report.threshold;
    let (t, a) = series(report, upto, |r| r.z.low(h - 1.0, thr));
    let (_, b) = series(report, upto, |r| r.z.high(h + 1.0, thr));
    let (_, c) = series(report, upto, |r| r.z.besov(h + 1.0, crate::littlewood_paley::Summation::Sum));
    let (_, e) = series(report, upto, |r| r.dtz2.besov(h - 1.0, crate::littlewood_paley::Summation::Sum));
    let (_, f) = series(report, upto, |r| r.z2.low(h, thr));
    let (_, g) = series(report, upto, |r| r.z2.low(h - 1.0, thr));
    let terms = [sup(&a), sup(&b), trapezoid(&t, &c), trapezoid(&t, &e), trapezoid(&t, &f), l2_time(&t, &g)];
    FunctionalValue { terms, total: terms.iter().sum() }
}

/// `||Z||_{Linf(hybrid d/2, d/2+1)} + ||Z1||^l_{L1(B^{d/2+2})} + ||Z2||^l_{L1(B^{d/2+1})}
/// + ||Z2||^l_{L2(B^{d/2})} + ||Z||^h_{L1(B^{d/2+1})} + ||dZ2/dt||_{L1(B^{d/2})}`.
pub fn functional_y(report: &TrajectoryReport, upto: usize) -> FunctionalValue {
    let h = report.d as f64 / 2.0;
    let thr = report.threshold;
    let (t, a) = series(report, upto, |r| r.z.hybrid(h, h + 1.0, thr));
    let (_, b) = series(report, upto, |r| r.z1.low(h + 2.0, thr));
    let (_, c) = series(report, upto, |r| r.z2.low(h + 1.0, thr));
    let (_, e) = series(report, upto, |r| r.z2.low(h, thr));
    let (_, f) = series(report, upto, |r| r.z.high(h + 1.0, thr));
    let (_, g) = series(report, upto, |r| r.dtz2.besov(h, crate::littlewood_paley::Summation::Sum));
    let terms = [sup(&a), trapezoid(&t, &b), trapezoid(&t, &c), l2_time(&t, &e), trapezoid(&t, &f), trapezoid(&t, &g)];
    FunctionalValue { terms, total: terms.iter().sum() }
}

/// Verdict on `L(t) + (c_L/2) int_{t0}^t H <= L(t0) + slack` over all
/// recorded pairs `t0 <= t`.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovVerdict {
    pub holds: bool,
    /// Largest `L(t) + (c_L/2) int H - L(t0)` over pairs.
    pub worst_excess: f64,
    pub slack: f64,
    pub c_l: f64,
}

pub fn lyapunov_monitor(report: &TrajectoryReport, slack_rel: f64) -> LyapunovVerdict {
    let recs = &report.records;
    let slack = slack_rel * recs.first().map_or(0.0, |r| r.lyap);
    let half_c = 0.5 * report.c_l;
    // G(t) = L(t) + (c/2) int_0^t H must be nonincreasing; the excess over
    // pairs is max_{a<=b} G(b) - G(a), tracked with a running minimum.
    let mut integral = 0.0;
    let mut min_g = f64::INFINITY;
    let mut excess = f64::NEG_INFINITY;
    for (k, r) in recs.iter().enumerate() {
        if k > 0 {
            integral += 0.5 * (r.t - recs[k - 1].t) * (r.lyap_h + recs[k - 1].lyap_h);
        }
        let g = r.lyap + half_c * integral;
        min_g = min_g.min(g);
        excess = excess.max(g - min_g);
    }
    let excess = if recs.is_empty() { 0.0 } else { excess };
    LyapunovVerdict { holds: excess <= slack, worst_excess: excess, slack, c_l: report.c_l }
}

/// Zero-mean Gaussian-type initial data: component `c` equals
/// `amps[c] * (exp(-|x - center|^2 / (2 width^2)) - mean)`.
pub fn gaussian_data(grid: &Grid, amps: &[f64], width: f64, center: &[f64]) -> SpectralField {
    let f = PhysicalField::from_fn(grid, amps.len(), |x| {
        let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        let g = (-r2 / (2.0 * width * width)).exp();
        amps.iter().map(|a| a * g).collect()
    });
    let mut s = f.to_spectral();
    s.remove_mean();
    s.dealias();
    s
}
