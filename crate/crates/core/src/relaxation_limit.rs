//! Strong relaxation limit `eps -> 0`.
//!
//! Under the diffusive scaling `tau = eps t`, `Z1~ = Z1`, `Z2~ = Z2 / eps`,
//! the first block converges to the solution `N` of the parabolic equation
//!
//! ```text
//! dN/dtau + A(D) N + Q1(N, D^2 N) + Q2(DN, DN) + T1(N, DN, DN) + T2(N, N, D^2 N) = 0
//! ```
//!
//! with symbol `A(xi) = sum_{k,l} Abar^k_12 L2^{-1} Abar^l_21 xi_k xi_l`.
//! The bilinear and trilinear parts are read off the affine flux family.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::linalg::{self, CMat, RMat};
use crate::linear_propagator::{gauss_nodes, HomogeneousSymbol};
use crate::littlewood_paley::{BlockNorms, FilterBank, Summation};
use crate::nonlinear_solver::NonlinearSolver;
use crate::spectral::{Grid, PhysicalField, SpectralField};
use crate::symbol_analysis::{elliptic_block_check, DirectionSample};
use crate::system_model::SystemSpec;

/// `coef * N_m * d_k d_l N` (`p` unused) or `coef * N_m * N_p * d_k d_l N`.
#[derive(Debug, Clone)]
pub struct SecondOrderTerm {
    pub k: usize,
    pub l: usize,
    pub m: usize,
    pub p: Option<usize>,
    pub coef: RMat,
}

/// `coef * (d_a N_m) * d_b N`, optionally times `N_q`.
#[derive(Debug, Clone)]
pub struct GradientTerm {
    pub a: usize,
    pub b: usize,
    pub m: usize,
    pub q: Option<usize>,
    pub coef: RMat,
}

/// The limit equation of a relaxation-ready system.
#[derive(Debug, Clone)]
pub struct LimitEquation {
    pub spec: SystemSpec,
    /// `Abar^k_12 L2^{-1} Abar^l_21`, indexed `[k][l]`.
    pub a_op: Vec<Vec<RMat>>,
    pub q1: Vec<SecondOrderTerm>,
    pub q2: Vec<GradientTerm>,
    pub t1: Vec<GradientTerm>,
    pub t2: Vec<SecondOrderTerm>,
    pub l2_inv: RMat,
    /// `min_{|omega|=1} lambda_min(sym A(omega))`.
    pub ellipticity: f64,
}

fn block(m: &RMat, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> RMat {
    m.view((rows.start, cols.start), (rows.len(), cols.len())).into_owned()
}

fn push_nonzero<T>(list: &mut Vec<T>, coef: &RMat, make: impl FnOnce(RMat) -> T) {
    if coef.iter().any(|&x| x != 0.0) {
        list.push(make(coef.clone()));
    }
}

pub fn extract_limit_equation(spec: &SystemSpec) -> Result<LimitEquation> {
    let flags = spec.flux.detect_flags(spec.dims.n1);
    if !(spec.flux.flags.relaxation_ready() && flags.relaxation_ready()) {
        return Err(Error::InvalidSystem(format!("{}: block structure required by the relaxation limit is missing", spec.name)));
    }
    let d = spec.d();
    let (n1, n) = (spec.dims.n1, spec.n());
    let sample = DirectionSample::new(d, 32 * (d - 1));
    let ell = elliptic_block_check(spec, &sample)?;
    if !ell.sk_holds {
        return Err(Error::InvalidSystem(format!("{}: SK condition fails, the limit operator is not elliptic", spec.name)));
    }
    let l2_inv = linalg::inverse(&spec.relax.l2)?;
    let r1 = 0..n1;
    let r2 = n1..n;
    let base = &spec.flux.base;
    let grad = &spec.flux.gradient;
    let a12: Vec<RMat> = base.iter().map(|b| block(b, r1.clone(), r2.clone())).collect();
    let a21: Vec<RMat> = base.iter().map(|b| block(b, r2.clone(), r1.clone())).collect();
    // Z1-derivatives of the off-diagonal blocks and Z2-derivatives of A_11.
    let g12 = |k: usize, m: usize| block(&grad[k][m], r1.clone(), r2.clone());
    let g21 = |k: usize, m: usize| block(&grad[k][m], r2.clone(), r1.clone());
    let g11 = |k: usize, r: usize| block(&grad[k][n1 + r], r1.clone(), r1.clone());

    let a_op: Vec<Vec<RMat>> = (0..d).map(|k| (0..d).map(|l| &a12[k] * &l2_inv * &a21[l]).collect()).collect();
    let (mut q1, mut q2, mut t1, mut t2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for k in 0..d {
        for l in 0..d {
            for m in 0..n1 {
                // -(Abar12^k L^-1 G21^{l,m} + G12^{k,m} L^-1 Abar21^l) N_m d_k d_l N
                let c = -(&a12[k] * &l2_inv * g21(l, m) + g12(k, m) * &l2_inv * &a21[l]);
                push_nonzero(&mut q1, &c, |coef| SecondOrderTerm { k, l, m, p: None, coef });
                // -Abar12^k L^-1 G21^{l,m} (d_k N_m) d_l N
                let c = -(&a12[k] * &l2_inv * g21(l, m));
                push_nonzero(&mut q2, &c, |coef| GradientTerm { a: k, b: l, m, q: None, coef });
                // -sum_r (L^-1 Abar21^l)_{rm} G11^{k,r} (d_l N_m) d_k N
                let la = &l2_inv * &a21[l];
                let mut c = RMat::zeros(n1, n1);
                for r in 0..n - n1 {
                    c -= g11(k, r) * la[(r, m)];
                }
                push_nonzero(&mut q2, &c, |coef| GradientTerm { a: l, b: k, m, q: None, coef });
                for p in 0..n1 {
                    // -G12^{k,m} L^-1 G21^{l,p} N_m (d_k N_p) d_l N
                    let c = -(g12(k, m) * &l2_inv * g21(l, p));
                    push_nonzero(&mut t1, &c, |coef| GradientTerm { a: k, b: l, m: p, q: Some(m), coef });
                    // -sum_r (L^-1 G21^{l,m})_{rp} G11^{k,r} N_m (d_l N_p) d_k N
                    let lg = &l2_inv * g21(l, m);
                    let mut c = RMat::zeros(n1, n1);
                    for r in 0..n - n1 {
                        c -= g11(k, r) * lg[(r, p)];
                    }
                    push_nonzero(&mut t1, &c, |coef| GradientTerm { a: l, b: k, m: p, q: Some(m), coef });
                    // -G12^{k,m} L^-1 G21^{l,p} N_m N_p d_k d_l N
                    let c = -(g12(k, m) * &l2_inv * g21(l, p));
                    push_nonzero(&mut t2, &c, |coef| SecondOrderTerm { k, l, m, p: Some(p), coef });
                }
            }
        }
    }
    let mut eq = LimitEquation { spec: spec.clone(), a_op, q1, q2, t1, t2, l2_inv, ellipticity: 0.0 };
    eq.ellipticity = sample.directions.iter().map(|w| eq.symbol_lambda_min(w)).fold(f64::INFINITY, f64::min);
    if !(eq.ellipticity > 0.0) {
        return Err(Error::InvalidSystem(format!("limit operator is not elliptic (min {:.3e})", eq.ellipticity)));
    }
    Ok(eq)
}

/// Grid values of `N`, `d_k N` and `d_k d_l N` (upper triangle).
struct LimitFields {
    n: Vec<Vec<f64>>,
    dn: Vec<Vec<Vec<f64>>>,
    ddn: Vec<Vec<Vec<Vec<f64>>>>,
}

impl LimitEquation {
    pub fn n1(&self) -> usize {
        self.spec.dims.n1
    }

    pub fn d(&self) -> usize {
        self.spec.d()
    }

    /// `A(xi)`.
    pub fn symbol(&self, xi: &[f64]) -> RMat {
        let n1 = self.n1();
        let mut s = RMat::zeros(n1, n1);
        for (k, row) in self.a_op.iter().enumerate() {
            for (l, m) in row.iter().enumerate() {
                s += m * (xi[k] * xi[l]);
            }
        }
        s
    }

    fn symbol_lambda_min(&self, xi: &[f64]) -> f64 {
        let s = self.symbol(xi);
        linalg::real_sym_eigenvalues(&(0.5 * (&s + s.transpose())))[0]
    }

    /// Scalar symbol for `n1 = 1`.
    pub fn homogeneous_symbol(&self) -> Result<HomogeneousSymbol> {
        if self.n1() != 1 {
            return Err(Error::Dimension(format!("scalar symbol needs n1 = 1, got {}", self.n1())));
        }
        let a = self.a_op.clone();
        Ok(HomogeneousSymbol::new(2.0, move |xi| {
            let mut s = 0.0;
            for (k, row) in a.iter().enumerate() {
                for (l, m) in row.iter().enumerate() {
                    s += m[(0, 0)] * xi[k] * xi[l];
                }
            }
            s
        }))
    }

    fn fields(&self, u: &SpectralField) -> LimitFields {
        let g = &u.grid;
        let d = self.d();
        let n = u.comps.iter().map(|c| g.inverse(c)).collect();
        let dspec: Vec<SpectralField> = (0..d).map(|k| u.derivative(k)).collect();
        let dn = dspec.iter().map(|f| f.comps.iter().map(|c| g.inverse(c)).collect()).collect();
        let ddn = (0..d)
            .map(|k| (0..d).map(|l| if l < k { Vec::new() } else { dspec[k].derivative(l).comps.iter().map(|c| g.inverse(c)).collect() }).collect())
            .collect();
        LimitFields { n, dn, ddn }
    }

    /// `Q1 + Q2 + T1 + T2` on the grid (not dealiased).
    fn nonlinear_physical(&self, f: &LimitFields) -> Vec<Vec<f64>> {
        let n1 = self.n1();
        let len = f.n[0].len();
        let mut out = vec![vec![0.0; len]; n1];
        let dd = |k: usize, l: usize| if k <= l { &f.ddn[k][l] } else { &f.ddn[l][k] };
        let mut acc = |coef: &RMat, weight: &dyn Fn(usize) -> f64, target: &Vec<Vec<f64>>| {
            for i in 0..n1 {
                for c in 0..n1 {
                    let a = coef[(i, c)];
                    if a != 0.0 {
                        for (x, o) in out[i].iter_mut().enumerate() {
                            *o += a * weight(x) * target[c][x];
                        }
                    }
                }
            }
        };
        for t in self.q1.iter().chain(&self.t2) {
            let nm = &f.n[t.m];
            let np = t.p.map(|p| &f.n[p]);
            let w = |x: usize| nm[x] * np.map_or(1.0, |v| v[x]);
            acc(&t.coef, &w, dd(t.k, t.l));
        }
        for t in self.q2.iter().chain(&self.t1) {
            let da = &f.dn[t.a][t.m];
            let nq = t.q.map(|q| &f.n[q]);
            let w = |x: usize| da[x] * nq.map_or(1.0, |v| v[x]);
            acc(&t.coef, &w, &f.dn[t.b]);
        }
        out
    }

    /// `Q1 + Q2 + T1 + T2` evaluated pseudo-spectrally, dealiased.
    pub fn nonlinear_term(&self, u: &SpectralField) -> SpectralField {
        let out = self.nonlinear_physical(&self.fields(u));
        let mut s = PhysicalField { grid: u.grid.clone(), comps: out }.to_spectral();
        s.dealias();
        s
    }

    /// `dN/dtau` from the unexpanded form
    /// `-A11(Z2*) dN - sum_k A12^k(N) d_k Z2*` with `Z2* = -L2^{-1} sum_l A21^l(N) d_l N`,
    /// used to cross-check the extracted tensors.
    pub fn assembled_rhs(&self, u: &SpectralField) -> SpectralField {
        let (n1, n) = (self.n1(), self.spec.n());
        let n2 = n - n1;
        let d = self.d();
        let g = &u.grid;
        let f = self.fields(u);
        let len = g.len();
        let state = |x: usize| -> Vec<f64> {
            let mut z = vec![0.0; n];
            for m in 0..n1 {
                z[m] = f.n[m][x];
            }
            z
        };
        // Z2* on the grid.
        let mut z2 = vec![vec![0.0; len]; n2];
        for x in 0..len {
            let z = state(x);
            let mut flux = vec![0.0; n2];
            for l in 0..d {
                let a = self.spec.flux.evaluate(l, &z);
                for r in 0..n2 {
                    flux[r] += (0..n1).map(|c| a[(n1 + r, c)] * f.dn[l][c][x]).sum::<f64>();
                }
            }
            for r in 0..n2 {
                z2[r][x] = -(0..n2).map(|c| self.l2_inv[(r, c)] * flux[c]).sum::<f64>();
            }
        }
        let z2s = PhysicalField { grid: g.clone(), comps: z2.clone() }.to_spectral();
        let dz2: Vec<Vec<Vec<f64>>> = (0..d).map(|k| z2s.derivative(k).comps.iter().map(|c| g.inverse(c)).collect()).collect();
        let mut out = vec![vec![0.0; len]; n1];
        for x in 0..len {
            let mut z = state(x);
            for r in 0..n2 {
                z[n1 + r] = z2[r][x];
            }
            for k in 0..d {
                let a = self.spec.flux.evaluate(k, &z);
                for i in 0..n1 {
                    let mut s = 0.0;
                    for c in 0..n1 {
                        s += a[(i, c)] * f.dn[k][c][x];
                    }
                    for r in 0..n2 {
                        s += a[(i, n1 + r)] * dz2[k][r][x];
                    }
                    out[i][x] -= s;
                }
            }
        }
        PhysicalField { grid: g.clone(), comps: out }.to_spectral()
    }

    /// `-A(D) N - (Q1 + Q2 + T1 + T2)`.
    pub fn rhs(&self, u: &SpectralField) -> SpectralField {
        let mut out = self.nonlinear_term(u).scaled(-1.0);
        for idx in 0..u.grid.len() {
            let s = self.symbol(u.grid.xi(idx));
            for i in 0..self.n1() {
                let v: Complex64 = (0..self.n1()).map(|c| u.comps[c][idx] * s[(i, c)]).sum();
                out.comps[i][idx] -= v;
            }
        }
        out
    }

    /// Default smallness bound on `||N0||_{B^{d/2}_{2,1}}`:
    /// `0.1 * ellipticity / (largest quadratic coefficient)`.
    pub fn default_smallness(&self) -> f64 {
        let scale = self.q1.iter().map(|t| t.coef.norm()).chain(self.q2.iter().map(|t| t.coef.norm())).fold(0.0, f64::max);
        if scale == 0.0 { f64::INFINITY } else { 0.1 * self.ellipticity / scale }
    }
}

/// Time stepping for the limit equation.
#[derive(Debug, Clone, Serialize)]
pub struct LimitConfig {
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub smallness: Option<f64>,
}

/// Block norms of `N` at the recorded times and the a-priori bound
/// `||N||_{Linf(B^{d/2})} + ||N||_{L1(B^{d/2+2})} <= C ||N0||_{B^{d/2}}`.
#[derive(Debug, Clone, Serialize)]
pub struct LimitTrajectory {
    pub times: Vec<f64>,
    pub norms: Vec<BlockNorms>,
    pub bound_constant: f64,
    pub final_hash: String,
    #[serde(skip)]
    pub final_state: Option<SpectralField>,
}

/// Integrating-factor RK4 for the limit equation on one grid.
pub struct LimitSolver {
    pub eq: LimitEquation,
    pub grid: Grid,
    pub bank: FilterBank,
    symbols: Vec<RMat>,
}

/// Fixed-step integrator with precomputed `exp(-h A(xi))`.
pub struct LimitStepper<'a> {
    solver: &'a LimitSolver,
    pub dt: f64,
    half: Vec<CMat>,
    full: Vec<CMat>,
}

fn apply_ops(ops: &[CMat], z: &SpectralField, scale: f64, out: &mut SpectralField) {
    let n = z.n();
    for (idx, m) in ops.iter().enumerate() {
        for i in 0..n {
            let v: Complex64 = (0..n).map(|c| m[(i, c)] * z.comps[c][idx]).sum();
            out.comps[i][idx] += v * scale;
        }
    }
}

impl LimitStepper<'_> {
    fn exp_apply(ops: &[CMat], z: &SpectralField) -> SpectralField {
        let mut out = SpectralField::zeros(&z.grid, z.n());
        apply_ops(ops, z, 1.0, &mut out);
        out
    }

    pub fn advance(&self, u: &SpectralField) -> Result<SpectralField> {
        let eq = &self.solver.eq;
        let h = self.dt;
        let hc = Complex64::new(0.5 * h, 0.0);
        let k1 = eq.nonlinear_term(u).scaled(-1.0);
        let mut a = u.clone();
        a.axpy(hc, &k1);
        let u2 = Self::exp_apply(&self.half, &a);
        let k2 = eq.nonlinear_term(&u2).scaled(-1.0);
        let mut u3 = Self::exp_apply(&self.half, u);
        u3.axpy(hc, &k2);
        let k3 = eq.nonlinear_term(&u3).scaled(-1.0);
        let fu = Self::exp_apply(&self.full, u);
        let mut u4 = fu.clone();
        apply_ops(&self.half, &k3, h, &mut u4);
        let k4 = eq.nonlinear_term(&u4).scaled(-1.0);
        let mut out = fu;
        apply_ops(&self.full, &k1, h / 6.0, &mut out);
        let mut k23 = k2;
        k23.axpy(Complex64::new(1.0, 0.0), &k3);
        apply_ops(&self.half, &k23, h / 3.0, &mut out);
        out.axpy(Complex64::new(h / 6.0, 0.0), &k4);
        if out.comps.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Numerical("non-finite limit state".into()));
        }
        Ok(out)
    }
}

impl LimitSolver {
    pub fn new(eq: &LimitEquation, grid: &Grid) -> Result<Self> {
        if grid.dim() != eq.d() {
            return Err(Error::Dimension(format!("grid is {}-D but the equation is {}-D", grid.dim(), eq.d())));
        }
        let symbols = (0..grid.len()).map(|i| eq.symbol(grid.xi(i))).collect();
        Ok(Self { eq: eq.clone(), grid: grid.clone(), bank: FilterBank::new(grid, Default::default()), symbols })
    }

    pub fn stepper(&self, dt: f64) -> LimitStepper<'_> {
        let ops = |h: f64| -> Vec<CMat> {
            self.symbols
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    if self.grid.retained(i) {
                        linalg::expm(&linalg::to_complex(&(s * -h)))
                    } else {
                        CMat::zeros(s.nrows(), s.ncols())
                    }
                })
                .collect()
        };
        LimitStepper { solver: self, dt, half: ops(0.5 * dt), full: ops(dt) }
    }

    pub fn solve(&self, n0: &SpectralField, config: &LimitConfig) -> Result<LimitTrajectory> {
        if !(config.dt > 0.0) || config.record_stride == 0 {
            return Err(param("limit config", "dt must be positive and record_stride at least 1"));
        }
        let h = self.eq.d() as f64 / 2.0;
        let mut u = n0.clone();
        u.dealias();
        let b0 = self.bank.block_norms(&u, 0..u.n());
        let data = b0.besov(h, Summation::Sum);
        let threshold = config.smallness.unwrap_or_else(|| self.eq.default_smallness());
        if data > threshold {
            return Err(Error::Smallness { time: 0.0, norm: data, threshold });
        }
        let steps = (config.t_end / config.dt).round() as usize;
        let dt = if steps > 0 { config.t_end / steps as f64 } else { config.dt };
        let stepper = self.stepper(dt);
        let mut times = vec![0.0];
        let mut norms = vec![b0];
        for step in 1..=steps {
            u = stepper.advance(&u)?;
            if step % config.record_stride == 0 || step == steps {
                times.push(step as f64 * dt);
                norms.push(self.bank.block_norms(&u, 0..u.n()));
            }
        }
        let sup = norms.iter().map(|b| b.besov(h, Summation::Sum)).fold(0.0, f64::max);
        let high: Vec<f64> = norms.iter().map(|b| b.besov(h + 2.0, Summation::Sum)).collect();
        let l1 = trapezoid(&times, &high);
        let bound_constant = if data > 0.0 { (sup + l1) / data } else { 0.0 };
        Ok(LimitTrajectory { times, norms, bound_constant, final_hash: u.content_hash(), final_state: Some(u) })
    }
}

fn trapezoid(times: &[f64], vals: &[f64]) -> f64 {
    times.windows(2).zip(vals.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

/// Direction of a rescaling map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Diffusive rescaling of a state: `(t, Z1, Z2) -> (eps t, Z1, Z2 / eps)`
/// (or back).
pub fn diffusive_rescale(t: f64, z: &SpectralField, n1: usize, eps: f64, dir: Direction) -> Result<(f64, SpectralField)> {
    if !(eps > 0.0) {
        return Err(param("epsilon", "must be positive"));
    }
    let (ft, fz) = match dir {
        Direction::Forward => (eps, 1.0 / eps),
        Direction::Inverse => (1.0 / eps, eps),
    };
    let mut out = z.clone();
    for c in out.comps.iter_mut().skip(n1) {
        for v in c.iter_mut() {
            *v *= fz;
        }
    }
    Ok((t * ft, out))
}

/// Hyperbolic rescaling `Z^eps(t, x) = Z(t / eps, x / eps)`: the same Fourier
/// coefficients on a box scaled by `eps`; times scale by `eps`.
pub fn hyperbolic_rescale(t: f64, z: &SpectralField, eps: f64) -> Result<(f64, SpectralField)> {
    if !(eps > 0.0) {
        return Err(param("epsilon", "must be positive"));
    }
    let grid = z.grid.rescaled(eps)?;
    Ok((eps * t, SpectralField { grid, comps: z.comps.clone() }))
}

/// Grid evaluation of `L2^{-1} sum_k (Abar^k_21 + A~^k_21(V)) d_k U` for
/// `n1`-component fields `V`, `U`.
fn offdiag_flux(eq: &LimitEquation, v: &SpectralField, u: &SpectralField) -> Vec<Vec<f64>> {
    let (n1, n) = (eq.n1(), eq.spec.n());
    let n2 = n - n1;
    let g = &u.grid;
    let vp: Vec<Vec<f64>> = v.comps.iter().map(|c| g.inverse(c)).collect();
    let du: Vec<Vec<Vec<f64>>> = (0..eq.d()).map(|k| u.derivative(k).comps.iter().map(|c| g.inverse(c)).collect()).collect();
    let mut out = vec![vec![0.0; g.len()]; n2];
    let mut z = vec![0.0; n];
    let mut flux = vec![0.0; n2];
    for x in 0..g.len() {
        for m in 0..n1 {
            z[m] = vp[m][x];
        }
        flux.iter_mut().for_each(|f| *f = 0.0);
        for (k, duk) in du.iter().enumerate() {
            let a = eq.spec.flux.evaluate(k, &z);
            for (r, f) in flux.iter_mut().enumerate() {
                *f += (0..n1).map(|c| a[(n1 + r, c)] * duk[c][x]).sum::<f64>();
            }
        }
        for r in 0..n2 {
            out[r][x] = (0..n2).map(|c| eq.l2_inv[(r, c)] * flux[c]).sum();
        }
    }
    out
}

fn add_physical(z2: &SpectralField, extra: Vec<Vec<f64>>) -> SpectralField {
    let mut f = PhysicalField { grid: z2.grid.clone(), comps: extra }.to_spectral();
    f.axpy(Complex64::new(1.0, 0.0), z2);
    f.dealias();
    f
}

/// `W~ = Z2~ + L2^{-1} sum_k (Abar^k_21 + A~^k_21(Z1~)) d_k Z1~` for a
/// rescaled state.
pub fn damped_mode_tilde(eq: &LimitEquation, state: &SpectralField) -> SpectralField {
    let n1 = eq.n1();
    let z1 = state.select(0..n1);
    add_physical(&state.select(n1..state.n()), offdiag_flux(eq, &z1, &z1))
}

/// `W^ = Z2~ + L2^{-1} sum_k (Abar^k_21 + A~^k_21(N)) d_k N`.
pub fn damped_mode_check(eq: &LimitEquation, state: &SpectralField, n: &SpectralField) -> SpectralField {
    add_physical(&state.select(eq.n1()..state.n()), offdiag_flux(eq, n, n))
}

/// Source `S = -sum_k (Abar^k_12 + A~^k_12(Z1~)) d_k W~ - sum_k A~^k_11(W~) d_k Z1~`.
pub fn source_term(eq: &LimitEquation, state: &SpectralField, w: &SpectralField) -> SpectralField {
    let (n1, n) = (eq.n1(), eq.spec.n());
    let g = &state.grid;
    let z1p: Vec<Vec<f64>> = state.comps[..n1].iter().map(|c| g.inverse(c)).collect();
    let wp: Vec<Vec<f64>> = w.comps.iter().map(|c| g.inverse(c)).collect();
    let z1 = state.select(0..n1);
    let mut out = vec![vec![0.0; g.len()]; n1];
    let mut zz = vec![0.0; n];
    let mut zw = vec![0.0; n];
    for k in 0..eq.d() {
        let dz1: Vec<Vec<f64>> = z1.derivative(k).comps.iter().map(|c| g.inverse(c)).collect();
        let dw: Vec<Vec<f64>> = w.derivative(k).comps.iter().map(|c| g.inverse(c)).collect();
        for x in 0..g.len() {
            for m in 0..n1 {
                zz[m] = z1p[m][x];
            }
            for r in 0..n - n1 {
                zw[n1 + r] = wp[r][x];
            }
            let a = eq.spec.flux.evaluate(k, &zz);
            // A~_11(W) is the Z2-linear part of A_11 at zero Z1.
            let a11 = &eq.spec.flux.evaluate(k, &zw) - &eq.spec.flux.base[k];
            for i in 0..n1 {
                let mut s = 0.0;
                for r in 0..n - n1 {
                    s += a[(i, n1 + r)] * dw[r][x];
                }
                for c in 0..n1 {
                    s += a11[(i, c)] * dz1[c][x];
                }
                out[i][x] -= s;
            }
        }
    }
    let mut f = PhysicalField { grid: g.clone(), comps: out }.to_spectral();
    f.dealias();
    f
}

/// Log-log least-squares slope of `vals` against `eps`.
pub fn fit_rate(eps: &[f64], vals: &[f64]) -> Result<f64> {
    if eps.len() < 3 || eps.len() != vals.len() {
        return Err(Error::InsufficientData(format!("rate fit needs at least 3 matched values, got {}", eps.len())));
    }
    if vals.iter().chain(eps).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InsufficientData("rate fit needs positive finite values".into()));
    }
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

/// Discretization of an epsilon sweep; the horizon is in rescaled time.
#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub modes: usize,
    pub period: f64,
    pub tau_end: f64,
    /// Time step in the original variable is `dt_factor * eps`.
    pub dt_factor: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { modes: 64, period: 1.0, tau_end: 2.0, dt_factor: 0.1 }
    }
}

/// Errors of one epsilon run.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    /// `sup_tau ||Z1~ - N||_{B^{d/2-1}}`.
    pub dn_sup: f64,
    /// `int ||Z1~ - N||_{B^{d/2+1}} dtau`.
    pub dn_l1: f64,
    /// `int ||W~||_{B^{d/2}} dtau`.
    pub w_l1: f64,
    /// `(int ||Z2||_{B^{d/2}}^2 dt)^{1/2}` in the original variables.
    pub z2_l2: f64,
    /// `int ||S||_{B^{d/2-1}} dtau`.
    pub s_l1: f64,
    /// `int ||W~ - W^||_{B^{d/2}} dtau`.
    pub w_gap_l1: f64,
    pub steps: usize,
    /// Box period in the original (unrescaled) variables under the
    /// hyperbolic scaling, which differs across the sweep.
    pub hyperbolic_period: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSlopes {
    pub dn_sup: f64,
    pub dn_l1: f64,
    pub w_l1: f64,
    pub z2_l2: f64,
    pub s_l1: f64,
    pub w_gap_l1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsSweep {
    pub rows: Vec<SweepRow>,
    pub slopes: SweepSlopes,
    /// `dn_sup` strictly decreases along the sweep.
    pub monotone: bool,
}

fn run_one(spec: &SystemSpec, eq: &LimitEquation, z0: &SpectralField, eps: f64, cfg: &SweepConfig) -> Result<SweepRow> {
    let spec_eps = spec.with_epsilon(eps)?;
    let grid = &z0.grid;
    let n1 = eq.n1();
    let h = grid.dim() as f64 / 2.0;
    let solver = NonlinearSolver::new(&spec_eps, grid, None)?;
    let limit = LimitSolver::new(eq, grid)?;
    let bank = &limit.bank;
    let dt = cfg.dt_factor * eps;
    let steps = (cfg.tau_end / (eps * dt)).round() as usize;
    let hyper = solver.stepper(dt, 1.5);
    let lim = limit.stepper(eps * dt);
    let mut z = z0.clone();
    z.dealias();
    let mut n = z.select(0..n1);
    let norm = |f: &SpectralField, s: f64| bank.block_norms(f, 0..f.n()).besov(s, Summation::Sum);
    let measure = |z: &SpectralField, n: &SpectralField| -> Result<[f64; 6]> {
        let (_, zt) = diffusive_rescale(0.0, z, n1, eps, Direction::Forward)?;
        let mut dn = zt.select(0..n1);
        dn.axpy(Complex64::new(-1.0, 0.0), n);
        let w = damped_mode_tilde(eq, &zt);
        let mut gap = w.clone();
        gap.axpy(Complex64::new(-1.0, 0.0), &damped_mode_check(eq, &zt, n));
        let s = source_term(eq, &zt, &w);
        Ok([norm(&dn, h - 1.0), norm(&dn, h + 1.0), norm(&w, h), norm(&z.select(n1..z.n()), h), norm(&s, h - 1.0), norm(&gap, h)])
    };
    let mut prev = measure(&z, &n)?;
    let mut acc = [prev[0], 0.0, 0.0, 0.0, 0.0, 0.0];
    let dtau = eps * dt;
    for _ in 0..steps {
        z = hyper.advance(&z)?;
        n = lim.advance(&n)?;
        let cur = measure(&z, &n)?;
        acc[0] = acc[0].max(cur[0]);
        acc[1] += 0.5 * dtau * (prev[1] + cur[1]);
        acc[2] += 0.5 * dtau * (prev[2] + cur[2]);
        acc[3] += 0.5 * dt * (prev[3].powi(2) + cur[3].powi(2));
        acc[4] += 0.5 * dtau * (prev[4] + cur[4]);
        acc[5] += 0.5 * dtau * (prev[5] + cur[5]);
        prev = cur;
    }
    Ok(SweepRow {
        epsilon: eps,
        dn_sup: acc[0],
        dn_l1: acc[1],
        w_l1: acc[2],
        z2_l2: acc[3].sqrt(),
        s_l1: acc[4],
        w_gap_l1: acc[5],
        steps,
        hyperbolic_period: grid.periods()[0] / eps,
    })
}

/// Runs the full system for each `eps` from the fixed original-variable data
/// `z0` alongside the limit equation started from `Z1(0)`, and fits
/// log-error versus log-eps slopes.
pub fn convergence_study(spec: &SystemSpec, epsilons: &[f64], z0: &SpectralField, cfg: &SweepConfig) -> Result<EpsSweep> {
    if epsilons.len() < 3 {
        return Err(Error::InsufficientData("an epsilon sweep needs at least 3 values".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(param("epsilons", "must be positive and strictly decreasing"));
    }
    let eq = extract_limit_equation(spec)?;
    let rows: Vec<SweepRow> = epsilons.par_iter().map(|&e| run_one(spec, &eq, z0, e, cfg)).collect::<Result<_>>()?;
    let col = |f: fn(&SweepRow) -> f64| -> Result<f64> { fit_rate(epsilons, &rows.iter().map(f).collect::<Vec<_>>()) };
    let slopes = SweepSlopes {
        dn_sup: col(|r| r.dn_sup)?,
        dn_l1: col(|r| r.dn_l1)?,
        w_l1: col(|r| r.w_l1)?,
        z2_l2: col(|r| r.z2_l2)?,
        s_l1: col(|r| r.s_l1)?,
        w_gap_l1: col(|r| r.w_gap_l1)?,
    };
    let monotone = rows.windows(2).all(|w| w[1].dn_sup < w[0].dn_sup);
    Ok(EpsSweep { rows, slopes, monotone })
}

/// Smooth unprepared sweep data on `modes` points of period `2 pi period`:
/// `Z1 = amp (cos x + 0.4 sin 2x)`, `Z2 = 0.6 amp sin x` in every direction.
pub fn sweep_data(n1: usize, n2: usize, d: usize, cfg: &SweepConfig, amp: f64) -> Result<SpectralField> {
    let grid = Grid::cubic(d, cfg.modes, cfg.period)?;
    let l = cfg.period;
    let f = PhysicalField::from_fn(&grid, n1 + n2, |x| {
        let s: f64 = x.iter().map(|v| v / l).sum();
        let mut out = vec![amp * (s.cos() + 0.4 * (2.0 * s).sin()); n1];
        out.extend(std::iter::repeat_n(0.6 * amp * s.sin(), n2));
        out
    });
    let mut z = f.to_spectral();
    z.remove_mean();
    Ok(z)
}

/// Outcome of one maximal-regularity evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct MaxRegReport {
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
}

/// Forcing `f(t) = exp(-mu t) g`.
#[derive(Debug, Clone)]
pub struct Forcing {
    pub g: SpectralField,
    pub mu: f64,
}

/// Exact per-mode solution of `z' + a(D) z = f`, `z(0) = z0`.
fn parabolic_solution(symbol: &HomogeneousSymbol, z0: &SpectralField, f: &Forcing, t: f64) -> SpectralField {
    let mut out = z0.clone();
    for (c, comp) in out.comps.iter_mut().enumerate() {
        for (idx, v) in comp.iter_mut().enumerate() {
            let a = symbol.eval(z0.grid.xi(idx));
            let mu = f.mu;
            // int_0^t exp(-(t-s) a) exp(-mu s) ds
            let kernel = if ((a - mu) * t).abs() < 1e-8 {
                t * (-a * t).exp()
            } else {
                ((-mu * t).exp() - (-a * t).exp()) / (a - mu)
            };
            *v = *v * (-a * t).exp() + f.g.comps[c][idx] * kernel;
        }
    }
    out
}

/// Measures `(||z(t)||_{B^s} + int_0^t ||z||_{B^{s+gamma}}) / (||z0||_{B^s} + int_0^t ||f||_{B^s})`
/// in `L^2`-based norms, with composite Gauss quadrature in time.
pub fn maximal_regularity_check(
    symbol: &HomogeneousSymbol,
    bank: &FilterBank,
    z0: &SpectralField,
    forcing: &Forcing,
    t: f64,
    s: f64,
) -> Result<MaxRegReport> {
    symbol.require_elliptic(z0.grid.dim())?;
    if !(t > 0.0) {
        return Err(param("t", "must be positive"));
    }
    let norm = |u: &SpectralField, r: f64| bank.block_norms(u, 0..u.n()).besov(r, Summation::Sum);
    let panels = (8.0 * t).ceil().max(16.0) as usize;
    let nodes = gauss_nodes(0.0, t, panels);
    let int_z: f64 = nodes.iter().map(|&(tau, w)| w * norm(&parabolic_solution(symbol, z0, forcing, tau), s + symbol.degree)).sum();
    let g = norm(&forcing.g, s);
    let int_f = if forcing.mu == 0.0 { g * t } else { g * (1.0 - (-forcing.mu * t).exp()) / forcing.mu };
    let lhs = norm(&parabolic_solution(symbol, z0, forcing, t), s) + int_z;
    let rhs = norm(z0, s) + int_f;
    if rhs == 0.0 {
        return Err(Error::InsufficientData("zero data and forcing".into()));
    }
    Ok(MaxRegReport { lhs, rhs, constant: lhs / rhs })
}

/// Largest measured constant over a fixed battery of data: a Gaussian with
/// no forcing, a single-mode forcing from rest, and a mixed case.
pub fn maximal_regularity_battery(symbol: &HomogeneousSymbol, grid: &Grid, s: f64) -> Result<f64> {
    let bank = FilterBank::new(grid, Default::default());
    let center: Vec<f64> = grid.periods().iter().map(|l| std::f64::consts::PI * l).collect();
    let gauss = crate::nonlinear_solver::gaussian_data(grid, &[1.0], 1.0, &center);
    let zero = SpectralField::zeros(grid, 1);
    let mut single = SpectralField::zeros(grid, 1);
    let idx = (0..grid.len())
        .filter(|&i| grid.retained(i) && grid.xi_norm(i) > 0.0)
        .min_by(|&a, &b| (grid.xi_norm(a) - 1.0).abs().total_cmp(&(grid.xi_norm(b) - 1.0).abs()))
        .ok_or_else(|| Error::InsufficientData("grid has no nonzero mode".into()))?;
    single.comps[0][idx] = Complex64::new(0.5, 0.0);
    let cases = [
        (gauss.clone(), Forcing { g: zero.clone(), mu: 0.0 }, 4.0),
        (zero, Forcing { g: single.clone(), mu: 0.5 }, 4.0),
        (gauss, Forcing { g: single, mu: 0.0 }, 2.0),
    ];
    let mut worst: f64 = 0.0;
    for (z0, f, t) in &cases {
        worst = worst.max(maximal_regularity_check(symbol, &bank, z0, f, *t, s)?.constant);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system_model::{isentropic_euler, linearized_euler, EulerParams};

    #[test]
    fn euler_symbol_is_sound_speed_squared() {
        let p = EulerParams { gamma: 2.0, a: 0.5, ..Default::default() };
        let eq = extract_limit_equation(&isentropic_euler(p).unwrap()).unwrap();
        let s = eq.symbol(&[1.7]);
        assert!((s[(0, 0)] - p.sound_speed_sq() * 1.7 * 1.7).abs() < 1e-12);
    }

    #[test]
    fn linear_system_has_no_nonlinear_terms() {
        let eq = extract_limit_equation(&linearized_euler(2, 1.0).unwrap()).unwrap();
        assert!(eq.q1.is_empty() && eq.q2.is_empty() && eq.t1.is_empty() && eq.t2.is_empty());
    }

    #[test]
    fn rescale_round_trip() {
        let g = Grid::cubic(1, 16, 1.0).unwrap();
        let z = sweep_data(1, 1, 1, &SweepConfig { modes: 16, ..Default::default() }, 0.1).unwrap();
        let (t, f) = diffusive_rescale(3.0, &z, 1, 0.2, Direction::Forward).unwrap();
        let (t2, b) = diffusive_rescale(t, &f, 1, 0.2, Direction::Inverse).unwrap();
        assert!((t2 - 3.0).abs() < 1e-15 && b.max_diff(&z) < 1e-15);
        assert_eq!(diffusive_rescale(1.0, &z, 1, 1.0, Direction::Forward).unwrap().1, z);
        assert_eq!(z.grid, g);
    }

    #[test]
    fn single_mode_forcing_from_rest() {
        let g = Grid::cubic(1, 16, 1.0).unwrap();
        let sym = HomogeneousSymbol::laplacian(1.0);
        let mut f = SpectralField::zeros(&g, 1);
        f.comps[0][1] = Complex64::new(1.0, 0.0);
        let z = parabolic_solution(&sym, &SpectralField::zeros(&g, 1), &Forcing { g: f, mu: 0.0 }, 2.0);
        assert!((z.comps[0][1].re - (1.0 - (-2.0f64).exp())).abs() < 1e-15);
    }
}
