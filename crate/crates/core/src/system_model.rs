//! Symmetric hyperbolic systems with affine flux matrices and a degenerate
//! relaxation block,
//!
//! ```text
//! dZ/dt + sum_k A^k(Z) d_k Z + B Z / eps = 0,   B = diag(0, L2),
//! A^k(Z) = Abar^k + sum_m Z_m G^{k,m},
//! ```
//!
//! together with the linearized and isentropic Euler specializations.
//! Everything is expressed in the perturbation variable `Z = V - Vbar`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::{self, RMat};

/// Relative tolerance used for the symmetry hypothesis on flux matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Sizes of the undamped block, the damped block, and the space dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDims {
    pub n1: usize,
    pub n2: usize,
    pub d: usize,
}

impl BlockDims {
    pub fn new(n1: usize, n2: usize, d: usize) -> Result<Self> {
        if n1 == 0 {
            return Err(param("n1", "need at least one undamped component"));
        }
        if n2 == 0 {
            return Err(param("n2", "need at least one damped component"));
        }
        if !(1..=3).contains(&d) {
            return Err(param("d", format!("space dimension must be 1, 2 or 3, got {d}")));
        }
        Ok(Self { n1, n2, d })
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }
}

/// Which of the optional block-structure hypotheses the flux family claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StructureFlags {
    /// `Abar^k_11 = 0` and `A^k_11` depends linearly on `Z2` only.
    pub h3: bool,
    /// `A^k_11` is independent of `Z1` (and has zero base block).
    pub a11_from_z2: bool,
    /// The off-diagonal blocks depend on `Z1` only.
    pub offdiag_from_z1: bool,
    /// `A^k_22` is affine in `Z`; always true for an affine family.
    pub a22_affine: bool,
}

impl StructureFlags {
    pub fn all() -> Self {
        Self { h3: true, a11_from_z2: true, offdiag_from_z1: true, a22_affine: true }
    }

    pub fn relaxation_ready(&self) -> bool {
        self.h3 && self.a11_from_z2 && self.offdiag_from_z1 && self.a22_affine
    }
}

/// `A^k(Z) = base[k] + sum_m Z_m gradient[k][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFluxFamily {
    pub base: Vec<RMat>,
    pub gradient: Vec<Vec<RMat>>,
    pub flags: StructureFlags,
}

impl AffineFluxFamily {
    /// Constant-coefficient family (all gradients zero).
    pub fn constant(base: Vec<RMat>) -> Self {
        let n = base.first().map_or(0, |m| m.nrows());
        let gradient = base.iter().map(|_| vec![RMat::zeros(n, n); n]).collect();
        Self { base, gradient, flags: StructureFlags::default() }
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn n(&self) -> usize {
        self.base.first().map_or(0, |m| m.nrows())
    }

    /// `A^k(Z)` for the axis `k` (0-based).
    pub fn evaluate(&self, k: usize, z: &[f64]) -> RMat {
        let mut a = self.base[k].clone();
        for (m, &zm) in z.iter().enumerate() {
            if zm != 0.0 {
                a += &self.gradient[k][m] * zm;
            }
        }
        a
    }

    /// Whether every gradient matrix vanishes.
    pub fn is_linear(&self) -> bool {
        self.gradient.iter().flatten().all(|g| g.iter().all(|&x| x == 0.0))
    }

    /// Largest Frobenius norm among the gradient matrices.
    pub fn gradient_scale(&self) -> f64 {
        self.gradient.iter().flatten().map(|g| g.norm()).fold(0.0, f64::max)
    }

    /// Structure actually present in the stored matrices.
    pub fn detect_flags(&self, n1: usize) -> StructureFlags {
        let n = self.n();
        let zero_block = |m: &RMat, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
            rows.clone().all(|r| cols.clone().all(|c| m[(r, c)] == 0.0))
        };
        let mut a11_base_zero = true;
        let mut a11_no_z1 = true;
        let mut offdiag_no_z2 = true;
        for k in 0..self.dim() {
            a11_base_zero &= zero_block(&self.base[k], 0..n1, 0..n1);
            for m in 0..n {
                let g = &self.gradient[k][m];
                if m < n1 {
                    a11_no_z1 &= zero_block(g, 0..n1, 0..n1);
                } else {
                    offdiag_no_z2 &= zero_block(g, 0..n1, n1..n) && zero_block(g, n1..n, 0..n1);
                }
            }
        }
        StructureFlags {
            h3: a11_base_zero && a11_no_z1,
            a11_from_z2: a11_base_zero && a11_no_z1,
            offdiag_from_z1: offdiag_no_z2,
            a22_affine: true,
        }
    }
}

/// The damping block `L2` and the relaxation parameter `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationBlock {
    pub l2: RMat,
    pub epsilon: f64,
}

impl RelaxationBlock {
    pub fn new(l2: RMat, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(param("epsilon", format!("must be positive, got {epsilon}")));
        }
        if l2.nrows() != l2.ncols() || l2.nrows() == 0 {
            return Err(Error::Dimension("L2 must be a non-empty square matrix".into()));
        }
        Ok(Self { l2, epsilon })
    }

    /// `lambda_min((L2 + L2^T)/2)`, computed rather than asserted.
    pub fn coercivity(&self) -> f64 {
        linalg::real_sym_eigenvalues(&self.l2)[0]
    }

    /// `L2 / eps`, the damping actually seen by the unscaled equations.
    pub fn effective(&self) -> RMat {
        &self.l2 / self.epsilon
    }

    /// Largest `kappa` with `Re(kappa B eta . eta) >= |kappa B eta|^2`,
    /// i.e. `lambda_min` of the symmetric part of `(L2/eps)^{-1}`.
    pub fn kappa(&self) -> Result<f64> {
        let inv = linalg::inverse(&self.effective())?;
        Ok(linalg::real_sym_eigenvalues(&inv)[0])
    }
}

/// A partially dissipative system about the constant state `vbar`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub dims: BlockDims,
    pub flux: AffineFluxFamily,
    pub relax: RelaxationBlock,
    pub vbar: Vec<f64>,
}

impl SystemSpec {
    /// Assembles a system and checks shapes plus the hard hypotheses
    /// (symmetric fluxes, coercive and invertible `L2`).
    pub fn new(
        name: impl Into<String>,
        dims: BlockDims,
        flux: AffineFluxFamily,
        relax: RelaxationBlock,
        vbar: Vec<f64>,
    ) -> Result<Self> {
        let n = dims.n();
        if flux.dim() != dims.d || flux.gradient.len() != dims.d {
            return Err(Error::Dimension(format!("expected {} flux matrices, got {}", dims.d, flux.dim())));
        }
        for k in 0..dims.d {
            if flux.base[k].shape() != (n, n) || flux.gradient[k].len() != n {
                return Err(Error::Dimension(format!("flux matrices for axis {k} must be {n}x{n}")));
            }
            if flux.gradient[k].iter().any(|g| g.shape() != (n, n)) {
                return Err(Error::Dimension(format!("gradient matrices for axis {k} must be {n}x{n}")));
            }
        }
        if relax.l2.nrows() != dims.n2 {
            return Err(Error::Dimension(format!("L2 must be {0}x{0}", dims.n2)));
        }
        if vbar.len() != n {
            return Err(Error::Dimension(format!("reference state must have {n} entries")));
        }
        let spec = Self { name: name.into(), dims, flux, relax, vbar };
        let report = spec.validate();
        if !report.passed() {
            return Err(Error::InvalidSystem(report.failures.join("; ")));
        }
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.dims.n()
    }

    pub fn d(&self) -> usize {
        self.dims.d
    }

    /// `A^k(Z)` (axis `k` is 0-based).
    pub fn flux_matrix(&self, k: usize, z: &[f64]) -> RMat {
        self.flux.evaluate(k, z)
    }

    /// Full `n x n` dissipation `B = diag(0, L2/eps)`.
    pub fn b_matrix(&self) -> RMat {
        let n = self.n();
        let n1 = self.dims.n1;
        let mut b = RMat::zeros(n, n);
        b.view_mut((n1, n1), (self.dims.n2, self.dims.n2)).copy_from(&self.relax.effective());
        b
    }

    /// Copy with a different relaxation parameter.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let relax = RelaxationBlock::new(self.relax.l2.clone(), epsilon)?;
        Ok(Self { relax, ..self.clone() })
    }

    /// Structural checks; never aborts, collects every failure.
    pub fn validate(&self) -> ValidationReport {
        let mut failures = Vec::new();
        let mut symmetry_residual: f64 = 0.0;
        for k in 0..self.flux.dim() {
            let mats = std::iter::once(&self.flux.base[k]).chain(self.flux.gradient[k].iter());
            for m in mats {
                let r = (m - m.transpose()).norm() / m.norm().max(1.0);
                symmetry_residual = symmetry_residual.max(r);
            }
        }
        if symmetry_residual > SYMMETRY_TOL {
            failures.push(format!("flux matrices not symmetric (residual {symmetry_residual:.3e})"));
        }
        let coercivity = self.relax.coercivity();
        if !(coercivity > 0.0) {
            failures.push(format!("L2 not coercive: lambda_min of symmetric part = {coercivity:.3e}"));
        }
        if self.relax.l2.clone().try_inverse().is_none() {
            failures.push("L2 not invertible".into());
        }
        let dh = linalg::to_complex(&(-self.b_matrix()));
        let dh_spectrum = linalg::eigenvalues(&dh).unwrap_or_default();
        if dh_spectrum.iter().any(|l| l.re > 1e-12) {
            failures.push("linearized source has an eigenvalue with positive real part".into());
        }
        let detected = self.flux.detect_flags(self.dims.n1);
        let claimed = self.flux.flags;
        let mut inconsistent = Vec::new();
        if claimed.h3 && !detected.h3 {
            inconsistent.push("h3");
        }
        if claimed.a11_from_z2 && !detected.a11_from_z2 {
            inconsistent.push("a11_from_z2");
        }
        if claimed.offdiag_from_z1 && !detected.offdiag_from_z1 {
            inconsistent.push("offdiag_from_z1");
        }
        if !inconsistent.is_empty() {
            failures.push(format!("structure flags not backed by the matrices: {}", inconsistent.join(", ")));
        }
        ValidationReport { symmetry_residual, coercivity, dh_spectrum, detected_flags: detected, failures }
    }

    /// Serializable description with explicit matrices.
    pub fn to_explicit(&self) -> ExplicitSystem {
        let rows = |m: &RMat| (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
        ExplicitSystem {
            name: self.name.clone(),
            n1: self.dims.n1,
            n2: self.dims.n2,
            d: self.dims.d,
            base: self.flux.base.iter().map(rows).collect(),
            gradient: self.flux.gradient.iter().map(|gk| gk.iter().map(rows).collect()).collect(),
            flags: self.flux.flags,
            l2: rows(&self.relax.l2),
            epsilon: self.relax.epsilon,
            vbar: self.vbar.clone(),
        }
    }
}

/// Outcome of [`SystemSpec::validate`].
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub symmetry_residual: f64,
    pub coercivity: f64,
    pub dh_spectrum: Vec<num_complex::Complex64>,
    pub detected_flags: StructureFlags,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Plain-data form of a system, used by configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSystem {
    #[serde(default = "default_name")]
    pub name: String,
    pub n1: usize,
    pub n2: usize,
    pub d: usize,
    /// `base[k]` is the row-major matrix `Abar^k`.
    pub base: Vec<Vec<Vec<f64>>>,
    /// `gradient[k][m]`; may be omitted for constant-coefficient systems.
    #[serde(default)]
    pub gradient: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub flags: StructureFlags,
    pub l2: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub epsilon: f64,
    #[serde(default)]
    pub vbar: Vec<f64>,
}

fn default_name() -> String {
    "explicit".into()
}

fn one() -> f64 {
    1.0
}

fn matrix_from_rows(rows: &[Vec<f64>], n: usize, what: &str) -> Result<RMat> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("{what} must be {n}x{n}")));
    }
    Ok(RMat::from_fn(n, n, |r, c| rows[r][c]))
}

impl ExplicitSystem {
    pub fn build(&self) -> Result<SystemSpec> {
        let dims = BlockDims::new(self.n1, self.n2, self.d)?;
        let n = dims.n();
        if self.base.len() != self.d {
            return Err(Error::Dimension(format!("expected {} base matrices", self.d)));
        }
        let base = self
            .base
            .iter()
            .map(|m| matrix_from_rows(m, n, "base matrix"))
            .collect::<Result<Vec<_>>>()?;
        let gradient = if self.gradient.is_empty() {
            vec![vec![RMat::zeros(n, n); n]; self.d]
        } else {
            if self.gradient.len() != self.d || self.gradient.iter().any(|g| g.len() != n) {
                return Err(Error::Dimension(format!("gradient must be {} x {n} matrices", self.d)));
            }
            self.gradient
                .iter()
                .map(|gk| gk.iter().map(|m| matrix_from_rows(m, n, "gradient matrix")).collect())
                .collect::<Result<Vec<Vec<_>>>>()?
        };
        let flux = AffineFluxFamily { base, gradient, flags: self.flags };
        let relax = RelaxationBlock::new(matrix_from_rows(&self.l2, self.n2, "L2")?, self.epsilon)?;
        let vbar = if self.vbar.is_empty() { vec![0.0; n] } else { self.vbar.clone() };
        SystemSpec::new(self.name.clone(), dims, flux, relax, vbar)
    }
}

/// Linearized damped Euler system about `(rho, v) = (1, 0)` with `P'(1) = 1`:
/// unknowns `(a, u)`, `da + div u = 0`, `du + grad a + f u = 0`.
pub fn linearized_euler(d: usize, friction: f64) -> Result<SystemSpec> {
    if !(1..=3).contains(&d) {
        return Err(param("d", format!("must be 1, 2 or 3, got {d}")));
    }
    if !(friction > 0.0 && friction.is_finite()) {
        return Err(param("friction", format!("must be positive, got {friction}")));
    }
    let n = d + 1;
    let base = (0..d)
        .map(|k| {
            let mut m = RMat::zeros(n, n);
            m[(0, k + 1)] = 1.0;
            m[(k + 1, 0)] = 1.0;
            m
        })
        .collect();
    let mut flux = AffineFluxFamily::constant(base);
    flux.flags = flux.detect_flags(1);
    let relax = RelaxationBlock::new(RMat::identity(d, d) * friction, 1.0)?;
    SystemSpec::new("linearized-euler", BlockDims::new(1, d, d)?, flux, relax, vec![0.0; n])
}

/// Parameters of the isentropic Euler system with pressure `P = a rho^gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerParams {
    pub d: usize,
    pub gamma: f64,
    pub a: f64,
    pub rhobar: f64,
    pub epsilon: f64,
}

impl Default for EulerParams {
    /// `gamma = 1.4`, `a = 1/gamma`, `rhobar = 1`: unit sound speed at rest.
    fn default() -> Self {
        Self { d: 1, gamma: 1.4, a: 1.0 / 1.4, rhobar: 1.0, epsilon: 1.0 }
    }
}

impl EulerParams {
    pub fn gamma_tilde(&self) -> f64 {
        (self.gamma - 1.0) / 2.0
    }

    /// Reference renormalized sound speed `(gamma a)^{1/2} rhobar^{gt} / gt`.
    pub fn cbar(&self) -> f64 {
        let gt = self.gamma_tilde();
        (self.gamma * self.a).sqrt() * self.rhobar.powf(gt) / gt
    }

    /// Density as a function of the renormalized sound speed.
    pub fn density(&self, c: f64) -> f64 {
        let gt = self.gamma_tilde();
        (c * gt / (self.gamma * self.a).sqrt()).powf(1.0 / gt)
    }

    pub fn pressure(&self, rho: f64) -> f64 {
        self.a * rho.powf(self.gamma)
    }

    /// `P'(rhobar)`, the squared sound speed at rest.
    pub fn sound_speed_sq(&self) -> f64 {
        self.gamma * self.a * self.rhobar.powf(self.gamma - 1.0)
    }

    fn check(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(param("d", format!("must be 1, 2 or 3, got {}", self.d)));
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(param("gamma", format!("must exceed 1, got {}", self.gamma)));
        }
        for (name, v) in [("a", self.a), ("rhobar", self.rhobar), ("epsilon", self.epsilon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Isentropic Euler with relaxation in sound-speed form, unknowns
/// `Z = (c - cbar, v)`:
///
/// ```text
/// dc + v.grad c + gt c div v = 0
/// dv + v.grad v + gt c grad c + v / eps = 0
/// ```
pub fn isentropic_euler(p: EulerParams) -> Result<SystemSpec> {
    p.check()?;
    let d = p.d;
    let n = d + 1;
    let gt = p.gamma_tilde();
    let cbar = p.cbar();
    let mut base = Vec::with_capacity(d);
    let mut gradient = Vec::with_capacity(d);
    for k in 0..d {
        let mut b = RMat::zeros(n, n);
        b[(0, k + 1)] = gt * cbar;
        b[(k + 1, 0)] = gt * cbar;
        base.push(b);
        let mut gk = vec![RMat::zeros(n, n); n];
        gk[0][(0, k + 1)] = gt;
        gk[0][(k + 1, 0)] = gt;
        gk[k + 1] = RMat::identity(n, n);
        gradient.push(gk);
    }
    let flux = AffineFluxFamily { base, gradient, flags: StructureFlags::all() };
    let relax = RelaxationBlock::new(RMat::identity(d, d), p.epsilon)?;
    let mut vbar = vec![0.0; n];
    vbar[0] = cbar;
    SystemSpec::new("isentropic-euler", BlockDims::new(1, d, d)?, flux, relax, vbar)
}

/// Two-component system violating the SK condition: `A = diag(1, -1)`,
/// `B = diag(0, 1)`, so `e_1` is an undamped eigenvector.
pub fn sk_counterexample() -> Result<SystemSpec> {
    let base = vec![RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])];
    let flux = AffineFluxFamily::constant(base);
    let relax = RelaxationBlock::new(RMat::identity(1, 1), 1.0)?;
    SystemSpec::new("sk-counterexample", BlockDims::new(1, 1, 1)?, flux, relax, vec![0.0; 2])
}

/// Names of the built-in systems.
pub const BUILTINS: [&str; 3] = ["linearized-euler", "isentropic-euler", "sk-counterexample"];

/// Options for [`random_system`].
#[derive(Debug, Clone, Copy)]
pub struct RandomSystemOptions {
    pub n1: usize,
    pub n2: usize,
    pub d: usize,
    /// Zero out `Abar_11` (the block structure the elliptic check requires).
    pub zero_a11: bool,
    /// Decouple one undamped direction so that SK fails by construction.
    pub break_sk: bool,
    /// Allow a non-symmetric `L2` (coercive symmetric part).
    pub nonsymmetric_l2: bool,
}

fn random_symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize) -> RMat {
    let g = RMat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&g + g.transpose()) * 0.5
}

/// Random constant-coefficient system with symmetric fluxes and coercive
/// `L2`. With `break_sk`, undamped component 0 is decoupled from everything
/// else in every flux matrix (an exact eigenvector lying in `ker B`).
pub fn random_system<R: Rng + ?Sized>(rng: &mut R, opts: RandomSystemOptions) -> Result<SystemSpec> {
    let dims = BlockDims::new(opts.n1, opts.n2, opts.d)?;
    let n = dims.n();
    let mut base = Vec::with_capacity(opts.d);
    for _ in 0..opts.d {
        let mut a = random_symmetric(rng, n);
        if opts.zero_a11 {
            for r in 0..opts.n1 {
                for c in 0..opts.n1 {
                    a[(r, c)] = 0.0;
                }
            }
        }
        if opts.break_sk {
            for j in 1..n {
                a[(0, j)] = 0.0;
                a[(j, 0)] = 0.0;
            }
        }
        base.push(a);
    }
    let g = RMat::from_fn(opts.n2, opts.n2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let spd = &g * g.transpose() + RMat::identity(opts.n2, opts.n2) * (0.2 + rng.random::<f64>());
    let l2 = if opts.nonsymmetric_l2 {
        let s = RMat::from_fn(opts.n2, opts.n2, |_, _| rng.sample::<f64, _>(StandardNormal));
        spd + (&s - s.transpose()) * 0.5
    } else {
        spd
    };
    let mut flux = AffineFluxFamily::constant(base);
    flux.flags = flux.detect_flags(opts.n1);
    let relax = RelaxationBlock::new(l2, 1.0)?;
    SystemSpec::new("random", dims, flux, relax, vec![0.0; n])
}
