//! Fourier symbols `A(xi) = i sum_k xi_k Abar^k`, `E(xi) = A(xi) + B`, and the
//! tests that decide the Shizuta-Kawashima (SK) condition: Kalman rank,
//! positivity of the observability Gram matrix, absence of undamped
//! eigenvectors, and strict positivity of the spectral abscissa.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, RMat, I};
use crate::system_model::SystemSpec;

/// Real part threshold for the spectral test.
pub const EIG_TOL: f64 = 1e-9;
/// Threshold on `sigma_min(B V)` for the kernel-intersection test.
pub const KERNEL_TOL: f64 = 1e-10;
/// Relative threshold on `lambda_min / lambda_max` of the Gram matrix.
pub const GRAM_TOL: f64 = 1e-12;

/// Unit directions on the sphere: the signed coordinate axes plus a
/// deterministic quasi-uniform set.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionSample {
    pub dim: usize,
    pub directions: Vec<Vec<f64>>,
}

impl DirectionSample {
    /// `2d` axis directions plus `extra` quasi-uniform ones (ignored in 1-D,
    /// where the sphere is `{-1, 1}`).
    pub fn new(dim: usize, extra: usize) -> Self {
        let mut directions = Vec::new();
        for k in 0..dim {
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; dim];
                e[k] = sign;
                directions.push(e);
            }
        }
        match dim {
            2 => {
                for i in 0..extra {
                    let theta = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / extra as f64;
                    directions.push(vec![theta.cos(), theta.sin()]);
                }
            }
            3 => {
                // Fibonacci lattice on the sphere.
                let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                for i in 0..extra {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / extra as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * i as f64;
                    directions.push(vec![r * phi.cos(), r * phi.sin(), z]);
                }
            }
            _ => {}
        }
        Self { dim, directions }
    }

    /// `2d + 64 (d - 1)` directions.
    pub fn default_for(dim: usize) -> Self {
        Self::new(dim, 64 * dim.saturating_sub(1))
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// Symbol matrices at one frequency.
#[derive(Debug, Clone)]
pub struct FrequencySymbol {
    /// Skew-Hermitian convective part `i sum_k xi_k Abar^k`.
    pub a: CMat,
    pub b: CMat,
    pub e: CMat,
}

/// `i sum_k xi_k M^k` for real matrices `M^k`.
pub fn skew_symbol(mats: &[RMat], xi: &[f64]) -> CMat {
    let n = mats[0].nrows();
    let mut s = RMat::zeros(n, n);
    for (m, &x) in mats.iter().zip(xi) {
        s += m * x;
    }
    linalg::to_complex(&s) * I
}

pub fn symbol_at(spec: &SystemSpec, xi: &[f64]) -> FrequencySymbol {
    let a = skew_symbol(&spec.flux.base, xi);
    let b = linalg::to_complex(&spec.b_matrix());
    let e = &a + &b;
    FrequencySymbol { a, b, e }
}

/// Normalized pair `(A_omega, kappa B)` used by the Lyapunov construction.
pub fn direction_pair(spec: &SystemSpec, omega: &[f64]) -> Result<(CMat, CMat)> {
    let kappa = spec.relax.kappa()?;
    let a = skew_symbol(&spec.flux.base, omega);
    let b = linalg::to_complex(&spec.b_matrix()) * Complex64::new(kappa, 0.0);
    Ok((a, b))
}

/// Stacked matrix `(B; BA; ...; BA^{n-1})`.
pub fn kalman_matrix(a: &CMat, b: &CMat) -> CMat {
    let n = a.nrows();
    let mut k = CMat::zeros(n * n, n);
    let mut block = b.clone();
    for l in 0..n {
        k.view_mut((l * n, 0), (n, n)).copy_from(&block);
        block = &block * a;
    }
    k
}

/// Result of a numerical rank computation.
#[derive(Debug, Clone, Serialize)]
pub struct KalmanRank {
    pub rank: usize,
    /// Smallest singular value counted in the rank (0 if rank is 0).
    pub smallest_retained: f64,
    pub singular_values: Vec<f64>,
}

/// Rank of the Kalman matrix. Both matrices are first scaled to unit
/// spectral norm (the rank is invariant under such scaling) so that the
/// powers of `A` do not swamp the lower blocks; the threshold is
/// `n * eps * sigma_max`.
pub fn kalman_rank(a: &CMat, b: &CMat) -> KalmanRank {
    let n = a.nrows();
    let scale = |m: &CMat| {
        let s = linalg::spectral_norm(m);
        if s > 0.0 { m.unscale(s) } else { m.clone() }
    };
    let k = kalman_matrix(&scale(a), &scale(b));
    let sv = linalg::singular_values(&k);
    let smax = sv.first().copied().unwrap_or(0.0);
    let thresh = n as f64 * f64::EPSILON * smax;
    let rank = sv.iter().filter(|&&s| s > thresh && s > 0.0).count();
    let smallest_retained = if rank > 0 { sv[rank - 1] } else { 0.0 };
    KalmanRank { rank, smallest_retained, singular_values: sv }
}

/// Per-direction outcome of the SK check.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionResult {
    pub omega: Vec<f64>,
    pub rank: usize,
    pub smallest_singular_value: f64,
}

/// An eigenvector of `A_omega` lying in `ker B`.
#[derive(Debug, Clone, Serialize)]
pub struct SkWitness {
    pub omega: Vec<f64>,
    /// Real and imaginary parts of the eigenvector.
    pub eigenvector: Vec<(f64, f64)>,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkVerdict {
    pub holds: bool,
    pub directions: Vec<DirectionResult>,
    pub witness: Option<SkWitness>,
    /// Verdicts are based on a finite direction sample.
    pub sampling_note: String,
}

/// Decides SK on every sampled direction (homogeneity reduces `xi != 0`
/// to the unit sphere).
pub fn sk_condition(spec: &SystemSpec, sample: &DirectionSample) -> Result<SkVerdict> {
    if sample.is_empty() {
        return Err(Error::InsufficientData("empty direction sample".into()));
    }
    let n = spec.n();
    let b = linalg::to_complex(&spec.b_matrix());
    let directions: Vec<DirectionResult> = sample
        .directions
        .par_iter()
        .map(|omega| {
            let a = skew_symbol(&spec.flux.base, omega);
            let r = kalman_rank(&a, &b);
            DirectionResult { omega: omega.clone(), rank: r.rank, smallest_singular_value: r.smallest_retained }
        })
        .collect();
    let holds = directions.iter().all(|d| d.rank == n);
    let witness = directions
        .iter()
        .find(|d| d.rank < n)
        .and_then(|d| undamped_eigenvector(&skew_symbol(&spec.flux.base, &d.omega), &b).map(|(v, res)| SkWitness {
            omega: d.omega.clone(),
            eigenvector: v.iter().map(|c| (c.re, c.im)).collect(),
            residual: res,
        }));
    Ok(SkVerdict {
        holds,
        directions,
        witness,
        sampling_note: format!(
            "verdict decided on {} sampled directions; directions between samples are not checked",
            sample.len()
        ),
    })
}

/// Clusters of (numerically) equal eigenvalues of the Hermitian matrix
/// `-i A`, each returned as an orthonormal basis of the eigenspace.
fn eigenspaces(a: &CMat) -> Vec<CMat> {
    let h = a * Complex64::new(0.0, -1.0);
    let (vals, vecs) = linalg::hermitian_eigen(&h);
    let scale = vals.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let mut spaces = Vec::new();
    let mut start = 0;
    for i in 1..=vals.len() {
        if i == vals.len() || (vals[i] - vals[i - 1]).abs() > 1e-8 * scale {
            spaces.push(vecs.columns(start, i - start).into_owned());
            start = i;
        }
    }
    spaces
}

/// Smallest `|B v|` over unit vectors `v` inside any eigenspace of `A`,
/// with the minimizing vector.
fn undamped_eigenvector(a: &CMat, b: &CMat) -> Option<(CVec, f64)> {
    let bscale = linalg::spectral_norm(b).max(f64::MIN_POSITIVE);
    let mut best: Option<(CVec, f64)> = None;
    for v in eigenspaces(a) {
        let bv = b * &v;
        let svd = bv.svd(false, true);
        let (idx, smin) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let vt = svd.v_t.expect("requested right singular vectors");
        let coeffs = vt.row(idx).adjoint();
        let vec = &v * coeffs;
        let rel = smin / bscale;
        if best.as_ref().is_none_or(|(_, r)| rel < *r) {
            best = Some((vec, rel));
        }
    }
    best.filter(|(_, r)| *r <= KERNEL_TOL)
}

/// The four equivalent SK tests evaluated independently.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    /// `lambda_min` of `sum_l (B A^l)^* (B A^l)` relative to its `lambda_max`.
    pub gram_ratio: f64,
    pub positivity: bool,
    pub kalman_rank: usize,
    pub kalman: bool,
    /// Smallest `|B v| / |B|` over unit vectors in eigenspaces of `A`.
    pub kernel_distance: f64,
    pub no_undamped_eigenvector: bool,
    pub abscissa: f64,
    pub spectral_gap: bool,
    pub agree: bool,
}

/// Evaluates positivity of the Gram form, the Kalman rank, the eigenvector
/// test and the sign of the spectral abscissa of `A + B`.
pub fn check_structural_equivalences(a: &CMat, b: &CMat) -> Result<EquivalenceReport> {
    let n = a.nrows();
    if a.shape() != b.shape() || n != a.ncols() {
        return Err(Error::Dimension("A and B must be square of equal size".into()));
    }
    let skew = linalg::max_abs_diff(&(a + a.adjoint()), &CMat::zeros(n, n));
    if skew > 1e-12 * linalg::spectral_norm(a).max(1.0) {
        return Err(Error::InvalidSystem(format!("A is not skew-Hermitian (residual {skew:.2e})")));
    }

    // Gram positivity on the unit sphere: the infimum is lambda_min.
    let scale = |m: &CMat| {
        let s = linalg::spectral_norm(m);
        if s > 0.0 { m.unscale(s) } else { m.clone() }
    };
    let k = kalman_matrix(&scale(a), &scale(b));
    let gram = k.adjoint() * &k;
    let ev = linalg::hermitian_eigenvalues(&gram);
    let gram_ratio = ev[0] / ev[n - 1].max(f64::MIN_POSITIVE);
    let positivity = gram_ratio > GRAM_TOL;

    let kr = kalman_rank(a, b);
    let kalman = kr.rank == n;

    let bscale = linalg::spectral_norm(b).max(f64::MIN_POSITIVE);
    let kernel_distance = eigenspaces(a)
        .iter()
        .map(|v| {
            let sv = linalg::singular_values(&(b * v));
            sv.last().copied().unwrap_or(0.0) / bscale
        })
        .fold(f64::INFINITY, f64::min);
    let no_undamped_eigenvector = kernel_distance > KERNEL_TOL;

    let eig = linalg::eigenvalues(&(a + b))?;
    let abscissa = eig.iter().map(|l| l.re).fold(f64::INFINITY, f64::min);
    let spectral_gap = abscissa > EIG_TOL;

    let agree = positivity == kalman && kalman == no_undamped_eigenvector && no_undamped_eigenvector == spectral_gap;
    Ok(EquivalenceReport {
        gram_ratio,
        positivity,
        kalman_rank: kr.rank,
        kalman,
        kernel_distance,
        no_undamped_eigenvector,
        abscissa,
        spectral_gap,
        agree,
    })
}

/// Smallest real part among the eigenvalues of `E(xi)`, with the spectrum.
pub fn spectral_abscissa(spec: &SystemSpec, xi: &[f64]) -> Result<(f64, Vec<Complex64>)> {
    let sym = symbol_at(spec, xi);
    let eig = linalg::eigenvalues(&sym.e)?;
    let abscissa = eig.iter().map(|l| l.re).fold(f64::INFINITY, f64::min);
    Ok((abscissa, eig))
}

/// Closed-form eigenvalues `(lambda_plus, lambda_minus)` of the 1-D damped
/// Euler symbol `[[0, i xi], [i xi, 1/eps]]`.
///
/// On the real branch `lambda_minus` is evaluated as `xi^2 / lambda_plus`
/// (the determinant), which avoids cancellation as `xi -> 0`.
pub fn euler_dispersion(xi: f64, epsilon: f64) -> (Complex64, Complex64) {
    let half = 1.0 / (2.0 * epsilon);
    let disc = 1.0 - (2.0 * epsilon * xi).powi(2);
    if disc >= 0.0 {
        let plus = half * (1.0 + disc.sqrt());
        let minus = xi * xi / plus;
        (Complex64::new(plus, 0.0), Complex64::new(minus, 0.0))
    } else {
        let s = (-disc).sqrt();
        (Complex64::new(half, half * s), Complex64::new(half, -half * s))
    }
}

/// Minimum over sampled directions of `lambda_min` of the Hermitian part of
/// `A12(omega) L2^{-1} A21(omega)`.
#[derive(Debug, Clone, Serialize)]
pub struct EllipticReport {
    pub lambda_min: f64,
    pub per_direction: Vec<f64>,
    /// Positivity of the reduced operator, equivalent to SK for this block structure.
    pub sk_holds: bool,
}

pub fn elliptic_block_check(spec: &SystemSpec, sample: &DirectionSample) -> Result<EllipticReport> {
    let n1 = spec.dims.n1;
    let n2 = spec.dims.n2;
    for (k, a) in spec.flux.base.iter().enumerate() {
        if a.view((0, 0), (n1, n1)).iter().any(|&x| x != 0.0) {
            return Err(Error::InvalidSystem(format!("Abar^{k}_11 is not zero")));
        }
    }
    let linv = linalg::inverse(&spec.relax.effective())?;
    let per_direction: Vec<f64> = sample
        .directions
        .iter()
        .map(|omega| {
            let mut a12 = RMat::zeros(n1, n2);
            let mut a21 = RMat::zeros(n2, n1);
            for (a, &w) in spec.flux.base.iter().zip(omega) {
                a12 += a.view((0, n1), (n1, n2)) * w;
                a21 += a.view((n1, 0), (n2, n1)) * w;
            }
            let m = &a12 * &linv * &a21;
            linalg::real_sym_eigenvalues(&m)[0]
        })
        .collect();
    let lambda_min = per_direction.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = spec.flux.base.iter().map(|a| a.norm()).fold(0.0, f64::max).powi(2) * linv.norm();
    Ok(EllipticReport { lambda_min, per_direction, sk_holds: lambda_min > 1e-12 * scale.max(1.0) })
}
