//! Small dense linear-algebra helpers over real and complex matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// (M + M*) / 2.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues of a Hermitian matrix in ascending order. The input is
/// symmetrised first so round-off asymmetry cannot leak into the solver.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = hermitian_part(m);
    let mut v: Vec<f64> = nalgebra::SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Ascending eigenvalues and matching orthonormal eigenvectors (as columns).
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitian_part(m);
    let eig = nalgebra::SymmetricEigen::new(h);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

pub fn lambda_min(m: &CMat) -> f64 {
    hermitian_eigenvalues(m)[0]
}

pub fn lambda_max(m: &CMat) -> f64 {
    *hermitian_eigenvalues(m).last().expect("non-empty matrix")
}

pub fn real_sym_eigenvalues(m: &RMat) -> Vec<f64> {
    let h = (m + m.transpose()).scale(0.5);
    let mut v: Vec<f64> = nalgebra::SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Eigenvalues of a general complex matrix from a complex Schur form.
pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn spectral_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn spectral_norm_real(m: &RMat) -> f64 {
    spectral_norm(&to_complex(m))
}

/// Matrix exponential (Pade approximant with scaling and squaring).
pub fn expm(m: &CMat) -> CMat {
    m.exp()
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Inverse of a real square matrix, rejecting singular input.
pub fn inverse(m: &RMat) -> Result<RMat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix".into()))
}

pub fn identity_c(n: usize) -> CMat {
    CMat::identity(n, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schur_eigenvalues_of_euler_symbol() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[Complex64::new(0.0, 0.0), I, I, Complex64::new(1.0, 0.0)],
        );
        let mut ev = eigenvalues(&m).unwrap();
        ev.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((ev[0] - Complex64::new(0.5, -(3f64).sqrt() / 2.0)).norm() < 1e-14);
        assert!((ev[1] - Complex64::new(0.5, (3f64).sqrt() / 2.0)).norm() < 1e-14);
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[Complex64::new(2.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0), Complex64::new(3.0, 0.0)],
        );
        let (vals, vecs) = hermitian_eigen(&m);
        let d = CMat::from_diagonal(&DVector::from_iterator(2, vals.iter().map(|&x| Complex64::new(x, 0.0))));
        let back = &vecs * d * vecs.adjoint();
        assert!(max_abs_diff(&back, &m) < 1e-13);
    }
}
