//! Hermitian eigendecomposition helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{domain, Error, Result};

/// Eigenpairs of a Hermitian matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: DMatrix<Complex64>,
}

/// Full eigendecomposition of a Hermitian matrix.
pub fn hermitian_eigen(r: &DMatrix<Complex64>) -> Result<HermitianEigen> {
    if !r.is_square() {
        return Err(domain(format!("matrix is {}x{}, not square", r.nrows(), r.ncols())));
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(domain("matrix has non-finite entries"));
    }
    let eig = SymmetricEigen::new(r.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(r.nrows(), order.len(), |row, col| {
        eig.eigenvectors[(row, order[col])]
    });
    Ok(HermitianEigen { values, vectors })
}

/// Largest eigenvalue and its unit eigenvector.
///
/// The eigenvector phase is fixed by making its first entry of non-negligible
/// magnitude real and positive.
///
/// Power iteration is tried first; it is accepted once the eigen-residual
/// falls below `1e-13 * λ` and `λ` is at least the largest diagonal entry
/// (a lower bound on the top eigenvalue). Otherwise the full decomposition
/// is used.
pub fn dominant_eigenpair(r: &DMatrix<Complex64>) -> Result<(f64, DVector<Complex64>)> {
    if !r.is_square() {
        return Err(domain(format!("matrix is {}x{}, not square", r.nrows(), r.ncols())));
    }
    let scale = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Degenerate("zero covariance matrix".into()));
    }
    let (lambda, mut v) = match power_iteration(r, POWER_MAX_ITERS) {
        Some(pair) => pair,
        None => {
            let eig = hermitian_eigen(r)?;
            (eig.values[0], eig.vectors.column(0).into_owned())
        }
    };
    if lambda <= 0.0 {
        return Err(Error::Degenerate(format!(
            "largest eigenvalue {lambda:e} is not positive"
        )));
    }
    normalize_phase(&mut v);
    Ok((lambda, v))
}

const POWER_MAX_ITERS: usize = 300;
const POWER_RTOL: f64 = 1e-13;

fn power_iteration(r: &DMatrix<Complex64>, max_iters: usize) -> Option<(f64, DVector<Complex64>)> {
    let n = r.nrows();
    let max_diag = (0..n).map(|i| r[(i, i)].re).fold(f64::NEG_INFINITY, f64::max);
    if !max_diag.is_finite() || max_diag <= 0.0 {
        return None;
    }
    // quasi-random unit-modulus start, unlikely to be orthogonal to the
    // dominant eigenvector of structured (DFT-aligned) matrices
    let start = DVector::from_fn(n, |i, _| {
        let x = i as f64;
        Complex64::cis(2.0 * std::f64::consts::PI * (x * 0.618_033_988_749_895 + x * x * 0.414_213_562_373_095).fract())
    });
    let mut v = r * start;
    let norm = v.norm();
    if norm == 0.0 {
        return None;
    }
    v /= Complex64::new(norm, 0.0);
    for _ in 0..max_iters {
        let rv = r * &v;
        let lambda = v.dotc(&rv).re;
        let residual = (&rv - &v * Complex64::new(lambda, 0.0)).norm();
        if lambda > 0.0 && residual <= POWER_RTOL * lambda {
            return (lambda >= max_diag * (1.0 - 1e-12)).then_some((lambda, v));
        }
        let norm = rv.norm();
        if norm == 0.0 {
            return None;
        }
        v = rv / Complex64::new(norm, 0.0);
    }
    None
}

/// Rotates `v` so that its first entry above `1e-9 * max|v_i|` is real positive,
/// and rescales it to unit norm.
pub fn normalize_phase(v: &mut DVector<Complex64>) {
    let peak = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return;
    }
    if let Some(anchor) = v.iter().find(|z| z.norm() > 1e-9 * peak).copied() {
        let rot = anchor.conj() / anchor.norm();
        v.iter_mut().for_each(|z| *z *= rot);
    }
    let norm = v.norm();
    v.iter_mut().for_each(|z| *z /= norm);
}

fn split(a: &DMatrix<Complex64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

/// Complex product `A B` through four real products, which use the
/// optimised real GEMM kernel.
pub fn matmul(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    assert_eq!(a.ncols(), b.nrows(), "matmul dimension mismatch");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, Complex64::new)
}

/// Gram matrix `A^H A`.
pub fn gram(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (ar, ai) = split(a);
    let re = ar.tr_mul(&ar) + ai.tr_mul(&ai);
    let im = ar.tr_mul(&ai) - ai.tr_mul(&ar);
    re.zip_map(&im, Complex64::new)
}

/// `x^H A x` for Hermitian `A`, returned as a real number.
pub fn quadratic_form(a: &DMatrix<Complex64>, x: &DVector<Complex64>) -> f64 {
    x.dotc(&(a * x)).re
}

/// `(A + A^H) / 2`.
pub fn hermitian_part(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}
