//! Small helpers for complex Hermitian matrix work shared across the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn cplx(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Frobenius norm.
pub fn frob(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Real part of the trace.
pub fn trace_re(m: &CMat) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

/// Re tr(a b); real-valued inner product when both arguments are Hermitian.
pub fn inner_trace(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

pub fn is_hermitian(m: &CMat, rel_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = frob(m).max(f64::MIN_POSITIVE);
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let d = m[(i, j)] - m[(j, i)].conj();
            dev += d.norm_sqr();
        }
    }
    dev.sqrt() <= rel_tol * scale
}

/// (m + m^H)/2 — removes the skew-Hermitian rounding drift.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * cplx(0.5, 0.0)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted ascending.
/// Returns (eigenvalues, eigenvectors as columns).
pub fn hermitian_eigen(m: &CMat) -> (DVector<f64>, CMat) {
    let se = hermitian_part(m).symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &se.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Largest eigenvalue and a unit eigenvector of a Hermitian matrix.
pub fn dominant_eigpair(m: &CMat) -> (f64, CVec) {
    let (vals, vecs) = hermitian_eigen(m);
    let last = vals.len() - 1;
    (vals[last], vecs.column(last).into_owned())
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn hpd_inverse(m: &CMat) -> Result<CMat> {
    nalgebra::Cholesky::new(m.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Domain("matrix is not positive definite".into()))
}

/// log det of a Hermitian positive definite matrix; None if not PD.
pub fn hpd_log_det(m: &CMat) -> Option<f64> {
    let chol = nalgebra::Cholesky::new(m.clone())?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)].re;
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

/// Orthonormal basis of the real vector space of n-by-n Hermitian matrices
/// under the inner product Re tr(XY); dimension n^2.
pub fn hermitian_basis(n: usize) -> Vec<CMat> {
    let mut basis = Vec::with_capacity(n * n);
    for i in 0..n {
        let mut b = CMat::zeros(n, n);
        b[(i, i)] = cplx(1.0, 0.0);
        basis.push(b);
    }
    let inv_sqrt2 = 0.5_f64.sqrt();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut re = CMat::zeros(n, n);
            re[(i, j)] = cplx(inv_sqrt2, 0.0);
            re[(j, i)] = cplx(inv_sqrt2, 0.0);
            basis.push(re);
            let mut im = CMat::zeros(n, n);
            im[(i, j)] = cplx(0.0, inv_sqrt2);
            im[(j, i)] = cplx(0.0, -inv_sqrt2);
            basis.push(im);
        }
    }
    basis
}
