//! Small dense complex helpers for per-bin d×d work.
//!
//! Matrices are row-major `&[Complex64]` slices of length `d * d`; vectors
//! are `&[Complex64]` of length `d`. Anything bigger than a handful of
//! channels goes through nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `a^H b`
#[inline]
pub fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

#[inline]
pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn mat_vec(m: &[Complex64], d: usize, v: &[Complex64]) -> Vec<Complex64> {
    debug_assert_eq!(m.len(), d * d);
    (0..d).map(|i| dot_rows(&m[i * d..(i + 1) * d], v)).collect()
}

#[inline]
fn dot_rows(row: &[Complex64], v: &[Complex64]) -> Complex64 {
    row.iter().zip(v).fold(ZERO, |acc, (x, y)| acc + x * y)
}

/// `w^H M w`; real for Hermitian `M`.
pub fn quad(w: &[Complex64], m: &[Complex64], d: usize) -> Complex64 {
    dot_h(w, &mat_vec(m, d, w))
}

pub fn trace(m: &[Complex64], d: usize) -> Complex64 {
    (0..d).map(|i| m[i * d + i]).sum()
}

/// Accumulate `scale * x x^H` into `m`.
#[inline]
pub fn add_outer(m: &mut [Complex64], x: &[Complex64], scale: f64) {
    let d = x.len();
    for i in 0..d {
        let xi = x[i] * scale;
        let row = &mut m[i * d..(i + 1) * d];
        for (r, xj) in row.iter_mut().zip(x) {
            *r += xi * xj.conj();
        }
    }
}

pub fn to_dmatrix(m: &[Complex64], rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(rows, cols, m)
}

pub fn from_dmatrix(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Solve `M x = b`; `None` when `M` is numerically singular.
pub fn solve(m: &[Complex64], d: usize, b: &[Complex64]) -> Option<Vec<Complex64>> {
    let lu = to_dmatrix(m, d, d).lu();
    let rhs = nalgebra::DVector::from_column_slice(b);
    let x = lu.solve(&rhs)?;
    if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Some(x.iter().copied().collect())
    } else {
        None
    }
}

pub fn inverse(m: &[Complex64], d: usize) -> Option<Vec<Complex64>> {
    to_dmatrix(m, d, d).try_inverse().map(|inv| from_dmatrix(&inv))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &[Complex64], d: usize) -> Vec<f64> {
    let mut mat = to_dmatrix(m, d, d);
    // symmetrize against round-off before the symmetric solver sees it
    let adj = mat.adjoint();
    mat = (mat + adj) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = mat.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Add `eps` to the diagonal in place.
pub fn add_ridge(m: &mut [Complex64], d: usize, eps: f64) {
    for i in 0..d {
        m[i * d + i] += eps;
    }
}
