//! Dense linear-algebra helpers shared by the lifting, regret and conic code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m.clone(), EIG_EPS, EIG_MAX_ITER).ok_or(Error::EigenFailure)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = symmetric_eigen(m)?;
    Ok(eig.eigenvalues.min())
}

/// Largest eigenvalue and a unit eigenvector of a symmetric matrix.
///
/// The eigenvector is sign-normalized so that its first component with
/// magnitude above `1e-12` is positive.
pub fn top_eigenpair(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = m.nrows();
    if n == 0 {
        return Err(Error::Invalid("empty matrix has no eigenpair".into()));
    }
    let eig = symmetric_eigen(m)?;
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let mut v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    normalize_sign(&mut v);
    Ok((eig.eigenvalues[idx], v))
}

/// Flip `v` so that its first non-negligible component is positive.
pub fn normalize_sign(v: &mut DVector<f64>) {
    if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Symmetric square root of a symmetric PSD matrix.
///
/// Eigenvalues down to `-clip_tol` (relative to the largest magnitude) are
/// clipped to zero; anything more negative is rejected.
pub fn psd_sqrt(m: &DMatrix<f64>, clip_tol: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = symmetric_eigen(&symmetrize(m))?;
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut diag = DVector::zeros(n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < -clip_tol * scale {
            return Err(Error::Invalid(format!(
                "matrix is not positive semidefinite (eigenvalue {l:.3e})"
            )));
        }
        diag[i] = l.max(0.0).sqrt();
    }
    let v = &eig.eigenvectors;
    Ok(symmetrize(&(v * DMatrix::from_diagonal(&diag) * v.transpose())))
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * scale))
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Length of the symmetric vectorization of a `d × d` matrix.
pub const fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Matrix order `d` with `svec_len(d) == len`, if any.
pub fn svec_order(len: usize) -> Option<usize> {
    let d = (((8 * len + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    (d..=d + 1).find(|&k| svec_len(k) == len)
}

/// Lower triangle, column-major, off-diagonal entries scaled by √2, so that
/// `svec(a)·svec(b) = tr(ab)` for symmetric `a`, `b`.
pub fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let d = m.nrows();
    let mut out = DVector::zeros(svec_len(d));
    svec_into(m, out.as_mut_slice());
    out
}

pub fn svec_into(m: &DMatrix<f64>, out: &mut [f64]) {
    let d = m.nrows();
    let s2 = std::f64::consts::SQRT_2;
    let mut k = 0;
    for j in 0..d {
        out[k] = m[(j, j)];
        k += 1;
        for i in j + 1..d {
            out[k] = s2 * 0.5 * (m[(i, j)] + m[(j, i)]);
            k += 1;
        }
    }
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d, d);
    let inv_s2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut k = 0;
    for j in 0..d {
        out[(j, j)] = v[k];
        k += 1;
        for i in j + 1..d {
            let x = v[k] * inv_s2;
            out[(i, j)] = x;
            out[(j, i)] = x;
            k += 1;
        }
    }
    out
}

/// `out += aᵀ a` through a blocked GEMM kernel.
pub fn gram_add(a: &DMatrix<f64>, out: &mut DMatrix<f64>) {
    let (k, n) = a.shape();
    assert_eq!(out.shape(), (n, n));
    if k == 0 || n == 0 {
        return;
    }
    // SAFETY: both operands are contiguous column-major buffers whose shapes
    // match the strides passed to the kernel; `out` does not alias `a`.
    unsafe {
        matrixmultiply::dgemm(
            n,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            a.as_ptr(),
            1,
            k as isize,
            1.0,
            out.as_mut_ptr(),
            1,
            n as isize,
        );
    }
}

/// Nested row-major arrays, the on-disk representation for dense matrices.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Invalid("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Serde adapter storing a `DMatrix` as nested row-major arrays.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_preserves_trace_inner_product() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, -1.0, 1.0, 3.0, 0.5, -1.0, 0.5, 1.0]);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 0.0, -2.0, 0.0, 4.0, 0.0, 4.0, -1.0]);
        let lhs = svec(&a).dot(&svec(&b));
        let rhs = (&a * &b).trace();
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(max_abs(&(smat(svec(&a).as_slice(), 3) - &a)) < 1e-15);
        assert_eq!(svec_order(6), Some(3));
        assert_eq!(svec_order(7), None);
    }

    #[test]
    fn gram_matches_naive_product() {
        let a = DMatrix::from_fn(7, 4, |i, j| (i as f64 + 1.0) * 0.3 - j as f64);
        let mut g = DMatrix::identity(4, 4);
        gram_add(&a, &mut g);
        let expected = a.transpose() * &a + DMatrix::identity(4, 4);
        assert!(max_abs(&(g - expected)) < 1e-12);
    }

    #[test]
    fn top_eigenpair_sign_convention() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let (l, v) = top_eigenpair(&m).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - s).abs() < 1e-12 && (v[1] - s).abs() < 1e-12);
    }

    #[test]
    fn psd_sqrt_clips_rounding_noise() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, -1e-12]);
        let r = psd_sqrt(&m, 1e-9).unwrap();
        assert!((r[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(r[(1, 1)].abs() < 1e-12);
        assert!(psd_sqrt(&DMatrix::from_row_slice(1, 1, &[-1.0]), 1e-9).is_err());
    }
}
