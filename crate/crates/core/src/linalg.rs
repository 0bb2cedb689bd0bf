//! Small dense linear-algebra helpers shared by the solver and the influence
//! computations. Matrices are `nalgebra::DMatrix<f64>`, which is column-major,
//! so `vec` is simply the storage order.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Column-stacking vectorisation.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`] for a square `p x p` matrix.
pub fn mat_of(v: &DVector<f64>, p: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), p * p, "vector length is not p^2");
    DMatrix::from_column_slice(p, p, v.as_slice())
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    let inv = chol.inverse();
    Ok(symmetrize(&inv))
}

/// Log-determinant of a symmetric positive definite matrix.
pub fn spd_logdet(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Eigenvalues and eigenvectors of a symmetric matrix, sorted by decreasing
/// eigenvalue. Columns of the returned matrix are the eigenvectors.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = symmetrize(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).clone_owned();
        // fix the sign so the largest-magnitude component is positive
        let lead = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(dst, &v);
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// 2-norm condition number of a symmetric matrix.
pub fn sym_condition(m: &DMatrix<f64>) -> f64 {
    let ev = symmetrize(m).symmetric_eigenvalues();
    let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x.abs()), hi.max(x.abs())));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}
