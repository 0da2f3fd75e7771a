//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Complex, DMatrix, DVector};

pub type CMatrix = DMatrix<Complex<f64>>;

/// Largest absolute difference between a matrix and its transpose.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn symmetrized(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    symmetrize(&mut out);
    out
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrized(a)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(f64::INFINITY)
}

/// Symmetric eigendecomposition with eigenpairs sorted by ascending eigenvalue.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = symmetrized(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn herm_eigenvalues(a: &CMatrix) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let h = hermitian_part(a);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Spectral norm of a Hermitian matrix (largest eigenvalue magnitude).
pub fn herm_spectral_norm(a: &CMatrix) -> f64 {
    herm_eigenvalues(a)
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Log-determinant of a symmetric positive definite matrix, `None` when the
/// Cholesky factorization fails.
pub fn log_det_pd(a: &DMatrix<f64>) -> Option<f64> {
    if a.nrows() == 0 {
        return Some(0.0);
    }
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    Some(2.0 * (0..a.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// Log-determinant of a Hermitian positive definite matrix.
pub fn log_det_hpd(a: &CMatrix) -> Option<f64> {
    if a.nrows() == 0 {
        return Some(0.0);
    }
    let chol = hermitian_part(a).cholesky()?;
    let l = chol.l_dirty();
    Some(2.0 * (0..a.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

/// Square root of a symmetric positive semidefinite matrix; negative
/// eigenvalues are clipped to zero.
pub fn sym_sqrt_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_sorted(a);
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0).sqrt()));
    &vecs * DMatrix::from_diagonal(&d) * vecs.transpose()
}

pub fn to_complex(a: &DMatrix<f64>) -> CMatrix {
    a.map(|v| Complex::new(v, 0.0))
}

/// Frobenius inner product `tr(A Bᵀ)`.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Largest entry modulus of a complex matrix.
pub fn cmax_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0f64, |acc, v| acc.max(v.norm()))
}

/// Numerical rank via singular values above `rel_tol * σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.iter().fold(0.0f64, |acc, v| acc.max(*v));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * smax).count()
}

/// Block-diagonal matrix `[W 0; 0 0]` of total size `dim`.
pub fn embed_top_left(w: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dim, dim);
    out.view_mut((0, 0), (w.nrows(), w.ncols())).copy_from(w);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_det_matches_eigenvalues() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let ev = sym_eigenvalues(&a);
        let expected: f64 = ev.iter().map(|v| v.ln()).sum();
        assert!((log_det_pd(&a).unwrap() - expected).abs() < 1e-14);
        assert!(log_det_pd(&(-a)).is_none());
    }

    #[test]
    fn sqrt_squares_back() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let r = sym_sqrt_psd(&a);
        assert!((&r * &r - &a).abs().max() < 1e-12);
    }

    #[test]
    fn hermitian_eigs_of_rotation_generator() {
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex::new(0.0, 0.0),
                Complex::new(0.0, -1.0),
                Complex::new(0.0, 1.0),
                Complex::new(0.0, 0.0),
            ],
        );
        let ev = herm_eigenvalues(&a);
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }
}
