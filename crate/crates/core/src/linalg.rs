//! Dense complex linear algebra helpers shared by the oracle paths.
//!
//! Everything here works on `nalgebra` dynamic matrices of `Complex64`. These
//! routines are only ever used at desk scale (dimension ≤ 2^12), mostly by the
//! exact-diagonalization oracle and by dense cross-checks in tests.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as the columns of a
/// unitary matrix, ordered to match the eigenvalues.
pub fn hermitian_eig(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    assert_eq!(m.nrows(), m.ncols(), "hermitian_eig needs a square matrix");
    let se = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &se.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// `exp(i s H)` for Hermitian `H`, via eigendecomposition.
pub fn hermitian_exp(h: &CMatrix, s: f64) -> CMatrix {
    let (vals, vecs) = hermitian_eig(h);
    let phases = CVector::from_iterator(
        vals.len(),
        vals.iter().map(|&l| Complex64::from_polar(1.0, s * l)),
    );
    &vecs * CMatrix::from_diagonal(&phases) * vecs.adjoint()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Completes a unit-norm first column into a full unitary via a Householder
/// reflection: returns `U` with `U e_0 = col`.
pub fn unitary_from_first_column(col: &CVector) -> CMatrix {
    let n = col.len();
    assert!((col.norm() - 1.0).abs() < 1e-9, "first column must be unit norm");
    // v = col - alpha e0 with alpha = -exp(i arg(col[0])) keeps v well conditioned;
    // the reflector H = I - 2 v v^† / |v|^2 then sends col -> alpha e0.
    let alpha = if col[0].norm() < 1e-14 {
        Complex64::new(-1.0, 0.0)
    } else {
        -col[0] / col[0].norm()
    };
    let mut v = col.clone();
    v[0] -= alpha;
    let mut h = CMatrix::identity(n, n);
    let vnorm2 = v.norm_squared();
    if vnorm2 > 1e-28 {
        h -= (&v * v.adjoint()).scale(2.0 / vnorm2);
    }
    // H is Hermitian, so H (alpha e0) = col; absorb alpha into the first column.
    for i in 0..n {
        let hi0 = h[(i, 0)];
        h[(i, 0)] = hi0 * alpha;
    }
    h
}

/// Frobenius distance between two matrices.
pub fn frob_dist(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn hermitian_eig_small_known() {
        // Pauli Y has eigenvalues ±1.
        let y = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]);
        let (vals, vecs) = hermitian_eig(&y);
        assert!((vals[0] + 1.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        for k in 0..2 {
            let v = vecs.column(k).clone_owned();
            let r = &y * &v - v.scale(vals[k]);
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn hermitian_eig_random_residual() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let n = 24;
        let mut a = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
        }
        let h = (&a + a.adjoint()).scale(0.5);
        let (vals, vecs) = hermitian_eig(&h);
        for k in 1..n {
            assert!(vals[k] >= vals[k - 1]);
        }
        for k in 0..n {
            let v = vecs.column(k).clone_owned();
            let r = &h * &v - v.scale(vals[k]);
            assert!(r.norm() < 1e-10, "residual {} at {}", r.norm(), k);
        }
        // Eigenvector matrix is unitary.
        let id = vecs.adjoint() * &vecs;
        assert!(frob_dist(&id, &CMatrix::identity(n, n)) < 1e-10);
    }

    #[test]
    fn exp_of_z_is_phase() {
        let z = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]);
        let u = hermitian_exp(&z, 0.3);
        assert!((u[(0, 0)] - Complex64::from_polar(1.0, 0.3)).norm() < 1e-12);
        assert!((u[(1, 1)] - Complex64::from_polar(1.0, -0.3)).norm() < 1e-12);
    }

    #[test]
    fn householder_completion_is_unitary() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for n in [2usize, 4, 8] {
            let mut v = CVector::from_iterator(
                n,
                (0..n).map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)),
            );
            let nv = v.norm();
            v.scale_mut(1.0 / nv);
            let u = unitary_from_first_column(&v);
            assert!(frob_dist(&(u.adjoint() * &u), &CMatrix::identity(n, n)) < 1e-10);
            let first = u.column(0).clone_owned();
            assert!((&first - &v).norm() < 1e-10, "first column mismatch");
        }
    }
}
