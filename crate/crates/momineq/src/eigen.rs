//! Symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! The weight matrices certified here are small (n <= 64) and must certify
//! cleanly when singular positive semidefinite, which rules out Cholesky;
//! Jacobi gives every eigenvalue and an orthonormal eigenvector basis with
//! high relative accuracy on symmetric input.

use crate::real::Real;

/// Eigenvalues in ascending order, paired with unit eigenvectors.
/// `vectors[k]` is the eigenvector for `values[k]`.
pub struct EigenDecomposition<R> {
    pub values: Vec<R>,
    pub vectors: Vec<Vec<R>>,
}

/// Decompose a symmetric matrix given as rows. Panics on ragged input;
/// symmetry is the caller's responsibility (the upper triangle is trusted).
pub fn sym_eigen<R: Real>(matrix: &[Vec<R>]) -> EigenDecomposition<R> {
    let n = matrix.len();
    let mut a: Vec<Vec<R>> = matrix.to_vec();
    for row in &a {
        assert_eq!(row.len(), n, "matrix must be square");
    }
    let mut v: Vec<Vec<R>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { R::one() } else { R::zero() }).collect())
        .collect();

    if n > 0 {
        let eps = R::epsilon();
        let max_sweeps = 64;
        for _sweep in 0..max_sweeps {
            let mut off = R::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[i][j] * a[i][j];
                }
            }
            let mut norm = R::zero();
            for i in 0..n {
                for j in 0..n {
                    norm += a[i][j] * a[i][j];
                }
            }
            if off <= eps * eps * norm || off == R::zero() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[i][i]
            .partial_cmp(&a[j][j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|row| v[row][i]).collect())
        .collect();
    EigenDecomposition { values, vectors }
}

fn rotate<R: Real>(a: &mut [Vec<R>], v: &mut [Vec<R>], p: usize, q: usize) {
    let apq = a[p][q];
    if apq == R::zero() {
        return;
    }
    let app = a[p][p];
    let aqq = a[q][q];
    // threshold: rotation would not change the matrix at working precision
    if apq.abs() <= R::epsilon() * (app.abs() + aqq.abs()) * R::of(0.5e-2) {
        a[p][q] = R::zero();
        a[q][p] = R::zero();
        return;
    }
    let theta = (aqq - app) / (R::two() * apq);
    let t = {
        let s = theta.abs() + (theta * theta + R::one()).sqrt();
        let t = R::one() / s;
        if theta < R::zero() {
            -t
        } else {
            t
        }
    };
    let c = R::one() / (t * t + R::one()).sqrt();
    let s = t * c;
    let tau = s / (R::one() + c);

    a[p][p] = app - t * apq;
    a[q][q] = aqq + t * apq;
    a[p][q] = R::zero();
    a[q][p] = R::zero();
    let n = a.len();
    for k in 0..n {
        if k != p && k != q {
            let akp = a[k][p];
            let akq = a[k][q];
            a[k][p] = akp - s * (akq + tau * akp);
            a[p][k] = a[k][p];
            a[k][q] = akq + s * (akp - tau * akq);
            a[q][k] = a[k][q];
        }
    }
    for row in v.iter_mut() {
        let vp = row[p];
        let vq = row[q];
        row[p] = vp - s * (vq + tau * vp);
        row[q] = vq + s * (vp - tau * vq);
    }
}
