//! Symmetric eigendecomposition with a verified fallback.
//!
//! nalgebra's QR-based `symmetric_eigen` occasionally returns a wrong
//! eigenpair on matrices with a wide eigenvalue spread (reconstruction
//! error up to ~1e-4 on a few percent of random SPD inputs). Every result
//! is therefore residual-checked, falling back to cyclic Jacobi — slower
//! but backward stable — when the fast path misses.

use nalgebra::{DMatrix, DVector};

const RESIDUAL_RTOL: f64 = 1e-11;

/// Eigendecomposition A = V·diag(values)·Vᵀ of a symmetric matrix.
/// Eigenvalues come back unordered.
pub fn sym_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::identity(0, 0));
    }
    if n == 1 {
        return (
            DVector::from_element(1, a[(0, 0)]),
            DMatrix::identity(1, 1),
        );
    }
    let eig = a.clone().symmetric_eigen();
    let recon = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues)
        * eig.eigenvectors.transpose();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    if (recon - a).norm() <= RESIDUAL_RTOL * scale {
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        jacobi_eigen(a)
    }
}

/// Cyclic Jacobi eigenvalue iteration.
fn jacobi_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::identity(n, n);
    let tol = 1e-14 * a.norm().max(f64::MIN_POSITIVE);

    for _sweep in 0..60 {
        let mut max_off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                max_off = max_off.max(m[(p, q)].abs());
            }
        }
        if max_off <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol {
                    continue;
                }
                let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (m.diagonal(), v)
}
