//! Exact eigendecomposition-based maps between the SPD manifold and its
//! Log-Euclidean vector representation.
//!
//! Covariance matrices live on the cone of symmetric positive-definite
//! matrices. Applying the matrix logarithm flattens that cone onto the vector
//! space of symmetric matrices, where ordinary Euclidean modeling applies;
//! the matrix exponential maps back. `vec_upper`/`unvec_upper` move between
//! a symmetric matrix and its length q = p(p+1)/2 upper-triangle vector.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for symmetry checks.
pub const SYMMETRY_RTOL: f64 = 1e-12;

/// A symmetric p×p matrix. Construction symmetrizes the entries after
/// verifying the asymmetry stays within [`SYMMETRY_RTOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    entries: DMatrix<f64>,
}

/// A symmetric positive-definite matrix. Symmetry is verified on
/// construction; strict positivity of the spectrum is enforced by
/// [`matrix_log`], which is the point where it matters.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
}

/// The vectorized upper triangle of a symmetric matrix, length q = p(p+1)/2.
#[derive(Debug, Clone, PartialEq)]
pub struct LogCovVector {
    values: DVector<f64>,
    matrix_dim: usize,
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimMismatch {
            left: m.nrows(),
            right: m.ncols(),
        });
    }
    let scale = m.amax().max(1.0);
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_RTOL * scale {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    Ok(())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

impl SymMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&entries)?;
        Ok(Self {
            entries: symmetrize(&entries),
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }
}

impl SpdMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&entries)?;
        Ok(Self {
            entries: symmetrize(&entries),
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    /// Smallest eigenvalue; used by tests and callers validating the SPD
    /// invariant without paying for a full log map.
    pub fn min_eigenvalue(&self) -> f64 {
        crate::linalg::sym_eigen(&self.entries).0.min()
    }
}

/// Matrix logarithm of an SPD matrix via symmetric eigendecomposition.
///
/// Fails with `NotPositiveDefinite` when any eigenvalue is ≤ 0; no clamping
/// is applied here, regularization is the caller's job.
pub fn matrix_log(m: &SpdMatrix) -> Result<SymMatrix> {
    let (values, vectors) = crate::linalg::sym_eigen(&m.entries);
    let min = values.min();
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
        });
    }
    let log_vals = values.map(f64::ln);
    let recomposed = &vectors * DMatrix::from_diagonal(&log_vals) * vectors.transpose();
    Ok(SymMatrix {
        entries: symmetrize(&recomposed),
    })
}

/// Matrix exponential of a symmetric matrix; the result is always SPD.
pub fn matrix_exp(m: &SymMatrix) -> SpdMatrix {
    let (values, vectors) = crate::linalg::sym_eigen(&m.entries);
    let exp_vals = values.map(f64::exp);
    let recomposed = &vectors * DMatrix::from_diagonal(&exp_vals) * vectors.transpose();
    SpdMatrix {
        entries: symmetrize(&recomposed),
    }
}

/// Dimension q = p(p+1)/2 of the upper-triangle vector for a p×p matrix.
pub fn triangular_len(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Invert q = p(p+1)/2, returning p when q is a triangular number.
pub fn matrix_dim_for(q: usize) -> Option<usize> {
    let p = ((((8 * q + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (triangular_len(p) == q && p >= 1).then_some(p)
}

/// Row-major upper-triangle vectorization:
/// (0,0),(0,1),…,(0,p−1),(1,1),…,(p−1,p−1).
pub fn vec_upper(m: &SymMatrix) -> LogCovVector {
    let p = m.dim();
    let mut values = DVector::zeros(triangular_len(p));
    let mut k = 0;
    for i in 0..p {
        for j in i..p {
            values[k] = m.entries[(i, j)];
            k += 1;
        }
    }
    LogCovVector {
        values,
        matrix_dim: p,
    }
}

/// Inverse of [`vec_upper`].
pub fn unvec_upper(v: &LogCovVector) -> SymMatrix {
    let p = v.matrix_dim;
    let mut m = DMatrix::zeros(p, p);
    let mut k = 0;
    for i in 0..p {
        for j in i..p {
            m[(i, j)] = v.values[k];
            m[(j, i)] = v.values[k];
            k += 1;
        }
    }
    SymMatrix { entries: m }
}

/// Rebuild the symmetric matrix behind a raw length-q slice using the same
/// upper-triangle convention.
pub fn unvec_upper_slice(values: &[f64]) -> Result<SymMatrix> {
    let v = LogCovVector::new(DVector::from_column_slice(values))?;
    Ok(unvec_upper(&v))
}

impl LogCovVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        let q = values.len();
        let p = matrix_dim_for(q).ok_or(Error::BadLength { len: q })?;
        Ok(Self {
            values,
            matrix_dim: p,
        })
    }

    pub fn dim_q(&self) -> usize {
        self.values.len()
    }

    pub fn matrix_dim(&self) -> usize {
        self.matrix_dim
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.values
    }
}

/// Log-Euclidean distance ‖Log(x1) − Log(x2)‖_F.
pub fn log_euclidean_distance(x1: &SpdMatrix, x2: &SpdMatrix) -> Result<f64> {
    if x1.dim() != x2.dim() {
        return Err(Error::DimMismatch {
            left: x1.dim(),
            right: x2.dim(),
        });
    }
    let l1 = matrix_log(x1)?;
    let l2 = matrix_log(x2)?;
    Ok((l1.entries - l2.entries).norm())
}
