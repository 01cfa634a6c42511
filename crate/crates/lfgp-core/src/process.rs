//! Time-indexed covariance processes.

use crate::error::{Error, Result};
use crate::spd::SpdMatrix;

/// A sequence of SPD matrices indexed by time: the ground truth of a
/// simulation, a sliding-window estimate, or a model reconstruction.
#[derive(Debug, Clone)]
pub struct CovarianceProcess {
    times: Vec<f64>,
    matrices: Vec<SpdMatrix>,
}

impl CovarianceProcess {
    pub fn new(times: Vec<f64>, matrices: Vec<SpdMatrix>) -> Result<Self> {
        if times.len() != matrices.len() {
            return Err(Error::DimMismatch {
                left: times.len(),
                right: matrices.len(),
            });
        }
        if let Some(first) = matrices.first() {
            let p = first.dim();
            for m in &matrices {
                if m.dim() != p {
                    return Err(Error::DimMismatch {
                        left: p,
                        right: m.dim(),
                    });
                }
            }
        }
        Ok(Self { times, matrices })
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Signal dimension p, or 0 for an empty process.
    pub fn dim(&self) -> usize {
        self.matrices.first().map_or(0, SpdMatrix::dim)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn matrices(&self) -> &[SpdMatrix] {
        &self.matrices
    }

    pub fn get(&self, idx: usize) -> &SpdMatrix {
        &self.matrices[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &SpdMatrix)> {
        self.times.iter().copied().zip(self.matrices.iter())
    }

    /// Subset at the given positions (e.g. an evaluation grid).
    pub fn select(&self, indices: &[usize]) -> CovarianceProcess {
        CovarianceProcess {
            times: indices.iter().map(|&i| self.times[i]).collect(),
            matrices: indices.iter().map(|&i| self.matrices[i].clone()).collect(),
        }
    }
}
