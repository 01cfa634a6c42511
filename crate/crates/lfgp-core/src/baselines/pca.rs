//! Sliding-window + PCA baseline: principal directions of the stacked
//! log-covariance series, reconstruction pushed back through the
//! exponential map.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::process::CovarianceProcess;
use crate::sampler::log_rows_to_process;
use crate::sw::LogCovSeries;

/// Top-k principal directions (row-orthonormal) and the stacked mean.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    components: DMatrix<f64>,
    mean: DVector<f64>,
}

impl PcaBasis {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim_q(&self) -> usize {
        self.components.ncols()
    }

    /// k×q matrix of principal directions.
    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Project-and-reconstruct one q-vector.
    pub fn reconstruct_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        let centered = v - &self.mean;
        let scores = &self.components * centered;
        &self.mean + self.components.transpose() * scores
    }
}

/// Top-k principal directions of the stacked, mean-centered series.
pub fn sw_pca_fit(y: &LogCovSeries, k: usize) -> Result<PcaBasis> {
    let q = y.dim_q();
    if k > q {
        return Err(Error::KTooLarge { k, q });
    }
    let n = y.n_trials();
    let t_w = y.n_windows();
    let rows = n * t_w;
    let mut x = DMatrix::zeros(rows, q);
    for i in 0..n {
        x.rows_mut(i * t_w, t_w).copy_from(y.trial(i));
    }
    let mean = DVector::from_fn(q, |l, _| x.column(l).mean());
    for mut row in x.row_iter_mut() {
        for l in 0..q {
            row[l] -= mean[l];
        }
    }
    let svd = x.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let components = DMatrix::from_fn(k, q, |j, l| v_t[(j, l)]);
    Ok(PcaBasis { components, mean })
}

/// Reconstruct every trial through the basis, then exponentiate each window
/// back to a covariance matrix.
pub fn sw_pca_reconstruct(y: &LogCovSeries, basis: &PcaBasis) -> Result<Vec<CovarianceProcess>> {
    if basis.dim_q() != y.dim_q() {
        return Err(Error::DimMismatch {
            left: basis.dim_q(),
            right: y.dim_q(),
        });
    }
    let t_w = y.n_windows();
    let q = y.dim_q();
    let mut out = Vec::with_capacity(y.n_trials());
    for i in 0..y.n_trials() {
        let mut rows = DMatrix::zeros(t_w, q);
        for t in 0..t_w {
            let v = y.trial(i).row(t).transpose();
            let rec = basis.reconstruct_vector(&v);
            rows.row_mut(t).copy_from(&rec.transpose());
        }
        out.push(log_rows_to_process(&rows, y.time_index())?);
    }
    Ok(out)
}
