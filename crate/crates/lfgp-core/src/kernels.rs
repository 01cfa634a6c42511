//! Stationary GP kernels on the window-time grid, their Gram matrices, and
//! the Gamma prior on the length scale.
//!
//! The variance scale is pinned to 1 for identifiability; all magnitude
//! lives in the loading matrix.

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Diagonal jitter added to every Gram matrix.
pub const GRAM_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    SquaredExponential,
    Matern52,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "squared-exponential",
            KernelFamily::Matern52 => "matern52",
        }
    }
}

/// A stationary unit-variance kernel with length scale θ in grid units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    length_scale: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, length_scale: f64) -> Result<Self> {
        if !(length_scale > 0.0) {
            return Err(Error::NonPositiveTheta {
                theta: length_scale,
            });
        }
        Ok(Self {
            family,
            length_scale,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }
}

/// κ(s, t) for the given spec; depends only on |s − t| and equals 1 at lag 0.
pub fn kernel_eval(spec: &KernelSpec, s: f64, t: f64) -> f64 {
    let d = (s - t).abs();
    let theta = spec.length_scale;
    match spec.family {
        KernelFamily::SquaredExponential => (-0.5 * (d / theta).powi(2)).exp(),
        KernelFamily::Matern52 => {
            let a = 5.0_f64.sqrt() * d / theta;
            (1.0 + a + a * a / 3.0) * (-a).exp()
        }
    }
}

/// Gram matrix on a strictly increasing grid, with [`GRAM_JITTER`] on the
/// diagonal. Toeplitz whenever the grid is evenly spaced.
pub fn gram_matrix(spec: &KernelSpec, grid: &[f64]) -> Result<DMatrix<f64>> {
    for i in 1..grid.len() {
        if grid[i] <= grid[i - 1] {
            return Err(Error::GridNotSorted { index: i });
        }
    }
    let m = grid.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        k[(i, i)] = 1.0 + GRAM_JITTER;
        for j in (i + 1)..m {
            let v = kernel_eval(spec, grid[i], grid[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Gamma(shape, rate) prior on the length scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthScalePrior {
    shape: f64,
    rate: f64,
}

impl LengthScalePrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Gamma prior needs positive shape and rate, got ({shape}, {rate})"
            )));
        }
        Ok(Self { shape, rate })
    }

    /// Prior with its mode pinned at `mode` (requires shape > 1, where the
    /// Gamma mode (shape−1)/rate exists).
    pub fn with_mode(mode: f64, shape: f64) -> Result<Self> {
        if !(shape > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "mode parameterization needs shape > 1, got {shape}"
            )));
        }
        if !(mode > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mode must be positive, got {mode}"
            )));
        }
        Self::new(shape, (shape - 1.0) / mode)
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Mode of the prior; falls back to the mean when shape ≤ 1.
    pub fn mode(&self) -> f64 {
        if self.shape > 1.0 {
            (self.shape - 1.0) / self.rate
        } else {
            self.shape / self.rate
        }
    }

    pub fn log_density(&self, theta: f64) -> Result<f64> {
        if !(theta > 0.0) {
            return Err(Error::NonPositiveTheta { theta });
        }
        Ok(self.shape * self.rate.ln() - ln_gamma(self.shape)
            + (self.shape - 1.0) * theta.ln()
            - self.rate * theta)
    }
}
