//! Latent factor Gaussian process modeling of dynamic covariance.
//!
//! The pipeline: raw multivariate trials are turned into tapered
//! sliding-window covariance estimates ([`sw`]), mapped to an unconstrained
//! vector representation through the matrix logarithm ([`spd`]), modeled by
//! a low-rank Gaussian-process factor model fit with a Kronecker-accelerated
//! Gibbs sampler ([`sampler`]), and compared against sliding-window PCA and
//! HMM baselines ([`baselines`]) on synthetic data ([`experiments`]), with
//! latent-space separation scoring in [`evaluation`].

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod kernels;
pub(crate) mod linalg;
pub mod process;
pub mod sampler;
pub mod spd;
pub mod sw;

pub use error::{Error, Result};
pub use process::CovarianceProcess;

/// Derive a child RNG seed from a master seed and a stream index
/// (splitmix64 step), so parallel replicates get decorrelated yet
/// reproducible streams.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
