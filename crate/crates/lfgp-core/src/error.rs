//! Error type shared by all estimation and sampling routines.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:.3e} exceeds tolerance)")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("vector length {len} is not a triangular number")]
    BadLength { len: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("window length {window} exceeds trial length {trial_len}")]
    WindowTooLong { window: usize, trial_len: usize },

    #[error("time grid is not strictly increasing at index {index}")]
    GridNotSorted { index: usize },

    #[error("length scale must be positive, got {theta}")]
    NonPositiveTheta { theta: f64 },

    #[error("conditional covariance lost positive definiteness (min eigenvalue {min_eigenvalue:.3e}){context}")]
    NumericalBreakdown {
        min_eigenvalue: f64,
        context: String,
    },

    #[error("design matrix with prior precision is singular")]
    SingularDesign,

    #[error("chain holds no draws")]
    EmptyChain,

    #[error("requested {k} components but only {q} dimensions available")]
    KTooLarge { k: usize, q: usize },

    #[error("state {state} received responsibility mass {mass:.2} < {required} samples")]
    DegenerateState {
        state: usize,
        mass: f64,
        required: usize,
    },

    #[error("trial {trial} has no condition label")]
    MissingLabel { trial: usize },

    #[error("need at least {folds} draws per condition, got {draws}")]
    TooFewDraws { folds: usize, draws: usize },

    #[error("training set is empty")]
    EmptyTrain,

    #[error("training labels contain a single class")]
    NoSecondClass,

    #[error("Newton iterations failed to converge (gradient norm {grad_norm:.3e} after {iters} iterations)")]
    NoConvergence { grad_norm: f64, iters: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{source} (trial {trial}, window {window})")]
    AtWindow {
        trial: usize,
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{source} (iteration {iteration})")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach trial/window coordinates to an error bubbling out of a
    /// per-window computation.
    pub fn at_window(self, trial: usize, window: usize) -> Self {
        Error::AtWindow {
            trial,
            window,
            source: Box::new(self),
        }
    }

    /// Attach the sampler iteration at which a component update failed.
    pub fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
