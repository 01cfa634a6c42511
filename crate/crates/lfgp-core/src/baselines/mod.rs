//! Reference estimators the factor model is compared against.

pub mod hmm;
pub mod pca;

pub use hmm::{
    hmm_elbow, hmm_fit, hmm_fit_logcov, hmm_reconstruct, hmm_state_proportions, path_log_joint,
    viterbi, EmissionKind, HmmFit, HmmFitOptions, HmmModel,
};
pub use pca::{sw_pca_fit, sw_pca_reconstruct, PcaBasis};
