//! Run configuration: one TOML file with named sections. Unknown keys are
//! rejected so typos surface immediately.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lfgp_core::kernels::{KernelFamily, LengthScalePrior};
use lfgp_core::sampler::{McmcConfig, ModelConfig, NoisePrior};
use lfgp_core::sw::TaperSpec;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every derived stream comes from it.
    pub seed: u64,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub separate: SeparateSection,
    #[serde(default)]
    pub io: IoSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub window_len: usize,
    pub taper_scale: f64,
    pub center: bool,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            window_len: 50,
            taper_scale: 0.5,
            center: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub factors: usize,
    /// "squared-exponential" or "matern52".
    pub kernel: String,
    pub lengthscale_prior_shape: f64,
    /// Prior mode in sample units; overrides the millisecond form.
    pub lengthscale_prior_mode: Option<f64>,
    /// Prior mode in milliseconds, converted with the data's sample rate.
    pub lengthscale_prior_mode_ms: Option<f64>,
    pub loading_prior_var: f64,
    pub noise_prior_shape: f64,
    pub noise_prior_rate: f64,
    pub horseshoe_global_scale: f64,
    pub draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub proposal_sd: f64,
    /// Fit on every k-th window.
    pub fit_stride: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            factors: 2,
            kernel: "squared-exponential".into(),
            lengthscale_prior_shape: 10.0,
            lengthscale_prior_mode: None,
            lengthscale_prior_mode_ms: Some(100.0),
            loading_prior_var: 1.0,
            noise_prior_shape: 2.0,
            noise_prior_rate: 1.0,
            horseshoe_global_scale: 0.1,
            draws: 2000,
            burn_in: 500,
            thin: 10,
            proposal_sd: 0.3,
            fit_stride: 1,
        }
    }
}

impl ModelSection {
    pub fn kernel_family(&self) -> Result<KernelFamily> {
        match self.kernel.as_str() {
            "squared-exponential" => Ok(KernelFamily::SquaredExponential),
            "matern52" => Ok(KernelFamily::Matern52),
            other => Err(CliError::Config(format!("unknown kernel {other:?}"))),
        }
    }

    /// Length-scale prior in sample units, resolving the millisecond form
    /// against the data's sample rate.
    pub fn ls_prior(&self, sample_rate_hz: f64) -> Result<LengthScalePrior> {
        let mode = match (self.lengthscale_prior_mode, self.lengthscale_prior_mode_ms) {
            (Some(samples), _) => samples,
            (None, Some(ms)) => ms / 1000.0 * sample_rate_hz,
            (None, None) => {
                return Err(CliError::Config(
                    "set lengthscale_prior_mode or lengthscale_prior_mode_ms".into(),
                ))
            }
        };
        LengthScalePrior::with_mode(mode, self.lengthscale_prior_shape).map_err(Into::into)
    }

    pub fn model_config(&self, sample_rate_hz: f64, seed: u64) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            n_factors: self.factors,
            kernel_family: self.kernel_family()?,
            ls_prior: self.ls_prior(sample_rate_hz)?,
            loading_prior_var: self.loading_prior_var,
            noise_prior: NoisePrior {
                shape: self.noise_prior_shape,
                rate: self.noise_prior_rate,
            },
            horseshoe_global_scale: self.horseshoe_global_scale,
            mcmc: McmcConfig {
                n_draws: self.draws,
                n_burn: self.burn_in,
                thin: self.thin,
                seed,
                proposal_sd: self.proposal_sd,
            },
        };
        cfg.validate().map_err(CliError::from)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// "contraction", "comparison", or "both".
    pub which: String,
    /// Contraction cells as (n, t) pairs.
    pub cells: Vec<(usize, usize)>,
    pub contraction_replicates: usize,
    pub contraction_signals: usize,
    pub theta_true: f64,
    pub noise_sd_true: f64,
    pub scenarios: Vec<String>,
    pub comparison_replicates: usize,
    pub signal_count: usize,
    pub trial_len: usize,
    pub r_true: usize,
    pub pca_components: usize,
    pub hmm_states: usize,
    pub hmm_restarts: usize,
    pub fit_stride: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            which: "both".into(),
            cells: vec![(1, 25), (1, 50), (10, 25), (10, 50)],
            contraction_replicates: 3,
            contraction_signals: 5,
            theta_true: 5.0,
            noise_sd_true: 0.3,
            scenarios: vec![
                "square_wave".into(),
                "piecewise_linear".into(),
                "cubic_spline".into(),
            ],
            comparison_replicates: 20,
            signal_count: 10,
            trial_len: 1000,
            r_true: 4,
            pca_components: 4,
            hmm_states: 8,
            hmm_restarts: 3,
            fit_stride: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    /// "knn", "logistic", or "both".
    pub classifier: String,
    pub knn_k: usize,
    pub logistic_l2: f64,
    pub folds: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            classifier: "both".into(),
            knn_k: 5,
            logistic_l2: 1.0,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub scenario: String,
    pub trials: usize,
    pub trial_len: usize,
    pub signal_count: usize,
    pub r_true: usize,
    pub sample_rate_hz: f64,
    pub label: String,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            scenario: "cubic_spline".into(),
            trials: 2,
            trial_len: 400,
            signal_count: 3,
            r_true: 2,
            sample_rate_hz: 1000.0,
            label: "sim".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparateSection {
    pub runs: usize,
    pub trials_per_condition: usize,
    pub trial_len: usize,
    pub signal_count: usize,
    pub window_len: usize,
    pub taper_scale: f64,
    pub fit_stride: usize,
}

impl Default for SeparateSection {
    fn default() -> Self {
        Self {
            runs: 1,
            trials_per_condition: 6,
            trial_len: 240,
            signal_count: 3,
            window_len: 40,
            taper_scale: 0.5,
            fit_stride: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    /// Directory of per-trial CSVs for data-reading commands.
    pub data_dir: Option<String>,
    /// Existing chain file for `addfactor`.
    pub chain_file: Option<String>,
}

#[allow(clippy::derivable_impls)]
impl Default for IoSection {
    fn default() -> Self {
        Self {
            data_dir: None,
            chain_file: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path, seed_override: Option<u64>) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimator.window_len < 1 {
            return Err(CliError::Config("estimator.window_len must be ≥ 1".into()));
        }
        if !(self.estimator.taper_scale > 0.0) {
            return Err(CliError::Config("estimator.taper_scale must be > 0".into()));
        }
        if self.model.burn_in >= self.model.draws {
            return Err(CliError::Config(
                "model.burn_in must be below model.draws".into(),
            ));
        }
        if !matches!(self.experiment.which.as_str(), "contraction" | "comparison" | "both") {
            return Err(CliError::Config(format!(
                "experiment.which must be contraction|comparison|both, got {:?}",
                self.experiment.which
            )));
        }
        if !matches!(self.evaluation.classifier.as_str(), "knn" | "logistic" | "both") {
            return Err(CliError::Config(format!(
                "evaluation.classifier must be knn|logistic|both, got {:?}",
                self.evaluation.classifier
            )));
        }
        self.model.kernel_family()?;
        Ok(())
    }

    pub fn taper(&self) -> Result<TaperSpec> {
        TaperSpec::new(self.estimator.window_len, self.estimator.taper_scale).map_err(Into::into)
    }

    /// SHA-256 of the effective (post-override) configuration.
    pub fn hash(&self) -> [u8; 32] {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = [0u8; 32];
        out.copy_from_slice(&digest);
        out
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash())
    }
}
