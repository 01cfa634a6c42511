//! Gibbs sampler for the latent factor Gaussian process model.
//!
//! The model places a low-rank structure on the log-covariance series:
//! Y_i(t) = F_i(t)·B + ε_i with ε ~ N(0, σ²I), each latent factor path an
//! independent zero-mean GP with unit variance and per-factor length scale.
//! One sweep cycles
//!
//! 1. each factor's paths from their exact Gaussian conditional, solved
//!    through the Kronecker identity in [`kron`] (per-trial blocks are
//!    independent, so the trial dimension never enters a decomposition);
//! 2. loadings and noise variance jointly from their Normal–Inverse-Gamma
//!    conditional;
//! 3. each length scale by random-walk Metropolis on log θ.
//!
//! Factor/loading sign and rotation are not constrained: only the product
//! F·B is identified, and downstream consumers treat it that way.

pub mod horseshoe;
pub mod kron;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernels::{gram_matrix, kernel_eval, KernelFamily, KernelSpec, LengthScalePrior};
use crate::process::CovarianceProcess;
use crate::spd::{self};
use crate::sw::LogCovSeries;
use kron::{kron_solve_with, SpectralDecomp};

const LN_2PI: f64 = 1.8378770664093453;

/// Chain length, burn-in, thinning, seed, and the Metropolis proposal scale
/// for log θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcConfig {
    pub n_draws: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub proposal_sd: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_draws: 2000,
            n_burn: 500,
            thin: 10,
            seed: 0,
            proposal_sd: 0.3,
        }
    }
}

/// Inverse-Gamma(shape, rate) prior on the noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePrior {
    pub shape: f64,
    pub rate: f64,
}

impl NoisePrior {
    fn log_density(&self, sigma2: f64) -> f64 {
        self.shape * self.rate.ln()
            - ln_gamma(self.shape)
            - (self.shape + 1.0) * sigma2.ln()
            - self.rate / sigma2
    }
}

/// Full model configuration.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub n_factors: usize,
    pub kernel_family: KernelFamily,
    pub ls_prior: LengthScalePrior,
    /// Loading prior variance relative to σ²: β | σ² ~ N(0, σ²·v).
    pub loading_prior_var: f64,
    pub noise_prior: NoisePrior,
    /// Global horseshoe scale ρ for factors added on residuals.
    pub horseshoe_global_scale: f64,
    pub mcmc: McmcConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_factors < 1 {
            return Err(Error::InvalidParameter("need at least one factor".into()));
        }
        if self.mcmc.n_burn >= self.mcmc.n_draws {
            return Err(Error::InvalidParameter(format!(
                "burn-in {} must be below draw count {}",
                self.mcmc.n_burn, self.mcmc.n_draws
            )));
        }
        if self.mcmc.thin < 1 {
            return Err(Error::InvalidParameter("thin must be at least 1".into()));
        }
        if !(self.loading_prior_var > 0.0) {
            return Err(Error::InvalidParameter(
                "loading prior variance must be positive".into(),
            ));
        }
        if !(self.horseshoe_global_scale > 0.0) {
            return Err(Error::InvalidParameter(
                "horseshoe global scale must be positive".into(),
            ));
        }
        if !(self.noise_prior.shape > 0.0 && self.noise_prior.rate > 0.0) {
            return Err(Error::InvalidParameter(
                "noise prior needs positive shape and rate".into(),
            ));
        }
        if !(self.mcmc.proposal_sd >= 0.0) {
            return Err(Error::InvalidParameter(
                "proposal sd must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// One sampler state: latent factor paths, loadings, noise variance, and
/// per-factor length scales. `lambda` holds the local horseshoe scales of
/// the newest factor when the state came out of a residual extension fit.
#[derive(Debug, Clone)]
pub struct ModelState {
    /// Per trial: T_w×r factor paths.
    pub factors: Vec<DMatrix<f64>>,
    /// r×q loading matrix.
    pub loadings: DMatrix<f64>,
    pub sigma2: f64,
    pub theta: Vec<f64>,
    pub lambda: Option<DVector<f64>>,
}

impl ModelState {
    pub fn n_trials(&self) -> usize {
        self.factors.len()
    }

    pub fn n_factors(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn n_windows(&self) -> usize {
        self.factors[0].nrows()
    }

    pub fn dim_q(&self) -> usize {
        self.loadings.ncols()
    }

    /// F_i·B for one trial.
    pub fn predicted(&self, trial: usize) -> DMatrix<f64> {
        &self.factors[trial] * &self.loadings
    }
}

/// Post-burn-in, thinned draws plus per-draw log posteriors and per-factor
/// Metropolis acceptance fractions.
#[derive(Debug, Clone)]
pub struct ChainDraws {
    pub states: Vec<ModelState>,
    pub log_posts: Vec<f64>,
    pub accept_rate_theta: Vec<f64>,
}

impl ChainDraws {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn draw_std_normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Gamma(shape, rate) draw.
pub(crate) fn draw_gamma<R: Rng>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("valid gamma parameters")
        .sample(rng)
}

/// Inverse-Gamma(shape, rate) draw: 1/X with X ~ Gamma(shape, rate).
pub(crate) fn draw_inv_gamma<R: Rng>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    1.0 / draw_gamma(rng, shape, rate)
}

// ---------------------------------------------------------------------------
// Factor update
// ---------------------------------------------------------------------------

/// The exact Gaussian conditional of one factor's paths given everything
/// else. The covariance is shared across trials; means differ per trial.
#[derive(Debug, Clone)]
pub struct FactorConditional {
    /// Per-trial conditional mean, length T_w.
    pub means: Vec<DVector<f64>>,
    /// Shared conditional covariance, T_w×T_w.
    pub covariance: DMatrix<f64>,
}

struct GramEntry {
    theta: f64,
    gram: DMatrix<f64>,
    decomp: SpectralDecomp,
}

fn gram_entry(family: KernelFamily, theta: f64, grid: &[f64]) -> Result<GramEntry> {
    let spec = KernelSpec::new(family, theta)?;
    let gram = gram_matrix(&spec, grid)?;
    let decomp = SpectralDecomp::new(&gram)?;
    Ok(GramEntry {
        theta,
        gram,
        decomp,
    })
}

/// Residual of trial `i` with factor `j`'s contribution left in:
/// Y_i − F_i·B + f_ij·b_jᵀ.
fn factor_residual(y: &LogCovSeries, state: &ModelState, trial: usize, j: usize) -> DMatrix<f64> {
    let f_i = &state.factors[trial];
    let mut resid = y.trial(trial) - f_i * &state.loadings;
    let b_j = state.loadings.row(j);
    let f_col = f_i.column(j);
    for t in 0..resid.nrows() {
        for l in 0..resid.ncols() {
            resid[(t, l)] += f_col[t] * b_j[l];
        }
    }
    resid
}

/// Conditional mean of factor `j` for one trial, computed through the
/// Kronecker solve against (b_jb_jᵀ/σ² ⊗ K + I).
fn factor_mean_via_kron(
    resid: &DMatrix<f64>,
    b_j: &DVector<f64>,
    sigma2: f64,
    da: &SpectralDecomp,
    entry: &GramEntry,
) -> DVector<f64> {
    let t_w = resid.nrows();
    let q = resid.ncols();
    let v = DVector::from_fn(q * t_w, |idx, _| resid[(idx % t_w, idx / t_w)]);
    let u = kron_solve_with(da, &entry.decomp, &v);
    let mut s_vec = DVector::zeros(t_w);
    for l in 0..q {
        let b_l = b_j[l];
        for t in 0..t_w {
            s_vec[t] += b_l * u[l * t_w + t];
        }
    }
    (&entry.gram * s_vec) / sigma2
}

fn factor_conditional_with(
    y: &LogCovSeries,
    state: &ModelState,
    j: usize,
    entry: &GramEntry,
) -> Result<(Vec<DVector<f64>>, DVector<f64>)> {
    let q = y.dim_q();
    let b_j: DVector<f64> = state.loadings.row(j).transpose();
    let da = SpectralDecomp::rank_one(&b_j, 1.0 / state.sigma2);
    let c = b_j.norm_squared() / state.sigma2;

    let mut post_vals = DVector::zeros(entry.decomp.dim());
    for (idx, lam) in entry.decomp.values().iter().enumerate() {
        let scaled = lam / (1.0 + c * lam);
        if scaled <= 0.0 || !scaled.is_finite() {
            return Err(Error::NumericalBreakdown {
                min_eigenvalue: scaled,
                context: format!(" in factor {j} update"),
            });
        }
        post_vals[idx] = scaled;
    }

    // Per-trial solves are independent (the I_n Kronecker blocks); results
    // are merged back in trial order either way.
    let n = y.n_trials();
    let compute = |i: usize| {
        let resid = factor_residual(y, state, i, j);
        factor_mean_via_kron(&resid, &b_j, state.sigma2, &da, entry)
    };
    let means: Vec<DVector<f64>> = if n >= 4 && q * y.n_windows() >= 4096 {
        (0..n).into_par_iter().map(compute).collect()
    } else {
        (0..n).map(compute).collect()
    };
    Ok((means, post_vals))
}

/// Materialized conditional distribution of factor `j`'s paths. Intended
/// for verification against dense conditioning; the sampler itself draws
/// through the spectral form without building the covariance.
pub fn factor_conditional(
    y: &LogCovSeries,
    state: &ModelState,
    j: usize,
    family: KernelFamily,
) -> Result<FactorConditional> {
    let entry = gram_entry(family, state.theta[j], y.time_index())?;
    let (means, post_vals) = factor_conditional_with(y, state, j, &entry)?;
    let v = entry.decomp.vectors();
    let covariance = v * DMatrix::from_diagonal(&post_vals) * v.transpose();
    Ok(FactorConditional { means, covariance })
}

fn draw_factor_paths<R: Rng>(
    y: &LogCovSeries,
    state: &mut ModelState,
    j: usize,
    entry: &GramEntry,
    rng: &mut R,
) -> Result<()> {
    let (means, post_vals) = factor_conditional_with(y, state, j, entry)?;
    let sd_vals = post_vals.map(f64::sqrt);
    let v = entry.decomp.vectors();
    let t_w = y.n_windows();
    for (i, mean) in means.into_iter().enumerate() {
        let z = DVector::from_fn(t_w, |_, _| draw_std_normal(rng));
        let draw = mean + v * z.component_mul(&sd_vals);
        state.factors[i].set_column(j, &draw);
    }
    Ok(())
}

/// Draw every factor's paths in ascending order, each from its exact
/// conditional given the current residual.
pub fn sample_factors<R: Rng>(
    y: &LogCovSeries,
    state: &mut ModelState,
    family: KernelFamily,
    rng: &mut R,
) -> Result<()> {
    for j in 0..state.n_factors() {
        let entry = gram_entry(family, state.theta[j], y.time_index())?;
        draw_factor_paths(y, state, j, &entry, rng)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Loadings and noise update
// ---------------------------------------------------------------------------

/// Closed-form Normal–Inverse-Gamma posterior of (B, σ²) given factors:
/// σ² ~ IG(noise_shape, noise_rate) marginally, column l of B | σ² ~
/// N(coef_mean_l, σ²·coef_precision⁻¹).
#[derive(Debug, Clone)]
pub struct LoadingsNoisePosterior {
    pub coef_mean: DMatrix<f64>,
    pub coef_precision: DMatrix<f64>,
    pub noise_shape: f64,
    pub noise_rate: f64,
}

/// Compute the conjugate posterior of (B, σ²) from stacked regressions of
/// each Y column on the factor paths, with one σ² pooled across columns.
pub fn loadings_noise_posterior(
    y: &LogCovSeries,
    factors: &[DMatrix<f64>],
    cfg: &ModelConfig,
) -> Result<LoadingsNoisePosterior> {
    let n = y.n_trials();
    let t_w = y.n_windows();
    let q = y.dim_q();
    let r = factors[0].ncols();

    let mut gram = DMatrix::zeros(r, r);
    let mut cross = DMatrix::zeros(r, q);
    let mut y_ss = 0.0;
    for i in 0..n {
        let f = &factors[i];
        let yi = y.trial(i);
        gram += f.transpose() * f;
        cross += f.transpose() * yi;
        y_ss += yi.norm_squared();
    }
    let mut precision = gram;
    for k in 0..r {
        precision[(k, k)] += 1.0 / cfg.loading_prior_var;
    }
    let chol = Cholesky::new(precision.clone()).ok_or(Error::SingularDesign)?;
    let coef_mean = chol.solve(&cross);

    // Marginal residual: Σ_l (y_lᵀy_l − h_lᵀ M⁻¹ h_l), never negative in
    // exact arithmetic.
    let mut ssr = y_ss;
    for l in 0..q {
        ssr -= cross.column(l).dot(&coef_mean.column(l));
    }
    ssr = ssr.max(0.0);

    Ok(LoadingsNoisePosterior {
        coef_mean,
        coef_precision: precision,
        noise_shape: cfg.noise_prior.shape + (n * t_w * q) as f64 / 2.0,
        noise_rate: cfg.noise_prior.rate + ssr / 2.0,
    })
}

/// Joint draw of (B, σ²): σ² from its marginal Inverse-Gamma, then each
/// loading column from its Gaussian conditional.
pub fn sample_loadings_noise<R: Rng>(
    y: &LogCovSeries,
    factors: &[DMatrix<f64>],
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<(DMatrix<f64>, f64)> {
    let post = loadings_noise_posterior(y, factors, cfg)?;
    let q = y.dim_q();
    let r = factors[0].ncols();
    let sigma2 = draw_inv_gamma(rng, post.noise_shape, post.noise_rate);

    let chol = Cholesky::new(post.coef_precision.clone()).ok_or(Error::SingularDesign)?;
    let sigma = sigma2.sqrt();
    let mut loadings = DMatrix::zeros(r, q);
    for l in 0..q {
        let z = DVector::from_fn(r, |_, _| draw_std_normal(rng));
        // Cov = σ²·M⁻¹ = σ²·L⁻ᵀL⁻¹, so the perturbation is σ·L⁻ᵀz.
        let pert = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("Cholesky factor is invertible");
        let col = post.coef_mean.column(l) + pert * sigma;
        loadings.set_column(l, &col);
    }
    Ok((loadings, sigma2))
}

// ---------------------------------------------------------------------------
// Length-scale update
// ---------------------------------------------------------------------------

fn gp_loglik_chol(paths: &[DVector<f64>], chol: &Cholesky<f64, Dyn>) -> f64 {
    let t_w = paths[0].len();
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let mut total = 0.0;
    for f in paths {
        let half = chol
            .l()
            .solve_lower_triangular(f)
            .expect("Cholesky factor is invertible");
        total += -0.5 * half.norm_squared() - 0.5 * log_det - 0.5 * t_w as f64 * LN_2PI;
    }
    total
}

fn gp_loglik_decomp(paths: &[DVector<f64>], decomp: &SpectralDecomp) -> f64 {
    let t_w = paths[0].len();
    let log_det = decomp.log_det();
    let mut total = 0.0;
    for f in paths {
        let rotated = decomp.vectors().transpose() * f;
        let quad: f64 = rotated
            .iter()
            .zip(decomp.values().iter())
            .map(|(x, lam)| x * x / lam)
            .sum();
        total += -0.5 * quad - 0.5 * log_det - 0.5 * t_w as f64 * LN_2PI;
    }
    total
}

/// Unnormalized log density targeted by the length-scale Metropolis step,
/// as a function of log θ: GP marginal likelihood of the factor paths plus
/// the Gamma prior plus the log-scale Jacobian.
pub fn lengthscale_log_target(
    paths: &[DVector<f64>],
    theta: f64,
    family: KernelFamily,
    prior: &LengthScalePrior,
    grid: &[f64],
) -> Result<f64> {
    let spec = KernelSpec::new(family, theta)?;
    let gram = gram_matrix(&spec, grid)?;
    match Cholesky::new(gram) {
        // The +ln θ Jacobian makes this the target density over log θ.
        Some(chol) => Ok(gp_loglik_chol(paths, &chol) + prior.log_density(theta)? + theta.ln()),
        None => Ok(f64::NEG_INFINITY),
    }
}

/// One random-walk Metropolis step on log θ for a single factor, targeting
/// the GP marginal likelihood of its paths times the Gamma prior. Returns
/// the (possibly unchanged) length scale and the accept flag.
pub fn sample_lengthscale<R: Rng>(
    paths: &[DVector<f64>],
    theta: f64,
    family: KernelFamily,
    prior: &LengthScalePrior,
    proposal_sd: f64,
    grid: &[f64],
    rng: &mut R,
) -> Result<(f64, bool)> {
    let current = lengthscale_log_target(paths, theta, family, prior, grid)?;
    metropolis_step(paths, theta, current, family, prior, proposal_sd, grid, rng)
}

#[allow(clippy::too_many_arguments)]
fn metropolis_step<R: Rng>(
    paths: &[DVector<f64>],
    theta: f64,
    current_target: f64,
    family: KernelFamily,
    prior: &LengthScalePrior,
    proposal_sd: f64,
    grid: &[f64],
    rng: &mut R,
) -> Result<(f64, bool)> {
    let step: f64 = draw_std_normal(rng) * proposal_sd;
    // step == 0 must propose the identical value (exp∘ln is not exact).
    let proposal = if step == 0.0 {
        theta
    } else {
        (theta.ln() + step).exp()
    };
    let proposed_target = if proposal > 0.0 && proposal.is_finite() {
        lengthscale_log_target(paths, proposal, family, prior, grid)?
    } else {
        f64::NEG_INFINITY
    };
    let log_u: f64 = rng.gen::<f64>().ln();
    if log_u < proposed_target - current_target {
        Ok((proposal, true))
    } else {
        Ok((theta, false))
    }
}

// ---------------------------------------------------------------------------
// Full Gibbs run
// ---------------------------------------------------------------------------

fn stack_series(y: &LogCovSeries) -> DMatrix<f64> {
    let n = y.n_trials();
    let t_w = y.n_windows();
    let q = y.dim_q();
    let mut x = DMatrix::zeros(n * t_w, q);
    for i in 0..n {
        x.rows_mut(i * t_w, t_w).copy_from(y.trial(i));
    }
    x
}

/// SVD warm start: factors from the top-r left singular directions (scaled
/// to unit marginal variance), loadings carrying the magnitude, σ² from the
/// residual.
fn init_state(y: &LogCovSeries, cfg: &ModelConfig) -> Result<ModelState> {
    let n = y.n_trials();
    let t_w = y.n_windows();
    let q = y.dim_q();
    let r = cfg.n_factors;
    if r > q.min(n * t_w) {
        return Err(Error::InvalidParameter(format!(
            "{r} factors exceed the rank bound min(q={q}, n·T_w={})",
            n * t_w
        )));
    }

    let x = stack_series(y);
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let scale = ((n * t_w) as f64).sqrt();

    let mut factors = vec![DMatrix::zeros(t_w, r); n];
    for i in 0..n {
        for t in 0..t_w {
            for j in 0..r {
                factors[i][(t, j)] = u[(i * t_w + t, j)] * scale;
            }
        }
    }
    let mut loadings = DMatrix::zeros(r, q);
    for j in 0..r {
        for l in 0..q {
            loadings[(j, l)] = svd.singular_values[j] * v_t[(j, l)] / scale;
        }
    }
    let captured: f64 = (0..r).map(|j| svd.singular_values[j].powi(2)).sum();
    let sse = (x.norm_squared() - captured).max(0.0);
    let sigma2 = (sse / (n * t_w * q) as f64).max(1e-4);

    Ok(ModelState {
        factors,
        loadings,
        sigma2,
        theta: vec![cfg.ls_prior.mode(); r],
        lambda: None,
    })
}

fn log_posterior(
    y: &LogCovSeries,
    state: &ModelState,
    cfg: &ModelConfig,
    cache: &[GramEntry],
) -> Result<f64> {
    let n = y.n_trials();
    let t_w = y.n_windows();
    let q = y.dim_q();
    let r = state.n_factors();

    let mut sse = 0.0;
    for i in 0..n {
        sse += (y.trial(i) - state.predicted(i)).norm_squared();
    }
    let lik = -0.5 * (n * t_w * q) as f64 * (LN_2PI + state.sigma2.ln())
        - sse / (2.0 * state.sigma2);

    let mut factor_prior = 0.0;
    for (j, entry) in cache.iter().enumerate().take(r) {
        let paths: Vec<DVector<f64>> = (0..n)
            .map(|i| state.factors[i].column(j).into_owned())
            .collect();
        factor_prior += gp_loglik_decomp(&paths, &entry.decomp);
    }

    let v = cfg.loading_prior_var * state.sigma2;
    let loading_prior = -0.5 * (r * q) as f64 * (LN_2PI + v.ln())
        - state.loadings.norm_squared() / (2.0 * v);

    let noise_prior = cfg.noise_prior.log_density(state.sigma2);
    let mut theta_prior = 0.0;
    for j in 0..r {
        theta_prior += cfg.ls_prior.log_density(state.theta[j])?;
    }
    Ok(lik + factor_prior + loading_prior + noise_prior + theta_prior)
}

/// Run the full Gibbs chain over a log-covariance series. Deterministic
/// given `cfg.mcmc.seed`.
pub fn gibbs_run(y: &LogCovSeries, cfg: &ModelConfig) -> Result<ChainDraws> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.mcmc.seed);
    gibbs_run_with(y, cfg, init_state(y, cfg)?, &mut rng)
}

pub(crate) fn gibbs_run_with(
    y: &LogCovSeries,
    cfg: &ModelConfig,
    mut state: ModelState,
    rng: &mut ChaCha20Rng,
) -> Result<ChainDraws> {
    let grid = y.time_index().to_vec();
    let r = cfg.n_factors;
    let n = y.n_trials();
    let mcmc = cfg.mcmc;

    let mut cache: Vec<GramEntry> = Vec::with_capacity(r);
    for j in 0..r {
        cache.push(gram_entry(cfg.kernel_family, state.theta[j], &grid)?);
    }

    let mut states = Vec::new();
    let mut log_posts = Vec::new();
    let mut accepts = vec![0usize; r];

    for draw in 0..mcmc.n_draws {
        for j in 0..r {
            if cache[j].theta != state.theta[j] {
                cache[j] = gram_entry(cfg.kernel_family, state.theta[j], &grid)
                    .map_err(|e| e.at_iteration(draw))?;
            }
            draw_factor_paths(y, &mut state, j, &cache[j], rng)
                .map_err(|e| e.at_iteration(draw))?;
        }

        let (loadings, sigma2) = sample_loadings_noise(y, &state.factors, cfg, rng)
            .map_err(|e| e.at_iteration(draw))?;
        state.loadings = loadings;
        state.sigma2 = sigma2;

        for j in 0..r {
            let paths: Vec<DVector<f64>> = (0..n)
                .map(|i| state.factors[i].column(j).into_owned())
                .collect();
            let current = gp_loglik_decomp(&paths, &cache[j].decomp)
                + cfg.ls_prior.log_density(state.theta[j])?
                + state.theta[j].ln();
            let (theta, accepted) = metropolis_step(
                &paths,
                state.theta[j],
                current,
                cfg.kernel_family,
                &cfg.ls_prior,
                mcmc.proposal_sd,
                &grid,
                rng,
            )
            .map_err(|e| e.at_iteration(draw))?;
            if accepted {
                accepts[j] += 1;
                state.theta[j] = theta;
                cache[j] = gram_entry(cfg.kernel_family, theta, &grid)
                    .map_err(|e| e.at_iteration(draw))?;
            }
        }

        if draw >= mcmc.n_burn && (draw - mcmc.n_burn) % mcmc.thin == 0 {
            let lp = log_posterior(y, &state, cfg, &cache).map_err(|e| e.at_iteration(draw))?;
            states.push(state.clone());
            log_posts.push(lp);
        }
    }

    Ok(ChainDraws {
        states,
        log_posts,
        accept_rate_theta: accepts
            .iter()
            .map(|&a| a as f64 / mcmc.n_draws as f64)
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Reconstruction and summaries
// ---------------------------------------------------------------------------

pub(crate) fn median_in_place(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in chain draws"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-trial elementwise posterior median of the reconstructed
/// log-covariance F·B.
pub fn reconstruct_log_median(draws: &ChainDraws) -> Result<Vec<DMatrix<f64>>> {
    let first = draws.states.first().ok_or(Error::EmptyChain)?;
    let n = first.n_trials();
    let t_w = first.n_windows();
    let q = first.dim_q();
    let predictions: Vec<Vec<DMatrix<f64>>> = draws
        .states
        .iter()
        .map(|s| (0..n).map(|i| s.predicted(i)).collect())
        .collect();
    let mut medians = Vec::with_capacity(n);
    let mut buf = vec![0.0; draws.states.len()];
    for i in 0..n {
        let mut m = DMatrix::zeros(t_w, q);
        for t in 0..t_w {
            for l in 0..q {
                for (d, pred) in predictions.iter().enumerate() {
                    buf[d] = pred[i][(t, l)];
                }
                m[(t, l)] = median_in_place(&mut buf);
            }
        }
        medians.push(m);
    }
    Ok(medians)
}

/// Posterior-median covariance process per trial: the median log-scale
/// reconstruction pushed back through the exponential map (always SPD).
pub fn reconstruct_covariance(
    draws: &ChainDraws,
    time_index: &[f64],
) -> Result<Vec<CovarianceProcess>> {
    let medians = reconstruct_log_median(draws)?;
    medians
        .into_iter()
        .map(|m| log_rows_to_process(&m, time_index))
        .collect()
}

/// Interpret each row of a T_w×q matrix as an upper-triangle log-covariance
/// and exponentiate into a covariance process.
pub fn log_rows_to_process(rows: &DMatrix<f64>, time_index: &[f64]) -> Result<CovarianceProcess> {
    let mut mats = Vec::with_capacity(rows.nrows());
    for t in 0..rows.nrows() {
        let row: Vec<f64> = rows.row(t).iter().copied().collect();
        let sym = spd::unvec_upper_slice(&row)?;
        mats.push(spd::matrix_exp(&sym));
    }
    CovarianceProcess::new(time_index.to_vec(), mats)
}

/// Pooled mean over trials, times, and elements of the posterior variance
/// of the reconstruction F·B.
pub fn posterior_variance(draws: &ChainDraws) -> Result<f64> {
    let first = draws.states.first().ok_or(Error::EmptyChain)?;
    let n = first.n_trials();
    let d = draws.states.len() as f64;
    if d < 2.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        let preds: Vec<DMatrix<f64>> = draws.states.iter().map(|s| s.predicted(i)).collect();
        let (t_w, q) = preds[0].shape();
        for t in 0..t_w {
            for l in 0..q {
                let mean: f64 = preds.iter().map(|p| p[(t, l)]).sum::<f64>() / d;
                let var: f64 = preds
                    .iter()
                    .map(|p| (p[(t, l)] - mean).powi(2))
                    .sum::<f64>()
                    / (d - 1.0);
                total += var;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Fraction of the series' total sum of squares captured by the posterior
/// median reconstruction: 1 − ‖Y − median(F·B)‖²/‖Y‖².
pub fn variance_explained(draws: &ChainDraws, y: &LogCovSeries) -> Result<f64> {
    let medians = reconstruct_log_median(draws)?;
    let mut resid = 0.0;
    for (i, m) in medians.iter().enumerate() {
        resid += (y.trial(i) - m).norm_squared();
    }
    Ok(1.0 - resid / y.sum_sq())
}

// ---------------------------------------------------------------------------
// Prior-predictive moments and simulation
// ---------------------------------------------------------------------------

/// Fixed parameters for prior-predictive computations.
#[derive(Debug, Clone)]
pub struct FixedParams {
    pub loadings: DMatrix<f64>,
    pub sigma2: f64,
    pub theta: Vec<f64>,
    pub family: KernelFamily,
}

/// Closed-form model covariance Cov(Y_j(s), Y_j'(s+lag)) under fixed
/// parameters: Σ_k β_kj β_kj' κ(lag; θ_k) + σ²·1{j=j'}.
pub fn prior_predictive_cov(params: &FixedParams, lag: f64, j: usize, jp: usize) -> f64 {
    let r = params.loadings.nrows();
    let mut total = 0.0;
    for k in 0..r {
        let spec = KernelSpec::new(params.family, params.theta[k]).expect("positive theta");
        total += params.loadings[(k, j)] * params.loadings[(k, jp)] * kernel_eval(&spec, 0.0, lag);
    }
    if j == jp {
        total += params.sigma2;
    }
    total
}

/// Simulator for Y under the prior with fixed parameters; factor Gram
/// Cholesky factors are computed once.
///
/// The noise vector ε is drawn once per trial and held constant across the
/// grid, matching the closed form in [`prior_predictive_cov`], where
/// σ²·1{j=j'} persists at every lag.
pub struct PriorSimulator {
    chols: Vec<Cholesky<f64, Dyn>>,
    params: FixedParams,
    t_w: usize,
}

impl PriorSimulator {
    pub fn new(params: FixedParams, grid: &[f64]) -> Result<Self> {
        let mut chols = Vec::with_capacity(params.theta.len());
        for &theta in &params.theta {
            let spec = KernelSpec::new(params.family, theta)?;
            let gram = gram_matrix(&spec, grid)?;
            let chol = Cholesky::new(gram).ok_or(Error::NotPositiveDefinite {
                min_eigenvalue: f64::NAN,
            })?;
            chols.push(chol);
        }
        Ok(Self {
            chols,
            params,
            t_w: grid.len(),
        })
    }

    /// One T_w×q draw of Y = F·B + ε for a single trial.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> DMatrix<f64> {
        let r = self.params.loadings.nrows();
        let q = self.params.loadings.ncols();
        let mut f = DMatrix::zeros(self.t_w, r);
        for j in 0..r {
            let z = DVector::from_fn(self.t_w, |_, _| draw_std_normal(rng));
            f.set_column(j, &(self.chols[j].l() * z));
        }
        let mut y = f * &self.params.loadings;
        let sigma = self.params.sigma2.sqrt();
        let eps = DVector::from_fn(q, |_, _| sigma * draw_std_normal(rng));
        for t in 0..self.t_w {
            for l in 0..q {
                y[(t, l)] += eps[l];
            }
        }
        y
    }
}

#[cfg(test)]
mod tests;
