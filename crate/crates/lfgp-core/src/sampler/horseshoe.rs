//! Factor extension on residuals with a horseshoe prior on the new loadings.
//!
//! Comparing factor counts head-on runs into identifiability trouble, so a
//! candidate factor is instead fit to the residuals of the previous fit.
//! Its loadings get the horseshoe prior β_l | λ_l ~ N(0, λ_l²ρ²),
//! λ_l ~ C⁺(0,1), sampled through the inverse-gamma auxiliary scheme
//! (λ² and an auxiliary ν each follow inverse-gamma conditionals). If the
//! extra factor is unnecessary the loadings shrink to zero; a real residual
//! signal escapes the shrinkage through the Cauchy tail.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sw::LogCovSeries;

use super::{
    draw_inv_gamma, gram_entry, median_in_place, metropolis_step, reconstruct_log_median,
    ChainDraws, GramEntry, ModelConfig, ModelState,
};

/// λ_l² | β_l, ν_l ~ IG(1, 1/ν_l + β_l²/(2ρ²)).
pub fn sample_lambda_sq<R: Rng>(rng: &mut R, beta: f64, rho: f64, nu: f64) -> f64 {
    draw_inv_gamma(rng, 1.0, 1.0 / nu + beta * beta / (2.0 * rho * rho))
}

/// ν_l | λ_l² ~ IG(1, 1 + 1/λ_l²).
pub fn sample_nu<R: Rng>(rng: &mut R, lambda_sq: f64) -> f64 {
    draw_inv_gamma(rng, 1.0, 1.0 + 1.0 / lambda_sq)
}

fn elementwise_median_matrix(mats: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let (rows, cols) = mats[0].shape();
    let mut buf = vec![0.0; mats.len()];
    DMatrix::from_fn(rows, cols, |i, j| {
        for (d, m) in mats.iter().enumerate() {
            buf[d] = m[(i, j)];
        }
        median_in_place(&mut buf)
    })
}

/// Fit one additional factor to the residuals of an existing chain and
/// return extended (r+1)-factor draws. The previous factors are frozen at
/// their posterior medians; the new factor's loadings carry λ scales in
/// [`ModelState::lambda`].
pub fn add_factor_horseshoe<R: Rng>(
    y: &LogCovSeries,
    draws: &ChainDraws,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<ChainDraws> {
    let first = draws.states.first().ok_or(Error::EmptyChain)?;
    let n = y.n_trials();
    let t_w = y.n_windows();
    let q = y.dim_q();
    let r_prev = first.n_factors();
    let rho = cfg.horseshoe_global_scale;
    let mcmc = cfg.mcmc;

    // Freeze the previous fit at its posterior medians.
    let recon_medians = reconstruct_log_median(draws)?;
    let loadings_med = {
        let mats: Vec<&DMatrix<f64>> = draws.states.iter().map(|s| &s.loadings).collect();
        elementwise_median_matrix(&mats)
    };
    let factors_med: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let mats: Vec<&DMatrix<f64>> = draws.states.iter().map(|s| &s.factors[i]).collect();
            elementwise_median_matrix(&mats)
        })
        .collect();
    let theta_med: Vec<f64> = (0..r_prev)
        .map(|j| {
            let mut vals: Vec<f64> = draws.states.iter().map(|s| s.theta[j]).collect();
            median_in_place(&mut vals)
        })
        .collect();

    let residuals: Vec<DMatrix<f64>> = (0..n)
        .map(|i| y.trial(i) - &recon_medians[i])
        .collect();
    let resid_series = LogCovSeries::from_values(residuals, y.time_index().to_vec())?;

    // Rank-1 warm start on the residuals.
    let stacked = super::stack_series(&resid_series);
    let svd = stacked.clone().svd(true, true);
    let scale = ((n * t_w) as f64).sqrt();
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let mut state = ModelState {
        factors: (0..n)
            .map(|i| DMatrix::from_fn(t_w, 1, |t, _| u[(i * t_w + t, 0)] * scale))
            .collect(),
        loadings: DMatrix::from_fn(1, q, |_, l| svd.singular_values[0] * v_t[(0, l)] / scale),
        sigma2: (stacked.norm_squared() / (n * t_w * q) as f64).max(1e-6),
        theta: vec![cfg.ls_prior.mode()],
        lambda: Some(DVector::from_element(q, 1.0)),
    };
    let mut nu = DVector::from_element(q, 1.0);

    let grid = y.time_index().to_vec();
    let mut cache: GramEntry = gram_entry(cfg.kernel_family, state.theta[0], &grid)?;

    let mut states = Vec::new();
    let mut log_posts = Vec::new();
    let mut accepts = 0usize;

    for draw in 0..mcmc.n_draws {
        if cache.theta != state.theta[0] {
            cache = gram_entry(cfg.kernel_family, state.theta[0], &grid)
                .map_err(|e| e.at_iteration(draw))?;
        }
        super::draw_factor_paths(&resid_series, &mut state, 0, &cache, rng)
            .map_err(|e| e.at_iteration(draw))?;

        // Loadings, one column at a time under its own local scale.
        let fss: f64 = state.factors.iter().map(|f| f.norm_squared()).sum();
        let lambda = state.lambda.as_mut().expect("extension state carries lambda");
        for l in 0..q {
            let mut fy = 0.0;
            for i in 0..n {
                fy += state.factors[i].column(0).dot(&resid_series.trial(i).column(l));
            }
            let prior_prec = 1.0 / (lambda[l] * lambda[l] * rho * rho);
            let var = 1.0 / (fss / state.sigma2 + prior_prec);
            let mean = var * fy / state.sigma2;
            let z: f64 = StandardNormal.sample(rng);
            state.loadings[(0, l)] = mean + var.sqrt() * z;
        }

        // Local scales and auxiliaries.
        for l in 0..q {
            let lam_sq = sample_lambda_sq(rng, state.loadings[(0, l)], rho, nu[l]);
            lambda[l] = lam_sq.sqrt();
            nu[l] = sample_nu(rng, lam_sq);
        }

        // Pooled noise for the residual model.
        let mut sse = 0.0;
        for i in 0..n {
            sse += (resid_series.trial(i) - state.predicted(i)).norm_squared();
        }
        state.sigma2 = draw_inv_gamma(
            rng,
            cfg.noise_prior.shape + (n * t_w * q) as f64 / 2.0,
            cfg.noise_prior.rate + sse / 2.0,
        );

        // Length scale of the new factor.
        let paths: Vec<DVector<f64>> = (0..n)
            .map(|i| state.factors[i].column(0).into_owned())
            .collect();
        let current = super::gp_loglik_decomp(&paths, &cache.decomp)
            + cfg.ls_prior.log_density(state.theta[0])?
            + state.theta[0].ln();
        let (theta, accepted) = metropolis_step(
            &paths,
            state.theta[0],
            current,
            cfg.kernel_family,
            &cfg.ls_prior,
            mcmc.proposal_sd,
            &grid,
            rng,
        )
        .map_err(|e| e.at_iteration(draw))?;
        if accepted {
            accepts += 1;
            state.theta[0] = theta;
            cache = gram_entry(cfg.kernel_family, theta, &grid)
                .map_err(|e| e.at_iteration(draw))?;
        }

        if draw >= mcmc.n_burn && (draw - mcmc.n_burn) % mcmc.thin == 0 {
            let lp =
                extension_log_posterior(&resid_series, &state, &nu, cfg, &cache)
                    .map_err(|e| e.at_iteration(draw))?;
            states.push(extend_state(
                &factors_med,
                &loadings_med,
                &theta_med,
                &state,
            ));
            log_posts.push(lp);
        }
    }

    let mut accept_rate_theta = vec![0.0; r_prev];
    accept_rate_theta.push(accepts as f64 / mcmc.n_draws as f64);
    Ok(ChainDraws {
        states,
        log_posts,
        accept_rate_theta,
    })
}

fn extend_state(
    factors_med: &[DMatrix<f64>],
    loadings_med: &DMatrix<f64>,
    theta_med: &[f64],
    new: &ModelState,
) -> ModelState {
    let n = factors_med.len();
    let t_w = factors_med[0].nrows();
    let r_prev = loadings_med.nrows();
    let q = loadings_med.ncols();

    let factors = (0..n)
        .map(|i| {
            DMatrix::from_fn(t_w, r_prev + 1, |t, j| {
                if j < r_prev {
                    factors_med[i][(t, j)]
                } else {
                    new.factors[i][(t, 0)]
                }
            })
        })
        .collect();
    let loadings = DMatrix::from_fn(r_prev + 1, q, |j, l| {
        if j < r_prev {
            loadings_med[(j, l)]
        } else {
            new.loadings[(0, l)]
        }
    });
    let mut theta = theta_med.to_vec();
    theta.push(new.theta[0]);
    ModelState {
        factors,
        loadings,
        sigma2: new.sigma2,
        theta,
        lambda: new.lambda.clone(),
    }
}

fn extension_log_posterior(
    resid: &LogCovSeries,
    state: &ModelState,
    nu: &DVector<f64>,
    cfg: &ModelConfig,
    cache: &GramEntry,
) -> Result<f64> {
    let n = resid.n_trials();
    let t_w = resid.n_windows();
    let q = resid.dim_q();
    let rho = cfg.horseshoe_global_scale;
    let lambda = state.lambda.as_ref().expect("extension state carries lambda");

    let mut sse = 0.0;
    for i in 0..n {
        sse += (resid.trial(i) - state.predicted(i)).norm_squared();
    }
    let lik = -0.5 * (n * t_w * q) as f64 * (super::LN_2PI + state.sigma2.ln())
        - sse / (2.0 * state.sigma2);

    let paths: Vec<DVector<f64>> = (0..n)
        .map(|i| state.factors[i].column(0).into_owned())
        .collect();
    let gp = super::gp_loglik_decomp(&paths, &cache.decomp);

    let mut shrinkage = 0.0;
    for l in 0..q {
        let var = lambda[l] * lambda[l] * rho * rho;
        shrinkage += -0.5 * (super::LN_2PI + var.ln())
            - state.loadings[(0, l)].powi(2) / (2.0 * var);
        shrinkage += log_inv_gamma_pdf(lambda[l] * lambda[l], 0.5, 1.0 / nu[l]);
        shrinkage += log_inv_gamma_pdf(nu[l], 0.5, 1.0);
    }

    let noise = cfg.noise_prior.log_density(state.sigma2);
    let theta_prior = cfg.ls_prior.log_density(state.theta[0])?;
    Ok(lik + gp + shrinkage + noise + theta_prior)
}

fn log_inv_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}
