use super::*;
use crate::kernels::KernelFamily;
use approx::assert_relative_eq;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

fn se() -> KernelFamily {
    KernelFamily::SquaredExponential
}

fn grid(t_w: usize) -> Vec<f64> {
    (0..t_w).map(|t| t as f64).collect()
}

fn base_config(r: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        n_factors: r,
        kernel_family: se(),
        ls_prior: LengthScalePrior::new(8.0, 2.0).unwrap(),
        loading_prior_var: 1.0,
        noise_prior: NoisePrior {
            shape: 2.0,
            rate: 1.0,
        },
        horseshoe_global_scale: 0.1,
        mcmc: McmcConfig {
            n_draws: 100,
            n_burn: 20,
            thin: 2,
            seed,
            proposal_sd: 0.3,
        },
    }
}

fn random_series(n: usize, t_w: usize, q: usize, rng: &mut impl Rng) -> LogCovSeries {
    let values = (0..n)
        .map(|_| DMatrix::from_fn(t_w, q, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    LogCovSeries::from_values(values, grid(t_w)).unwrap()
}

/// Y simulated from a known factor model; returns (series, truth F·B per trial).
fn synthetic_from_model(
    n: usize,
    t_w: usize,
    q: usize,
    r: usize,
    theta: f64,
    noise_sd: f64,
    rng: &mut impl Rng,
) -> (LogCovSeries, Vec<DMatrix<f64>>) {
    let spec = KernelSpec::new(se(), theta).unwrap();
    let gram = gram_matrix(&spec, &grid(t_w)).unwrap();
    let chol = Cholesky::new(gram).unwrap();
    let loadings = DMatrix::from_fn(r, q, |_, _| rng.gen_range(-1.0..1.0));
    let mut values = Vec::with_capacity(n);
    let mut truths = Vec::with_capacity(n);
    for _ in 0..n {
        let mut f = DMatrix::zeros(t_w, r);
        for j in 0..r {
            let z = DVector::from_fn(t_w, |_, _| draw_std_normal(rng));
            f.set_column(j, &(chol.l() * z));
        }
        let truth = &f * &loadings;
        let noisy = DMatrix::from_fn(t_w, q, |t, l| truth[(t, l)] + noise_sd * {
            let z: f64 = draw_std_normal(rng);
            z
        });
        values.push(noisy);
        truths.push(truth);
    }
    (
        LogCovSeries::from_values(values, grid(t_w)).unwrap(),
        truths,
    )
}

// --- factor conditional ---------------------------------------------------

#[test]
fn zero_loading_row_leaves_gp_prior() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let y = random_series(2, 10, 3, &mut rng);
    let state = ModelState {
        factors: vec![DMatrix::zeros(10, 1); 2],
        loadings: DMatrix::zeros(1, 3),
        sigma2: 0.5,
        theta: vec![3.0],
        lambda: None,
    };
    let cond = factor_conditional(&y, &state, 0, se()).unwrap();
    for mean in &cond.means {
        assert!(mean.amax() < 1e-12);
    }
    let spec = KernelSpec::new(se(), 3.0).unwrap();
    let k = gram_matrix(&spec, y.time_index()).unwrap();
    assert!((cond.covariance - k).amax() < 1e-10);
}

#[test]
fn vanishing_noise_interpolates_observations() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let y = random_series(1, 12, 1, &mut rng);
    // σ² far below the 1e-8 gram jitter, so even the flattest eigendirections
    // of K are interpolated.
    let state = ModelState {
        factors: vec![DMatrix::zeros(12, 1)],
        loadings: DMatrix::from_element(1, 1, 1.0),
        sigma2: 1e-14,
        theta: vec![4.0],
        lambda: None,
    };
    let cond = factor_conditional(&y, &state, 0, se()).unwrap();
    let diff = &cond.means[0] - y.trial(0).column(0);
    assert!(diff.amax() < 1e-5, "max deviation {:.2e}", diff.amax());
    assert!(cond.covariance.amax() < 1e-6);
}

/// Dense joint-Gaussian conditioning of one factor on its residual.
fn dense_factor_oracle(
    resid: &DMatrix<f64>,
    b: &DVector<f64>,
    sigma2: f64,
    k: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let t_w = resid.nrows();
    let q = resid.ncols();
    // C_yy = bbᵀ⊗K + σ²I with index l·T_w + t; C_fy[t, (l,t')] = b_l K[t,t'].
    let mut c_yy = DMatrix::zeros(q * t_w, q * t_w);
    for l in 0..q {
        for lp in 0..q {
            for t in 0..t_w {
                for tp in 0..t_w {
                    c_yy[(l * t_w + t, lp * t_w + tp)] = b[l] * b[lp] * k[(t, tp)];
                }
            }
        }
    }
    for i in 0..q * t_w {
        c_yy[(i, i)] += sigma2;
    }
    let mut c_fy = DMatrix::zeros(t_w, q * t_w);
    for t in 0..t_w {
        for l in 0..q {
            for tp in 0..t_w {
                c_fy[(t, l * t_w + tp)] = b[l] * k[(t, tp)];
            }
        }
    }
    let obs = DVector::from_fn(q * t_w, |idx, _| resid[(idx % t_w, idx / t_w)]);
    let c_yy_inv = c_yy.try_inverse().unwrap();
    let mean = &c_fy * &c_yy_inv * obs;
    let cov = k - &c_fy * c_yy_inv * c_fy.transpose();
    (mean, cov)
}

#[test]
fn factor_conditional_matches_dense_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let (n, t_w, q) = (2, 10, 3);
    let y = random_series(n, t_w, q, &mut rng);
    let loadings = DMatrix::from_fn(1, q, |_, _| rng.gen_range(-1.0..1.0));
    let state = ModelState {
        factors: vec![DMatrix::zeros(t_w, 1); n],
        loadings: loadings.clone(),
        sigma2: 0.3,
        theta: vec![2.5],
        lambda: None,
    };
    let cond = factor_conditional(&y, &state, 0, se()).unwrap();
    let spec = KernelSpec::new(se(), 2.5).unwrap();
    let k = gram_matrix(&spec, y.time_index()).unwrap();
    let b = loadings.row(0).transpose();
    for i in 0..n {
        let (mean, cov) = dense_factor_oracle(y.trial(i), &b, 0.3, &k);
        assert!((&cond.means[i] - mean).amax() < 1e-6, "trial {i} mean");
        assert!((&cond.covariance - cov).amax() < 1e-6);
    }
}

// --- loadings and noise ----------------------------------------------------

#[test]
fn null_design_recovers_prior_and_pooled_noise() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let (n, t_w, q) = (2, 8, 3);
    let y = random_series(n, t_w, q, &mut rng);
    let factors = vec![DMatrix::zeros(t_w, 2); n];
    let cfg = base_config(2, 0);
    let post = loadings_noise_posterior(&y, &factors, &cfg).unwrap();
    assert!(post.coef_mean.amax() < 1e-14);
    // Precision reduces to the prior precision I/v.
    let expected_prec = DMatrix::<f64>::identity(2, 2) / cfg.loading_prior_var;
    assert!((post.coef_precision.clone() - expected_prec).amax() < 1e-12);
    assert_relative_eq!(
        post.noise_shape,
        cfg.noise_prior.shape + (n * t_w * q) as f64 / 2.0,
        epsilon = 1e-12
    );
    assert_relative_eq!(
        post.noise_rate,
        cfg.noise_prior.rate + y.sum_sq() / 2.0,
        max_relative = 1e-12
    );
}

#[test]
fn noiseless_regression_recovers_loadings() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let (n, t_w, q, r) = (4, 500, 3, 2);
    let truth = DMatrix::from_fn(r, q, |_, _| rng.gen_range(-1.0..1.0));
    let factors: Vec<DMatrix<f64>> = (0..n)
        .map(|_| DMatrix::from_fn(t_w, r, |_, _| draw_std_normal(&mut rng)))
        .collect();
    let values: Vec<DMatrix<f64>> = factors.iter().map(|f| f * &truth).collect();
    let y = LogCovSeries::from_values(values, grid(t_w)).unwrap();
    let cfg = base_config(r, 0);
    let post = loadings_noise_posterior(&y, &factors, &cfg).unwrap();
    for j in 0..r {
        for l in 0..q {
            let rel = (post.coef_mean[(j, l)] - truth[(j, l)]).abs()
                / truth[(j, l)].abs().max(0.1);
            assert!(rel < 0.01, "loading ({j},{l}) off by {rel:.4}");
        }
    }
}

#[test]
fn conjugate_update_matches_textbook_formulas() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let (n, t_w, q, r) = (2, 6, 3, 2);
    let y = random_series(n, t_w, q, &mut rng);
    let factors: Vec<DMatrix<f64>> = (0..n)
        .map(|_| DMatrix::from_fn(t_w, r, |_, _| draw_std_normal(&mut rng)))
        .collect();
    let cfg = base_config(r, 0);
    let post = loadings_noise_posterior(&y, &factors, &cfg).unwrap();

    // Textbook route with explicit inverses on stacked design matrices.
    let mut phi = DMatrix::zeros(n * t_w, r);
    let mut ymat = DMatrix::zeros(n * t_w, q);
    for i in 0..n {
        phi.rows_mut(i * t_w, t_w).copy_from(&factors[i]);
        ymat.rows_mut(i * t_w, t_w).copy_from(y.trial(i));
    }
    let m = phi.transpose() * &phi
        + DMatrix::<f64>::identity(r, r) / cfg.loading_prior_var;
    let m_inv = m.clone().try_inverse().unwrap();
    let mut rate = cfg.noise_prior.rate;
    for l in 0..q {
        let yl = ymat.column(l).into_owned();
        let h = phi.transpose() * &yl;
        let mean = &m_inv * &h;
        assert!((post.coef_mean.column(l) - &mean).amax() < 1e-10);
        rate += 0.5 * (yl.dot(&yl) - h.dot(&mean));
    }
    assert!((post.coef_precision.clone() - m).amax() < 1e-10);
    assert_relative_eq!(post.noise_rate, rate, max_relative = 1e-10);
    assert_relative_eq!(
        post.noise_shape,
        cfg.noise_prior.shape + (n * t_w * q) as f64 / 2.0,
        epsilon = 1e-12
    );
}

// --- length scale -----------------------------------------------------------

#[test]
fn zero_proposal_sd_always_accepts() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let paths = vec![DVector::from_fn(10, |t, _| (t as f64 * 0.3).sin())];
    let prior = LengthScalePrior::new(4.0, 1.0).unwrap();
    for _ in 0..20 {
        let (theta, accepted) =
            sample_lengthscale(&paths, 3.0, se(), &prior, 0.0, &grid(10), &mut rng).unwrap();
        assert!(accepted);
        assert_eq!(theta, 3.0);
    }
}

/// Kolmogorov–Smirnov p-value (asymptotic) for a sample against a CDF.
fn ks_p_value(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    let mut d = 0.0_f64;
    for (i, x) in sample.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        p += 2.0 * (-1.0_f64).powi(k as i32 + 1) * (-2.0 * kf * kf * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

#[test]
fn flat_likelihood_recovers_prior() {
    // On a single grid point the Gram matrix is 1+jitter regardless of θ, so
    // the Metropolis chain should sample the Gamma prior (plus a θ-free
    // Gaussian factor).
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let paths = vec![DVector::from_element(1, 0.4)];
    let prior = LengthScalePrior::new(5.0, 1.5).unwrap();
    let mut theta = prior.mode();
    let mut draws = Vec::with_capacity(20_000);
    for _ in 0..21_000 {
        let (t, _) =
            sample_lengthscale(&paths, theta, se(), &prior, 0.8, &[0.0], &mut rng).unwrap();
        theta = t;
        draws.push(theta);
    }
    let mut tail: Vec<f64> = draws.split_off(1000);
    let gamma = GammaDist::new(5.0, 1.5).unwrap();
    // Thin to reduce autocorrelation before the KS comparison.
    let mut thinned: Vec<f64> = tail.drain(..).step_by(20).collect();
    let p = ks_p_value(&mut thinned, |x| gamma.cdf(x));
    assert!(p > 0.01, "KS p-value {p:.4}");
}

#[test]
fn informative_paths_recover_length_scale() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let t_w = 200;
    let g = grid(t_w);
    let spec = KernelSpec::new(se(), 10.0).unwrap();
    let chol = Cholesky::new(gram_matrix(&spec, &g).unwrap()).unwrap();
    let paths: Vec<DVector<f64>> = (0..2)
        .map(|_| {
            let z = DVector::from_fn(t_w, |_, _| draw_std_normal(&mut rng));
            chol.l() * z
        })
        .collect();
    let prior = LengthScalePrior::new(2.0, 0.2).unwrap();
    let mut theta = 3.0;
    let mut draws = Vec::new();
    for _ in 0..2000 {
        let (t, _) = sample_lengthscale(&paths, theta, se(), &prior, 0.25, &g, &mut rng).unwrap();
        theta = t;
        draws.push(theta);
    }
    let mut tail = draws.split_off(500);
    let median = median_in_place(&mut tail);
    assert!(
        (5.0..=20.0).contains(&median),
        "posterior median {median:.2}"
    );
}

// --- full chain --------------------------------------------------------------

#[test]
fn single_draw_chain_has_length_one() {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let y = random_series(2, 8, 3, &mut rng);
    let mut cfg = base_config(1, 5);
    cfg.mcmc.n_draws = 1;
    cfg.mcmc.n_burn = 0;
    cfg.mcmc.thin = 1;
    let draws = gibbs_run(&y, &cfg).unwrap();
    assert_eq!(draws.len(), 1);
    assert_eq!(draws.log_posts.len(), 1);
}

#[test]
fn same_seed_reproduces_chain_bitwise() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let y = random_series(2, 12, 3, &mut rng);
    let cfg = base_config(1, 42);
    let a = gibbs_run(&y, &cfg).unwrap();
    let b = gibbs_run(&y, &cfg).unwrap();
    assert_eq!(a.log_posts, b.log_posts);
    assert_eq!(a.accept_rate_theta, b.accept_rate_theta);
    for (sa, sb) in a.states.iter().zip(&b.states) {
        assert_eq!(sa.sigma2, sb.sigma2);
        assert_eq!(sa.loadings, sb.loadings);
        assert_eq!(sa.theta, sb.theta);
    }
}

#[test]
fn log_posterior_finite_at_every_draw() {
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let (y, _) = synthetic_from_model(3, 20, 6, 2, 6.0, 0.3, &mut rng);
    let mut cfg = base_config(2, 7);
    cfg.mcmc.n_draws = 200;
    cfg.mcmc.n_burn = 50;
    cfg.mcmc.thin = 5;
    let draws = gibbs_run(&y, &cfg).unwrap();
    assert!(!draws.is_empty());
    for lp in &draws.log_posts {
        assert!(lp.is_finite());
    }
}

#[test]
fn two_factor_synthetic_reconstruction_mse() {
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let (y, truths) = synthetic_from_model(10, 50, 15, 2, 8.0, 0.3, &mut rng);
    let mut cfg = base_config(2, 99);
    cfg.ls_prior = LengthScalePrior::new(4.0, 0.5).unwrap();
    cfg.mcmc.n_draws = 800;
    cfg.mcmc.n_burn = 200;
    cfg.mcmc.thin = 5;
    let draws = gibbs_run(&y, &cfg).unwrap();
    let medians = reconstruct_log_median(&draws).unwrap();
    let mut mse = 0.0;
    let mut count = 0;
    for (m, t) in medians.iter().zip(&truths) {
        mse += (m - t).norm_squared();
        count += m.len();
    }
    mse /= count as f64;
    assert!(mse <= 0.10, "reconstruction MSE {mse:.4}");
}

#[test]
fn reconstruction_of_constant_chain_is_exact_exponential() {
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    let y = random_series(1, 6, 3, &mut rng);
    let mut cfg = base_config(1, 3);
    cfg.mcmc.n_draws = 1;
    cfg.mcmc.n_burn = 0;
    cfg.mcmc.thin = 1;
    let draws = gibbs_run(&y, &cfg).unwrap();
    let pred = draws.states[0].predicted(0);
    let procs = reconstruct_covariance(&draws, y.time_index()).unwrap();
    assert_eq!(procs.len(), 1);
    for t in 0..6 {
        let row: Vec<f64> = pred.row(t).iter().copied().collect();
        let expected = crate::spd::matrix_exp(&crate::spd::unvec_upper_slice(&row).unwrap());
        assert!((procs[0].get(t).as_matrix() - expected.as_matrix()).amax() < 1e-12);
        assert!(procs[0].get(t).min_eigenvalue() > 0.0);
    }
}

#[test]
fn empty_chain_is_rejected() {
    let empty = ChainDraws {
        states: vec![],
        log_posts: vec![],
        accept_rate_theta: vec![],
    };
    assert!(matches!(
        reconstruct_log_median(&empty),
        Err(Error::EmptyChain)
    ));
}

// --- prior predictive ---------------------------------------------------------

fn fixed_params() -> FixedParams {
    FixedParams {
        loadings: DMatrix::from_row_slice(2, 3, &[0.8, -0.4, 0.2, 0.1, 0.9, -0.6]),
        sigma2: 0.25,
        theta: vec![4.0, 7.0],
        family: KernelFamily::SquaredExponential,
    }
}

#[test]
fn prior_cov_at_lag_zero_diagonal() {
    let p = fixed_params();
    for j in 0..3 {
        let want: f64 =
            (0..2).map(|k| p.loadings[(k, j)].powi(2)).sum::<f64>() + p.sigma2;
        assert_relative_eq!(prior_predictive_cov(&p, 0.0, j, j), want, epsilon = 1e-12);
    }
}

#[test]
fn prior_cov_vanishes_at_long_lags() {
    let p = fixed_params();
    assert!(prior_predictive_cov(&p, 1e4, 0, 1).abs() < 1e-12);
    assert_relative_eq!(
        prior_predictive_cov(&p, 1e4, 1, 1),
        p.sigma2,
        epsilon = 1e-12
    );
}

#[test]
fn prior_cov_matches_monte_carlo() {
    let params = fixed_params();
    let g = grid(12);
    let sim = PriorSimulator::new(params.clone(), &g).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(15);
    let n_draws = 10_000;
    let draws: Vec<DMatrix<f64>> = (0..n_draws).map(|_| sim.draw(&mut rng)).collect();
    let s = 3usize;
    for lag in 0..=5usize {
        for (j, jp) in [(0, 0), (0, 1), (1, 2)] {
            let xs: Vec<f64> = draws.iter().map(|d| d[(s, j)]).collect();
            let ys: Vec<f64> = draws.iter().map(|d| d[(s + lag, jp)]).collect();
            let mx = xs.iter().sum::<f64>() / n_draws as f64;
            let my = ys.iter().sum::<f64>() / n_draws as f64;
            let prods: Vec<f64> = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (x - mx) * (y - my))
                .collect();
            let est = prods.iter().sum::<f64>() / n_draws as f64;
            let var_prod = prods.iter().map(|p| (p - est).powi(2)).sum::<f64>()
                / n_draws as f64;
            let se_mc = (var_prod / n_draws as f64).sqrt();
            let want = prior_predictive_cov(&params, lag as f64, j, jp);
            assert!(
                (est - want).abs() <= 3.0 * se_mc,
                "lag {lag} pair ({j},{jp}): est {est:.4} want {want:.4} se {se_mc:.5}"
            );
        }
    }
}

// --- horseshoe -----------------------------------------------------------------

#[test]
fn auxiliary_scheme_reproduces_half_cauchy_tail() {
    // Prior-only chain: λ²|ν ~ IG(½, 1/ν), ν|λ² ~ IG(1, 1+1/λ²) has the
    // half-Cauchy as its λ marginal. Survival beyond 10 is
    // (2/π)·arctan(1/10) ≈ 1/(5π).
    let mut rng = ChaCha20Rng::seed_from_u64(16);
    let mut nu = 1.0;
    let mut hits = 0usize;
    let total = 200_000;
    for _ in 0..total {
        let lam_sq = draw_inv_gamma(&mut rng, 0.5, 1.0 / nu);
        nu = draw_inv_gamma(&mut rng, 1.0, 1.0 + 1.0 / lam_sq);
        if lam_sq.sqrt() > 10.0 {
            hits += 1;
        }
    }
    let survival = hits as f64 / total as f64;
    let target = 1.0 / (5.0 * std::f64::consts::PI);
    assert!(
        survival > target / 2.0 && survival < target * 2.0,
        "survival {survival:.5} vs {target:.5}"
    );
}

#[test]
fn pure_noise_residuals_shrink_new_loadings() {
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    let (y, _) = synthetic_from_model(3, 30, 6, 2, 6.0, 0.3, &mut rng);
    let mut cfg = base_config(2, 21);
    cfg.horseshoe_global_scale = 0.05;
    cfg.mcmc.n_draws = 500;
    cfg.mcmc.n_burn = 150;
    cfg.mcmc.thin = 2;
    let draws = gibbs_run(&y, &cfg).unwrap();
    let extended = horseshoe::add_factor_horseshoe(&y, &draws, &cfg, &mut rng).unwrap();
    assert_eq!(extended.states[0].n_factors(), 3);

    let q = y.dim_q();
    let resid_sd = {
        let medians = reconstruct_log_median(&draws).unwrap();
        let mut ss = 0.0;
        let mut count = 0;
        for (i, m) in medians.iter().enumerate() {
            ss += (y.trial(i) - m).norm_squared();
            count += m.len();
        }
        (ss / count as f64).sqrt()
    };
    for l in 0..q {
        let mut vals: Vec<f64> = extended
            .states
            .iter()
            .map(|s| s.loadings[(2, l)])
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = vals[(vals.len() as f64 * 0.025) as usize];
        let hi = vals[((vals.len() as f64 * 0.975) as usize).min(vals.len() - 1)];
        assert!(lo <= 0.0 && hi >= 0.0, "CI for loading {l}: [{lo:.3},{hi:.3}]");
        let mut abs: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
        let med = median_in_place(&mut abs);
        assert!(med < 0.1 * resid_sd.max(0.05), "median |loading| {med:.4}");
    }
}

#[test]
fn planted_residual_factor_is_detected() {
    let mut rng = ChaCha20Rng::seed_from_u64(18);
    // Residuals that ARE a coherent factor with O(1) loadings.
    let (n, t_w, q) = (3, 30, 6);
    let g = grid(t_w);
    let spec = KernelSpec::new(se(), 6.0).unwrap();
    let chol = Cholesky::new(gram_matrix(&spec, &g).unwrap()).unwrap();
    let planted = DVector::from_fn(q, |l, _| if l % 2 == 0 { 1.0 } else { -1.0 });
    let values: Vec<DMatrix<f64>> = (0..n)
        .map(|_| {
            let z = DVector::from_fn(t_w, |_, _| draw_std_normal(&mut rng));
            let f = chol.l() * z;
            DMatrix::from_fn(t_w, q, |t, l| {
                f[t] * planted[l] + 0.1 * {
                    let z: f64 = draw_std_normal(&mut rng);
                    z
                }
            })
        })
        .collect();
    let y = LogCovSeries::from_values(values, g).unwrap();

    // Base fit with one factor deliberately mismatched to leave signal:
    // fit a single factor to data that truly has one, then plant a second
    // orthogonal factor in the residual stream by refitting on y directly.
    let mut cfg = base_config(1, 31);
    cfg.mcmc.n_draws = 300;
    cfg.mcmc.n_burn = 100;
    cfg.mcmc.thin = 2;
    // Chain fit to pure noise so the residuals keep the planted factor.
    let noise_values: Vec<DMatrix<f64>> = (0..n)
        .map(|_| DMatrix::from_fn(t_w, q, |_, _| 0.05 * draw_std_normal(&mut rng)))
        .collect();
    let noise_y = LogCovSeries::from_values(noise_values, y.time_index().to_vec()).unwrap();
    let base = gibbs_run(&noise_y, &cfg).unwrap();
    // Swap in the signal-bearing series for the extension step.
    let extended = horseshoe::add_factor_horseshoe(&y, &base, &cfg, &mut rng).unwrap();

    let mut excluded = 0;
    for l in 0..q {
        let mut vals: Vec<f64> = extended
            .states
            .iter()
            .map(|s| s.loadings[(1, l)])
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = vals[(vals.len() as f64 * 0.025) as usize];
        let hi = vals[((vals.len() as f64 * 0.975) as usize).min(vals.len() - 1)];
        if lo > 0.0 || hi < 0.0 {
            excluded += 1;
        }
    }
    assert!(excluded * 2 >= q, "only {excluded}/{q} intervals exclude 0");
}
