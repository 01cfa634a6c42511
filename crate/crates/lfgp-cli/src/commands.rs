//! Subcommand implementations. Each command reads the shared config,
//! derives its RNG streams from the master seed, computes everything, and
//! only then writes its artifacts (a failed run leaves no partial outputs).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use lfgp_core::baselines::{self, EmissionKind, HmmFitOptions};
use lfgp_core::derive_seed;
use lfgp_core::evaluation::{extract_trajectories, separation_score, Classifier, LatentTrajectory};
use lfgp_core::experiments::{
    comparison_experiment, contraction_experiment, gen_dataset, gen_ground_truth,
    separation_experiment, summarize_comparison, ComparisonConfig, ContractionConfig,
    DynamicsScenario, ScenarioKind, SeparationConfig,
};
use lfgp_core::sampler::{
    self, gibbs_run, reconstruct_covariance, variance_explained,
    ChainDraws,
};
use lfgp_core::sw::{to_log_cov_series, LogCovSeries, TaperSpec, TrialSet};

use crate::chain_file::{load_chain, save_chain};
use crate::config::RunConfig;
use crate::data::{load_trials, write_trial};
use crate::error::{CliError, Result};
use crate::outputs::{quantile, CsvOut};

fn data_dir(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.io
        .data_dir
        .as_ref()
        .map(PathBuf::from)
        .ok_or_else(|| CliError::Config("io.data_dir is required for this command".into()))
}

fn scenario_kind(name: &str) -> Result<ScenarioKind> {
    ScenarioKind::parse(name)
        .ok_or_else(|| CliError::Config(format!("unknown scenario {name:?}")))
}

/// Shared preprocessing: load trials, run the tapered sliding-window
/// pipeline, thin the grid.
fn load_series(cfg: &RunConfig) -> Result<(TrialSet, LogCovSeries)> {
    let set = load_trials(&data_dir(cfg)?)?;
    let y = to_log_cov_series(&set, &cfg.taper()?, cfg.estimator.center)?
        .strided(cfg.model.fit_stride.max(1));
    Ok((set, y))
}

// ---------------------------------------------------------------------------

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sim = &cfg.simulate;
    let kind = scenario_kind(&sim.scenario)?;
    let scenario = DynamicsScenario {
        r_true: sim.r_true,
        ..DynamicsScenario::standard(kind, sim.trial_len)
    };
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, 0x51));
    let truth = gen_ground_truth(&scenario, sim.signal_count, &mut rng)?;
    let set = gen_dataset(&truth.cov, sim.trials, sim.sample_rate_hz, Some(&sim.label), &mut rng)?;

    let hash = cfg.hash_hex();
    for (i, trial) in set.trials().iter().enumerate() {
        let path = out.join(format!("trial_{i}_{}.csv", sim.label));
        write_trial(&path, trial.samples(), sim.sample_rate_hz)?;
    }
    let q = truth.log_cov_rows.ncols();
    let cols: Vec<String> = (1..=q).map(|l| format!("y{l}")).collect();
    let mut csv = CsvOut::create(
        &out.join("truth_logcov.csv"),
        cfg.seed,
        &hash,
        &format!("t,{}", cols.join(",")),
    )?;
    for t in 0..sim.trial_len {
        let vals: Vec<String> = (0..q)
            .map(|l| truth.log_cov_rows[(t, l)].to_string())
            .collect();
        csv.row(&format!("{t},{}", vals.join(",")))?;
    }
    csv.finish()?;

    let mut dyn_csv = CsvOut::create(
        &out.join("truth_dynamics.csv"),
        cfg.seed,
        &hash,
        &format!(
            "t,{}",
            (1..=sim.r_true)
                .map(|j| format!("u{j}"))
                .collect::<Vec<_>>()
                .join(",")
        ),
    )?;
    for t in 0..sim.trial_len {
        let vals: Vec<String> = (0..sim.r_true)
            .map(|j| truth.dynamics[(t, j)].to_string())
            .collect();
        dyn_csv.row(&format!("{t},{}", vals.join(",")))?;
    }
    dyn_csv.finish()?;
    println!(
        "simulated {} trials of {} samples ({} channels) into {}",
        sim.trials,
        sim.trial_len,
        sim.signal_count,
        out.display()
    );
    Ok(())
}

pub fn cmd_estimate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let set = load_trials(&data_dir(cfg)?)?;
    let y = to_log_cov_series(&set, &cfg.taper()?, cfg.estimator.center)?;
    let hash = cfg.hash_hex();
    let q = y.dim_q();
    let cols: Vec<String> = (1..=q).map(|l| format!("y{l}")).collect();
    let mut csv = CsvOut::create(
        &out.join("logcov.csv"),
        cfg.seed,
        &hash,
        &format!("trial,window,t,{}", cols.join(",")),
    )?;
    for i in 0..y.n_trials() {
        for w in 0..y.n_windows() {
            let vals: Vec<String> = (0..q).map(|l| y.trial(i)[(w, l)].to_string()).collect();
            csv.row(&format!(
                "{i},{w},{},{}",
                y.time_index()[w],
                vals.join(",")
            ))?;
        }
    }
    csv.finish()?;
    println!(
        "estimated log-covariance series: {} trials × {} windows × q={}",
        y.n_trials(),
        y.n_windows(),
        q
    );
    Ok(())
}

// ---------------------------------------------------------------------------

fn write_covariance_csv(
    path: &Path,
    cfg: &RunConfig,
    procs: &[lfgp_core::CovarianceProcess],
) -> Result<()> {
    let mut csv = CsvOut::create(path, cfg.seed, &cfg.hash_hex(), "trial,window,t,i,j,value")?;
    for (trial, proc) in procs.iter().enumerate() {
        for (w, (t, m)) in proc.iter().enumerate() {
            let p = m.dim();
            for i in 0..p {
                for j in 0..p {
                    csv.row(&format!("{trial},{w},{t},{i},{j},{}", m.as_matrix()[(i, j)]))?;
                }
            }
        }
    }
    csv.finish()
}

fn trajectory_quantiles(traj: &LatentTrajectory, t_w: usize, r: usize) -> Vec<(f64, f64, f64)> {
    let d = traj.draws.nrows();
    let mut out = Vec::with_capacity(t_w * r);
    let mut buf = vec![0.0; d];
    for col in 0..t_w * r {
        for (row, b) in buf.iter_mut().enumerate() {
            *b = traj.draws[(row, col)];
        }
        let lo = quantile(&mut buf, 0.025);
        let med = quantile(&mut buf, 0.5);
        let hi = quantile(&mut buf, 0.975);
        out.push((med, lo, hi));
    }
    out
}

struct FitArtifacts {
    draws: ChainDraws,
    y: LogCovSeries,
    labels: Vec<Option<String>>,
}

fn run_fit(cfg: &RunConfig) -> Result<FitArtifacts> {
    let (set, y) = load_series(cfg)?;
    let rate = set.trials()[0].sample_rate_hz();
    let model = cfg.model.model_config(rate, derive_seed(cfg.seed, 1))?;
    let draws = gibbs_run(&y, &model)?;
    Ok(FitArtifacts {
        draws,
        y,
        labels: set.labels(),
    })
}

/// The full `fit` pipeline: chain file, posterior-median covariance,
/// factor paths with credible bands, latent trajectories, and (for labeled
/// data) separation scoring — everything computed before the first write.
pub fn cmd_fit(cfg: &RunConfig, out: &Path) -> Result<()> {
    let FitArtifacts { draws, y, labels } = run_fit(cfg)?;
    let hash = cfg.hash_hex();
    let hash_bytes = cfg.hash();
    let t_w = y.n_windows();
    let r = draws.states[0].n_factors();
    let n = y.n_trials();

    // Condition handling: trajectories need every trial labeled and at
    // least two trials per condition.
    let mut by_label: BTreeMap<&str, usize> = BTreeMap::new();
    for label in labels.iter().flatten() {
        *by_label.entry(label.as_str()).or_default() += 1;
    }
    let labeled_ok = labels.iter().all(Option::is_some)
        && by_label.len() >= 2
        && by_label.values().all(|&c| c >= 2);
    let trajectories = if labeled_ok {
        Some(extract_trajectories(&draws, &labels)?)
    } else {
        None
    };

    save_chain(&out.join("chain.bin"), &draws, y.time_index(), cfg.seed, &hash_bytes)?;

    let procs = reconstruct_covariance(&draws, y.time_index())?;
    write_covariance_csv(&out.join("covariance_median.csv"), cfg, &procs)?;

    // Factor paths with 95% bands, per trial.
    let mut paths_csv = CsvOut::create(
        &out.join("factor_paths.csv"),
        cfg.seed,
        &hash,
        "trial,window,t,factor,median,lo2_5,hi97_5",
    )?;
    let mut buf = vec![0.0; draws.states.len()];
    for i in 0..n {
        for w in 0..t_w {
            for j in 0..r {
                for (d, s) in draws.states.iter().enumerate() {
                    buf[d] = s.factors[i][(w, j)];
                }
                let lo = quantile(&mut buf, 0.025);
                let med = quantile(&mut buf, 0.5);
                let hi = quantile(&mut buf, 0.975);
                paths_csv.row(&format!(
                    "{i},{w},{},{j},{med},{lo},{hi}",
                    y.time_index()[w]
                ))?;
            }
        }
    }
    paths_csv.finish()?;

    // Scalar diagnostics.
    let mut diag = CsvOut::create(&out.join("diagnostics.csv"), cfg.seed, &hash, "key,value")?;
    diag.row(&format!(
        "variance_explained,{}",
        variance_explained(&draws, &y)?
    ))?;
    for (j, a) in draws.accept_rate_theta.iter().enumerate() {
        diag.row(&format!("accept_rate_theta_{j},{a}"))?;
    }
    for (d, lp) in draws.log_posts.iter().enumerate() {
        diag.row(&format!("log_posterior_{d},{lp}"))?;
    }
    diag.finish()?;

    if let Some(trajs) = trajectories {
        let mut traj_csv = CsvOut::create(
            &out.join("trajectories.csv"),
            cfg.seed,
            &hash,
            "condition,window,t,factor,median,lo2_5,hi97_5",
        )?;
        for traj in &trajs {
            let stats = trajectory_quantiles(traj, t_w, r);
            for w in 0..t_w {
                for j in 0..r {
                    let (med, lo, hi) = stats[w * r + j];
                    traj_csv.row(&format!(
                        "{},{w},{},{j},{med},{lo},{hi}",
                        traj.condition,
                        y.time_index()[w]
                    ))?;
                }
            }
        }
        traj_csv.finish()?;

        let mut sep_csv = CsvOut::create(
            &out.join("separation.csv"),
            cfg.seed,
            &hash,
            "pair,classifier,accuracy_mean,accuracy_sd,folds",
        )?;
        let mut curve_csv = CsvOut::create(
            &out.join("separation_curve.csv"),
            cfg.seed,
            &hash,
            "pair,window,t,distance",
        )?;
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, 3));
        for a in 0..trajs.len() {
            for b in (a + 1)..trajs.len() {
                let pair = format!("{}|{}", trajs[a].condition, trajs[b].condition);
                let mut classifiers = Vec::new();
                if matches!(cfg.evaluation.classifier.as_str(), "knn" | "both") {
                    classifiers.push(Classifier::Knn {
                        k: cfg.evaluation.knn_k,
                    });
                }
                if matches!(cfg.evaluation.classifier.as_str(), "logistic" | "both") {
                    classifiers.push(Classifier::Logistic {
                        l2: cfg.evaluation.logistic_l2,
                    });
                }
                for classifier in &classifiers {
                    let report = separation_score(
                        &trajs[a],
                        &trajs[b],
                        classifier,
                        cfg.evaluation.folds,
                        &mut rng,
                    )?;
                    sep_csv.row(&format!(
                        "{pair},{},{},{},{}",
                        report.classifier,
                        report.accuracy_mean,
                        report.accuracy_sd,
                        report.folds
                    ))?;
                }
                // Per-time separation: distance between the conditions'
                // median trajectories at each window.
                let qa = trajectory_quantiles(&trajs[a], t_w, r);
                let qb = trajectory_quantiles(&trajs[b], t_w, r);
                for w in 0..t_w {
                    let mut d2 = 0.0;
                    for j in 0..r {
                        let da = qa[w * r + j].0 - qb[w * r + j].0;
                        d2 += da * da;
                    }
                    curve_csv.row(&format!(
                        "{pair},{w},{},{}",
                        y.time_index()[w],
                        d2.sqrt()
                    ))?;
                }
            }
        }
        sep_csv.finish()?;
        curve_csv.finish()?;
    }

    println!(
        "fit complete: {} retained draws, variance explained {:.3}",
        draws.len(),
        variance_explained(&draws, &y)?
    );
    Ok(())
}

pub fn cmd_addfactor(cfg: &RunConfig, out: &Path) -> Result<()> {
    let chain_path = cfg
        .io
        .chain_file
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| out.join("chain.bin"));
    let hash_bytes = cfg.hash();
    let loaded = load_chain(&chain_path, Some(&hash_bytes))?;

    let (set, y) = load_series(cfg)?;
    let rate = set.trials()[0].sample_rate_hz();
    let model = cfg.model.model_config(rate, derive_seed(cfg.seed, 2))?;
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let extended = sampler::horseshoe::add_factor_horseshoe(&y, &loaded.draws, &model, &mut rng)?;

    save_chain(
        &out.join("chain_extended.bin"),
        &extended,
        y.time_index(),
        cfg.seed,
        &hash_bytes,
    )?;

    let hash = cfg.hash_hex();
    let q = y.dim_q();
    let new_idx = extended.states[0].n_factors() - 1;
    let mut csv = CsvOut::create(
        &out.join("loading_posterior.csv"),
        cfg.seed,
        &hash,
        "coord,median,lo2_5,hi97_5,lambda_median",
    )?;
    let mut buf = vec![0.0; extended.states.len()];
    let mut lam_buf = vec![0.0; extended.states.len()];
    for l in 0..q {
        for (d, s) in extended.states.iter().enumerate() {
            buf[d] = s.loadings[(new_idx, l)];
            lam_buf[d] = s.lambda.as_ref().map_or(f64::NAN, |lam| lam[l]);
        }
        let lo = quantile(&mut buf, 0.025);
        let med = quantile(&mut buf, 0.5);
        let hi = quantile(&mut buf, 0.975);
        let lam_med = quantile(&mut lam_buf, 0.5);
        csv.row(&format!("{l},{med},{lo},{hi},{lam_med}"))?;
    }
    csv.finish()?;
    println!(
        "extended chain to {} factors ({} retained draws)",
        new_idx + 1,
        extended.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------

fn experiment_model(
    cfg: &RunConfig,
    factors: usize,
    default_mode: f64,
    seed: u64,
) -> Result<lfgp_core::sampler::ModelConfig> {
    let mut section = cfg.model.clone();
    section.factors = factors;
    if section.lengthscale_prior_mode.is_none() {
        section.lengthscale_prior_mode = Some(default_mode);
    }
    section.model_config(1.0, seed)
}

pub fn cmd_bench(cfg: &RunConfig, out: &Path) -> Result<()> {
    let exp = &cfg.experiment;
    let hash = cfg.hash_hex();

    if matches!(exp.which.as_str(), "contraction" | "both") {
        let ccfg = ContractionConfig {
            signal_count: exp.contraction_signals,
            r_true: 2,
            theta_true: exp.theta_true,
            noise_sd_true: exp.noise_sd_true,
            replicates: exp.contraction_replicates,
            model: experiment_model(cfg, 2, exp.theta_true, 0)?,
            seed: derive_seed(cfg.seed, 0xC0),
        };
        let cells = contraction_experiment(&exp.cells, &ccfg)?;
        let mut csv = CsvOut::create(
            &out.join("contraction.csv"),
            cfg.seed,
            &hash,
            "n,t,mse,posterior_variance,seed",
        )?;
        for c in &cells {
            csv.row(&format!(
                "{},{},{},{},{}",
                c.n, c.t, c.mse, c.posterior_variance, c.seed
            ))?;
        }
        csv.finish()?;
        println!("contraction: {} cells written", cells.len());
    }

    if matches!(exp.which.as_str(), "comparison" | "both") {
        let scenarios: Vec<ScenarioKind> = exp
            .scenarios
            .iter()
            .map(|s| scenario_kind(s))
            .collect::<Result<_>>()?;
        let ccfg = ComparisonConfig {
            signal_count: exp.signal_count,
            trial_len: exp.trial_len,
            r_true: exp.r_true,
            taper: cfg.taper()?,
            center: cfg.estimator.center,
            pca_components: exp.pca_components,
            hmm_states: exp.hmm_states,
            hmm_opts: HmmFitOptions {
                restarts: exp.hmm_restarts,
                max_iters: 200,
                ..HmmFitOptions::default()
            },
            fit_stride: exp.fit_stride,
            model: experiment_model(cfg, exp.r_true, 5.0 * exp.fit_stride as f64, 0)?,
            replicates: exp.comparison_replicates,
            seed: derive_seed(cfg.seed, 0xC1),
        };
        let rows = comparison_experiment(&scenarios, &ccfg)?;
        let mut csv = CsvOut::create(
            &out.join("comparison.csv"),
            cfg.seed,
            &hash,
            "scenario,method,replicate,loss,seed",
        )?;
        for row in &rows {
            csv.row(&format!(
                "{},{},{},{},{}",
                row.scenario.name(),
                row.method.name(),
                row.replicate,
                row.loss,
                row.seed
            ))?;
        }
        csv.finish()?;
        let mut summary = CsvOut::create(
            &out.join("comparison_summary.csv"),
            cfg.seed,
            &hash,
            "scenario,method,median_loss,sd_loss,replicates",
        )?;
        for s in summarize_comparison(&rows) {
            summary.row(&format!(
                "{},{},{},{},{}",
                s.scenario.name(),
                s.method.name(),
                s.median_loss,
                s.sd_loss,
                s.replicates
            ))?;
        }
        summary.finish()?;
        println!("comparison: {} rows written", rows.len());
    }
    Ok(())
}

pub fn cmd_separate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sep = &cfg.separate;
    let scfg = SeparationConfig {
        signal_count: sep.signal_count,
        trial_len: sep.trial_len,
        trials_per_condition: sep.trials_per_condition,
        taper: TaperSpec::new(sep.window_len, sep.taper_scale)?,
        fit_stride: sep.fit_stride,
        model: experiment_model(cfg, 2, 8.0 * sep.fit_stride as f64, 0)?,
        knn_k: cfg.evaluation.knn_k,
        logistic_l2: cfg.evaluation.logistic_l2,
        folds: cfg.evaluation.folds,
        seed: derive_seed(cfg.seed, 0x5E),
    };
    let runs = separation_experiment(sep.runs, &scfg)?;
    let mut csv = CsvOut::create(
        &out.join("separation.csv"),
        cfg.seed,
        &cfg.hash_hex(),
        "run,diff_knn,same_knn,diff_logistic,same_logistic,seed",
    )?;
    for r in &runs {
        csv.row(&format!(
            "{},{},{},{},{},{}",
            r.run, r.diff_knn, r.same_knn, r.diff_logistic, r.same_logistic, r.seed
        ))?;
    }
    csv.finish()?;
    println!("separation: {} runs written", runs.len());
    Ok(())
}

pub fn cmd_baseline(cfg: &RunConfig, out: &Path) -> Result<()> {
    let set = load_trials(&data_dir(cfg)?)?;
    let y = to_log_cov_series(&set, &cfg.taper()?, cfg.estimator.center)?;
    let hash = cfg.hash_hex();
    let exp = &cfg.experiment;
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, 0xBA));

    let basis = baselines::sw_pca_fit(&y, exp.pca_components.min(y.dim_q()))?;
    let pca_procs = baselines::sw_pca_reconstruct(&y, &basis)?;
    write_covariance_csv(&out.join("pca_covariance.csv"), cfg, &pca_procs)?;

    let opts = HmmFitOptions {
        restarts: exp.hmm_restarts,
        ..HmmFitOptions::default()
    };
    let mut s = exp.hmm_states;
    let fit = loop {
        match baselines::hmm_fit_logcov(&y, s, &opts, &mut rng) {
            Ok(fit) => break fit,
            Err(lfgp_core::Error::DegenerateState { .. }) if s > 1 => s -= 1,
            Err(e) => return Err(e.into()),
        }
    };
    let hmm_procs = baselines::hmm_reconstruct(&fit.model, &y)?;
    write_covariance_csv(&out.join("hmm_covariance.csv"), cfg, &hmm_procs)?;

    let s_range: Vec<usize> = (1..=exp.hmm_states).collect();
    let aic = baselines::hmm_elbow(y.trials(), &s_range, EmissionKind::MeanCov, &opts, &mut rng)?;
    let mut aic_csv = CsvOut::create(&out.join("hmm_aic.csv"), cfg.seed, &hash, "states,aic")?;
    for (states, value) in &aic {
        aic_csv.row(&format!("{states},{value}"))?;
    }
    aic_csv.finish()?;

    // Per-condition state proportions when the trials carry ≥ 2 labels.
    let mut groups: BTreeMap<String, Vec<DMatrix<f64>>> = BTreeMap::new();
    for (i, label) in set.labels().iter().enumerate() {
        if let Some(label) = label {
            groups.entry(label.clone()).or_default().push(y.trial(i).clone());
        }
    }
    if groups.len() >= 2 {
        let labels: Vec<String> = groups.keys().cloned().collect();
        let grouped: Vec<Vec<DMatrix<f64>>> = groups.into_values().collect();
        let props = baselines::hmm_state_proportions(&fit.model, &grouped)?;
        let mut csv = CsvOut::create(
            &out.join("hmm_proportions.csv"),
            cfg.seed,
            &hash,
            "condition,state,proportion",
        )?;
        for (label, row) in labels.iter().zip(&props) {
            for (state, v) in row.iter().enumerate() {
                csv.row(&format!("{label},{state},{v}"))?;
            }
        }
        csv.finish()?;
    }
    println!(
        "baselines written (HMM used {} states, log-likelihood {:.2})",
        fit.model.n_states(),
        fit.log_likelihood
    );
    Ok(())
}
