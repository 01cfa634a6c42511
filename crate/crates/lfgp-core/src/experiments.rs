//! Synthetic-data generators and the headline experiment harnesses:
//! posterior contraction over (n, t) cells, estimator comparison across
//! dynamics scenarios, and condition-separation runs.
//!
//! Every harness derives one RNG stream per replicate from a master seed,
//! so replicates can run in parallel and whole tables reproduce bit for bit.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::baselines::{self, HmmFitOptions};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::evaluation::{extract_trajectories, separation_score, Classifier};
use crate::process::CovarianceProcess;
use crate::sampler::{
    gibbs_run, posterior_variance, reconstruct_covariance, reconstruct_log_median,
    ModelConfig, PriorSimulator,
};
use crate::spd::{self, log_euclidean_distance, SpdMatrix};
use crate::sw::{to_log_cov_series, LogCovSeries, TaperSpec, Trial, TrialSet};

/// The three latent-dynamics families of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    SquareWave,
    PiecewiseLinear,
    CubicSpline,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::SquareWave => "square_wave",
            ScenarioKind::PiecewiseLinear => "piecewise_linear",
            ScenarioKind::CubicSpline => "cubic_spline",
        }
    }

    pub fn parse(s: &str) -> Option<ScenarioKind> {
        match s {
            "square_wave" => Some(ScenarioKind::SquareWave),
            "piecewise_linear" => Some(ScenarioKind::PiecewiseLinear),
            "cubic_spline" => Some(ScenarioKind::CubicSpline),
            _ => None,
        }
    }
}

/// Interior knot / change-point placement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KnotSpec {
    /// Random distinct interior positions.
    Count(usize),
    /// Explicit interior positions (strictly inside 0..T−1).
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct DynamicsScenario {
    pub kind: ScenarioKind,
    pub r_true: usize,
    pub t_len: usize,
    pub knots: KnotSpec,
    pub amplitude: f64,
}

impl DynamicsScenario {
    /// Scenario defaults mirroring the simulation study: 4 latent factors,
    /// a handful of change points or knots.
    pub fn standard(kind: ScenarioKind, t_len: usize) -> Self {
        let knots = match kind {
            ScenarioKind::SquareWave => KnotSpec::Count(3),
            ScenarioKind::PiecewiseLinear => KnotSpec::Count(4),
            ScenarioKind::CubicSpline => KnotSpec::Count(6),
        };
        Self {
            kind,
            r_true: 4,
            t_len,
            knots,
            amplitude: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.t_len < 2 * self.r_true {
            return Err(Error::InvalidParameter(format!(
                "t_len {} below 2·r_true = {}",
                self.t_len,
                2 * self.r_true
            )));
        }
        Ok(())
    }
}

fn interior_knots(spec: &KnotSpec, t_len: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut ks = match spec {
        KnotSpec::Explicit(v) => v.clone(),
        KnotSpec::Count(c) => {
            let mut picked = Vec::with_capacity(*c);
            while picked.len() < *c {
                let cand = rng.gen_range(1..t_len - 1);
                if !picked.contains(&cand) {
                    picked.push(cand);
                }
            }
            picked
        }
    };
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Natural cubic spline through (xs, ys), evaluated at integer 0..t_len.
fn natural_spline_eval(xs: &[f64], ys: &[f64], t_len: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(n >= 2);
    // Second derivatives from the standard tridiagonal system.
    let mut m = vec![0.0; n];
    if n > 2 {
        let mut sub = vec![0.0; n - 2];
        let mut diag = vec![0.0; n - 2];
        let mut sup = vec![0.0; n - 2];
        let mut rhs = vec![0.0; n - 2];
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            sub[i - 1] = h0;
            diag[i - 1] = 2.0 * (h0 + h1);
            sup[i - 1] = h1;
            rhs[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
        }
        // Thomas algorithm.
        for i in 1..n - 2 {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        m[n - 2] = rhs[n - 3] / diag[n - 3];
        for i in (1..n - 2).rev() {
            m[i] = (rhs[i - 1] - sup[i - 1] * m[i]) / diag[i - 1];
        }
    }
    let mut out = Vec::with_capacity(t_len);
    let mut seg = 0usize;
    for t in 0..t_len {
        let x = t as f64;
        while seg + 2 < n && x > xs[seg + 1] {
            seg += 1;
        }
        let h = xs[seg + 1] - xs[seg];
        let a = (xs[seg + 1] - x) / h;
        let b = (x - xs[seg]) / h;
        let v = a * ys[seg]
            + b * ys[seg + 1]
            + ((a * a * a - a) * m[seg] + (b * b * b - b) * m[seg + 1]) * h * h / 6.0;
        out.push(v);
    }
    out
}

/// T×r latent dynamics: piecewise-constant ±a square waves, continuous
/// piecewise-linear paths, or C² natural cubic splines through random
/// control values.
pub fn gen_dynamics(scenario: &DynamicsScenario, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    scenario.validate()?;
    let t_len = scenario.t_len;
    let a = scenario.amplitude;
    let mut u = DMatrix::zeros(t_len, scenario.r_true);
    for j in 0..scenario.r_true {
        let ks = interior_knots(&scenario.knots, t_len, rng);
        match scenario.kind {
            ScenarioKind::SquareWave => {
                let mut level = if rng.gen::<bool>() { a } else { -a };
                let mut next_change = 0usize;
                for t in 0..t_len {
                    if next_change < ks.len() && t == ks[next_change] {
                        level = -level;
                        next_change += 1;
                    }
                    u[(t, j)] = level;
                }
            }
            ScenarioKind::PiecewiseLinear => {
                let mut xs = vec![0.0];
                xs.extend(ks.iter().map(|&k| k as f64));
                xs.push((t_len - 1) as f64);
                let ys: Vec<f64> = (0..xs.len()).map(|_| rng.gen_range(-a..a)).collect();
                let mut seg = 0usize;
                for t in 0..t_len {
                    let x = t as f64;
                    while seg + 2 < xs.len() && x > xs[seg + 1] {
                        seg += 1;
                    }
                    let w = (x - xs[seg]) / (xs[seg + 1] - xs[seg]);
                    u[(t, j)] = ys[seg] * (1.0 - w) + ys[seg + 1] * w;
                }
            }
            ScenarioKind::CubicSpline => {
                let mut xs = vec![0.0];
                xs.extend(ks.iter().map(|&k| k as f64));
                xs.push((t_len - 1) as f64);
                let ys: Vec<f64> = (0..xs.len()).map(|_| rng.gen_range(-a..a)).collect();
                let vals = natural_spline_eval(&xs, &ys, t_len);
                for t in 0..t_len {
                    u[(t, j)] = vals[t];
                }
            }
        }
    }
    Ok(u)
}

/// Latent dynamics, mixing matrix, and the induced covariance process
/// K(t) = exp(unvec(U(t)·A)).
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub dynamics: DMatrix<f64>,
    pub mixing: DMatrix<f64>,
    pub log_cov_rows: DMatrix<f64>,
    pub cov: CovarianceProcess,
}

/// Draw a standard-normal mixing matrix and rescale it so every log-scale
/// matrix has spectral norm ≤ 2 (eigenvalues of K inside [e⁻², e²], hence
/// condition number ≤ e⁴ and log-cov entries in [−2, 2]).
pub fn gen_ground_truth(
    scenario: &DynamicsScenario,
    signal_count: usize,
    rng: &mut impl Rng,
) -> Result<GroundTruth> {
    let q = spd::triangular_len(signal_count);
    let dynamics = gen_dynamics(scenario, rng)?;
    let mut mixing = DMatrix::from_fn(scenario.r_true, q, |_, _| {
        { let z: f64 = StandardNormal.sample(rng); z }
    });
    let rows = &dynamics * &mixing;
    let mut max_norm: f64 = 0.0;
    for t in 0..scenario.t_len {
        let row: Vec<f64> = rows.row(t).iter().copied().collect();
        let sym = spd::unvec_upper_slice(&row)?;
        let spectral = crate::linalg::sym_eigen(sym.as_matrix()).0.amax();
        max_norm = max_norm.max(spectral);
    }
    if max_norm > 2.0 {
        mixing *= 2.0 / max_norm;
    }
    let log_cov_rows = &dynamics * &mixing;
    let mut mats = Vec::with_capacity(scenario.t_len);
    for t in 0..scenario.t_len {
        let row: Vec<f64> = log_cov_rows.row(t).iter().copied().collect();
        mats.push(spd::matrix_exp(&spd::unvec_upper_slice(&row)?));
    }
    let cov = CovarianceProcess::new((0..scenario.t_len).map(|t| t as f64).collect(), mats)?;
    Ok(GroundTruth {
        dynamics,
        mixing,
        log_cov_rows,
        cov,
    })
}

/// n independent trials X(t) ~ N(0, K(t)) along a covariance process.
pub fn gen_dataset(
    cov: &CovarianceProcess,
    n: usize,
    sample_rate_hz: f64,
    label: Option<&str>,
    rng: &mut impl Rng,
) -> Result<TrialSet> {
    let t_len = cov.len();
    let p = cov.dim();
    let chols: Vec<Cholesky<f64, nalgebra::Dyn>> = cov
        .matrices()
        .iter()
        .map(|m| {
            Cholesky::new(m.as_matrix().clone()).ok_or(Error::NotPositiveDefinite {
                min_eigenvalue: m.min_eigenvalue(),
            })
        })
        .collect::<Result<_>>()?;
    let mut trials = Vec::with_capacity(n);
    for _ in 0..n {
        let mut samples = DMatrix::zeros(t_len, p);
        for t in 0..t_len {
            let z = DVector::from_fn(p, |_, _| { let z: f64 = StandardNormal.sample(rng); z });
            samples.row_mut(t).copy_from(&(chols[t].l() * z).transpose());
        }
        trials.push(Trial::new(samples, sample_rate_hz, label.map(str::to_owned))?);
    }
    TrialSet::new(trials)
}

/// Mean over time of the Log-Euclidean distance between two covariance
/// processes of equal length.
pub fn reconstruction_loss(est: &CovarianceProcess, truth: &CovarianceProcess) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::DimMismatch {
            left: est.len(),
            right: truth.len(),
        });
    }
    if est.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (e, t) in est.matrices().iter().zip(truth.matrices()) {
        total += log_euclidean_distance(e, t)?;
    }
    Ok(total / est.len() as f64)
}

// ---------------------------------------------------------------------------
// Posterior contraction (cells over n and t)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ContractionConfig {
    /// Signal count p for the synthetic model (q = p(p+1)/2).
    pub signal_count: usize,
    pub r_true: usize,
    pub theta_true: f64,
    pub noise_sd_true: f64,
    pub replicates: usize,
    pub model: ModelConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct ContractionCell {
    pub n: usize,
    pub t: usize,
    pub mse: f64,
    pub posterior_variance: f64,
    pub seed: u64,
}

/// Simulate a 2-factor log-covariance series directly from the model and
/// measure MSE of the posterior-median reconstruction plus pooled posterior
/// variance, per (n, t) cell, averaged over replicates.
pub fn contraction_experiment(
    cells: &[(usize, usize)],
    cfg: &ContractionConfig,
) -> Result<Vec<ContractionCell>> {
    if cells.is_empty() {
        return Err(Error::InvalidParameter("no cells given".into()));
    }
    let q = spd::triangular_len(cfg.signal_count);
    let jobs: Vec<(usize, usize, usize, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, &(n, t))| {
            (0..cfg.replicates)
                .map(move |rep| (n, t, rep, (ci * 1000 + rep) as u64))
        })
        .collect();
    let results: Vec<Result<(usize, usize, f64, f64)>> = jobs
        .par_iter()
        .map(|&(n, t, _rep, stream)| {
            let seed = derive_seed(cfg.seed, stream);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (y, truth_rows) = simulate_model_series(
                n,
                t,
                q,
                cfg.r_true,
                cfg.theta_true,
                cfg.noise_sd_true,
                &mut rng,
            )?;
            let mut model = cfg.model.clone();
            model.mcmc.seed = derive_seed(seed, 1);
            let draws = gibbs_run(&y, &model)?;
            let medians = reconstruct_log_median(&draws)?;
            let mut mse = 0.0;
            let mut count = 0usize;
            for (m, truth) in medians.iter().zip(&truth_rows) {
                mse += (m - truth).norm_squared();
                count += m.len();
            }
            mse /= count as f64;
            let pv = posterior_variance(&draws)?;
            Ok((n, t, mse, pv))
        })
        .collect();

    let mut cells_out = Vec::with_capacity(cells.len());
    let mut idx = 0usize;
    for (ci, &(n, t)) in cells.iter().enumerate() {
        let mut mse_acc = 0.0;
        let mut pv_acc = 0.0;
        for _ in 0..cfg.replicates {
            let (rn, rt, mse, pv) = results[idx].clone()?;
            debug_assert_eq!((rn, rt), (n, t));
            mse_acc += mse;
            pv_acc += pv;
            idx += 1;
        }
        cells_out.push(ContractionCell {
            n,
            t,
            mse: mse_acc / cfg.replicates as f64,
            posterior_variance: pv_acc / cfg.replicates as f64,
            seed: derive_seed(cfg.seed, (ci * 1000) as u64),
        });
    }
    Ok(cells_out)
}

/// Y drawn from the prior with fixed loadings; returns the series and the
/// noiseless truth F·B per trial.
pub fn simulate_model_series(
    n: usize,
    t_w: usize,
    q: usize,
    r: usize,
    theta: f64,
    noise_sd: f64,
    rng: &mut impl Rng,
) -> Result<(LogCovSeries, Vec<DMatrix<f64>>)> {
    use crate::kernels::{gram_matrix, KernelFamily, KernelSpec};
    let grid: Vec<f64> = (0..t_w).map(|t| t as f64).collect();
    let spec = KernelSpec::new(KernelFamily::SquaredExponential, theta)?;
    let chol = Cholesky::new(gram_matrix(&spec, &grid)?).ok_or(Error::NotPositiveDefinite {
        min_eigenvalue: f64::NAN,
    })?;
    let loadings = DMatrix::from_fn(r, q, |_, _| { let z: f64 = StandardNormal.sample(rng); z });
    let mut values = Vec::with_capacity(n);
    let mut truths = Vec::with_capacity(n);
    for _ in 0..n {
        let mut f = DMatrix::zeros(t_w, r);
        for j in 0..r {
            let z = DVector::from_fn(t_w, |_, _| { let z: f64 = StandardNormal.sample(rng); z });
            f.set_column(j, &(chol.l() * z));
        }
        let truth = &f * &loadings;
        let mut noisy = truth.clone();
        for v in noisy.iter_mut() {
            *v += noise_sd * { let z: f64 = StandardNormal.sample(rng); z };
        }
        values.push(noisy);
        truths.push(truth);
    }
    Ok((LogCovSeries::from_values(values, grid)?, truths))
}

// ---------------------------------------------------------------------------
// Method comparison across scenarios
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    SwPca,
    Hmm,
    Lfgp,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::SwPca => "sw_pca",
            Method::Hmm => "hmm",
            Method::Lfgp => "lfgp",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonConfig {
    pub signal_count: usize,
    pub trial_len: usize,
    pub r_true: usize,
    pub taper: TaperSpec,
    pub center: bool,
    pub pca_components: usize,
    pub hmm_states: usize,
    pub hmm_opts: HmmFitOptions,
    /// The factor model is fit on every `fit_stride`-th window; all methods
    /// are scored on that same evaluation grid.
    pub fit_stride: usize,
    pub model: ModelConfig,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct ComparisonRow {
    pub scenario: ScenarioKind,
    pub method: Method,
    pub replicate: usize,
    pub loss: f64,
    pub seed: u64,
}

/// Median and standard deviation of losses per (scenario, method).
#[derive(Debug, Clone, Copy)]
pub struct ComparisonSummary {
    pub scenario: ScenarioKind,
    pub method: Method,
    pub median_loss: f64,
    pub sd_loss: f64,
    pub replicates: usize,
}

/// One simulated data set per replicate: ground-truth dynamics, raw trials,
/// sliding-window log-covariance, then all three estimators scored against
/// the truth at the shared evaluation grid.
pub fn comparison_experiment(
    scenarios: &[ScenarioKind],
    cfg: &ComparisonConfig,
) -> Result<Vec<ComparisonRow>> {
    let jobs: Vec<(ScenarioKind, usize, u64)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(si, &kind)| {
            (0..cfg.replicates).map(move |rep| {
                (kind, rep, (si * 10_000 + rep) as u64)
            })
        })
        .collect();
    let rows: Vec<Result<Vec<ComparisonRow>>> = jobs
        .par_iter()
        .map(|&(kind, rep, stream)| comparison_replicate(kind, rep, stream, cfg))
        .collect();
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

fn comparison_replicate(
    kind: ScenarioKind,
    replicate: usize,
    stream: u64,
    cfg: &ComparisonConfig,
) -> Result<Vec<ComparisonRow>> {
    let seed = derive_seed(cfg.seed, stream);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let scenario = DynamicsScenario {
        r_true: cfg.r_true,
        ..DynamicsScenario::standard(kind, cfg.trial_len)
    };
    let truth = gen_ground_truth(&scenario, cfg.signal_count, &mut rng)?;
    let trials = gen_dataset(&truth.cov, 1, 1.0, None, &mut rng)?;
    let y = to_log_cov_series(&trials, &cfg.taper, cfg.center)?;

    // Shared evaluation grid: every fit_stride-th window.
    let eval_idx: Vec<usize> = (0..y.n_windows()).step_by(cfg.fit_stride.max(1)).collect();
    let truth_eval = {
        let raw_idx: Vec<usize> = eval_idx
            .iter()
            .map(|&w| (y.time_index()[w].round() as usize).min(truth.cov.len() - 1))
            .collect();
        truth.cov.select(&raw_idx)
    };

    // SW-PCA on the full series.
    let basis = baselines::sw_pca_fit(&y, cfg.pca_components)?;
    let pca_proc = baselines::sw_pca_reconstruct(&y, &basis)?.remove(0);
    let pca_loss = reconstruction_loss(&pca_proc.select(&eval_idx), &truth_eval)?;

    // HMM on the full series, falling back to fewer states if every restart
    // degenerates.
    let mut hmm_loss = None;
    let mut s = cfg.hmm_states;
    while s >= 1 {
        match baselines::hmm_fit_logcov(&y, s, &cfg.hmm_opts, &mut rng) {
            Ok(fit) => {
                let proc = baselines::hmm_reconstruct(&fit.model, &y)?.remove(0);
                hmm_loss = Some(reconstruction_loss(&proc.select(&eval_idx), &truth_eval)?);
                break;
            }
            Err(Error::DegenerateState { .. }) if s > 1 => s -= 1,
            Err(e) => return Err(e),
        }
    }
    let hmm_loss = hmm_loss.ok_or(Error::InvalidParameter(
        "HMM failed at every state count".into(),
    ))?;

    // Factor model on the strided grid.
    let y_fit = y.strided(cfg.fit_stride.max(1));
    let mut model = cfg.model.clone();
    model.mcmc.seed = derive_seed(seed, 7);
    let draws = gibbs_run(&y_fit, &model)?;
    let lfgp_proc = reconstruct_covariance(&draws, y_fit.time_index())?.remove(0);
    let lfgp_loss = reconstruction_loss(&lfgp_proc, &truth_eval)?;

    Ok(vec![
        ComparisonRow {
            scenario: kind,
            method: Method::SwPca,
            replicate,
            loss: pca_loss,
            seed,
        },
        ComparisonRow {
            scenario: kind,
            method: Method::Hmm,
            replicate,
            loss: hmm_loss,
            seed,
        },
        ComparisonRow {
            scenario: kind,
            method: Method::Lfgp,
            replicate,
            loss: lfgp_loss,
            seed,
        },
    ])
}

pub fn summarize_comparison(rows: &[ComparisonRow]) -> Vec<ComparisonSummary> {
    let mut out = Vec::new();
    for kind in [
        ScenarioKind::SquareWave,
        ScenarioKind::PiecewiseLinear,
        ScenarioKind::CubicSpline,
    ] {
        for method in [Method::SwPca, Method::Hmm, Method::Lfgp] {
            let mut losses: Vec<f64> = rows
                .iter()
                .filter(|r| r.scenario == kind && r.method == method)
                .map(|r| r.loss)
                .collect();
            if losses.is_empty() {
                continue;
            }
            let n = losses.len();
            let mean = losses.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0))
                    .sqrt()
            } else {
                0.0
            };
            let median = crate::sampler::median_in_place(&mut losses);
            out.push(ComparisonSummary {
                scenario: kind,
                method,
                median_loss: median,
                sd_loss: sd,
                replicates: n,
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Condition separation runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SeparationConfig {
    pub signal_count: usize,
    pub trial_len: usize,
    pub trials_per_condition: usize,
    pub taper: TaperSpec,
    pub fit_stride: usize,
    pub model: ModelConfig,
    pub knn_k: usize,
    pub logistic_l2: f64,
    pub folds: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct SeparationRun {
    pub run: usize,
    pub diff_knn: f64,
    pub same_knn: f64,
    pub diff_logistic: f64,
    pub same_logistic: f64,
    pub seed: u64,
}

/// One run: different-condition data (two distinct smooth dynamics sharing
/// a mixing matrix) versus a same-condition split, each jointly fit and
/// scored with both classifiers.
pub fn separation_run(run: usize, cfg: &SeparationConfig) -> Result<SeparationRun> {
    let seed = derive_seed(cfg.seed, run as u64);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let p = cfg.signal_count;
    let scenario = DynamicsScenario {
        r_true: 2,
        ..DynamicsScenario::standard(ScenarioKind::CubicSpline, cfg.trial_len)
    };

    // Distinct dynamics for the two conditions, one mixing matrix.
    let truth_a = gen_ground_truth(&scenario, p, &mut rng)?;
    let dynamics_b = gen_dynamics(&scenario, &mut rng)?;
    let rows_b = &dynamics_b * &truth_a.mixing;
    let mut mats_b = Vec::with_capacity(scenario.t_len);
    for t in 0..scenario.t_len {
        let row: Vec<f64> = rows_b.row(t).iter().copied().collect();
        mats_b.push(spd::matrix_exp(&spd::unvec_upper_slice(&row)?));
    }
    let cov_b = CovarianceProcess::new(
        (0..scenario.t_len).map(|t| t as f64).collect(),
        mats_b,
    )?;

    let diff = score_two_sets(
        &truth_a.cov,
        &cov_b,
        "condA",
        "condB",
        cfg,
        derive_seed(seed, 11),
        &mut rng,
    )?;
    // Same-condition control: both halves drawn from condition A.
    let same = score_two_sets(
        &truth_a.cov,
        &truth_a.cov,
        "splitA1",
        "splitA2",
        cfg,
        derive_seed(seed, 13),
        &mut rng,
    )?;

    Ok(SeparationRun {
        run,
        diff_knn: diff.0,
        same_knn: same.0,
        diff_logistic: diff.1,
        same_logistic: same.1,
        seed,
    })
}

#[allow(clippy::too_many_arguments)]
fn score_two_sets(
    cov_a: &CovarianceProcess,
    cov_b: &CovarianceProcess,
    label_a: &str,
    label_b: &str,
    cfg: &SeparationConfig,
    fit_seed: u64,
    rng: &mut ChaCha20Rng,
) -> Result<(f64, f64)> {
    let set_a = gen_dataset(cov_a, cfg.trials_per_condition, 1.0, Some(label_a), rng)?;
    let set_b = gen_dataset(cov_b, cfg.trials_per_condition, 1.0, Some(label_b), rng)?;
    let mut trials = set_a.trials().to_vec();
    trials.extend(set_b.trials().to_vec());
    let set = TrialSet::new(trials)?;
    let labels = set.labels();

    let y = to_log_cov_series(&set, &cfg.taper, true)?.strided(cfg.fit_stride.max(1));
    let mut model = cfg.model.clone();
    model.mcmc.seed = fit_seed;
    let draws = gibbs_run(&y, &model)?;
    let trajs = extract_trajectories(&draws, &labels)?;

    let knn = separation_score(
        &trajs[0],
        &trajs[1],
        &Classifier::Knn { k: cfg.knn_k },
        cfg.folds,
        rng,
    )?;
    let logistic = separation_score(
        &trajs[0],
        &trajs[1],
        &Classifier::Logistic {
            l2: cfg.logistic_l2,
        },
        cfg.folds,
        rng,
    )?;
    Ok((knn.accuracy_mean, logistic.accuracy_mean))
}

/// Run several seeded separation comparisons (in parallel).
pub fn separation_experiment(runs: usize, cfg: &SeparationConfig) -> Result<Vec<SeparationRun>> {
    (0..runs)
        .into_par_iter()
        .map(|run| separation_run(run, cfg))
        .collect()
}

// ---------------------------------------------------------------------------
// Theorem-style stationarity check support
// ---------------------------------------------------------------------------

/// Empirical lag-h covariance of prior draws per start time, for checking
/// that the induced process is weakly stationary.
pub fn empirical_lag_cov(
    sim: &PriorSimulator,
    n_draws: usize,
    lag: usize,
    j: usize,
    jp: usize,
    t_w: usize,
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<f64>) {
    let draws: Vec<DMatrix<f64>> = (0..n_draws).map(|_| sim.draw(rng)).collect();
    let mut estimates = Vec::new();
    let mut std_errors = Vec::new();
    for s in 0..t_w - lag {
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
        let var = prods.iter().map(|p| (p - est).powi(2)).sum::<f64>() / n_draws as f64;
        estimates.push(est);
        std_errors.push((var / n_draws as f64).sqrt());
    }
    (estimates, std_errors)
}

/// Degenerate-scenario control: a constant covariance process of the given
/// dimension (identity scaled), for smoke checks.
pub fn constant_truth(p: usize, t_len: usize, scale: f64) -> Result<CovarianceProcess> {
    let m = SpdMatrix::new(DMatrix::identity(p, p) * scale)?;
    CovarianceProcess::new(
        (0..t_len).map(|t| t as f64).collect(),
        vec![m; t_len],
    )
}

/// First canonical correlation between two centered time-by-feature
/// matrices; a wiring smoke check between generated dynamics and estimated
/// log-covariances.
pub fn first_canonical_correlation(x: &DMatrix<f64>, z: &DMatrix<f64>) -> f64 {
    let center = |m: &DMatrix<f64>| {
        let mut c = m.clone();
        for l in 0..m.ncols() {
            let mean = m.column(l).mean();
            for t in 0..m.nrows() {
                c[(t, l)] -= mean;
            }
        }
        c
    };
    let whiten = |m: &DMatrix<f64>| {
        let svd = m.clone().svd(true, false);
        let u = svd.u.unwrap();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-10 * svd.singular_values[0])
            .count();
        u.columns(0, rank).into_owned()
    };
    let ux = whiten(&center(x));
    let uz = whiten(&center(z));
    let cross = ux.transpose() * uz;
    let svals = cross.svd(false, false).singular_values;
    svals.max().min(1.0)
}
