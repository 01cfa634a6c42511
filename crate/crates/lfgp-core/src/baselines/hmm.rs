//! Gaussian-emission hidden Markov model baseline.
//!
//! Baum–Welch EM with scaled forward–backward, multiple random restarts
//! (best likelihood kept), Viterbi decoding, covariance-process
//! reconstruction, per-condition state proportions, and an AIC elbow over
//! state counts.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::process::CovarianceProcess;
use crate::spd::{self, SpdMatrix};
use crate::sw::LogCovSeries;

/// Emission structure: free mean and covariance per state (the log-cov
/// feature path), or zero-mean with state-dependent covariance (the raw
/// signal path).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmissionKind {
    MeanCov,
    ZeroMeanCov,
}

#[derive(Debug, Clone)]
pub struct HmmModel {
    pub initial: DVector<f64>,
    pub transition: DMatrix<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub emission: EmissionKind,
}

impl HmmModel {
    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HmmFitOptions {
    pub max_iters: usize,
    /// Relative log-likelihood gain below which EM stops.
    pub tol: f64,
    pub restarts: usize,
    /// Diagonal loading ε: each M-step covariance gets ε·(trace/d)·I.
    pub diag_load: f64,
}

impl Default for HmmFitOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-6,
            restarts: 5,
            diag_load: 1e-6,
        }
    }
}

/// A fitted model with its final log-likelihood and the per-iteration trace
/// of the winning restart.
#[derive(Debug, Clone)]
pub struct HmmFit {
    pub model: HmmModel,
    pub log_likelihood: f64,
    pub loglik_trace: Vec<f64>,
}

fn gaussian_log_densities(
    seq: &DMatrix<f64>,
    means: &[DVector<f64>],
    chols: &[Cholesky<f64, nalgebra::Dyn>],
) -> DMatrix<f64> {
    let t_len = seq.nrows();
    let d = seq.ncols();
    let s = means.len();
    let mut out = DMatrix::zeros(t_len, s);
    for state in 0..s {
        let chol = &chols[state];
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let constant = -0.5 * (d as f64 * std::f64::consts::TAU.ln() + log_det);
        for t in 0..t_len {
            let x = seq.row(t).transpose() - &means[state];
            let half = chol
                .l()
                .solve_lower_triangular(&x)
                .expect("Cholesky factor invertible");
            out[(t, state)] = constant - 0.5 * half.norm_squared();
        }
    }
    out
}

struct EStep {
    loglik: f64,
    /// Σ_t γ_t per state.
    gamma_sum: DVector<f64>,
    /// γ_1 accumulated over sequences.
    gamma_first: DVector<f64>,
    /// Σ_t ξ_t accumulated.
    xi_sum: DMatrix<f64>,
    /// Per sequence: full γ (T×S), for moment accumulation.
    gammas: Vec<DMatrix<f64>>,
}

fn forward_backward(sequences: &[DMatrix<f64>], model: &HmmModel) -> Result<EStep> {
    let s = model.n_states();
    let chols: Vec<Cholesky<f64, nalgebra::Dyn>> = model
        .covs
        .iter()
        .map(|c| {
            Cholesky::new(c.clone()).ok_or(Error::NotPositiveDefinite {
                min_eigenvalue: f64::NAN,
            })
        })
        .collect::<Result<_>>()?;

    let mut loglik = 0.0;
    let mut gamma_sum = DVector::zeros(s);
    let mut gamma_first = DVector::zeros(s);
    let mut xi_sum = DMatrix::zeros(s, s);
    let mut gammas = Vec::with_capacity(sequences.len());

    for seq in sequences {
        let t_len = seq.nrows();
        let log_b = gaussian_log_densities(seq, &model.means, &chols);
        // Per-step max shift keeps the scaled recursion in range.
        let mut b = DMatrix::zeros(t_len, s);
        let mut shifts = DVector::zeros(t_len);
        for t in 0..t_len {
            let m = log_b.row(t).max();
            shifts[t] = m;
            for k in 0..s {
                b[(t, k)] = (log_b[(t, k)] - m).exp();
            }
        }

        let mut alpha = DMatrix::zeros(t_len, s);
        let mut scales = DVector::zeros(t_len);
        for k in 0..s {
            alpha[(0, k)] = model.initial[k] * b[(0, k)];
        }
        let c0: f64 = alpha.row(0).sum();
        scales[0] = c0;
        for k in 0..s {
            alpha[(0, k)] /= c0;
        }
        for t in 1..t_len {
            for k in 0..s {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += alpha[(t - 1, j)] * model.transition[(j, k)];
                }
                alpha[(t, k)] = acc * b[(t, k)];
            }
            let c: f64 = alpha.row(t).sum();
            if !(c > 0.0) {
                return Err(Error::NumericalBreakdown {
                    min_eigenvalue: c,
                    context: " in HMM forward pass".into(),
                });
            }
            scales[t] = c;
            for k in 0..s {
                alpha[(t, k)] /= c;
            }
        }
        loglik += scales.iter().map(|c| c.ln()).sum::<f64>() + shifts.sum();

        let mut beta = DMatrix::zeros(t_len, s);
        for k in 0..s {
            beta[(t_len - 1, k)] = 1.0;
        }
        for t in (0..t_len - 1).rev() {
            for k in 0..s {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += model.transition[(k, j)] * b[(t + 1, j)] * beta[(t + 1, j)];
                }
                beta[(t, k)] = acc / scales[t + 1];
            }
        }

        let mut gamma = DMatrix::zeros(t_len, s);
        for t in 0..t_len {
            let mut norm = 0.0;
            for k in 0..s {
                gamma[(t, k)] = alpha[(t, k)] * beta[(t, k)];
                norm += gamma[(t, k)];
            }
            for k in 0..s {
                gamma[(t, k)] /= norm;
                gamma_sum[k] += gamma[(t, k)];
            }
        }
        for k in 0..s {
            gamma_first[k] += gamma[(0, k)];
        }
        for t in 0..t_len - 1 {
            for j in 0..s {
                for k in 0..s {
                    xi_sum[(j, k)] += alpha[(t, j)]
                        * model.transition[(j, k)]
                        * b[(t + 1, k)]
                        * beta[(t + 1, k)]
                        / scales[t + 1];
                }
            }
        }
        gammas.push(gamma);
    }

    Ok(EStep {
        loglik,
        gamma_sum,
        gamma_first,
        xi_sum,
        gammas,
    })
}

fn load_diagonal(cov: &mut DMatrix<f64>, eps: f64) {
    let d = cov.nrows();
    let load = eps * cov.trace().max(1e-12) / d as f64;
    for i in 0..d {
        cov[(i, i)] += load;
    }
}

fn init_model(
    sequences: &[DMatrix<f64>],
    s: usize,
    kind: EmissionKind,
    diag_load: f64,
    rng: &mut ChaCha20Rng,
) -> HmmModel {
    let d = sequences[0].ncols();
    let all_rows: usize = sequences.iter().map(|m| m.nrows()).sum();

    let global_mean = {
        let mut acc = DVector::zeros(d);
        for seq in sequences {
            for t in 0..seq.nrows() {
                acc += seq.row(t).transpose();
            }
        }
        acc / all_rows as f64
    };
    let mut global_cov = DMatrix::zeros(d, d);
    for seq in sequences {
        for t in 0..seq.nrows() {
            let x = seq.row(t).transpose() - &global_mean;
            global_cov += &x * x.transpose();
        }
    }
    global_cov /= all_rows as f64;
    load_diagonal(&mut global_cov, diag_load.max(1e-4));

    let means: Vec<DVector<f64>> = match kind {
        EmissionKind::MeanCov => (0..s)
            .map(|_| {
                let seq = &sequences[rng.gen_range(0..sequences.len())];
                seq.row(rng.gen_range(0..seq.nrows())).transpose()
            })
            .collect(),
        EmissionKind::ZeroMeanCov => (0..s).map(|_| DVector::zeros(d)).collect(),
    };
    let covs: Vec<DMatrix<f64>> = (0..s)
        .map(|_| {
            // Perturb the global covariance so restarts differ.
            let scale = rng.gen_range(0.5..1.5);
            let mut c = &global_cov * scale;
            load_diagonal(&mut c, diag_load);
            c
        })
        .collect();

    let mut transition = DMatrix::from_element(s, s, if s > 1 { 0.15 / (s as f64 - 1.0) } else { 0.0 });
    for k in 0..s {
        transition[(k, k)] = if s > 1 { 0.85 } else { 1.0 };
    }
    HmmModel {
        initial: DVector::from_element(s, 1.0 / s as f64),
        transition,
        means,
        covs,
        emission: kind,
    }
}

fn em_run(
    sequences: &[DMatrix<f64>],
    s: usize,
    kind: EmissionKind,
    opts: &HmmFitOptions,
    seed: u64,
) -> Result<HmmFit> {
    let d = sequences[0].ncols();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut model = init_model(sequences, s, kind, opts.diag_load, &mut rng);
    let mut trace: Vec<f64> = Vec::new();

    for _iter in 0..opts.max_iters {
        let e = forward_backward(sequences, &model)?;
        if let Some(&prev) = trace.last() {
            // EM guarantee, with slack for the diagonal loading and roundoff.
            assert!(
                e.loglik >= prev - 1e-6 * (1.0 + prev.abs()),
                "EM log-likelihood decreased: {prev} -> {}",
                e.loglik
            );
        }
        trace.push(e.loglik);

        for (k, &mass) in e.gamma_sum.iter().enumerate() {
            if mass < (d + 1) as f64 {
                return Err(Error::DegenerateState {
                    state: k,
                    mass,
                    required: d + 1,
                });
            }
        }

        // M-step.
        let n_seq = sequences.len() as f64;
        model.initial = &e.gamma_first / n_seq;
        for j in 0..s {
            let row_sum: f64 = e.xi_sum.row(j).sum();
            for k in 0..s {
                model.transition[(j, k)] = if row_sum > 0.0 {
                    e.xi_sum[(j, k)] / row_sum
                } else if j == k {
                    1.0
                } else {
                    0.0
                };
            }
        }
        for k in 0..s {
            let mass = e.gamma_sum[k];
            if kind == EmissionKind::MeanCov {
                let mut mean = DVector::zeros(d);
                for (seq, gamma) in sequences.iter().zip(&e.gammas) {
                    for t in 0..seq.nrows() {
                        mean += seq.row(t).transpose() * gamma[(t, k)];
                    }
                }
                model.means[k] = mean / mass;
            }
            let mut cov = DMatrix::zeros(d, d);
            for (seq, gamma) in sequences.iter().zip(&e.gammas) {
                for t in 0..seq.nrows() {
                    let x = seq.row(t).transpose() - &model.means[k];
                    cov.syger(gamma[(t, k)], &x, &x, 1.0);
                }
            }
            cov /= mass;
            // syger fills the lower triangle; mirror it.
            for i in 0..d {
                for j in (i + 1)..d {
                    cov[(i, j)] = cov[(j, i)];
                }
            }
            load_diagonal(&mut cov, opts.diag_load);
            model.covs[k] = cov;
        }

        if trace.len() >= 2 {
            let prev = trace[trace.len() - 2];
            let gain = trace[trace.len() - 1] - prev;
            if gain.abs() < opts.tol * (1.0 + prev.abs()) {
                break;
            }
        }
    }

    let final_ll = forward_backward(sequences, &model)?.loglik;
    trace.push(final_ll);
    Ok(HmmFit {
        model,
        log_likelihood: final_ll,
        loglik_trace: trace,
    })
}

/// Fit with `opts.restarts` random restarts (run in parallel), keeping the
/// best converged likelihood. A restart whose states degenerate is
/// discarded; the error surfaces only when every restart degenerates.
pub fn hmm_fit<R: Rng>(
    sequences: &[DMatrix<f64>],
    s: usize,
    kind: EmissionKind,
    opts: &HmmFitOptions,
    rng: &mut R,
) -> Result<HmmFit> {
    if s < 1 {
        return Err(Error::InvalidParameter("need at least one state".into()));
    }
    if sequences.is_empty() {
        return Err(Error::InvalidParameter("no sequences".into()));
    }
    let seeds: Vec<u64> = (0..opts.restarts.max(1)).map(|_| rng.gen()).collect();
    let runs: Vec<Result<HmmFit>> = seeds
        .par_iter()
        .map(|&seed| em_run(sequences, s, kind, opts, seed))
        .collect();
    let mut best: Option<HmmFit> = None;
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(fit) => {
                if best
                    .as_ref()
                    .map_or(true, |b| fit.log_likelihood > b.log_likelihood)
                {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one restart ran"))
}

/// Convenience: fit on the log-covariance series (free-mean emissions).
pub fn hmm_fit_logcov<R: Rng>(
    y: &LogCovSeries,
    s: usize,
    opts: &HmmFitOptions,
    rng: &mut R,
) -> Result<HmmFit> {
    hmm_fit(y.trials(), s, EmissionKind::MeanCov, opts, rng)
}

/// Viterbi decode: most likely state path and its log joint probability.
pub fn viterbi(model: &HmmModel, seq: &DMatrix<f64>) -> Result<(Vec<usize>, f64)> {
    let s = model.n_states();
    let t_len = seq.nrows();
    let chols: Vec<Cholesky<f64, nalgebra::Dyn>> = model
        .covs
        .iter()
        .map(|c| {
            Cholesky::new(c.clone()).ok_or(Error::NotPositiveDefinite {
                min_eigenvalue: f64::NAN,
            })
        })
        .collect::<Result<_>>()?;
    let log_b = gaussian_log_densities(seq, &model.means, &chols);
    let log_a = model.transition.map(|v| v.max(1e-300).ln());

    let mut delta = DMatrix::from_element(t_len, s, f64::NEG_INFINITY);
    let mut back = DMatrix::zeros(t_len, s);
    for k in 0..s {
        delta[(0, k)] = model.initial[k].max(1e-300).ln() + log_b[(0, k)];
    }
    for t in 1..t_len {
        for k in 0..s {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for j in 0..s {
                let v = delta[(t - 1, j)] + log_a[(j, k)];
                if v > best {
                    best = v;
                    arg = j;
                }
            }
            delta[(t, k)] = best + log_b[(t, k)];
            back[(t, k)] = arg as f64;
        }
    }
    let mut path = vec![0usize; t_len];
    let mut best = f64::NEG_INFINITY;
    for k in 0..s {
        if delta[(t_len - 1, k)] > best {
            best = delta[(t_len - 1, k)];
            path[t_len - 1] = k;
        }
    }
    for t in (0..t_len - 1).rev() {
        path[t] = back[(t + 1, path[t + 1])] as usize;
    }
    Ok((path, best))
}

/// Log joint probability of an arbitrary state path.
pub fn path_log_joint(model: &HmmModel, seq: &DMatrix<f64>, path: &[usize]) -> Result<f64> {
    let chols: Vec<Cholesky<f64, nalgebra::Dyn>> = model
        .covs
        .iter()
        .map(|c| {
            Cholesky::new(c.clone()).ok_or(Error::NotPositiveDefinite {
                min_eigenvalue: f64::NAN,
            })
        })
        .collect::<Result<_>>()?;
    let log_b = gaussian_log_densities(seq, &model.means, &chols);
    let mut total = model.initial[path[0]].max(1e-300).ln() + log_b[(0, path[0])];
    for t in 1..path.len() {
        total += model.transition[(path[t - 1], path[t])].max(1e-300).ln() + log_b[(t, path[t])];
    }
    Ok(total)
}

/// Piecewise-constant covariance process along the Viterbi path: the
/// exponentiated state mean for log-cov features, or the state covariance
/// itself for zero-mean raw emissions.
pub fn hmm_reconstruct(model: &HmmModel, y: &LogCovSeries) -> Result<Vec<CovarianceProcess>> {
    let mut out = Vec::with_capacity(y.n_trials());
    let state_covs: Vec<SpdMatrix> = match model.emission {
        EmissionKind::MeanCov => model
            .means
            .iter()
            .map(|mu| {
                let v: Vec<f64> = mu.iter().copied().collect();
                Ok(spd::matrix_exp(&spd::unvec_upper_slice(&v)?))
            })
            .collect::<Result<_>>()?,
        EmissionKind::ZeroMeanCov => model
            .covs
            .iter()
            .map(|c| SpdMatrix::new(c.clone()))
            .collect::<Result<_>>()?,
    };
    for i in 0..y.n_trials() {
        let (path, _) = viterbi(model, y.trial(i))?;
        let mats = path.iter().map(|&s| state_covs[s].clone()).collect();
        out.push(CovarianceProcess::new(y.time_index().to_vec(), mats)?);
    }
    Ok(out)
}

/// Fraction of Viterbi-decoded time steps spent in each state, one row per
/// condition. Rows sum to one.
pub fn hmm_state_proportions(
    model: &HmmModel,
    trials_by_condition: &[Vec<DMatrix<f64>>],
) -> Result<Vec<DVector<f64>>> {
    let s = model.n_states();
    let mut out = Vec::with_capacity(trials_by_condition.len());
    for trials in trials_by_condition {
        let mut counts = DVector::zeros(s);
        let mut total = 0usize;
        for seq in trials {
            let (path, _) = viterbi(model, seq)?;
            for state in path {
                counts[state] += 1.0;
            }
            total += seq.nrows();
        }
        out.push(counts / total as f64);
    }
    Ok(out)
}

/// AIC over a growing range of state counts: 2·#params − 2·loglik, with
/// #params = (S−1) + S(S−1) + S·(d + d(d+1)/2) for free-mean emissions
/// (zero-mean emissions drop the S·d mean block).
///
/// State counts are tried in the given order; the sweep stops at the first
/// count whose every restart degenerates (too many states for the data),
/// returning the AICs fitted so far. A failure at the very first count is
/// an error.
pub fn hmm_elbow<R: Rng>(
    sequences: &[DMatrix<f64>],
    s_range: &[usize],
    kind: EmissionKind,
    opts: &HmmFitOptions,
    rng: &mut R,
) -> Result<Vec<(usize, f64)>> {
    if s_range.is_empty() {
        return Err(Error::InvalidParameter("empty state range".into()));
    }
    let d = sequences[0].ncols();
    let mut out = Vec::with_capacity(s_range.len());
    for &s in s_range {
        let fit = match hmm_fit(sequences, s, kind, opts, rng) {
            Ok(fit) => fit,
            Err(Error::DegenerateState { .. }) if !out.is_empty() => break,
            Err(e) => return Err(e),
        };
        let mut params = (s - 1) + s * (s - 1) + s * (d * (d + 1) / 2);
        if kind == EmissionKind::MeanCov {
            params += s * d;
        }
        out.push((s, 2.0 * params as f64 - 2.0 * fit.log_likelihood));
    }
    Ok(out)
}
