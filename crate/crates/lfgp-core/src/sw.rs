//! Gaussian-tapered sliding-window covariance estimation and conversion of
//! raw trials to log-covariance series.
//!
//! The estimate at window position w is the taper-weighted sum of outer
//! products over the L samples starting at w. Only "valid" windows are
//! emitted (no padding), stamped with their center time w + (L−1)/2.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::process::CovarianceProcess;
use crate::spd::{self, SpdMatrix};

/// Relative jitter added to every window estimate before the log map:
/// ε·(trace/p)·I. Keeps near-singular windows invertible without hiding a
/// genuinely misconfigured window length (a zero estimate stays singular).
pub const WINDOW_JITTER_EPS: f64 = 1e-6;

/// One recorded trial: T samples of a p-variate signal.
#[derive(Debug, Clone)]
pub struct Trial {
    samples: DMatrix<f64>,
    sample_rate_hz: f64,
    label: Option<String>,
}

impl Trial {
    /// `samples` is T×p (one row per time point).
    pub fn new(samples: DMatrix<f64>, sample_rate_hz: f64, label: Option<String>) -> Result<Self> {
        if samples.nrows() < 2 {
            return Err(Error::InvalidParameter(format!(
                "trial needs at least 2 samples, got {}",
                samples.nrows()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "trial contains non-finite samples".into(),
            ));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn signal_count(&self) -> usize {
        self.samples.ncols()
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Copy with each channel centered on its own sample mean.
    pub fn centered(&self) -> Trial {
        let mut samples = self.samples.clone();
        for mut col in samples.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        Trial {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            label: self.label.clone(),
        }
    }
}

/// An ordered collection of trials sharing one (p, T) shape, as required by
/// the shared-grid factor model.
#[derive(Debug, Clone)]
pub struct TrialSet {
    trials: Vec<Trial>,
}

impl TrialSet {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        let first = trials
            .first()
            .ok_or_else(|| Error::InvalidParameter("trial set is empty".into()))?;
        let (p, t) = (first.signal_count(), first.len());
        for trial in &trials {
            if trial.signal_count() != p {
                return Err(Error::DimMismatch {
                    left: p,
                    right: trial.signal_count(),
                });
            }
            if trial.len() != t {
                return Err(Error::DimMismatch {
                    left: t,
                    right: trial.len(),
                });
            }
        }
        Ok(Self { trials })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn signal_count(&self) -> usize {
        self.trials[0].signal_count()
    }

    pub fn trial_len(&self) -> usize {
        self.trials[0].len()
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn labels(&self) -> Vec<Option<String>> {
        self.trials
            .iter()
            .map(|t| t.label().map(str::to_owned))
            .collect()
    }
}

/// Window length and Gaussian taper scale.
///
/// L = 1 is degenerate (a single-sample window) and only sensible in tests;
/// estimation configs should use L ≥ 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaperSpec {
    window_len: usize,
    taper_scale: f64,
}

impl TaperSpec {
    pub fn new(window_len: usize, taper_scale: f64) -> Result<Self> {
        if window_len < 1 {
            return Err(Error::InvalidParameter(
                "window length must be at least 1".into(),
            ));
        }
        if !(taper_scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "taper scale must be positive, got {taper_scale}"
            )));
        }
        Ok(Self {
            window_len,
            taper_scale,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn taper_scale(&self) -> f64 {
        self.taper_scale
    }
}

/// Normalized Gaussian taper weights h(s) ∝ exp{−½((s−c)/(τL/2))²} for
/// s = 0..L−1, centered at c = (L−1)/2 so the weights are symmetric on the
/// discrete window. The normalizer is enforced so the weights sum to one.
pub fn taper_weights(spec: &TaperSpec) -> DVector<f64> {
    let l = spec.window_len;
    let c = (l as f64 - 1.0) / 2.0;
    let denom = spec.taper_scale * l as f64 / 2.0;
    let mut w = DVector::from_fn(l, |s, _| {
        let z = (s as f64 - c) / denom;
        (-0.5 * z * z).exp()
    });
    let total: f64 = w.sum();
    w /= total;
    // Push residual normalization error into the middle weight(s),
    // split evenly to preserve symmetry.
    for _ in 0..4 {
        let delta = 1.0 - w.sum();
        if delta == 0.0 {
            break;
        }
        if l % 2 == 1 {
            w[l / 2] += delta;
        } else {
            w[l / 2 - 1] += delta / 2.0;
            w[l / 2] += delta / 2.0;
        }
    }
    w
}

/// Tapered sliding-window covariance of one trial. Samples are used as
/// given (assumed mean-zero); see [`to_log_cov_series`] for centering.
///
/// Emits T−L+1 matrices, each Σ_s h(s)·x(w+s)x(w+s)ᵀ plus relative jitter,
/// stamped at center time w + (L−1)/2.
pub fn sliding_window_cov(trial: &Trial, spec: &TaperSpec) -> Result<CovarianceProcess> {
    let t_len = trial.len();
    let l = spec.window_len;
    if l > t_len {
        return Err(Error::WindowTooLong {
            window: l,
            trial_len: t_len,
        });
    }
    let p = trial.signal_count();
    let w = taper_weights(spec);
    let x = trial.samples();
    let n_windows = t_len - l + 1;
    let offset = (l as f64 - 1.0) / 2.0;

    let mut times = Vec::with_capacity(n_windows);
    let mut mats = Vec::with_capacity(n_windows);
    for start in 0..n_windows {
        let mut k = DMatrix::zeros(p, p);
        for s in 0..l {
            let row = x.row(start + s);
            let h = w[s];
            for i in 0..p {
                let hx = h * row[i];
                for j in i..p {
                    k[(i, j)] += hx * row[j];
                }
            }
        }
        // Mirror the upper triangle, then add relative jitter.
        for i in 0..p {
            for j in (i + 1)..p {
                k[(j, i)] = k[(i, j)];
            }
        }
        let jitter = WINDOW_JITTER_EPS * k.trace() / p as f64;
        for i in 0..p {
            k[(i, i)] += jitter;
        }
        times.push(start as f64 + offset);
        mats.push(SpdMatrix::new(k)?);
    }
    CovarianceProcess::new(times, mats)
}

/// Per-trial q-variate log-covariance series on a shared window grid.
#[derive(Debug, Clone)]
pub struct LogCovSeries {
    /// One T_w×q matrix per trial.
    values: Vec<DMatrix<f64>>,
    time_index: Vec<f64>,
}

impl LogCovSeries {
    /// Assemble from per-trial T_w×q value matrices (e.g. model-simulated
    /// series). All trials must share the grid shape and q must be
    /// triangular.
    pub fn from_values(values: Vec<DMatrix<f64>>, time_index: Vec<f64>) -> Result<Self> {
        let first = values
            .first()
            .ok_or_else(|| Error::InvalidParameter("log-cov series is empty".into()))?;
        let (t_w, q) = first.shape();
        if spd::matrix_dim_for(q).is_none() {
            return Err(Error::BadLength { len: q });
        }
        if time_index.len() != t_w {
            return Err(Error::DimMismatch {
                left: time_index.len(),
                right: t_w,
            });
        }
        for v in &values {
            if v.shape() != (t_w, q) {
                return Err(Error::DimMismatch {
                    left: t_w,
                    right: v.nrows(),
                });
            }
        }
        Ok(Self { values, time_index })
    }

    pub fn n_trials(&self) -> usize {
        self.values.len()
    }

    pub fn n_windows(&self) -> usize {
        self.values[0].nrows()
    }

    pub fn dim_q(&self) -> usize {
        self.values[0].ncols()
    }

    /// Signal dimension p recovered from q = p(p+1)/2.
    pub fn signal_dim(&self) -> usize {
        spd::matrix_dim_for(self.dim_q()).expect("q validated triangular")
    }

    pub fn time_index(&self) -> &[f64] {
        &self.time_index
    }

    /// T_w×q value matrix of one trial.
    pub fn trial(&self, i: usize) -> &DMatrix<f64> {
        &self.values[i]
    }

    pub fn trials(&self) -> &[DMatrix<f64>] {
        &self.values
    }

    /// Keep every `stride`-th window (from the first). Used to thin the
    /// grid before an MCMC fit.
    pub fn strided(&self, stride: usize) -> LogCovSeries {
        assert!(stride >= 1);
        let keep: Vec<usize> = (0..self.n_windows()).step_by(stride).collect();
        let values = self
            .values
            .iter()
            .map(|v| DMatrix::from_fn(keep.len(), v.ncols(), |i, j| v[(keep[i], j)]))
            .collect();
        let time_index = keep.iter().map(|&i| self.time_index[i]).collect();
        LogCovSeries { values, time_index }
    }

    /// Total sum of squares of all entries.
    pub fn sum_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_squared()).sum()
    }
}

/// Run the full preprocessing pipeline: optional per-trial centering,
/// tapered sliding-window estimation, matrix log, upper-triangle
/// vectorization.
pub fn to_log_cov_series(set: &TrialSet, spec: &TaperSpec, center: bool) -> Result<LogCovSeries> {
    let results: Vec<Result<(Vec<f64>, DMatrix<f64>)>> = set
        .trials()
        .par_iter()
        .enumerate()
        .map(|(trial_idx, trial)| {
            let owned;
            let trial = if center {
                owned = trial.centered();
                &owned
            } else {
                trial
            };
            let cov = sliding_window_cov(trial, spec)?;
            let q = spd::triangular_len(trial.signal_count());
            let mut rows = DMatrix::zeros(cov.len(), q);
            for (window, mat) in cov.matrices().iter().enumerate() {
                let log = spd::matrix_log(mat).map_err(|e| e.at_window(trial_idx, window))?;
                let v = spd::vec_upper(&log);
                rows.row_mut(window).copy_from_slice(v.as_vector().as_slice());
            }
            Ok((cov.times().to_vec(), rows))
        })
        .collect();

    let mut values = Vec::with_capacity(set.len());
    let mut time_index = None;
    for r in results {
        let (times, rows) = r?;
        if time_index.is_none() {
            time_index = Some(times);
        }
        values.push(rows);
    }
    LogCovSeries::from_values(values, time_index.expect("nonempty trial set"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn taper(l: usize, tau: f64) -> TaperSpec {
        TaperSpec::new(l, tau).unwrap()
    }

    #[test]
    fn degenerate_single_sample_window() {
        let w = taper_weights(&taper(1, 0.5));
        assert_eq!(w.len(), 1);
        assert_eq!(w[0], 1.0);
    }

    #[test]
    fn huge_scale_flattens_to_rectangular() {
        let w = taper_weights(&taper(5, 1e6));
        for v in w.iter() {
            assert!((v - 0.2).abs() < 1e-6);
        }
    }

    #[test]
    fn weights_match_direct_formula() {
        let l = 50;
        let tau = 0.5;
        let w = taper_weights(&taper(l, tau));
        // Independent evaluation of the taper with the same discrete center.
        let c = (l as f64 - 1.0) / 2.0;
        let raw: Vec<f64> = (0..l)
            .map(|t| {
                let z = (t as f64 - c) / (tau * l as f64 / 2.0);
                (-0.5 * z * z).exp()
            })
            .collect();
        let zeta: f64 = raw.iter().sum();
        for (got, want) in w.iter().zip(raw.iter().map(|r| r / zeta)) {
            assert_relative_eq!(*got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn weights_sum_to_one_and_symmetric() {
        for (l, tau) in [(2, 0.3), (5, 0.5), (50, 0.5), (51, 1.2), (100, 0.25)] {
            let w = taper_weights(&taper(l, tau));
            let sum: f64 = w.iter().sum();
            assert!(
                (sum - 1.0).abs() <= f64::EPSILON,
                "sum {sum:.17} for L={l}"
            );
            for s in 0..l / 2 {
                assert_eq!(w[s], w[l - 1 - s], "asymmetry at s={s}, L={l}");
            }
        }
    }

    #[test]
    fn constant_signal_gives_outer_product() {
        let c = DVector::from_vec(vec![1.5, -0.5]);
        let samples = DMatrix::from_fn(20, 2, |_, j| c[j]);
        let trial = Trial::new(samples, 1000.0, None).unwrap();
        let cov = sliding_window_cov(&trial, &taper(5, 0.7)).unwrap();
        assert_eq!(cov.len(), 16);
        let outer = &c * c.transpose();
        let jitter = WINDOW_JITTER_EPS * outer.trace() / 2.0;
        let expected = &outer + DMatrix::identity(2, 2) * jitter;
        for m in cov.matrices() {
            assert!((m.as_matrix() - &expected).amax() < 1e-12);
        }
    }

    #[test]
    fn rectangular_full_window_is_second_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = 40;
        let samples = DMatrix::from_fn(t, 3, |_, _| rng.gen_range(-1.0..1.0));
        let trial = Trial::new(samples.clone(), 1.0, None).unwrap();
        let cov = sliding_window_cov(&trial, &taper(t, 1e6)).unwrap();
        assert_eq!(cov.len(), 1);
        let mut expected = DMatrix::zeros(3, 3);
        for i in 0..t {
            let row = samples.row(i).transpose();
            expected += &row * row.transpose() / t as f64;
        }
        let jitter = WINDOW_JITTER_EPS * expected.trace() / 3.0;
        expected += DMatrix::identity(3, 3) * jitter;
        assert!((cov.get(0).as_matrix() - expected).amax() < 1e-6);
    }

    #[test]
    fn white_noise_time_average_near_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (t, p, l) = (2000, 2, 100);
        let samples = DMatrix::from_fn(t, p, |_, _| StandardNormal.sample(&mut rng));
        let trial = Trial::new(samples, 1.0, None).unwrap();
        let cov = sliding_window_cov(&trial, &taper(l, 0.5)).unwrap();
        let mut mean = DMatrix::zeros(p, p);
        for m in cov.matrices() {
            mean += m.as_matrix();
        }
        mean /= cov.len() as f64;
        let truth = DMatrix::identity(p, p);
        let rel = (mean - &truth).norm() / truth.norm();
        assert!(rel < 0.10, "relative error {rel:.3}");
    }

    #[test]
    fn window_too_long_is_rejected() {
        let trial = Trial::new(DMatrix::zeros(10, 2).add_scalar(1.0), 1.0, None).unwrap();
        assert!(matches!(
            sliding_window_cov(&trial, &taper(11, 0.5)),
            Err(Error::WindowTooLong { window: 11, trial_len: 10 })
        ));
    }

    #[test]
    fn identity_windows_give_zero_series() {
        // Alternating orthogonal spikes of norm √2: every length-2 flat
        // window averages to the identity.
        let t = 30;
        let s2 = 2.0_f64.sqrt();
        let samples = DMatrix::from_fn(t, 2, |i, j| {
            if i % 2 == j {
                s2
            } else {
                0.0
            }
        });
        let trial = Trial::new(samples, 1.0, None).unwrap();
        let set = TrialSet::new(vec![trial]).unwrap();
        let series = to_log_cov_series(&set, &taper(2, 1e9), false).unwrap();
        assert_eq!(series.dim_q(), 3);
        assert_eq!(series.n_windows(), t - 1);
        assert!(series.trial(0).amax() < 1e-5);
    }

    #[test]
    fn q_is_triangular_of_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples = DMatrix::from_fn(50, 2, |_, _| StandardNormal.sample(&mut rng));
        let set = TrialSet::new(vec![Trial::new(samples, 1.0, None).unwrap()]).unwrap();
        let series = to_log_cov_series(&set, &taper(10, 0.5), true).unwrap();
        assert_eq!(series.dim_q(), 3);
        assert_eq!(series.signal_dim(), 2);
    }

    #[test]
    fn series_round_trips_to_window_estimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples = DMatrix::from_fn(60, 3, |_, _| StandardNormal.sample(&mut rng));
        let trial = Trial::new(samples, 1.0, None).unwrap();
        let spec = taper(12, 0.5);
        let cov = sliding_window_cov(&trial, &spec).unwrap();
        let set = TrialSet::new(vec![trial]).unwrap();
        let series = to_log_cov_series(&set, &spec, false).unwrap();
        for w in 0..series.n_windows() {
            let row: Vec<f64> = series.trial(0).row(w).iter().copied().collect();
            let sym = spd::unvec_upper_slice(&row).unwrap();
            let back = spd::matrix_exp(&sym);
            let rel = (back.as_matrix() - cov.get(w).as_matrix()).norm()
                / cov.get(w).as_matrix().norm();
            assert!(rel < 1e-8);
        }
    }

    #[test]
    fn stationary_estimator_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (t, p, l) = (5000, 3, 100);
        // K = LLᵀ with a fixed lower-triangular L.
        let chol = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.4, 0.9, 0.0, -0.3, 0.2, 0.8]);
        let truth = &chol * chol.transpose();
        let samples = DMatrix::from_fn(t, p, |_, _| StandardNormal.sample(&mut rng));
        let correlated = {
            let mut out = DMatrix::zeros(t, p);
            for i in 0..t {
                let z = samples.row(i).transpose();
                out.row_mut(i).copy_from(&(&chol * z).transpose());
            }
            out
        };
        let trial = Trial::new(correlated, 1.0, None).unwrap();
        let cov = sliding_window_cov(&trial, &taper(l, 0.5)).unwrap();
        assert_eq!(cov.len(), t - l + 1);
        let mut mean = DMatrix::zeros(p, p);
        for m in cov.matrices() {
            mean += m.as_matrix();
        }
        mean /= cov.len() as f64;
        let rel = (mean - &truth).norm() / truth.norm();
        assert!(rel <= 0.05, "relative error {rel:.4}");
        for m in cov.matrices().iter().step_by(500) {
            assert!(m.min_eigenvalue() > 0.0);
        }
    }
}
