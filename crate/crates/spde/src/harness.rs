//! Strong-convergence experiment harness.
//!
//! All refinement studies here are *couplings*: every sample draws one noise
//! lattice at the finest resolution, the reference and every sweep point
//! consume views of that same lattice, and the per-sample error is the norm
//! of the pathwise difference. Sample results are always merged in sample
//! order, so reports are bit-identical regardless of how many worker threads
//! carry the samples.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SpdeError};
use crate::integrator::{Discretization, InitialDatum, SnapshotPolicy, Stepper, Trajectory};
use crate::nemytskii::ModelSpec;
use crate::noise::NoiseLattice;
use crate::spectral::{coeff_dist_sq, coeff_norm_sq};

/// Two-sided 95% normal quantile used for confidence half-widths.
const Z_95: f64 = 1.959963984540054;

/// Errors at or below this level are treated as exactly-zero round-off and
/// disable rate fitting.
const DEGENERATE_RMS: f64 = 1e-12;

/// Where along the trajectory the pathwise error is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorTime {
    /// Mean-square difference at the final time only (the default).
    Final,
    /// Supremum of the difference norm over the coarse run's grid points,
    /// including the initial time.
    SupOverGrid,
}

impl ErrorTime {
    pub fn parse(text: &str) -> Result<ErrorTime> {
        match text {
            "final" => Ok(ErrorTime::Final),
            "sup" | "sup-over-grid" => Ok(ErrorTime::SupOverGrid),
            other => Err(SpdeError::Config(format!(
                "unknown error time '{other}' (expected final or sup-over-grid)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ErrorTime::Final => "final",
            ErrorTime::SupOverGrid => "sup-over-grid",
        }
    }
}

/// Full description of one experiment family. The temporal, spatial, path
/// regularity, and moment studies read the fields they need and validate
/// them on entry.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    /// Built-in model identifier (reports echo it; the solver receives the
    /// resolved [`ModelSpec`] separately).
    pub model: String,
    /// Final time `T`.
    pub horizon: f64,
    /// Reference spatial resolution.
    pub n_ref: usize,
    /// Reference (finest) step count.
    pub k_ref: usize,
    /// Brownian modes in the noise expansion.
    pub j_modes: usize,
    /// Coarse step counts for the temporal sweep.
    pub sweep_k: Vec<usize>,
    /// Coarse mode counts for the spatial sweep.
    pub sweep_n: Vec<usize>,
    /// Monte Carlo sample count.
    pub samples: usize,
    /// Moment exponent: errors are reported as (E e^p)^{1/p}.
    pub p: u32,
    /// Base seed; sample `s` derives its streams from `(seed, s)`.
    pub seed: u64,
    pub error_time: ErrorTime,
    /// Quadrature points per retained mode (`M = m_factor · N`).
    pub m_factor: usize,
    pub datum: InitialDatum,
    /// Lag times for the path-regularity structure function.
    pub holder_lags: Vec<f64>,
}

impl ExperimentConfig {
    /// Desk-scale defaults: minutes of runtime on one core.
    pub fn desk_scale(model: &str) -> ExperimentConfig {
        ExperimentConfig {
            model: model.to_string(),
            horizon: 1.0,
            n_ref: 256,
            k_ref: 4096,
            j_modes: 256,
            sweep_k: vec![64, 128, 256, 512],
            sweep_n: vec![8, 16, 32, 64],
            samples: 100,
            p: 2,
            seed: 1,
            error_time: ErrorTime::Final,
            m_factor: 2,
            datum: InitialDatum::PowerLaw,
            holder_lags: dyadic_lags(-10, -4),
        }
    }

    /// Full-scale study (double resolution everywhere, 200 samples): about an
    /// hour of runtime on one core.
    pub fn full_scale(model: &str) -> ExperimentConfig {
        ExperimentConfig {
            n_ref: 512,
            k_ref: 8192,
            j_modes: 512,
            sweep_k: vec![128, 256, 512, 1024],
            sweep_n: vec![16, 32, 64, 128],
            samples: 200,
            ..ExperimentConfig::desk_scale(model)
        }
    }

    fn validate_common(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SpdeError::Config(format!(
                "time horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.n_ref == 0 || self.k_ref == 0 || self.j_modes == 0 {
            return Err(SpdeError::Config(
                "reference resolutions and noise mode count must be positive".into(),
            ));
        }
        if self.p == 0 {
            return Err(SpdeError::Config("moment exponent p must be at least 1".into()));
        }
        if self.m_factor == 0 {
            return Err(SpdeError::Config("quadrature factor must be at least 1".into()));
        }
        if self.m_factor * self.n_ref < self.j_modes {
            return Err(SpdeError::Config(format!(
                "noise expansion ({} modes) does not fit the reference quadrature grid \
                 ({} points); raise m_factor or n_ref, or lower j_modes",
                self.j_modes,
                self.m_factor * self.n_ref
            )));
        }
        Ok(())
    }

    fn validate_mc(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(SpdeError::Config(
                "need at least 2 samples for a confidence interval".into(),
            ));
        }
        Ok(())
    }

    fn validate_temporal(&self) -> Result<()> {
        self.validate_common()?;
        self.validate_mc()?;
        if self.sweep_k.is_empty() {
            return Err(SpdeError::Config("temporal sweep is empty".into()));
        }
        let k_max = *self.sweep_k.iter().max().unwrap();
        for &k in &self.sweep_k {
            if k == 0 || self.k_ref % k != 0 {
                return Err(SpdeError::Config(format!(
                    "sweep step count {k} must divide the reference count {}",
                    self.k_ref
                )));
            }
            if self.error_time == ErrorTime::SupOverGrid && k_max % k != 0 {
                return Err(SpdeError::Config(format!(
                    "sup-over-grid needs nested sweep grids: {k} does not divide {k_max}"
                )));
            }
        }
        Ok(())
    }

    fn validate_spatial(&self) -> Result<()> {
        self.validate_common()?;
        self.validate_mc()?;
        if self.sweep_n.is_empty() {
            return Err(SpdeError::Config("spatial sweep is empty".into()));
        }
        for &n in &self.sweep_n {
            if n == 0 || n > self.n_ref {
                return Err(SpdeError::Config(format!(
                    "sweep resolution {n} must lie in 1..={}",
                    self.n_ref
                )));
            }
            if n > self.j_modes {
                return Err(SpdeError::Config(format!(
                    "sweep resolution {n} exceeds the {}-mode noise expansion",
                    self.j_modes
                )));
            }
        }
        Ok(())
    }
}

/// Dyadic lag times `2^lo ..= 2^hi`.
pub fn dyadic_lags(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|i| (2f64).powi(i)).collect()
}

/// One sweep point of a convergence report.
#[derive(Clone, Debug, Serialize)]
pub struct RatePoint {
    pub n_modes: usize,
    pub k_steps: usize,
    /// Refinement parameter: the step size on the temporal axis, `1/N` on
    /// the spatial axis.
    pub h: f64,
    /// (mean of e^p)^{1/p} over the samples.
    pub rms_error: f64,
    /// Normal-approximation 95% half-width of `rms_error`.
    pub ci_half_width: f64,
}

/// Outcome of one refinement study.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorReport {
    /// `"temporal"` or `"spatial"`.
    pub axis: String,
    pub model: String,
    pub error_time: ErrorTime,
    pub samples: usize,
    pub p: u32,
    pub seed: u64,
    pub points: Vec<RatePoint>,
    /// Log-log slope across the sweep; absent when any point is at round-off
    /// level (rate fitting is meaningless there) or the sweep is a single
    /// point.
    pub fitted_rate: Option<f64>,
    /// Root-mean-square residual of the log-log fit.
    pub fit_residual: Option<f64>,
}

/// Ordinary least squares in log-log coordinates: returns the slope and the
/// RMS residual of `ln e` against `ln h`.
pub fn fit_rate(h: &[f64], errors: &[f64]) -> Result<(f64, f64)> {
    if h.len() != errors.len() {
        return Err(SpdeError::Config("rate fit needs matching coordinate lists".into()));
    }
    if h.len() < 2 {
        return Err(SpdeError::Config("rate fit needs at least two points".into()));
    }
    if h.iter().any(|v| *v <= 0.0) || errors.iter().any(|v| *v <= 0.0) {
        return Err(SpdeError::Config(
            "rate fit needs positive refinement parameters and errors".into(),
        ));
    }
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(SpdeError::Config(
            "rate fit needs at least two distinct refinement parameters".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let mut rss = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let r = y - (intercept + slope * x);
        rss += r * r;
    }
    Ok((slope, (rss / n).sqrt()))
}

/// Welford accumulator for a scalar sample stream.
#[derive(Clone, Debug, Default)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> RunningMoments {
        RunningMoments::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (zero until two values arrive).
    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

/// Convert an accumulator over `e^p` into the reported moment norm and its
/// delta-method 95% half-width.
fn moment_norm_and_ci(acc: &RunningMoments, p: u32) -> (f64, f64) {
    let mean = acc.mean();
    if mean <= 0.0 || acc.count() < 2 {
        return (if mean <= 0.0 { 0.0 } else { mean }, 0.0);
    }
    let pf = p as f64;
    let rms = mean.powf(1.0 / pf);
    let se_mean = (acc.sample_variance() / acc.count() as f64).sqrt();
    let hw = Z_95 * se_mean * mean.powf(1.0 / pf - 1.0) / pf;
    (rms, hw)
}

fn build_report(
    axis: &str,
    cfg: &ExperimentConfig,
    meta: Vec<(usize, usize, f64)>,
    accs: Vec<RunningMoments>,
) -> ErrorReport {
    let points: Vec<RatePoint> = meta
        .into_iter()
        .zip(&accs)
        .map(|((n_modes, k_steps, h), acc)| {
            let (rms, hw) = moment_norm_and_ci(acc, cfg.p);
            RatePoint {
                n_modes,
                k_steps,
                h,
                rms_error: rms,
                ci_half_width: hw,
            }
        })
        .collect();
    let degenerate =
        points.len() < 2 || points.iter().any(|pt| pt.rms_error <= DEGENERATE_RMS);
    let (fitted_rate, fit_residual) = if degenerate {
        (None, None)
    } else {
        let hs: Vec<f64> = points.iter().map(|pt| pt.h).collect();
        let es: Vec<f64> = points.iter().map(|pt| pt.rms_error).collect();
        match fit_rate(&hs, &es) {
            Ok((slope, residual)) => (Some(slope), Some(residual)),
            Err(_) => (None, None),
        }
    };
    ErrorReport {
        axis: axis.to_string(),
        model: cfg.model.clone(),
        error_time: cfg.error_time,
        samples: cfg.samples,
        p: cfg.p,
        seed: cfg.seed,
        points,
        fitted_rate,
        fit_residual,
    }
}

/// Merge per-sample error vectors (indexed by sweep point) in sample order.
fn merge_samples(
    per_sample: Vec<Result<Vec<f64>>>,
    n_points: usize,
    p: u32,
) -> Result<Vec<RunningMoments>> {
    let mut accs = vec![RunningMoments::new(); n_points];
    for sample in per_sample {
        let errors = sample?;
        debug_assert_eq!(errors.len(), n_points);
        for (acc, e) in accs.iter_mut().zip(errors) {
            acc.push(e.powi(p as i32));
        }
    }
    Ok(accs)
}

/// Strong temporal error under coupled refinement: one lattice per sample,
/// the reference runs at `(n_ref, k_ref)`, each sweep point reruns at
/// `(n_ref, k)` on the time-coarsened view of the same lattice.
pub fn strong_error_temporal(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<ErrorReport> {
    cfg.validate_temporal()?;
    let n = cfg.n_ref;
    let m = cfg.m_factor * n;
    let reference = Stepper::new(
        model,
        Discretization::new(n, cfg.k_ref, cfg.horizon)?.with_quadrature(m)?,
        cfg.j_modes,
    )?;
    let sweep: Vec<Stepper> = cfg
        .sweep_k
        .iter()
        .map(|&k| {
            Stepper::new(
                model,
                Discretization::new(n, k, cfg.horizon)?.with_quadrature(m)?,
                cfg.j_modes,
            )
        })
        .collect::<Result<_>>()?;
    let initial = cfg.datum.coefficients(n);
    let k_max = *cfg.sweep_k.iter().max().unwrap();
    let (ref_policy, sweep_policy) = match cfg.error_time {
        ErrorTime::Final => (SnapshotPolicy::FinalOnly, SnapshotPolicy::FinalOnly),
        ErrorTime::SupOverGrid => (
            SnapshotPolicy::Every(cfg.k_ref / k_max),
            SnapshotPolicy::All,
        ),
    };

    let per_sample: Vec<Result<Vec<f64>>> = (0..cfg.samples)
        .into_par_iter()
        .map(|s| {
            let lattice =
                NoiseLattice::generate(cfg.seed, s as u64, cfg.j_modes, cfg.k_ref, cfg.horizon)?;
            let ref_traj = reference.simulate(&initial, &lattice, ref_policy)?;
            let mut errors = Vec::with_capacity(sweep.len());
            for (stepper, &k) in sweep.iter().zip(&cfg.sweep_k) {
                let coarse = lattice.coarsen_time(cfg.k_ref / k)?;
                let traj = stepper.simulate(&initial, &coarse, sweep_policy)?;
                errors.push(pathwise_error(cfg.error_time, &ref_traj, &traj, k_max / k));
            }
            Ok(errors)
        })
        .collect();
    let accs = merge_samples(per_sample, cfg.sweep_k.len(), cfg.p)?;

    let meta: Vec<(usize, usize, f64)> = cfg
        .sweep_k
        .iter()
        .map(|&k| (n, k, cfg.horizon / k as f64))
        .collect();
    Ok(build_report("temporal", cfg, meta, accs))
}

/// Strong spatial error under coupled refinement: the reference runs at
/// `(n_ref, k_ref)` with the full noise expansion, each sweep point reruns at
/// `(n, k_ref)` consuming the mode-truncated view of the same lattice.
pub fn strong_error_spatial(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<ErrorReport> {
    cfg.validate_spatial()?;
    let m_ref = cfg.m_factor * cfg.n_ref;
    let reference = Stepper::new(
        model,
        Discretization::new(cfg.n_ref, cfg.k_ref, cfg.horizon)?.with_quadrature(m_ref)?,
        cfg.j_modes,
    )?;
    let sweep: Vec<Stepper> = cfg
        .sweep_n
        .iter()
        .map(|&n| {
            Stepper::new(
                model,
                Discretization::new(n, cfg.k_ref, cfg.horizon)?
                    .with_quadrature(cfg.m_factor * n)?,
                n,
            )
        })
        .collect::<Result<_>>()?;
    let initial_ref = cfg.datum.coefficients(cfg.n_ref);
    let initials: Vec<Vec<f64>> =
        cfg.sweep_n.iter().map(|&n| cfg.datum.coefficients(n)).collect();
    let policy = match cfg.error_time {
        ErrorTime::Final => SnapshotPolicy::FinalOnly,
        ErrorTime::SupOverGrid => SnapshotPolicy::All,
    };

    let per_sample: Vec<Result<Vec<f64>>> = (0..cfg.samples)
        .into_par_iter()
        .map(|s| {
            let lattice =
                NoiseLattice::generate(cfg.seed, s as u64, cfg.j_modes, cfg.k_ref, cfg.horizon)?;
            let ref_traj = reference.simulate(&initial_ref, &lattice, policy)?;
            let mut errors = Vec::with_capacity(sweep.len());
            for ((stepper, &n), initial) in sweep.iter().zip(&cfg.sweep_n).zip(&initials) {
                let truncated = lattice.truncate_modes(n)?;
                let traj = stepper.simulate(initial, &truncated, policy)?;
                errors.push(pathwise_error(cfg.error_time, &ref_traj, &traj, 1));
            }
            Ok(errors)
        })
        .collect();
    let accs = merge_samples(per_sample, cfg.sweep_n.len(), cfg.p)?;

    let meta: Vec<(usize, usize, f64)> = cfg
        .sweep_n
        .iter()
        .map(|&n| (n, cfg.k_ref, 1.0 / n as f64))
        .collect();
    Ok(build_report("spatial", cfg, meta, accs))
}

/// Pathwise distance between a reference and a coarse trajectory: at the
/// final time, or the sup over the coarse run's snapshots. `ratio` maps a
/// coarse snapshot index to the reference snapshot at the same time.
fn pathwise_error(error_time: ErrorTime, reference: &Trajectory, coarse: &Trajectory, ratio: usize) -> f64 {
    match error_time {
        ErrorTime::Final => {
            coeff_dist_sq(reference.final_state(), coarse.final_state()).sqrt()
        }
        ErrorTime::SupOverGrid => {
            let mut worst = 0.0f64;
            for i in 0..coarse.len() {
                let d = coeff_dist_sq(reference.state(i * ratio), coarse.state(i));
                worst = worst.max(d);
            }
            worst.sqrt()
        }
    }
}

/// Pathwise time-regularity report: the structure function
/// `L ↦ sup_anchors (E ‖X(t_a + L) − X(t_a)‖²)^{1/2}` and its log-log slope.
#[derive(Clone, Debug, Serialize)]
pub struct HolderReport {
    pub model: String,
    pub n_modes: usize,
    pub k_steps: usize,
    pub samples: usize,
    pub seed: u64,
    /// Lag times.
    pub lags: Vec<f64>,
    /// Structure-function value per lag.
    pub structure: Vec<f64>,
    /// Fitted exponent (absent when the structure degenerates to zero).
    pub exponent: Option<f64>,
    pub fit_residual: Option<f64>,
}

/// Estimate the path's time-regularity exponent from mean-square increments.
///
/// For each lag the per-anchor mean-square increment is estimated over all
/// samples, and the *largest* anchor value defines the structure function:
/// uniform-in-time regularity is governed by the worst anchor (in practice
/// the rough initial transient), which an anchor average would wash out.
pub fn holder_estimate(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<HolderReport> {
    cfg.validate_common()?;
    if cfg.holder_lags.is_empty() {
        return Err(SpdeError::Config("no lags given for the structure function".into()));
    }
    if cfg.samples == 0 {
        return Err(SpdeError::Config("need at least one sample".into()));
    }
    let k = cfg.k_ref;
    let tau = cfg.horizon / k as f64;
    let mut lag_steps = Vec::with_capacity(cfg.holder_lags.len());
    for &lag in &cfg.holder_lags {
        let ratio = lag / tau;
        let steps = ratio.round();
        if !(ratio.is_finite() && (ratio - steps).abs() < 1e-6) || steps < 1.0 {
            return Err(SpdeError::Config(format!(
                "lag {lag} is not a positive multiple of the step size {tau}"
            )));
        }
        let steps = steps as usize;
        if steps >= k {
            return Err(SpdeError::Config(format!(
                "lag {lag} does not fit inside the horizon {}",
                cfg.horizon
            )));
        }
        lag_steps.push(steps);
    }

    let stepper = Stepper::new(
        model,
        Discretization::new(cfg.n_ref, k, cfg.horizon)?.with_quadrature(cfg.m_factor * cfg.n_ref)?,
        cfg.j_modes,
    )?;
    let initial = cfg.datum.coefficients(cfg.n_ref);

    // Per sample: for each lag, the squared increment norm at every anchor.
    let per_sample: Vec<Result<Vec<Vec<f64>>>> = (0..cfg.samples)
        .into_par_iter()
        .map(|s| {
            let lattice =
                NoiseLattice::generate(cfg.seed, s as u64, cfg.j_modes, k, cfg.horizon)?;
            let traj = stepper.simulate(&initial, &lattice, SnapshotPolicy::All)?;
            let mut rows = Vec::with_capacity(lag_steps.len());
            for &l in &lag_steps {
                let mut row = Vec::with_capacity(k + 1 - l);
                for anchor in 0..=(k - l) {
                    row.push(coeff_dist_sq(traj.state(anchor + l), traj.state(anchor)));
                }
                rows.push(row);
            }
            Ok(rows)
        })
        .collect();

    // Anchor-wise running means, merged in sample order.
    let mut means: Vec<Vec<RunningMoments>> = lag_steps
        .iter()
        .map(|&l| vec![RunningMoments::new(); k + 1 - l])
        .collect();
    for sample in per_sample {
        let rows = sample?;
        for (mean_row, row) in means.iter_mut().zip(rows) {
            for (acc, v) in mean_row.iter_mut().zip(row) {
                acc.push(v);
            }
        }
    }

    let structure: Vec<f64> = means
        .iter()
        .map(|row| {
            row.iter()
                .map(|acc| acc.mean())
                .fold(0.0f64, f64::max)
                .sqrt()
        })
        .collect();
    let degenerate = structure.iter().any(|v| *v <= DEGENERATE_RMS);
    let (exponent, fit_residual) = if degenerate || structure.len() < 2 {
        (None, None)
    } else {
        match fit_rate(&cfg.holder_lags, &structure) {
            Ok((slope, residual)) => (Some(slope), Some(residual)),
            Err(_) => (None, None),
        }
    };
    Ok(HolderReport {
        model: cfg.model.clone(),
        n_modes: cfg.n_ref,
        k_steps: k,
        samples: cfg.samples,
        seed: cfg.seed,
        lags: cfg.holder_lags.clone(),
        structure,
        exponent,
        fit_residual,
    })
}

/// One resolution's moment-boundedness summary.
#[derive(Clone, Debug, Serialize)]
pub struct MomentPoint {
    pub n_modes: usize,
    /// `sup_k mean_s ‖X_k‖²`.
    pub sup_second_moment: f64,
    pub datum_norm_sq: f64,
    /// `sup_second_moment / datum_norm_sq` (absent for a zero datum).
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub model: String,
    pub k_steps: usize,
    pub samples: usize,
    pub seed: u64,
    pub points: Vec<MomentPoint>,
}

/// Mean of `‖X_k‖²` over the samples, at every grid point. Each resolution
/// runs the projected system with its own `n`-mode noise expansion.
pub fn second_moment_curve(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    n_modes: usize,
) -> Result<Vec<f64>> {
    cfg.validate_common()?;
    if cfg.samples == 0 {
        return Err(SpdeError::Config("need at least one sample".into()));
    }
    let stepper = Stepper::new(
        model,
        Discretization::new(n_modes, cfg.k_ref, cfg.horizon)?
            .with_quadrature(cfg.m_factor * n_modes)?,
        n_modes,
    )?;
    let initial = cfg.datum.coefficients(n_modes);
    let per_sample: Vec<Result<Vec<f64>>> = (0..cfg.samples)
        .into_par_iter()
        .map(|s| {
            let lattice =
                NoiseLattice::generate(cfg.seed, s as u64, n_modes, cfg.k_ref, cfg.horizon)?;
            let traj = stepper.simulate(&initial, &lattice, SnapshotPolicy::All)?;
            Ok((0..traj.len()).map(|i| coeff_norm_sq(traj.state(i))).collect())
        })
        .collect();
    let mut accs = vec![RunningMoments::new(); cfg.k_ref + 1];
    for sample in per_sample {
        let norms = sample?;
        for (acc, v) in accs.iter_mut().zip(norms) {
            acc.push(v);
        }
    }
    Ok(accs.iter().map(|acc| acc.mean()).collect())
}

/// Second-moment boundedness across the spatial sweep: no resolution may
/// inflate the sampled `sup_k E‖X_k‖²` beyond a fixed multiple of the
/// initial datum's squared norm.
pub fn moment_check(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<MomentReport> {
    cfg.validate_common()?;
    if cfg.sweep_n.is_empty() {
        return Err(SpdeError::Config("moment sweep is empty".into()));
    }
    let mut points = Vec::with_capacity(cfg.sweep_n.len());
    for &n in &cfg.sweep_n {
        let curve = second_moment_curve(cfg, model, n)?;
        let sup = curve.iter().copied().fold(0.0f64, f64::max);
        let datum_norm_sq = coeff_norm_sq(&cfg.datum.coefficients(n));
        let ratio = if datum_norm_sq > 0.0 {
            Some(sup / datum_norm_sq)
        } else {
            None
        };
        points.push(MomentPoint {
            n_modes: n,
            sup_second_moment: sup,
            datum_norm_sq,
            ratio,
        });
    }
    Ok(MomentReport {
        model: cfg.model.clone(),
        k_steps: cfg.k_ref,
        samples: cfg.samples,
        seed: cfg.seed,
        points,
    })
}
