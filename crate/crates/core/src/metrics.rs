//! Baseline precoding schemes, link metrics and operation accounting.

use serde::{Deserialize, Serialize};

use crate::angle_delay::{AngleDelayBasis, IndexSet};
use crate::egvp::{calibrate_phase, sample_eigenvectors_wcm, EigenSample, SamplingSchedule};
use crate::error::{Error, Result};
use crate::flags::Flags;
use crate::linalg::{inner, loaded_solve, lstsq, norm_sqr, normalize_columns, CMatrix, CVector, C64};

/// Diagonal loading of the Wiener–Hopf system, relative to its mean diagonal.
pub const WIENER_LOADING: f64 = 1e-10;

/// Operation counts of one scheme run. Counts only grow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostLedger {
    /// Eigen-decompositions of the (N_f N_t)-dimensional channel.
    pub evd_large: u64,
    /// Eigen-decompositions of the N_r × N_r Gram matrix.
    pub evd_small: u64,
    pub pencil_fits: u64,
    /// Σ |G_{r,j}|·M² over Gram evaluations.
    pub gram_flops: u64,
    /// Batched weight-extraction solves.
    pub pseudoinverse: u64,
    /// Batched precoder reconstructions.
    pub reconstruction: u64,
}

impl CostLedger {
    pub fn add(&mut self, other: &CostLedger) {
        self.evd_large += other.evd_large;
        self.evd_small += other.evd_small;
        self.pencil_fits += other.pencil_fits;
        self.gram_flops += other.gram_flops;
        self.pseudoinverse += other.pseudoinverse;
        self.reconstruction += other.reconstruction;
    }
}

/// Per-subframe precoder columns produced by a scheme for one UE over one
/// window. `precoders[i]` serves subframe `schedule.t_in + i`; column 0 is the
/// dominant predicted eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeTrace {
    pub precoders: Vec<CMatrix>,
    /// Counter increments attributed to each sampling cycle.
    pub bucket_ledgers: Vec<CostLedger>,
    pub flags: Flags,
}

impl SchemeTrace {
    pub fn ledger(&self) -> CostLedger {
        let mut total = CostLedger::default();
        for l in &self.bucket_ledgers {
            total.add(l);
        }
        total
    }
}

fn check_window(estimates: &[CMatrix], schedule: &SamplingSchedule) -> Result<()> {
    let need = schedule.n_samples * schedule.cycle;
    if estimates.len() != need {
        return Err(Error::InsufficientSamples { needed: need, got: estimates.len() });
    }
    Ok(())
}

/// Eigen-sample of every subframe's estimate.
pub fn run_full_time_evd(estimates: &[CMatrix], schedule: &SamplingSchedule) -> Result<SchemeTrace> {
    check_window(estimates, schedule)?;
    let mut ledgers = vec![CostLedger::default(); schedule.n_samples];
    let mut flags = Flags::empty();
    let precoders = estimates
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let t = schedule.t_in + i as i64;
            ledgers[schedule.bucket(t)].evd_large += 1;
            let s = sample_eigenvectors_wcm(h, t);
            flags |= s.flags;
            s.vectors
        })
        .collect();
    Ok(SchemeTrace { precoders, bucket_ledgers: ledgers, flags })
}

/// Calibrated eigen-samples at the sampling instants of the window.
pub fn window_samples(estimates: &[CMatrix], schedule: &SamplingSchedule) -> Result<Vec<EigenSample>> {
    check_window(estimates, schedule)?;
    let raw: Vec<EigenSample> =
        schedule.instants().map(|t| sample_eigenvectors_wcm(&estimates[(t - schedule.t_in) as usize], t)).collect();
    calibrate_phase(&raw)
}

/// Eigen-sample at each sampling instant, held until the next.
pub fn run_lazy_evd(estimates: &[CMatrix], schedule: &SamplingSchedule) -> Result<SchemeTrace> {
    let samples = window_samples(estimates, schedule)?;
    let mut ledgers = vec![CostLedger::default(); schedule.n_samples];
    let mut flags = Flags::empty();
    for (k, s) in samples.iter().enumerate() {
        ledgers[k].evd_large += 1;
        flags |= s.flags;
    }
    let precoders = schedule.subframes().map(|t| samples[schedule.bucket(t)].vectors.clone()).collect();
    Ok(SchemeTrace { precoders, bucket_ledgers: ledgers, flags })
}

/// Unbiased sample autocorrelation `r(m) = Σ_n x_{n+m} x_n* / (N − m)`.
pub fn autocorrelation(x: &[C64], max_lag: usize) -> Vec<C64> {
    (0..=max_lag)
        .map(|m| {
            if m >= x.len() {
                return C64::new(0.0, 0.0);
            }
            let s: C64 = (0..x.len() - m).map(|n| x[n + m] * x[n].conj()).sum();
            s / (x.len() - m) as f64
        })
        .collect()
}

/// One-step linear predictor `x̂_{n+1} = Σ_{l=1..L} w_l x_{n+1−l}` from the
/// Wiener–Hopf equations `Σ_l w_l r(i − l) = r(i)`, i = 1..L, with diagonal
/// loading.
pub fn wiener_coefficients(x: &[C64], order: usize) -> (Vec<C64>, Flags) {
    let r = autocorrelation(x, order);
    let at = |m: i64| if m >= 0 { r[m as usize] } else { r[(-m) as usize].conj() };
    let a = CMatrix::from_fn(order, order, |i, l| at(i as i64 - l as i64));
    let p = CVector::from_fn(order, |i, _| at(i as i64 + 1));
    match loaded_solve(&a, &p, WIENER_LOADING) {
        Some(w) => (w.iter().cloned().collect(), Flags::empty()),
        None => (vec![C64::new(0.0, 0.0); order], Flags::REGULARIZED),
    }
}

/// Wiener prediction of the calibrated eigenvector samples. Within cycle `k`
/// the precoder is the sample at the cycle's first subframe and the one-step
/// prediction of sample `k + 1` from samples `k, k−1, …` elsewhere; cycles
/// with too little history hold the sample.
pub fn run_wiener(estimates: &[CMatrix], schedule: &SamplingSchedule, order: usize) -> Result<SchemeTrace> {
    if order == 0 {
        return Err(Error::Config("scheme.wiener_order must be at least 1".into()));
    }
    let samples = window_samples(estimates, schedule)?;
    let mut ledgers = vec![CostLedger::default(); schedule.n_samples];
    let mut flags = Flags::empty();
    for (k, s) in samples.iter().enumerate() {
        ledgers[k].evd_large += 1;
        flags |= s.flags;
    }
    let (dim, n_r) = samples[0].vectors.shape();
    let mut predicted: Vec<Option<CMatrix>> = vec![None; samples.len()];
    for (k, slot) in predicted.iter_mut().enumerate() {
        if k + 1 < order {
            continue;
        }
        let mut m = CMatrix::zeros(dim, n_r);
        for i in 0..dim {
            for r in 0..n_r {
                let series: Vec<C64> = samples.iter().map(|s| s.vectors[(i, r)]).collect();
                let (w, f) = wiener_coefficients(&series, order);
                flags |= f;
                m[(i, r)] = (1..=order).map(|l| w[l - 1] * series[k + 1 - l]).sum();
            }
        }
        if !normalize_columns(&mut m).is_empty() {
            flags |= Flags::ZERO_NORM_FALLBACK;
            continue;
        }
        *slot = Some(m);
    }
    let precoders = schedule
        .subframes()
        .map(|t| {
            let k = schedule.bucket(t);
            match (&predicted[k], schedule.is_sampling_instant(t)) {
                (Some(p), false) => p.clone(),
                _ => samples[k].vectors.clone(),
            }
        })
        .collect();
    Ok(SchemeTrace { precoders, bucket_ledgers: ledgers, flags })
}

/// Sum rate `Σ_k log₂(1 + ‖H_k f_k‖² / (σ² + Σ_{j≠k} ‖H_k f_j‖²))` where
/// `H_k = channels[k]ᴴ` and `f_k` is column k of `precoders`.
pub fn spectral_efficiency(channels: &[CMatrix], precoders: &CMatrix, noise_power: f64) -> Result<f64> {
    if channels.len() != precoders.ncols() {
        return Err(Error::Dimension { expected: channels.len(), actual: precoders.ncols() });
    }
    if !(noise_power > 0.0) {
        return Err(Error::Config("noise power must be positive".into()));
    }
    let mut total = 0.0;
    for (k, h) in channels.iter().enumerate() {
        if h.nrows() != precoders.nrows() {
            return Err(Error::Dimension { expected: precoders.nrows(), actual: h.nrows() });
        }
        let gains = h.adjoint() * precoders;
        let power = |j: usize| gains.column(j).norm_squared();
        let signal = power(k);
        let interference: f64 = (0..channels.len()).filter(|&j| j != k).map(power).sum();
        total += (1.0 + signal / (noise_power + interference)).log2();
    }
    Ok(total)
}

/// Phase-aligned normalized squared error `2(1 − |⟨u, û⟩| / (‖u‖‖û‖))`.
pub fn prediction_error(truth: &[C64], predicted: &[C64]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::Dimension { expected: truth.len(), actual: predicted.len() });
    }
    let (a, b) = (norm_sqr(truth).sqrt(), norm_sqr(predicted).sqrt());
    if a == 0.0 || b == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let c = (inner(truth, predicted).norm() / (a * b)).min(1.0);
    Ok((2.0 * (1.0 - c)).max(0.0))
}

/// Eigenvector error of the truncated-support model under exact premises:
/// with the true channel `h = h̃ + ĥ` split by `supports` and the true weights
/// `λ = H⁺u₁`, returns `‖u₁ − H̃λ‖² / ‖u₁‖²` for the dominant eigenvector.
pub fn truncation_error(h: &CMatrix, supports: &[IndexSet], basis: &AngleDelayBasis) -> Result<f64> {
    let n_r = h.ncols();
    if supports.len() != n_r {
        return Err(Error::Dimension { expected: n_r, actual: supports.len() });
    }
    let sample = sample_eigenvectors_wcm(h, 0);
    let u = sample.vectors.column(0).into_owned();
    let (lambda, _) = lstsq(h, &CMatrix::from_column_slice(u.len(), 1, u.as_slice()), 1e-12);
    let mut kept = CMatrix::zeros(h.nrows(), n_r);
    for r in 0..n_r {
        let g = basis.to_angle_delay(h.column(r).as_slice(), 0)?;
        let mut sparse = CVector::zeros(g.coefficients.len());
        for &n in &supports[r].indices {
            sparse[n] = g.coefficients[n];
        }
        kept.set_column(r, &basis.from_angle_delay(sparse.as_slice())?);
    }
    let approx = kept * lambda;
    Ok((u - approx.column(0)).norm_squared() / norm_sqr(sample.vectors.column(0).as_slice()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub mean_error: f64,
    pub bound: f64,
    /// `bound + tolerance − mean_error`; nonnegative on pass.
    pub margin: f64,
    pub pass: bool,
    pub n: usize,
}

/// Compares the ensemble mean of truncation errors with `1 − η`.
pub fn truncation_bound_check(errors: &[f64], eta: f64, tolerance: f64) -> BoundCheck {
    let n = errors.len();
    let mean_error = if n > 0 { errors.iter().sum::<f64>() / n as f64 } else { f64::NAN };
    let bound = 1.0 - eta;
    let margin = bound + tolerance - mean_error;
    BoundCheck { mean_error, bound, margin, pass: margin >= 0.0, n }
}

/// Dimensions entering the abstract cost model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModelInput {
    /// N_f·N_t.
    pub dimension: usize,
    pub n_ue_antennas: usize,
    pub t_evd: usize,
    pub n_evd: usize,
    pub dopplers_per_index: usize,
    /// Largest pairwise support intersection |G|_max.
    pub max_intersection: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub full_time: f64,
    pub egvp_wcm: f64,
    pub egvp_cgm: f64,
    pub full_over_wcm: f64,
    /// N_evd T_evd − N_evd − 2: the large-EVD count saved per window by WCM.
    pub wcm_saving: i64,
    pub wcm_beneficial: bool,
    /// N_f N_t − κ² N_r⁵.
    pub cgm_margin: f64,
    pub cgm_cheaper: bool,
    pub measured: Vec<(String, CostLedger)>,
}

pub fn complexity_report(input: &CostModelInput, measured: Vec<(String, CostLedger)>) -> ComplexityReport {
    let n = input.dimension as f64;
    let cube = n.powi(3);
    let full_time = (input.n_evd * input.t_evd) as f64 * cube;
    let egvp_wcm = (input.n_evd + 2) as f64 * cube;
    let nr = input.n_ue_antennas as f64;
    let g = input.max_intersection as f64;
    let m = input.dopplers_per_index as f64;
    let egvp_cgm = input.n_evd as f64 * nr.powi(5) * g * g * m * m + 2.0 * cube;
    let wcm_saving = (input.n_evd * input.t_evd) as i64 - input.n_evd as i64 - 2;
    let cgm_margin = n - input.kappa * input.kappa * nr.powi(5);
    ComplexityReport {
        full_time,
        egvp_wcm,
        egvp_cgm,
        full_over_wcm: full_time / egvp_wcm,
        wcm_saving,
        wcm_beneficial: wcm_saving > 0,
        cgm_margin,
        cgm_cheaper: cgm_margin > 0.0,
        measured,
    }
}
