//! Eigenvector-prediction precoding.
//!
//! Dominant eigenvectors of the estimated DL channel are sampled every
//! `T_evd` subframes, either from the wideband channel matrix (WCM) or from the
//! small channel Gram matrix (CGM). Each sample is expressed as a linear
//! combination `U = H̃ Λ` of the per-antenna channels; the weights Λ vary
//! slowly and are interpolated between samples with the matrix pencil, then
//! recombined with the current channel estimate.

use crate::csi::DlChannelModel;
use crate::error::{Error, Result};
use crate::flags::Flags;
use crate::harmonic::{fit_exponentials, ExponentialModel};
use crate::linalg::{hermitian_eigen, inner, lstsq, normalize_columns, svd, unit_phase, CMatrix, C64};
use crate::metrics::{window_samples, CostLedger, SchemeTrace};

/// Relative eigenvalue gap below which a pair is reported as degenerate.
pub const DEGENERATE_GAP: f64 = 1e-10;
/// Minimum |correlation| for a column to count as tracked across samples.
pub const TRACKING_THRESHOLD: f64 = 0.1;
/// Condition number of ŪᴴŪ above which EZF is regularized.
pub const EZF_CONDITION_LIMIT: f64 = 1e8;
const RANK_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingSchedule {
    pub t_in: i64,
    /// T_evd.
    pub cycle: usize,
    /// N_evd.
    pub n_samples: usize,
}

impl SamplingSchedule {
    /// Checks `N_evd ≥ 2L`.
    pub fn new(t_in: i64, cycle: usize, n_samples: usize, order: usize) -> Result<Self> {
        if cycle == 0 {
            return Err(Error::Config("scheme.t_evd must be at least 1".into()));
        }
        if n_samples < 2 * order.max(1) {
            return Err(Error::InsufficientSamples { needed: 2 * order.max(1), got: n_samples });
        }
        Ok(SamplingSchedule { t_in, cycle, n_samples })
    }

    /// Last sampling instant.
    pub fn t_ed(&self) -> i64 {
        self.t_in + ((self.n_samples - 1) * self.cycle) as i64
    }

    /// One past the last subframe served by this window.
    pub fn window_end(&self) -> i64 {
        self.t_in + (self.n_samples * self.cycle) as i64
    }

    pub fn instants(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.n_samples).map(move |k| self.t_in + (k * self.cycle) as i64)
    }

    pub fn subframes(&self) -> std::ops::Range<i64> {
        self.t_in..self.window_end()
    }

    pub fn is_sampling_instant(&self, t: i64) -> bool {
        t >= self.t_in && t <= self.t_ed() && (t - self.t_in) % self.cycle as i64 == 0
    }

    /// `(t − t_in) / T_evd`, the sample-index coordinate of subframe `t`.
    pub fn fractional_index(&self, t: f64) -> f64 {
        (t - self.t_in as f64) / self.cycle as f64
    }

    /// Index of the sampling cycle containing `t`.
    pub fn bucket(&self, t: i64) -> usize {
        ((t - self.t_in).max(0) as usize) / self.cycle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSource {
    Wcm,
    Cgm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSample {
    pub subframe: i64,
    /// Columns ũ_r, unit norm.
    pub vectors: CMatrix,
    /// χ_r, nonincreasing at sampling time (re-paired order after calibration).
    pub eigenvalues: Vec<f64>,
    pub source: SampleSource,
    /// Weights with `vectors = H̃ · weights`, known in closed form for CGM
    /// samples and carried through calibration.
    pub weights: Option<CMatrix>,
    pub flags: Flags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    /// Λ, column r = λ_r.
    pub entries: CMatrix,
    pub subframe: i64,
    /// ‖H̃Λ − U‖_F.
    pub residual: f64,
    pub flags: Flags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    /// Entry (j, r) = h̃_jᴴ h̃_r.
    pub entries: CMatrix,
    pub subframe: f64,
    /// Σ over antenna pairs of |G_{r,j}|·M_r·M_j.
    pub flops: u64,
}

fn degenerate(values: &[f64]) -> bool {
    let top = values.first().cloned().unwrap_or(0.0).abs();
    values.windows(2).any(|w| (w[0] - w[1]).abs() <= DEGENERATE_GAP * top && w[0] > 0.0)
}

/// Dominant eigenvectors of H̃H̃ᴴ from a thin SVD of H̃.
pub fn sample_eigenvectors_wcm(h: &CMatrix, subframe: i64) -> EigenSample {
    let d = svd(h);
    let n_r = h.ncols();
    let top = d.singular_values.first().cloned().unwrap_or(0.0);
    let mut flags = Flags::empty();
    let mut eigenvalues = Vec::with_capacity(n_r);
    let mut vectors = CMatrix::zeros(h.nrows(), n_r);
    for r in 0..n_r {
        let s = d.singular_values.get(r).cloned().unwrap_or(0.0);
        if s <= RANK_RCOND * top || s == 0.0 {
            flags |= Flags::RANK_DEFICIENT;
            eigenvalues.push(0.0);
        } else {
            eigenvalues.push(s * s);
        }
        if r < d.u.ncols() {
            vectors.set_column(r, &d.u.column(r));
        }
    }
    if degenerate(&eigenvalues) {
        flags |= Flags::DEGENERATE_EIGEN;
    }
    EigenSample { subframe, vectors, eigenvalues, source: SampleSource::Wcm, weights: None, flags }
}

/// Gram matrix of the predicted DL channels at `subframe`, accumulated only
/// over the common support of each antenna pair.
pub fn gram_matrix(model: &DlChannelModel, subframe: f64) -> GramMatrix {
    let n_r = model.antennas.len();
    let mut entries = CMatrix::zeros(n_r, n_r);
    let mut flops = 0u64;
    // Coefficients are evaluated once per (antenna, retained bin).
    let coeffs: Vec<Vec<C64>> =
        model.antennas.iter().map(|a| (0..a.support.len()).map(|i| a.coefficient(i, subframe)).collect()).collect();
    for j in 0..n_r {
        for r in j..n_r {
            let (aj, ar) = (&model.antennas[j], &model.antennas[r]);
            let mut acc = C64::new(0.0, 0.0);
            let (mut x, mut y) = (0, 0);
            while x < aj.support.len() && y < ar.support.len() {
                match aj.support.indices[x].cmp(&ar.support.indices[y]) {
                    std::cmp::Ordering::Less => x += 1,
                    std::cmp::Ordering::Greater => y += 1,
                    std::cmp::Ordering::Equal => {
                        acc += coeffs[j][x].conj() * coeffs[r][y];
                        flops += (aj.components[x].len() * ar.components[y].len()) as u64;
                        x += 1;
                        y += 1;
                    }
                }
            }
            entries[(j, r)] = acc;
            entries[(r, j)] = acc.conj();
        }
    }
    for r in 0..n_r {
        entries[(r, r)] = C64::new(entries[(r, r)].re, 0.0);
    }
    GramMatrix { entries, subframe, flops }
}

/// Eigenvectors from the Gram matrix: with `S̃ λ̃_r = χ_r λ̃_r`, the vector
/// `H̃ λ̃_r / √χ_r` is the r-th dominant eigenvector of H̃H̃ᴴ.
pub fn sample_eigenvectors_cgm(gram: &GramMatrix, h: &CMatrix, subframe: i64) -> Result<EigenSample> {
    let n_r = h.ncols();
    if gram.entries.nrows() != n_r {
        return Err(Error::Dimension { expected: n_r, actual: gram.entries.nrows() });
    }
    let (values, lambdas) = hermitian_eigen(&gram.entries);
    let top = values.first().cloned().unwrap_or(0.0);
    let mut flags = Flags::empty();
    let mut weights = lambdas.clone();
    let mut eigenvalues = Vec::with_capacity(n_r);
    for r in 0..n_r {
        let chi = values[r];
        if chi <= RANK_RCOND * top || chi <= 0.0 {
            flags |= Flags::RANK_DEFICIENT;
            eigenvalues.push(0.0);
            weights.column_mut(r).fill(C64::new(0.0, 0.0));
        } else {
            eigenvalues.push(chi);
            weights.column_mut(r).unscale_mut(chi.sqrt());
        }
    }
    let mut vectors = h * &weights;
    // Normalize explicitly: the Gram is built from the sparse model while H̃ is
    // its synthesized image, so the two agree only to round-off.
    for (r, mut col) in vectors.column_iter_mut().enumerate() {
        let n = col.norm();
        if n > 0.0 {
            col.unscale_mut(n);
            weights.column_mut(r).unscale_mut(n);
        }
    }
    if degenerate(&eigenvalues) {
        flags |= Flags::DEGENERATE_EIGEN;
    }
    Ok(EigenSample { subframe, vectors, eigenvalues, source: SampleSource::Cgm, weights: Some(weights), flags })
}

/// Greedy assignment of current columns to previous ones by |correlation|.
/// Returns `perm` with `perm[prev] = cur`, or `None` when some pair falls below
/// [`TRACKING_THRESHOLD`].
fn pair_columns(prev: &CMatrix, cur: &CMatrix) -> Option<Vec<usize>> {
    let n = prev.ncols();
    let mut corr = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            corr.push((inner(prev.column(i).as_slice(), cur.column(j).as_slice()).norm(), i, j));
        }
    }
    corr.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut perm = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (c, i, j) in corr {
        if perm[i] != usize::MAX || taken[j] {
            continue;
        }
        if c < TRACKING_THRESHOLD {
            return None;
        }
        perm[i] = j;
        taken[j] = true;
    }
    Some(perm)
}

/// Removes the per-sample eigenvector phase ambiguity.
///
/// Columns of each sample are first re-paired with the previous calibrated
/// sample. Each column is then rotated so that its inner product with the
/// matching column of the first sample is real and nonnegative. When pairing
/// fails the eigenvalue order is kept and [`Flags::TRACKING_LOST`] raised.
pub fn calibrate_phase(samples: &[EigenSample]) -> Result<Vec<EigenSample>> {
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    let n_r = first.vectors.ncols();
    let mut out: Vec<EigenSample> = Vec::with_capacity(samples.len());
    out.push(first.clone());
    for s in &samples[1..] {
        if s.vectors.shape() != first.vectors.shape() {
            return Err(Error::Dimension { expected: n_r, actual: s.vectors.ncols() });
        }
        let prev = &out.last().expect("nonempty").vectors;
        let mut flags = s.flags;
        let perm = pair_columns(prev, &s.vectors).unwrap_or_else(|| {
            flags |= Flags::TRACKING_LOST;
            (0..n_r).collect()
        });
        let mut vectors = CMatrix::zeros(s.vectors.nrows(), n_r);
        let mut weights = s.weights.as_ref().map(|w| CMatrix::zeros(w.nrows(), n_r));
        let mut eigenvalues = vec![0.0; n_r];
        for r in 0..n_r {
            let src = perm[r];
            let col = s.vectors.column(src);
            let c = unit_phase(inner(col.as_slice(), first.vectors.column(r).as_slice()));
            vectors.set_column(r, &(col * c));
            eigenvalues[r] = s.eigenvalues[src];
            if let (Some(w), Some(src_w)) = (weights.as_mut(), s.weights.as_ref()) {
                w.set_column(r, &(src_w.column(src) * c));
            }
        }
        out.push(EigenSample { subframe: s.subframe, vectors, eigenvalues, source: s.source, weights, flags });
    }
    Ok(out)
}

/// Λ with `H̃ Λ = U`: the closed-form CGM weights when the sample carries
/// them, otherwise the minimum-norm least-squares solution.
pub fn extract_weights(sample: &EigenSample, h: &CMatrix) -> WeightMatrix {
    let mut flags = Flags::empty();
    let entries = match &sample.weights {
        Some(w) => w.clone(),
        None => {
            let (x, deficient) = lstsq(h, &sample.vectors, RANK_RCOND);
            if deficient {
                flags |= Flags::REGULARIZED;
            }
            x
        }
    };
    let residual = (h * &entries - &sample.vectors).norm();
    WeightMatrix { entries, subframe: sample.subframe, residual, flags }
}

/// Per-entry exponential models of Λ over one sampling window.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightModel {
    pub schedule: SamplingSchedule,
    /// Row-major N_r × N_r.
    pub entries: Vec<ExponentialModel>,
    pub n_rows: usize,
    pub n_cols: usize,
    pub flags: Flags,
    pub max_residual: f64,
}

impl WeightModel {
    pub fn n_fits(&self) -> usize {
        self.entries.len()
    }

    /// Λ̂(t). Past one cycle beyond the last sample the value is an
    /// unsupported extrapolation and is flagged.
    pub fn evaluate(&self, t: f64) -> (CMatrix, Flags) {
        let x = self.schedule.fractional_index(t);
        let flags = if t > (self.schedule.t_ed() + self.schedule.cycle as i64) as f64 {
            Flags::EXTRAPOLATED
        } else {
            Flags::empty()
        };
        let m = CMatrix::from_fn(self.n_rows, self.n_cols, |i, j| self.entries[i * self.n_cols + j].evaluate(x));
        (m, flags)
    }
}

/// Fits every weight entry over the window's samples.
pub fn interpolate_weights(history: &[WeightMatrix], order: usize, schedule: SamplingSchedule) -> Result<WeightModel> {
    if history.len() != schedule.n_samples {
        return Err(Error::InsufficientSamples { needed: schedule.n_samples, got: history.len() });
    }
    let (n_rows, n_cols) = history[0].entries.shape();
    let mut entries = Vec::with_capacity(n_rows * n_cols);
    let mut flags = Flags::empty();
    let mut max_residual: f64 = 0.0;
    for i in 0..n_rows {
        for j in 0..n_cols {
            let series: Vec<C64> = history.iter().map(|w| w.entries[(i, j)]).collect();
            let fit = fit_exponentials(&series, order)?;
            // Constant or low-rank entries legitimately need fewer terms.
            flags |= fit.flags & !Flags::RANK_COLLAPSE;
            max_residual = max_residual.max(fit.residual);
            entries.push(fit.model);
        }
    }
    Ok(WeightModel { schedule, entries, n_rows, n_cols, flags, max_residual })
}

/// û_r(t) = Σ_j Λ̂_{j,r}(t) h̃_j(t), normalized. Zero columns fall back to the
/// matching column of `fallback`.
pub fn reconstruct_precoder(weights: &CMatrix, h: &CMatrix, fallback: &CMatrix) -> (CMatrix, Flags) {
    let mut u = h * weights;
    let zero = normalize_columns(&mut u);
    let mut flags = Flags::empty();
    for r in zero {
        flags |= Flags::ZERO_NORM_FALLBACK;
        u.set_column(r, &fallback.column(r));
    }
    (u, flags)
}

/// Eigen zero-forcing: `F = Ū (ŪᴴŪ)⁻¹` with unit-norm columns.
pub fn ezf_precoders(dominant: &CMatrix) -> (CMatrix, Flags) {
    let k = dominant.ncols();
    let gram = dominant.adjoint() * dominant;
    let (vals, _) = hermitian_eigen(&gram);
    let top = vals.first().cloned().unwrap_or(0.0);
    let bottom = vals.last().cloned().unwrap_or(0.0);
    let mut flags = Flags::empty();
    let mut g = gram.clone();
    if !(bottom > 0.0) || top / bottom > EZF_CONDITION_LIMIT {
        flags |= Flags::ILL_CONDITIONED;
        let eps = if top > 0.0 { top / EZF_CONDITION_LIMIT } else { 1.0 };
        for i in 0..k {
            g[(i, i)] += C64::new(eps, 0.0);
        }
    }
    let inv = g.lu().try_inverse().unwrap_or_else(|| CMatrix::identity(k, k));
    let mut f = dominant * inv;
    if !normalize_columns(&mut f).is_empty() {
        flags |= Flags::ZERO_NORM_FALLBACK;
    }
    (f, flags)
}

fn window_index(schedule: &SamplingSchedule, t: i64) -> usize {
    (t - schedule.t_in) as usize
}

/// Interpolates calibrated samples over the window and reconstructs the
/// precoder of every subframe from the estimate at that subframe.
fn predict_window(
    samples: Vec<EigenSample>,
    estimates: &[CMatrix],
    schedule: &SamplingSchedule,
    order: usize,
    mut ledgers: Vec<CostLedger>,
) -> Result<SchemeTrace> {
    let mut flags = Flags::empty();
    let history: Vec<WeightMatrix> = samples
        .iter()
        .map(|s| {
            flags |= s.flags;
            let w = extract_weights(s, &estimates[window_index(schedule, s.subframe)]);
            flags |= w.flags;
            w
        })
        .collect();
    let model = interpolate_weights(&history, order, *schedule)?;
    flags |= model.flags;
    ledgers[0].pseudoinverse += 1;
    ledgers[0].reconstruction += 1;
    ledgers[0].pencil_fits += model.n_fits() as u64;
    let precoders = schedule
        .subframes()
        .map(|t| {
            let (lambda, f) = model.evaluate(t as f64);
            let fallback = &samples[schedule.bucket(t).min(samples.len() - 1)].vectors;
            let (u, g) = reconstruct_precoder(&lambda, &estimates[window_index(schedule, t)], fallback);
            flags |= f | g;
            u
        })
        .collect();
    Ok(SchemeTrace { precoders, bucket_ledgers: ledgers, flags })
}

/// EGVP with eigenvectors sampled from the wideband channel matrix.
pub fn run_egvp_wcm(estimates: &[CMatrix], schedule: &SamplingSchedule, order: usize) -> Result<SchemeTrace> {
    let samples = window_samples(estimates, schedule)?;
    let mut ledgers = vec![CostLedger::default(); schedule.n_samples];
    for l in ledgers.iter_mut() {
        l.evd_large += 1;
    }
    predict_window(samples, estimates, schedule, order, ledgers)
}

/// EGVP with eigenvectors sampled through the channel Gram matrix built from
/// the sparse DL model.
pub fn run_egvp_cgm(
    model: &DlChannelModel,
    estimates: &[CMatrix],
    schedule: &SamplingSchedule,
    order: usize,
) -> Result<SchemeTrace> {
    let need = schedule.n_samples * schedule.cycle;
    if estimates.len() != need {
        return Err(Error::InsufficientSamples { needed: need, got: estimates.len() });
    }
    let mut ledgers = vec![CostLedger::default(); schedule.n_samples];
    let mut raw = Vec::with_capacity(schedule.n_samples);
    for (k, t) in schedule.instants().enumerate() {
        let gram = gram_matrix(model, t as f64);
        ledgers[k].gram_flops += gram.flops;
        ledgers[k].evd_small += 1;
        raw.push(sample_eigenvectors_cgm(&gram, &estimates[window_index(schedule, t)], t)?);
    }
    let samples = calibrate_phase(&raw)?;
    predict_window(samples, estimates, schedule, order, ledgers)
}
