//! Downlink CSI acquisition from uplink sounding plus compressed feedback.
//!
//! The base station keeps, for each UE antenna, the strongest angle-delay
//! bins of its uplink channel and a Doppler model per bin. Dopplers are
//! carried to the downlink by the carrier ratio, the UE feeds back one complex
//! amplitude per (bin, Doppler) pair, and the resulting sparse
//! angle-delay-Doppler model predicts the downlink channel at any subframe.

use serde::{Deserialize, Serialize};

use crate::angle_delay::{select_indices, AngleDelayBasis, AngleDelayCoeffs, IndexSet};
use crate::channel::{
    add_noise_matrix, add_sampling_noise, Band, BandConfig, ChannelSim, ChannelSnapshot, NoiseLevel, PathSet,
};
use crate::error::{Error, Result};
use crate::flags::Flags;
use crate::harmonic::{fit_exponentials, ExponentialFit};
use crate::linalg::{cis, lstsq, CMatrix, CVector, C64};
use crate::seeds::{self, domain};

/// Feedback LS systems whose singular values fall below this fraction of the
/// largest are solved in the minimum-norm sense and flagged.
const FEEDBACK_RCOND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub eta: f64,
    /// N_L, the length of the uplink sounding window.
    pub n_ul_samples: usize,
    /// M, exponentials per retained bin.
    pub dopplers_per_index: usize,
    /// T_d, subframes between feedback and the first precoded subframe.
    pub csi_delay: i64,
    /// ρ applied to uplink sounding and to the downlink measurement the UE
    /// uses for feedback.
    pub sampling_noise_db: NoiseLevel,
    /// ρ applied to the fed-back scalars.
    pub feedback_noise_db: NoiseLevel,
    /// Target κ; caps the support at ⌊κ N_f N_t / M⌋ bins per antenna.
    pub kappa: Option<f64>,
    /// Explicit per-antenna support cap; overrides `kappa`.
    pub support_cap: Option<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            eta: 0.9,
            n_ul_samples: 10,
            dopplers_per_index: 1,
            csi_delay: 5,
            sampling_noise_db: NoiseLevel::Free,
            feedback_noise_db: NoiseLevel::Free,
            kappa: Some(0.125),
            support_cap: None,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Config(format!("estimator.eta must lie in (0, 1], got {}", self.eta)));
        }
        if self.dopplers_per_index == 0 {
            return Err(Error::Config("estimator.dopplers_per_index must be at least 1".into()));
        }
        if self.n_ul_samples < 2 * self.dopplers_per_index {
            return Err(Error::Config(format!(
                "estimator.n_ul_samples ({}) must be at least twice dopplers_per_index ({})",
                self.n_ul_samples, self.dopplers_per_index
            )));
        }
        if self.csi_delay < 0 {
            return Err(Error::Config("estimator.csi_delay must be nonnegative".into()));
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::Config(format!("estimator.kappa must lie in (0, 1], got {k}")));
            }
        }
        if self.support_cap == Some(0) {
            return Err(Error::Config("estimator.support_cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Per-antenna support cap for a grid of `dimension` bins.
    pub fn cap(&self, dimension: usize) -> Option<usize> {
        self.support_cap.or_else(|| {
            self.kappa.map(|k| ((k * dimension as f64 / self.dopplers_per_index as f64).floor() as usize).max(1))
        })
    }

    /// Subframe of the feedback measurement: the last uplink-window subframe.
    pub fn feedback_subframe(&self) -> i64 {
        self.n_ul_samples as i64 - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlComponent {
    pub amplitude: C64,
    /// Radians per subframe.
    pub doppler: f64,
}

/// Sparse model of one UE antenna's downlink channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaModel {
    pub support: IndexSet,
    /// `components[i]` belongs to `support.indices[i]`.
    pub components: Vec<Vec<DlComponent>>,
}

impl AntennaModel {
    /// Predicted angle-delay coefficient of the `i`-th retained bin.
    pub fn coefficient(&self, i: usize, subframe: f64) -> C64 {
        self.components[i].iter().map(|c| c.amplitude * cis(c.doppler * subframe)).sum()
    }

    /// Number of fed-back scalars.
    pub fn n_scalars(&self) -> usize {
        self.components.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlChannelModel {
    pub antennas: Vec<AntennaModel>,
    pub dimension: usize,
    pub flags: Flags,
}

impl DlChannelModel {
    /// κ: fed-back scalars per antenna over N_f·N_t, averaged over antennas.
    pub fn kappa(&self) -> f64 {
        if self.antennas.is_empty() {
            return 0.0;
        }
        let total: usize = self.antennas.iter().map(AntennaModel::n_scalars).sum();
        total as f64 / (self.antennas.len() * self.dimension) as f64
    }
}

/// Matrix-pencil fit of order `m` on each selected bin's uplink time series.
/// `history` must hold consecutive subframes.
pub fn estimate_ul_doppler(history: &[AngleDelayCoeffs], set: &IndexSet, m: usize) -> Result<Vec<ExponentialFit>> {
    check_consecutive(history)?;
    set.indices
        .iter()
        .map(|&n| {
            let series: Vec<C64> = history.iter().map(|g| g.coefficients[n]).collect();
            fit_exponentials(&series, m)
        })
        .collect()
}

fn check_consecutive(history: &[AngleDelayCoeffs]) -> Result<()> {
    if history.windows(2).any(|w| w[1].subframe != w[0].subframe + 1) {
        return Err(Error::Config("coefficient history must cover consecutive subframes".into()));
    }
    Ok(())
}

/// Uplink-to-downlink transfer. Grid indices are reused, Dopplers are scaled
/// by f^d/f^u and uplink amplitudes dropped; a bin whose fit came back empty
/// keeps one static component.
pub fn map_reciprocity(
    ul_fits: &[ExponentialFit],
    set: &IndexSet,
    uplink: &BandConfig,
    downlink: &BandConfig,
) -> AntennaModel {
    let ratio = downlink.center_frequency / uplink.center_frequency;
    let components = ul_fits
        .iter()
        .map(|fit| {
            let mut comps: Vec<DlComponent> = fit
                .model
                .terms
                .iter()
                .map(|t| DlComponent {
                    amplitude: C64::new(0.0, 0.0),
                    doppler: if ratio == 1.0 { t.angular_step } else { t.angular_step * ratio },
                })
                .collect();
            if comps.is_empty() {
                comps.push(DlComponent { amplitude: C64::new(0.0, 0.0), doppler: 0.0 });
            }
            comps
        })
        .collect();
    AntennaModel { support: set.clone(), components }
}

/// Ideal compressed feedback. `measurements` are the UE's consecutive
/// angle-delay observations of its downlink channel ending at the feedback
/// subframe; the amplitudes of each bin are the least-squares fit of its
/// Doppler components to the last `M` of them (a single sample when `M = 1`).
/// Fed-back scalars are then perturbed at ratio `noise`.
pub fn compress_feedback(
    pending: &AntennaModel,
    measurements: &[AngleDelayCoeffs],
    noise: NoiseLevel,
    seed: u64,
) -> Result<(AntennaModel, Flags)> {
    check_consecutive(measurements)?;
    let mut flags = Flags::empty();
    let mut model = pending.clone();
    for (i, &n) in pending.support.indices.iter().enumerate() {
        let comps = &mut model.components[i];
        let m = comps.len();
        if measurements.len() < m {
            return Err(Error::InsufficientSamples { needed: m, got: measurements.len() });
        }
        let used = &measurements[measurements.len() - m..];
        let v = CMatrix::from_fn(m, m, |s, k| cis(comps[k].doppler * used[s].subframe as f64));
        let y = CMatrix::from_fn(m, 1, |s, _| used[s].coefficients[n]);
        let (a, deficient) = lstsq(&v, &y, FEEDBACK_RCOND);
        if deficient {
            flags |= Flags::REGULARIZED;
        }
        for (k, c) in comps.iter_mut().enumerate() {
            c.amplitude = a[(k, 0)];
        }
    }
    if noise != NoiseLevel::Free {
        let scalars: Vec<C64> = model.components.iter().flatten().map(|c| c.amplitude).collect();
        let noisy = add_noise_matrix(&CMatrix::from_column_slice(scalars.len(), 1, &scalars), noise, seed);
        for (c, z) in model.components.iter_mut().flatten().zip(noisy.iter()) {
            c.amplitude = *z;
        }
    }
    Ok((model, flags))
}

/// Sparse angle-delay coefficient vector of one antenna at `subframe`.
pub fn predict_coefficients(model: &AntennaModel, dimension: usize, subframe: f64) -> CVector {
    let mut g = CVector::zeros(dimension);
    for (i, &n) in model.support.indices.iter().enumerate() {
        g[n] = model.coefficient(i, subframe);
    }
    g
}

/// Predicted downlink channel at an arbitrary (possibly fractional) subframe.
pub fn predict_dl_channel(model: &DlChannelModel, basis: &AngleDelayBasis, subframe: f64) -> Result<CMatrix> {
    let mut h = CMatrix::zeros(model.dimension, model.antennas.len());
    for (r, antenna) in model.antennas.iter().enumerate() {
        let g = predict_coefficients(antenna, model.dimension, subframe);
        h.set_column(r, &basis.from_angle_delay(g.as_slice())?);
    }
    Ok(h)
}

pub fn predict_dl_snapshot(model: &DlChannelModel, basis: &AngleDelayBasis, subframe: i64) -> Result<ChannelSnapshot> {
    Ok(ChannelSnapshot {
        coefficients: predict_dl_channel(model, basis, subframe as f64)?,
        subframe,
        band: Band::Downlink,
    })
}

/// Support-selection outcome of one antenna, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionReport {
    pub achieved_fraction: Vec<f64>,
    pub capped: Vec<bool>,
    pub max_fit_residual: f64,
}

/// Runs the whole acquisition for one UE: noisy uplink sounding over
/// subframes `0..N_L`, per-antenna support selection and Doppler fits,
/// reciprocity mapping, and feedback from the noisy downlink measurement of
/// the last `M` window subframes.
pub fn acquire_dl_model(
    sim: &ChannelSim,
    basis: &AngleDelayBasis,
    paths: &PathSet,
    config: &EstimatorConfig,
    seed: u64,
) -> Result<(DlChannelModel, AcquisitionReport)> {
    config.validate()?;
    let dim = basis.dimension();
    let n_ant = paths.n_antennas();
    let mut ul: Vec<Vec<AngleDelayCoeffs>> = vec![Vec::with_capacity(config.n_ul_samples); n_ant];
    for t in 0..config.n_ul_samples as i64 {
        let clean = sim.channel_at(paths, t, Band::Uplink);
        let snap =
            add_sampling_noise(&clean, config.sampling_noise_db, seeds::derive(seed, &[domain::UL_NOISE, t as u64]));
        for (r, hist) in ul.iter_mut().enumerate() {
            hist.push(basis.to_angle_delay(snap.coefficients.column(r).as_slice(), t)?);
        }
    }
    let t_fb = config.feedback_subframe();
    let m = config.dopplers_per_index;
    let mut dl: Vec<Vec<AngleDelayCoeffs>> = vec![Vec::with_capacity(m); n_ant];
    for t in (t_fb + 1 - m as i64)..=t_fb {
        let clean = sim.channel_at(paths, t, Band::Downlink);
        let snap =
            add_sampling_noise(&clean, config.sampling_noise_db, seeds::derive(seed, &[domain::DL_NOISE, t as u64]));
        for (r, hist) in dl.iter_mut().enumerate() {
            hist.push(basis.to_angle_delay(snap.coefficients.column(r).as_slice(), t)?);
        }
    }

    let mut flags = Flags::empty();
    let mut antennas = Vec::with_capacity(n_ant);
    let mut report = AcquisitionReport { achieved_fraction: Vec::new(), capped: Vec::new(), max_fit_residual: 0.0 };
    for r in 0..n_ant {
        let sel = select_indices(&ul[r], config.eta, config.cap(dim))?;
        let fits = estimate_ul_doppler(&ul[r], &sel.set, m)?;
        for f in &fits {
            flags |= f.flags;
            report.max_fit_residual = report.max_fit_residual.max(f.residual);
        }
        let pending = map_reciprocity(&fits, &sel.set, &sim.uplink, &sim.downlink);
        let (model, fb_flags) = compress_feedback(
            &pending,
            &dl[r],
            config.feedback_noise_db,
            seeds::derive(seed, &[domain::FEEDBACK_NOISE, r as u64]),
        )?;
        flags |= fb_flags;
        report.achieved_fraction.push(sel.achieved_fraction);
        report.capped.push(sel.capped);
        antennas.push(model);
    }
    Ok((DlChannelModel { antennas, dimension: dim, flags }, report))
}
