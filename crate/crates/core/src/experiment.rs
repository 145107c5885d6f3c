//! Monte-Carlo drops: channel generation, CSI acquisition and scheme
//! evaluation, all keyed by counter-derived seeds.
//!
//! A drop places `n_ues` UEs at random nominal directions, runs the uplink
//! sounding window and feedback for each, and then evaluates every
//! configured scheme on the same true and estimated channels over one
//! sampling window `[t_in, t_in + N_evd T_evd)`, with `t_in = t_fb + T_d`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::angle_delay::{select_indices, AngleDelayBasis, IndexSet};
use crate::channel::{generate_paths, Band, ChannelSim, PathSet};
use crate::config::{RunConfig, Scheme};
use crate::csi::{acquire_dl_model, predict_dl_channel, DlChannelModel};
use crate::egvp::{ezf_precoders, run_egvp_cgm, run_egvp_wcm, sample_eigenvectors_wcm, SamplingSchedule};
use crate::error::Result;
use crate::flags::Flags;
use crate::linalg::CMatrix;
use crate::metrics::{
    prediction_error, run_full_time_evd, run_lazy_evd, run_wiener, spectral_efficiency, truncation_error, CostLedger,
    SchemeTrace,
};
use crate::seeds::{derive, domain};

/// One UE of a drop over the evaluation window.
#[derive(Debug, Clone)]
pub struct UeDrop {
    pub paths: PathSet,
    pub model: DlChannelModel,
    /// True DL channel, one `N × N_r` matrix per window subframe.
    pub truth: Vec<CMatrix>,
    /// Model prediction at the same subframes.
    pub estimates: Vec<CMatrix>,
}

#[derive(Debug, Clone)]
pub struct DropScene {
    pub sim: ChannelSim,
    pub basis: AngleDelayBasis,
    pub schedule: SamplingSchedule,
    pub ues: Vec<UeDrop>,
}

/// Aggregates of one scheme over one sampling cycle of one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketOutcome {
    pub bucket: usize,
    /// Sum SE averaged over the cycle's subframes.
    pub se: f64,
    /// PE averaged over UEs and subframes.
    pub pe: f64,
    /// Counters summed over UEs.
    pub ledger: CostLedger,
    pub flags: Flags,
}

/// Seed words identifying a UE of a drop. With `paired` the sweep index is
/// left out, so every sweep value sees the same paths and noise draws.
fn ue_key(config: &RunConfig, sweep_index: usize, drop: usize, ue: usize) -> Vec<u64> {
    let paired = config.sweep.as_ref().map(|s| s.paired).unwrap_or(true);
    if paired {
        vec![drop as u64, ue as u64]
    } else {
        vec![sweep_index as u64, drop as u64, ue as u64]
    }
}

fn seed_for(config: &RunConfig, dom: u64, key: &[u64]) -> u64 {
    let mut words = vec![dom];
    words.extend_from_slice(key);
    derive(config.master_seed, &words)
}

pub fn schedule_for(config: &RunConfig) -> Result<SamplingSchedule> {
    let t_in = config.estimator.feedback_subframe() + config.estimator.csi_delay;
    SamplingSchedule::new(t_in, config.scheme.t_evd, config.scheme.n_evd, config.scheme.order)
}

/// Draws the paths of one UE.
pub fn ue_paths(config: &RunConfig, sim: &ChannelSim, sweep_index: usize, drop: usize, ue: usize) -> Result<PathSet> {
    let key = ue_key(config, sweep_index, drop, ue);
    let sc = &config.scenario;
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(config, domain::DIRECTION, &key));
    let az_range = sc.ue_azimuth_range_deg.to_radians();
    let zen_range = sc.ue_zenith_range_deg.to_radians();
    let azimuth = if az_range > 0.0 { rng.random_range(-az_range..=az_range) } else { 0.0 };
    let zenith = PI / 2.0 + if zen_range > 0.0 { rng.random_range(-zen_range..=zen_range) } else { 0.0 };
    generate_paths(
        &sc.path_config(zenith, azimuth),
        &sim.geometry,
        &sim.downlink,
        seed_for(config, domain::PATHS, &key),
    )
}

/// Generates and acquires every UE of a drop.
pub fn build_drop(config: &RunConfig, sweep_index: usize, drop: usize) -> Result<DropScene> {
    let sim = config.scenario.simulator();
    let basis = AngleDelayBasis::new(&sim.geometry, sim.downlink.n_subcarriers);
    let schedule = schedule_for(config)?;
    let mut ues = Vec::with_capacity(config.scenario.n_ues);
    for ue in 0..config.scenario.n_ues {
        let paths = ue_paths(config, &sim, sweep_index, drop, ue)?;
        let key = ue_key(config, sweep_index, drop, ue);
        let (model, _) =
            acquire_dl_model(&sim, &basis, &paths, &config.estimator, seed_for(config, domain::ACQUISITION, &key))?;
        let truth = schedule.subframes().map(|t| sim.channel_at(&paths, t, Band::Downlink).coefficients).collect();
        let estimates =
            schedule.subframes().map(|t| predict_dl_channel(&model, &basis, t as f64)).collect::<Result<Vec<_>>>()?;
        ues.push(UeDrop { paths, model, truth, estimates });
    }
    Ok(DropScene { sim, basis, schedule, ues })
}

/// Runs one scheme for one UE. `upper_bound` sees the true channel, every
/// other scheme the model prediction.
pub fn run_scheme(scheme: Scheme, ue: &UeDrop, schedule: &SamplingSchedule, config: &RunConfig) -> Result<SchemeTrace> {
    match scheme {
        Scheme::UpperBound => run_full_time_evd(&ue.truth, schedule),
        Scheme::FullEvd => run_full_time_evd(&ue.estimates, schedule),
        Scheme::LazyEvd => run_lazy_evd(&ue.estimates, schedule),
        Scheme::Wiener => run_wiener(&ue.estimates, schedule, config.scheme.wiener_order),
        Scheme::EgvpWcm => run_egvp_wcm(&ue.estimates, schedule, config.scheme.order),
        Scheme::EgvpCgm => run_egvp_cgm(&ue.model, &ue.estimates, schedule, config.scheme.order),
    }
}

/// Evaluates every configured scheme on a drop; schemes share the scene.
pub fn evaluate_drop(config: &RunConfig, scene: &DropScene) -> Result<Vec<(Scheme, Vec<BucketOutcome>)>> {
    let schedule = &scene.schedule;
    let n_sub = schedule.n_samples * schedule.cycle;
    let noise = config.metrics.noise_power(scene.basis.dimension());
    let dominant: Vec<Vec<CMatrix>> = scene
        .ues
        .iter()
        .map(|ue| ue.truth.iter().enumerate().map(|(i, h)| sample_eigenvectors_wcm(h, i as i64).vectors).collect())
        .collect();
    let model_flags = scene.ues.iter().fold(Flags::empty(), |f, ue| f | ue.model.flags);

    let mut out = Vec::with_capacity(config.schemes.len());
    for &scheme in &config.schemes {
        let traces = scene.ues.iter().map(|ue| run_scheme(scheme, ue, schedule, config)).collect::<Result<Vec<_>>>()?;
        let trace_flags = traces.iter().fold(model_flags, |f, tr| f | tr.flags);
        let mut buckets: Vec<BucketOutcome> = (0..schedule.n_samples)
            .map(|b| BucketOutcome {
                bucket: b,
                se: 0.0,
                pe: 0.0,
                ledger: traces.iter().fold(CostLedger::default(), |mut l, tr| {
                    l.add(&tr.bucket_ledgers[b]);
                    l
                }),
                flags: trace_flags,
            })
            .collect();
        for i in 0..n_sub {
            let b = schedule.bucket(schedule.t_in + i as i64);
            let stacked = CMatrix::from_columns(&traces.iter().map(|tr| tr.precoders[i].column(0)).collect::<Vec<_>>());
            let (f, ezf_flags) = ezf_precoders(&stacked);
            let channels: Vec<CMatrix> = scene.ues.iter().map(|ue| ue.truth[i].clone()).collect();
            buckets[b].se += spectral_efficiency(&channels, &f, noise)?;
            buckets[b].flags |= ezf_flags;
            for (k, tr) in traces.iter().enumerate() {
                buckets[b].pe +=
                    prediction_error(dominant[k][i].column(0).as_slice(), tr.precoders[i].column(0).as_slice())?;
            }
        }
        let per_bucket = schedule.cycle as f64;
        for bk in &mut buckets {
            bk.se /= per_bucket;
            bk.pe /= per_bucket * scene.ues.len() as f64;
        }
        out.push((scheme, buckets));
    }
    Ok(out)
}

/// Outcome of one `(sweep point, drop)` pair, in run order.
#[derive(Debug, Clone)]
pub struct DropRecord {
    pub sweep_index: usize,
    pub drop: usize,
    pub outcome: std::result::Result<Vec<(Scheme, Vec<BucketOutcome>)>, String>,
}

/// Runs every drop of every sweep point in parallel. Records come back in
/// `(sweep, drop)` order regardless of scheduling.
pub fn simulate(config: &RunConfig) -> Result<Vec<DropRecord>> {
    config.validate()?;
    let points = config.sweep_points();
    let configs = points
        .iter()
        .map(|&(var, value)| match var {
            Some(v) => config.at_sweep_value(v, value),
            None => Ok(config.clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|s| (0..config.n_drops).map(move |d| (s, d))).collect();
    Ok(jobs
        .par_iter()
        .map(|&(s, d)| {
            let c = &configs[s];
            let outcome = build_drop(c, s, d).and_then(|scene| evaluate_drop(c, &scene)).map_err(|e| e.to_string());
            DropRecord { sweep_index: s, drop: d, outcome }
        })
        .collect())
}

/// Truncation errors `‖u − ũ‖²/‖u‖²` of the dominant eigenvector at every
/// sampling instant and UE of a drop, under exact premises: true channels,
/// supports chosen from the true DL angle-delay history at the instants, no
/// support cap.
pub fn truncation_errors(config: &RunConfig, sweep_index: usize, drop: usize) -> Result<Vec<f64>> {
    let sim = config.scenario.simulator();
    let basis = AngleDelayBasis::new(&sim.geometry, sim.downlink.n_subcarriers);
    let schedule = schedule_for(config)?;
    let mut errors = Vec::new();
    for ue in 0..config.scenario.n_ues {
        let paths = ue_paths(config, &sim, sweep_index, drop, ue)?;
        let snaps: Vec<CMatrix> =
            schedule.instants().map(|t| sim.channel_at(&paths, t, Band::Downlink).coefficients).collect();
        let mut supports: Vec<IndexSet> = Vec::with_capacity(paths.n_antennas());
        for r in 0..paths.n_antennas() {
            let history = schedule
                .instants()
                .zip(&snaps)
                .map(|(t, h)| basis.to_angle_delay(h.column(r).as_slice(), t))
                .collect::<Result<Vec<_>>>()?;
            supports.push(select_indices(&history, config.estimator.eta, None)?.set);
        }
        for h in &snaps {
            errors.push(truncation_error(h, &supports, &basis)?);
        }
    }
    Ok(errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(schemes: Vec<Scheme>) -> RunConfig {
        let mut c = RunConfig::with_schemes(schemes);
        c.scenario.n_vertical = 2;
        c.scenario.n_horizontal = 2;
        c.scenario.n_subcarriers = 8;
        c.scenario.n_ues = 2;
        c.scenario.n_paths = 3;
        c
    }

    #[test]
    fn static_channel_gives_constant_se() {
        let mut c = small(vec![Scheme::FullEvd]);
        c.scenario.ue_speed_kmh = 0.0;
        let scene = build_drop(&c, 0, 0).unwrap();
        let out = evaluate_drop(&c, &scene).unwrap();
        let se: Vec<f64> = out[0].1.iter().map(|b| b.se).collect();
        for s in &se {
            assert!((s - se[0]).abs() < 1e-9 * se[0], "{se:?}");
        }
    }

    #[test]
    fn lazy_equals_full_at_unit_cycle() {
        let mut c = small(vec![Scheme::FullEvd, Scheme::LazyEvd]);
        c.scheme.t_evd = 1;
        let scene = build_drop(&c, 0, 3).unwrap();
        let out = evaluate_drop(&c, &scene).unwrap();
        for (a, b) in out[0].1.iter().zip(&out[1].1) {
            assert!((a.se - b.se).abs() < 1e-12 * a.se.max(1.0));
        }
    }

    #[test]
    fn perfect_csi_full_evd_equals_upper_bound() {
        let mut c = small(vec![Scheme::UpperBound, Scheme::FullEvd]);
        c.scenario.on_grid = true;
        c.scenario.n_ues = 1;
        c.scenario.ue_speed_kmh = 30.0;
        c.estimator.eta = 1.0;
        c.estimator.kappa = None;
        let scene = build_drop(&c, 0, 1).unwrap();
        let out = evaluate_drop(&c, &scene).unwrap();
        for (a, b) in out[0].1.iter().zip(&out[1].1) {
            assert!((a.se - b.se).abs() < 1e-6 * a.se, "{} {}", a.se, b.se);
        }
        assert!(out[0].1.iter().all(|b| b.pe < 1e-12));
    }

    #[test]
    fn schemes_share_the_drop() {
        let c = small(vec![Scheme::UpperBound]);
        let a = build_drop(&c, 0, 2).unwrap();
        let b = build_drop(&c, 0, 2).unwrap();
        assert_eq!(a.ues[0].truth, b.ues[0].truth);
        assert_eq!(a.ues[1].estimates, b.ues[1].estimates);
        let other = build_drop(&c, 0, 5).unwrap();
        assert_ne!(a.ues[0].truth, other.ues[0].truth);
    }

    #[test]
    fn ledgers_follow_schedule() {
        let c = small(vec![Scheme::FullEvd, Scheme::EgvpWcm, Scheme::EgvpCgm]);
        let scene = build_drop(&c, 0, 0).unwrap();
        let out = evaluate_drop(&c, &scene).unwrap();
        let k = c.scenario.n_ues as u64;
        let total = |i: usize| {
            out[i].1.iter().fold(CostLedger::default(), |mut l, b| {
                l.add(&b.ledger);
                l
            })
        };
        assert_eq!(total(0).evd_large, k * (c.scheme.t_evd * c.scheme.n_evd) as u64);
        assert_eq!(total(1).evd_large, k * c.scheme.n_evd as u64);
        assert_eq!(total(1).pseudoinverse + total(1).reconstruction, 2 * k);
        assert_eq!(total(2).evd_small, k * c.scheme.n_evd as u64);
        assert_eq!(total(2).evd_large, 0);
    }

    #[test]
    fn on_grid_truncation_is_exact() {
        let mut c = small(vec![Scheme::UpperBound]);
        c.scenario.on_grid = true;
        c.estimator.eta = 1.0;
        let errs = truncation_errors(&c, 0, 0).unwrap();
        assert!(errs.iter().all(|e| *e < 1e-8), "{errs:?}");
    }
}
