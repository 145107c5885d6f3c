//! Ground-truth multipath channels for the uplink and downlink bands.
//!
//! A [`PathSet`] holds the large- and small-scale parameters of every path to
//! every UE antenna. Both bands are synthesized from the same set: gains,
//! delays and angles are shared, the Doppler angular frequency scales with the
//! carrier. The stacked wideband channel of antenna `r` is
//!
//! ```text
//! h_r(t) = Σ_p β_p e^{j ω_p(band) t} · (steering(θ_p, φ_p) ⊗ delay(τ_p))
//! ```
//!
//! with the element index laid out as `spatial * N_f + subcarrier`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{cis, CMatrix, CVector, C64};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// One subframe, the simulation time step.
pub const SUBFRAME_SECONDS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_vertical: usize,
    pub n_horizontal: usize,
    pub n_polarizations: usize,
    /// Element spacing in wavelengths of the band being synthesized.
    pub element_spacing: f64,
}

impl ArrayGeometry {
    pub fn new(n_vertical: usize, n_horizontal: usize, n_polarizations: usize) -> Result<Self> {
        let g = ArrayGeometry { n_vertical, n_horizontal, n_polarizations, element_spacing: 0.5 };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vertical == 0 || self.n_horizontal == 0 {
            return Err(Error::Config("array needs at least one element per axis".into()));
        }
        if !(1..=2).contains(&self.n_polarizations) {
            return Err(Error::Config("n_polarizations must be 1 or 2".into()));
        }
        if !(self.element_spacing > 0.0) {
            return Err(Error::Config("element_spacing must be positive".into()));
        }
        Ok(())
    }

    /// N_t.
    pub fn n_elements(&self) -> usize {
        self.n_vertical * self.n_horizontal * self.n_polarizations
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Uplink,
    Downlink,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub center_frequency: f64,
    pub n_subcarriers: usize,
    pub subcarrier_spacing: f64,
    pub base_frequency: f64,
}

impl BandConfig {
    /// A band whose first subcarrier sits half a bandwidth below the carrier.
    pub fn centered(center_frequency: f64, n_subcarriers: usize, subcarrier_spacing: f64) -> Self {
        BandConfig {
            center_frequency,
            n_subcarriers,
            subcarrier_spacing,
            base_frequency: center_frequency - 0.5 * n_subcarriers as f64 * subcarrier_spacing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.center_frequency > 0.0
            && self.n_subcarriers > 0
            && self.subcarrier_spacing > 0.0
            && self.base_frequency > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("band parameters must all be positive".into()))
        }
    }

    /// Delay resolution of the frequency grid, 1/(N_f·Δf).
    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.n_subcarriers as f64 * self.subcarrier_spacing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParameter {
    pub amplitude: C64,
    /// Seconds.
    pub delay: f64,
    pub zenith: f64,
    pub azimuth: f64,
    /// Angle between the UE velocity and the path.
    pub doppler_direction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    /// Paths per UE antenna.
    pub antennas: Vec<Vec<PathParameter>>,
    /// m/s.
    pub ue_speed: f64,
}

impl PathSet {
    pub fn n_antennas(&self) -> usize {
        self.antennas.len()
    }

    /// Doppler angular frequency of a path in rad/subframe on a carrier.
    pub fn doppler(&self, path: &PathParameter, carrier: f64) -> f64 {
        2.0 * PI * self.ue_speed * path.doppler_direction.cos() * carrier / SPEED_OF_LIGHT * SUBFRAME_SECONDS
    }

    /// Multiplies every amplitude by `factor`.
    pub fn scaled(&self, factor: f64) -> PathSet {
        let mut out = self.clone();
        for p in out.antennas.iter_mut().flatten() {
            p.amplitude *= factor;
        }
        out
    }
}

/// Parameters of the synthetic path generator for one UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGenConfig {
    pub n_ue_antennas: usize,
    pub n_paths: usize,
    /// RMS delay spread in seconds.
    pub delay_spread: f64,
    pub nominal_delay: f64,
    pub zenith_spread: f64,
    pub azimuth_spread: f64,
    pub nominal_zenith: f64,
    pub nominal_azimuth: f64,
    /// m/s.
    pub ue_speed: f64,
    /// Snap delays to the delay grid and angles to DFT beams, one path per bin.
    pub on_grid: bool,
}

impl Default for PathGenConfig {
    /// Desk profile: two UE antennas, eight paths, 300 ns delay spread around
    /// a broadside nominal direction.
    fn default() -> Self {
        PathGenConfig {
            n_ue_antennas: 2,
            n_paths: 8,
            delay_spread: 300e-9,
            nominal_delay: 0.0,
            zenith_spread: 0.15,
            azimuth_spread: 0.3,
            nominal_zenith: PI / 2.0,
            nominal_azimuth: 0.0,
            ue_speed: 0.0,
            on_grid: false,
        }
    }
}

impl PathGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        if self.n_ue_antennas == 0 {
            return Err(Error::Config("n_ue_antennas must be at least 1".into()));
        }
        let spreads = [self.delay_spread, self.zenith_spread, self.azimuth_spread];
        if spreads.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config("spreads must be finite and nonnegative".into()));
        }
        if !(self.nominal_delay >= 0.0) || !(self.ue_speed >= 0.0) {
            return Err(Error::Config("nominal delay and speed must be nonnegative".into()));
        }
        Ok(())
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x == -PI {
        x = PI;
    }
    x
}

/// Draws a [`PathSet`] deterministically from `(config, seed)`.
///
/// Delays are exponential with the configured RMS spread, angles are wrapped
/// Gaussians around the nominal direction, amplitudes are complex Gaussian and
/// normalized to unit power per UE antenna on
/// average, so antennas of one UE differ in received power. In on-grid mode every path
/// is snapped to a distinct angle-delay bin of `geometry`/`band`.
pub fn generate_paths(
    config: &PathGenConfig,
    geometry: &ArrayGeometry,
    band: &BandConfig,
    seed: u64,
) -> Result<PathSet> {
    config.validate()?;
    geometry.validate()?;
    band.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_delay = 1.0 / band.subcarrier_spacing;
    let exp = if config.delay_spread > 0.0 {
        Some(Exp::new(1.0 / config.delay_spread).expect("positive rate"))
    } else {
        None
    };
    let mut grid = GridAllocator::new(geometry, band);
    let mut antennas = Vec::with_capacity(config.n_ue_antennas);
    for _ in 0..config.n_ue_antennas {
        let mut paths = Vec::with_capacity(config.n_paths);
        for _ in 0..config.n_paths {
            let delay = loop {
                let extra = exp.as_ref().map(|e| e.sample(&mut rng)).unwrap_or(0.0);
                let d = config.nominal_delay + extra;
                if d < max_delay {
                    break d;
                }
            };
            let gz: f64 = rng.sample(StandardNormal);
            let ga: f64 = rng.sample(StandardNormal);
            let zenith = wrap_angle(config.nominal_zenith + config.zenith_spread * gz).abs();
            let azimuth = wrap_angle(config.nominal_azimuth + config.azimuth_spread * ga);
            let doppler_direction = rng.random_range(0.0..2.0 * PI);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            paths.push(PathParameter { amplitude: C64::new(re, im), delay, zenith, azimuth, doppler_direction });
        }
        antennas.push(paths);
    }
    let power: f64 = antennas.iter().flatten().map(|p| p.amplitude.norm_sqr()).sum();
    let scale = if power > 0.0 { (config.n_ue_antennas as f64 / power).sqrt() } else { 1.0 };
    for p in antennas.iter_mut().flatten() {
        p.amplitude *= scale;
        if config.on_grid {
            grid.snap(p, geometry, band);
        }
    }
    Ok(PathSet { antennas, ue_speed: config.ue_speed })
}

/// Hands out distinct on-grid (delay, vertical, horizontal) bins.
struct GridAllocator {
    used: Vec<bool>,
    n_f: usize,
    n_v: usize,
    n_h: usize,
}

impl GridAllocator {
    fn new(geometry: &ArrayGeometry, band: &BandConfig) -> Self {
        let n = band.n_subcarriers * geometry.n_vertical * geometry.n_horizontal;
        GridAllocator {
            used: vec![false; n],
            n_f: band.n_subcarriers,
            n_v: geometry.n_vertical,
            n_h: geometry.n_horizontal,
        }
    }

    /// Spatial frequency (cycles per element) mapped to a signed beam index.
    fn signed(k: usize, n: usize) -> f64 {
        let k = k as f64;
        let n = n as f64;
        if k >= n / 2.0 {
            (k - n) / n
        } else {
            k / n
        }
    }

    fn visible(&self, kv: usize, kh: usize, spacing: f64) -> Option<(f64, f64)> {
        let cos_z = Self::signed(kv, self.n_v) / spacing;
        if cos_z.abs() > 1.0 {
            return None;
        }
        let sin_z = (1.0 - cos_z * cos_z).sqrt();
        let s = Self::signed(kh, self.n_h) / spacing;
        if sin_z <= 1e-12 {
            return if s == 0.0 { Some((cos_z.acos(), 0.0)) } else { None };
        }
        let sin_a = s / sin_z;
        if sin_a.abs() > 1.0 {
            return None;
        }
        Some((cos_z.acos(), sin_a.asin()))
    }

    fn snap(&mut self, p: &mut PathParameter, geometry: &ArrayGeometry, band: &BandConfig) {
        let d = geometry.element_spacing;
        let kf0 = (p.delay / band.delay_resolution()).round() as i64;
        let psi_v = d * p.zenith.cos();
        let psi_h = d * p.zenith.sin() * p.azimuth.sin();
        let kv0 = (psi_v * self.n_v as f64).round() as i64;
        let kh0 = (psi_h * self.n_h as f64).round() as i64;
        // Search outward from the nearest bin for a visible, unused one.
        let mut best: Option<(i64, usize, usize, f64, f64)> = None;
        for kf in 0..self.n_f {
            for kv in 0..self.n_v {
                for kh in 0..self.n_h {
                    let idx = (kf * self.n_v + kv) * self.n_h + kh;
                    if self.used[idx] {
                        continue;
                    }
                    let Some((zen, az)) = self.visible(kv, kh, d) else { continue };
                    let dist = |a: i64, b: usize, n: usize| {
                        let diff = (a - b as i64).rem_euclid(n as i64);
                        diff.min(n as i64 - diff)
                    };
                    let cost = (kf as i64 - kf0).abs().min(self.n_f as i64) * 1000
                        + dist(kv0, kv, self.n_v) * 10
                        + dist(kh0, kh, self.n_h) * 10;
                    if best.is_none_or(|b| cost < b.0) {
                        best = Some((cost, idx, kf, zen, az));
                    }
                }
            }
        }
        if let Some((_, idx, kf, zen, az)) = best {
            self.used[idx] = true;
            p.delay = kf as f64 * band.delay_resolution();
            p.zenith = zen;
            p.azimuth = az;
        }
    }
}

/// UPA steering vector of length N_t: `1_P ⊗ α_h ⊗ α_v`, element `(h, v)`
/// carrying phase `2π·spacing·(h·sinθ·sinφ + v·cosθ)`.
pub fn steering_vector(zenith: f64, azimuth: f64, geometry: &ArrayGeometry) -> CVector {
    let d = geometry.element_spacing;
    let psi_h = 2.0 * PI * d * zenith.sin() * azimuth.sin();
    let psi_v = 2.0 * PI * d * zenith.cos();
    let block = geometry.n_horizontal * geometry.n_vertical;
    CVector::from_fn(geometry.n_elements(), |i, _| {
        let within = i % block;
        let h = within / geometry.n_vertical;
        let v = within % geometry.n_vertical;
        cis(h as f64 * psi_h + v as f64 * psi_v)
    })
}

/// Delay vector of length N_f: entry n is `e^{j2πτ f_0} e^{j2πτ nΔf}`.
pub fn delay_vector(delay: f64, band: &BandConfig) -> CVector {
    let base = 2.0 * PI * delay * band.base_frequency;
    let step = 2.0 * PI * delay * band.subcarrier_spacing;
    CVector::from_fn(band.n_subcarriers, |n, _| cis(base + step * n as f64))
}

/// Stacked angle-delay signature `steering ⊗ delay`.
pub fn signature(path: &PathParameter, geometry: &ArrayGeometry, band: &BandConfig) -> CVector {
    let a = steering_vector(path.zenith, path.azimuth, geometry);
    let tau = delay_vector(path.delay, band);
    a.kronecker(&tau)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    /// (N_f·N_t) × N_r; column r is h_r(t).
    pub coefficients: CMatrix,
    pub subframe: i64,
    pub band: Band,
}

impl ChannelSnapshot {
    pub fn n_antennas(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn column(&self, r: usize) -> CVector {
        self.coefficients.column(r).into_owned()
    }
}

/// Array geometry plus both band configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSim {
    pub geometry: ArrayGeometry,
    pub uplink: BandConfig,
    pub downlink: BandConfig,
}

impl ChannelSim {
    pub fn band(&self, band: Band) -> &BandConfig {
        match band {
            Band::Uplink => &self.uplink,
            Band::Downlink => &self.downlink,
        }
    }

    /// N_f·N_t.
    pub fn dimension(&self) -> usize {
        self.geometry.n_elements() * self.downlink.n_subcarriers
    }

    pub fn channel_at(&self, paths: &PathSet, subframe: i64, band: Band) -> ChannelSnapshot {
        let cfg = self.band(band);
        let dim = self.geometry.n_elements() * cfg.n_subcarriers;
        let mut h = CMatrix::zeros(dim, paths.n_antennas());
        for (r, antenna) in paths.antennas.iter().enumerate() {
            let mut col = h.column_mut(r);
            for path in antenna {
                let w = paths.doppler(path, cfg.center_frequency);
                let coeff = path.amplitude * cis(w * subframe as f64);
                col.axpy(coeff, &signature(path, &self.geometry, cfg), C64::new(1.0, 0.0));
            }
        }
        ChannelSnapshot { coefficients: h, subframe, band }
    }
}

/// Signal-to-noise ratio of a noisy observation, or the noise-free sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    Free,
    Db(f64),
}

impl NoiseLevel {
    /// `+inf` maps to [`NoiseLevel::Free`].
    pub fn from_db(db: f64) -> Self {
        if db == f64::INFINITY {
            NoiseLevel::Free
        } else {
            NoiseLevel::Db(db)
        }
    }

    pub fn as_db(self) -> f64 {
        match self {
            NoiseLevel::Free => f64::INFINITY,
            NoiseLevel::Db(db) => db,
        }
    }

    /// Noise power per unit signal power, 0 when noise-free.
    pub fn relative_power(self) -> f64 {
        match self {
            NoiseLevel::Free => 0.0,
            NoiseLevel::Db(db) => 10f64.powf(-db / 10.0),
        }
    }
}

impl Serialize for NoiseLevel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_db())
    }
}

impl<'de> Deserialize<'de> for NoiseLevel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let db = f64::deserialize(d)?;
        if db.is_nan() || db == f64::NEG_INFINITY {
            return Err(serde::de::Error::custom("noise level must be finite or +inf"));
        }
        Ok(NoiseLevel::from_db(db))
    }
}

/// Adds circularly-symmetric complex Gaussian noise of per-entry variance
/// `mean|entry|² / 10^(ρ/10)`. The normalized noise draw depends only on
/// `seed`, so sweeping ρ with a fixed seed rescales one realization.
pub fn add_noise_matrix(m: &CMatrix, level: NoiseLevel, seed: u64) -> CMatrix {
    let rel = level.relative_power();
    if rel == 0.0 || m.is_empty() {
        return m.clone();
    }
    let mean_power = m.iter().map(|z| z.norm_sqr()).sum::<f64>() / m.len() as f64;
    let sigma = (mean_power * rel / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = m.clone();
    for z in out.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z += C64::new(re, im) * sigma;
    }
    out
}

pub fn add_sampling_noise(snapshot: &ChannelSnapshot, level: NoiseLevel, seed: u64) -> ChannelSnapshot {
    ChannelSnapshot {
        coefficients: add_noise_matrix(&snapshot.coefficients, level, seed),
        subframe: snapshot.subframe,
        band: snapshot.band,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    fn sim() -> ChannelSim {
        ChannelSim {
            geometry: ArrayGeometry::new(2, 2, 1).unwrap(),
            uplink: BandConfig::centered(1.92e9, 24, 30e3),
            downlink: BandConfig::centered(2.11e9, 24, 30e3),
        }
    }

    fn gen(n_paths: usize, spread: f64, speed: f64, on_grid: bool) -> PathGenConfig {
        PathGenConfig {
            n_ue_antennas: 2,
            n_paths,
            delay_spread: spread,
            nominal_delay: 50e-9,
            zenith_spread: spread * 1e6,
            azimuth_spread: spread * 1e6,
            nominal_zenith: 1.5,
            nominal_azimuth: 0.3,
            ue_speed: speed,
            on_grid,
        }
    }

    #[test]
    fn degenerate_single_path_sits_at_nominal() {
        let s = sim();
        let ps = generate_paths(&gen(1, 0.0, 10.0, false), &s.geometry, &s.downlink, 0).unwrap();
        let p = ps.antennas[0][0];
        assert_eq!(p.delay, 50e-9);
        assert!((p.zenith - 1.5).abs() < 1e-15);
        assert!((p.azimuth - 0.3).abs() < 1e-15);
        let total: f64 = ps.antennas.iter().flatten().map(|p| p.amplitude.norm_sqr()).sum();
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn generator_is_deterministic() {
        let s = sim();
        let a = generate_paths(&gen(8, 300e-9, 10.0, false), &s.geometry, &s.downlink, 7).unwrap();
        let b = generate_paths(&gen(8, 300e-9, 10.0, false), &s.geometry, &s.downlink, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_paths(&gen(8, 300e-9, 10.0, false), &s.geometry, &s.downlink, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generator_rejects_bad_config() {
        let s = sim();
        let mut cfg = gen(0, 300e-9, 10.0, false);
        assert!(generate_paths(&cfg, &s.geometry, &s.downlink, 0).is_err());
        cfg.n_paths = 3;
        cfg.delay_spread = -1.0;
        assert!(generate_paths(&cfg, &s.geometry, &s.downlink, 0).is_err());
    }

    #[test]
    fn rms_delay_spread_matches_configuration() {
        let s = sim();
        let mut cfg = gen(460, 300e-9, 10.0, false);
        cfg.nominal_delay = 0.0;
        let mut acc = 0.0;
        let mut max_delay = 0.0;
        for seed in 0..100 {
            let ps = generate_paths(&cfg, &s.geometry, &s.downlink, seed).unwrap();
            let taps = &ps.antennas[0];
            let w: f64 = taps.iter().map(|p| p.amplitude.norm_sqr()).sum();
            let mean: f64 = taps.iter().map(|p| p.amplitude.norm_sqr() * p.delay).sum::<f64>() / w;
            let msq: f64 = taps.iter().map(|p| p.amplitude.norm_sqr() * p.delay * p.delay).sum::<f64>() / w;
            acc += (msq - mean * mean).sqrt();
            max_delay += taps.iter().map(|p| p.delay).fold(0.0, f64::max) / 100.0;
        }
        let rms = acc / 100.0;
        assert!((rms - 300e-9).abs() < 0.1 * 300e-9, "rms spread {rms}");
        assert!(max_delay < 8.0 * 300e-9, "mean max delay {max_delay}");
    }

    #[test]
    fn broadside_steering_is_all_ones() {
        let g = ArrayGeometry::new(4, 4, 2).unwrap();
        let a = steering_vector(PI / 2.0, 0.0, &g);
        assert_eq!(a.len(), 32);
        for z in a.iter() {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
        assert_eq!(steering_vector(0.4, 0.2, &ArrayGeometry::new(2, 2, 1).unwrap()).len(), 4);
    }

    #[test]
    fn steering_matches_elementwise_formula() {
        let g = ArrayGeometry::new(3, 5, 2).unwrap();
        let (zen, az) = (1.1, -0.7);
        let a = steering_vector(zen, az, &g);
        // Oracle: Kronecker of per-axis vectors, repeated per polarization.
        let ah = CVector::from_fn(5, |h, _| cis(2.0 * PI * 0.5 * h as f64 * zen.sin() * az.sin()));
        let av = CVector::from_fn(3, |v, _| cis(2.0 * PI * 0.5 * v as f64 * zen.cos()));
        let block = ah.kronecker(&av);
        let ones = CVector::from_element(2, C64::new(1.0, 0.0));
        let oracle = ones.kronecker(&block);
        assert!(max_abs((a.clone() - oracle).iter()) < 1e-12);
        assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn delay_vector_cases() {
        let band = BandConfig::centered(2.11e9, 24, 30e3);
        assert!(delay_vector(0.0, &band).iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
        // 2πτΔf = π: alternating signs after removing the global phase.
        let tau = 0.5 / band.subcarrier_spacing;
        let v = delay_vector(tau, &band);
        let g = v[0];
        for (n, z) in v.iter().enumerate() {
            let expect = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert!((z / g - C64::new(expect, 0.0)).norm() < 1e-9);
        }
        let tau = 100e-9;
        let v = delay_vector(tau, &band);
        for n in 0..24 {
            let z = cis(2.0 * PI * tau * band.base_frequency) * cis(2.0 * PI * tau * n as f64 * 30e3);
            assert!((v[n] - z).norm() < 1e-12);
        }
    }

    #[test]
    fn static_channel_does_not_change() {
        let s = sim();
        let ps = generate_paths(&gen(4, 300e-9, 0.0, false), &s.geometry, &s.downlink, 3).unwrap();
        let a = s.channel_at(&ps, 0, Band::Downlink);
        let b = s.channel_at(&ps, 17, Band::Downlink);
        assert_eq!(a.coefficients, b.coefficients);
    }

    #[test]
    fn single_path_at_zero_equals_signature() {
        let s = sim();
        let ps = generate_paths(&gen(1, 300e-9, 30.0, false), &s.geometry, &s.downlink, 5).unwrap();
        let snap = s.channel_at(&ps, 0, Band::Downlink);
        let p = ps.antennas[1][0];
        let expect = signature(&p, &s.geometry, &s.downlink) * p.amplitude;
        assert!(max_abs((snap.column(1) - expect).iter()) < 1e-12);
    }

    #[test]
    fn uplink_downlink_doppler_ratio() {
        let s = sim();
        let ps = generate_paths(&gen(1, 0.0, 30.0, false), &s.geometry, &s.downlink, 11).unwrap();
        let ul0 = s.channel_at(&ps, 0, Band::Uplink).column(0);
        let ul1 = s.channel_at(&ps, 1, Band::Uplink).column(0);
        let dl0 = s.channel_at(&ps, 0, Band::Downlink).column(0);
        let dl1 = s.channel_at(&ps, 1, Band::Downlink).column(0);
        let phase_ul = (ul1[0] / ul0[0]).arg();
        let phase_dl = (dl1[0] / dl0[0]).arg();
        assert!((phase_ul / phase_dl - 1.92 / 2.11).abs() < 1e-9);
    }

    #[test]
    fn channel_is_linear_in_amplitudes() {
        let s = sim();
        let ps = generate_paths(&gen(5, 300e-9, 50.0, false), &s.geometry, &s.downlink, 2).unwrap();
        let a = s.channel_at(&ps, 4, Band::Uplink).coefficients;
        let b = s.channel_at(&ps.scaled(2.0), 4, Band::Uplink).coefficients;
        assert!(max_abs((b - a * C64::new(2.0, 0.0)).iter()) < 1e-12);
    }

    #[test]
    fn noise_free_is_identity() {
        let s = sim();
        let ps = generate_paths(&gen(3, 300e-9, 50.0, false), &s.geometry, &s.downlink, 2).unwrap();
        let snap = s.channel_at(&ps, 4, Band::Uplink);
        assert_eq!(add_sampling_noise(&snap, NoiseLevel::Free, 1), snap);
    }

    #[test]
    fn noise_power_statistics() {
        let m = CMatrix::from_fn(1000, 100, |i, j| cis((i * 7 + j * 3) as f64 * 0.1) * 2.0);
        let signal = m.iter().map(|z| z.norm_sqr()).sum::<f64>();
        for (db, lo, hi) in [(0.0, 0.9, 1.1), (30.0, 0.8e-3, 1.2e-3)] {
            let noisy = add_noise_matrix(&m, NoiseLevel::Db(db), 42);
            let noise = (noisy - &m).iter().map(|z| z.norm_sqr()).sum::<f64>();
            let ratio = noise / signal;
            assert!(ratio > lo && ratio < hi, "ρ={db} ratio={ratio}");
        }
    }

    #[test]
    fn on_grid_paths_occupy_distinct_bins() {
        let s = ChannelSim {
            geometry: ArrayGeometry::new(4, 4, 1).unwrap(),
            uplink: BandConfig::centered(1.92e9, 24, 30e3),
            downlink: BandConfig::centered(2.11e9, 24, 30e3),
        };
        let ps = generate_paths(&gen(3, 300e-9, 50.0, true), &s.geometry, &s.downlink, 9).unwrap();
        let res = s.downlink.delay_resolution();
        let mut seen = std::collections::HashSet::new();
        for p in ps.antennas.iter().flatten() {
            let k = p.delay / res;
            assert!((k - k.round()).abs() < 1e-9);
            let kv = (0.5 * p.zenith.cos() * 4.0).round() as i64;
            let kh = (0.5 * p.zenith.sin() * p.azimuth.sin() * 4.0).round() as i64;
            assert!(seen.insert((k.round() as i64, kv.rem_euclid(4), kh.rem_euclid(4))));
        }
    }
}
