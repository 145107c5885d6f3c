//! Run configuration: a TOML document with one table per concern.
//!
//! ```toml
//! master_seed = 1
//! n_drops = 200
//! schemes = ["upper_bound", "full_evd", "egvp_wcm", "lazy_evd"]
//!
//! [scenario]
//! ue_speed_kmh = 120.0
//!
//! [sweep]
//! variable = "ue_speed_kmh"
//! values = [30.0, 120.0, 250.0, 500.0]
//! ```
//!
//! Every key except `schemes` has a default, unknown keys are rejected, and
//! error messages carry the dotted path of the offending key.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

use crate::channel::{ArrayGeometry, BandConfig, ChannelSim, PathGenConfig};
use crate::csi::EstimatorConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    UpperBound,
    FullEvd,
    LazyEvd,
    EgvpWcm,
    EgvpCgm,
    Wiener,
}

impl Scheme {
    pub const ALL: [Scheme; 6] =
        [Scheme::UpperBound, Scheme::FullEvd, Scheme::EgvpWcm, Scheme::EgvpCgm, Scheme::LazyEvd, Scheme::Wiener];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::UpperBound => "upper_bound",
            Scheme::FullEvd => "full_evd",
            Scheme::LazyEvd => "lazy_evd",
            Scheme::EgvpWcm => "egvp_wcm",
            Scheme::EgvpCgm => "egvp_cgm",
            Scheme::Wiener => "wiener",
        }
    }

    pub fn from_name(s: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_vertical: usize,
    pub n_horizontal: usize,
    pub n_polarizations: usize,
    /// Wavelengths.
    pub element_spacing: f64,
    pub n_subcarriers: usize,
    /// Hz.
    pub subcarrier_spacing: f64,
    /// Hz.
    pub ul_frequency: f64,
    /// Hz.
    pub dl_frequency: f64,
    /// K.
    pub n_ues: usize,
    /// N_r.
    pub n_ue_antennas: usize,
    pub n_paths: usize,
    pub delay_spread_ns: f64,
    pub zenith_spread_deg: f64,
    pub azimuth_spread_deg: f64,
    /// UE nominal azimuths are uniform in ±this value.
    pub ue_azimuth_range_deg: f64,
    /// UE nominal zeniths are uniform in 90° ± this value.
    pub ue_zenith_range_deg: f64,
    pub ue_speed_kmh: f64,
    pub on_grid: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_vertical: 4,
            n_horizontal: 4,
            n_polarizations: 1,
            element_spacing: 0.5,
            n_subcarriers: 24,
            subcarrier_spacing: 30e3,
            ul_frequency: 1.92e9,
            dl_frequency: 2.11e9,
            n_ues: 4,
            n_ue_antennas: 2,
            n_paths: 8,
            delay_spread_ns: 300.0,
            zenith_spread_deg: 8.0,
            azimuth_spread_deg: 15.0,
            ue_azimuth_range_deg: 60.0,
            ue_zenith_range_deg: 20.0,
            ue_speed_kmh: 120.0,
            on_grid: false,
        }
    }
}

impl ScenarioConfig {
    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry {
            n_vertical: self.n_vertical,
            n_horizontal: self.n_horizontal,
            n_polarizations: self.n_polarizations,
            element_spacing: self.element_spacing,
        }
    }

    pub fn simulator(&self) -> ChannelSim {
        ChannelSim {
            geometry: self.geometry(),
            uplink: BandConfig::centered(self.ul_frequency, self.n_subcarriers, self.subcarrier_spacing),
            downlink: BandConfig::centered(self.dl_frequency, self.n_subcarriers, self.subcarrier_spacing),
        }
    }

    /// Path-generator settings for a UE at the given nominal direction.
    pub fn path_config(&self, nominal_zenith: f64, nominal_azimuth: f64) -> PathGenConfig {
        PathGenConfig {
            n_ue_antennas: self.n_ue_antennas,
            n_paths: self.n_paths,
            delay_spread: self.delay_spread_ns * 1e-9,
            nominal_delay: 0.0,
            zenith_spread: self.zenith_spread_deg.to_radians(),
            azimuth_spread: self.azimuth_spread_deg.to_radians(),
            nominal_zenith,
            nominal_azimuth,
            ue_speed: self.ue_speed_kmh / 3.6,
            on_grid: self.on_grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sim = self.simulator();
        sim.geometry.validate()?;
        sim.uplink.validate()?;
        sim.downlink.validate()?;
        if self.n_ues == 0 {
            return Err(Error::Config("scenario.n_ues must be at least 1".into()));
        }
        if self.ue_azimuth_range_deg < 0.0 || self.ue_zenith_range_deg < 0.0 || self.ue_zenith_range_deg > 90.0 {
            return Err(Error::Config("scenario UE direction ranges must be nonnegative (zenith at most 90)".into()));
        }
        if !(self.ue_speed_kmh >= 0.0) {
            return Err(Error::Config("scenario.ue_speed_kmh must be nonnegative".into()));
        }
        self.path_config(PI / 2.0, 0.0).validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    /// T_evd.
    pub t_evd: usize,
    /// N_evd.
    pub n_evd: usize,
    /// L, exponentials per weight entry.
    pub order: usize,
    /// L_w.
    pub wiener_order: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig { t_evd: 5, n_evd: 7, order: 3, wiener_order: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// SNR of a unit-power channel entry; σ² = N_f N_t · 10^(−snr/10).
    pub target_snr_db: f64,
    /// Explicit σ², overriding `target_snr_db`.
    pub noise_power: Option<f64>,
    pub bound_check: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { target_snr_db: 10.0, noise_power: None, bound_check: false }
    }
}

impl MetricsConfig {
    pub fn noise_power(&self, dimension: usize) -> f64 {
        self.noise_power.unwrap_or_else(|| dimension as f64 * 10f64.powf(-self.target_snr_db / 10.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    UeSpeedKmh,
    TEvd,
    SamplingNoiseDb,
    Eta,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::UeSpeedKmh => "ue_speed_kmh",
            SweepVariable::TEvd => "t_evd",
            SweepVariable::SamplingNoiseDb => "sampling_noise_db",
            SweepVariable::Eta => "eta",
        }
    }

    pub fn from_name(s: &str) -> Option<SweepVariable> {
        [SweepVariable::UeSpeedKmh, SweepVariable::TEvd, SweepVariable::SamplingNoiseDb, SweepVariable::Eta]
            .into_iter()
            .find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    /// `inf` is accepted for `sampling_noise_db` (noise-free).
    pub values: Vec<f64>,
    /// Reuse the same drops (paths and noise draws) at every sweep value.
    #[serde(default = "default_true")]
    pub paired: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "results".into(), formats: vec![OutputFormat::Csv] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_drops")]
    pub n_drops: usize,
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_drops() -> usize {
    1
}

impl RunConfig {
    /// Defaults with the given scheme list.
    pub fn with_schemes(schemes: Vec<Scheme>) -> Self {
        RunConfig {
            master_seed: 0,
            n_drops: default_drops(),
            schemes,
            scenario: ScenarioConfig::default(),
            estimator: EstimatorConfig::default(),
            scheme: SchemeConfig::default(),
            metrics: MetricsConfig::default(),
            sweep: None,
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::Config("schemes: at least one scheme is required".into()));
        }
        let mut seen = self.schemes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.schemes.len() {
            return Err(Error::Config("schemes: duplicate entries".into()));
        }
        if self.n_drops == 0 {
            return Err(Error::Config("n_drops must be at least 1".into()));
        }
        self.scenario.validate()?;
        self.estimator.validate()?;
        if self.scheme.t_evd == 0 {
            return Err(Error::Config("scheme.t_evd must be at least 1".into()));
        }
        if self.scheme.order == 0 || self.scheme.n_evd < 2 * self.scheme.order {
            return Err(Error::Config(format!(
                "scheme.n_evd ({}) must be at least twice scheme.order ({})",
                self.scheme.n_evd, self.scheme.order
            )));
        }
        if self.scheme.wiener_order == 0 || self.scheme.wiener_order >= self.scheme.n_evd {
            return Err(Error::Config("scheme.wiener_order must lie in [1, n_evd)".into()));
        }
        if let Some(p) = self.metrics.noise_power {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Config("metrics.noise_power must be positive".into()));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep.values: at least one value is required".into()));
            }
            for &v in &sweep.values {
                self.at_sweep_value(sweep.variable, v)?.validate_base()?;
            }
        }
        Ok(())
    }

    fn validate_base(&self) -> Result<()> {
        let mut c = self.clone();
        c.sweep = None;
        c.validate()
    }

    /// Copy of this config with the sweep variable set to `value`.
    pub fn at_sweep_value(&self, variable: SweepVariable, value: f64) -> Result<RunConfig> {
        let mut c = self.clone();
        c.sweep = None;
        let bad = || Error::Config(format!("sweep.values: {value} is not valid for {}", variable.name()));
        match variable {
            SweepVariable::UeSpeedKmh => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(bad());
                }
                c.scenario.ue_speed_kmh = value;
            }
            SweepVariable::TEvd => {
                if !(value >= 1.0 && value.fract() == 0.0 && value.is_finite()) {
                    return Err(bad());
                }
                c.scheme.t_evd = value as usize;
            }
            SweepVariable::SamplingNoiseDb => {
                if value.is_nan() || value == f64::NEG_INFINITY {
                    return Err(bad());
                }
                c.estimator.sampling_noise_db = crate::channel::NoiseLevel::from_db(value);
            }
            SweepVariable::Eta => {
                if !(value > 0.0 && value <= 1.0) {
                    return Err(bad());
                }
                c.estimator.eta = value;
            }
        }
        Ok(c)
    }

    /// `(variable, value)` pairs to run; a single point when no sweep is set.
    pub fn sweep_points(&self) -> Vec<(Option<SweepVariable>, f64)> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| (Some(s.variable), v)).collect(),
            None => vec![(None, f64::NAN)],
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML serialization, first 16 digits.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.message().to_string();
        if path.is_empty() || path == "." {
            Error::Config(msg)
        } else {
            Error::Config(format!("{path}: {msg}"))
        }
    })?;
    config.validate()?;
    Ok(config)
}
