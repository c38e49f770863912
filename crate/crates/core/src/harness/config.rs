//! Scenario configuration.
//!
//! Files are TOML: `key = value` lines grouped into sections. Every section
//! and key except `[geometry]` and its `antennas`, `layers`, `atoms` is
//! optional; unknown keys are rejected.
//!
//! ```toml
//! name = "fig2a"
//!
//! [geometry]
//! antennas = 5              # M
//! layers = 6                # L
//! atoms = 100               # N, a perfect square
//! carrier_hz = 28e9         # or `wavelength` in meters, not both
//! # atom_length, atom_width, atom_pitch, bs_to_layer1, layer_spacing,
//! # antenna_pitch override the wavelength-relative defaults (meters)
//! bs_numerator = "layer_spacing"   # or "axial_gap"
//!
//! [scenario]
//! users = 5                 # K
//! tau_p = 5                 # pilot length, default K
//! blocks = 20               # training blocks, default ceil(N / M)
//! reference_gain_db = -30.0
//! path_loss_exponent = 2.8
//! noise_power_dbm = -104.0
//! placement = "center"      # or "random"
//! disk_radius = 10.0
//! disk_offset = 25.0
//! quadrature_order = 128
//! scattering = { kind = "isotropic" }   # also sector, tabulated, discrete
//!
//! [sweep]
//! snr_db = [-20.0, 0.0, 20.0]
//! trials = 10000
//! seed = 1
//! timing = false            # fill wall_ms; off keeps output byte-stable
//!
//! [estimator]
//! rank_mode = "relative"    # or "energy"
//! rank_threshold = 1e-12    # relative cut, or the kept energy fraction
//! kinds = ["mmse", "ls", "rsls", "rsls_iso"]
//!
//! [optimizer]
//! codebook_size = 0         # 0 draws one random schedule
//! snr_db = 20.0             # SNR at which candidates are scored
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, dbm_to_watts, Placement, UserLayout};
use crate::correlation::{ScatteringFunction, DEFAULT_QUADRATURE_ORDER};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, RankRule, DEFAULT_RELATIVE_THRESHOLD};
use crate::geometry::{SystemGeometry, SPEED_OF_LIGHT};
use crate::propagation::BsNumerator;

const DEFAULT_CARRIER_HZ: f64 = 28e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub scenario: ChannelConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

fn default_name() -> String {
    "scenario".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub antennas: usize,
    pub layers: usize,
    pub atoms: usize,
    pub carrier_hz: Option<f64>,
    pub wavelength: Option<f64>,
    pub atom_length: Option<f64>,
    pub atom_width: Option<f64>,
    pub atom_pitch: Option<f64>,
    pub bs_to_layer1: Option<f64>,
    pub layer_spacing: Option<f64>,
    pub antenna_pitch: Option<f64>,
    #[serde(default)]
    pub bs_numerator: BsNumerator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub users: usize,
    pub tau_p: Option<usize>,
    pub blocks: Option<usize>,
    pub reference_gain_db: f64,
    pub path_loss_exponent: f64,
    pub noise_power_dbm: f64,
    pub placement: Placement,
    pub disk_radius: f64,
    pub disk_offset: f64,
    pub quadrature_order: usize,
    pub scattering: ScatteringFunction,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let layout = UserLayout::default();
        Self {
            users: 5,
            tau_p: None,
            blocks: None,
            reference_gain_db: layout.reference_gain_db,
            path_loss_exponent: layout.exponent,
            noise_power_dbm: crate::channel::NOISE_POWER_DBM,
            placement: layout.placement,
            disk_radius: layout.disk_radius,
            disk_offset: layout.disk_offset,
            quadrature_order: DEFAULT_QUADRATURE_ORDER,
            scattering: ScatteringFunction::Isotropic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub timing: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_db: (-2..=4).map(|k| 10.0 * k as f64).collect(),
            trials: 1000,
            seed: 1,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMode {
    Relative,
    Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub rank_mode: RankMode,
    pub rank_threshold: f64,
    pub kinds: Vec<EstimatorKind>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            rank_mode: RankMode::Relative,
            rank_threshold: DEFAULT_RELATIVE_THRESHOLD,
            kinds: EstimatorKind::ALL.to_vec(),
        }
    }
}

impl EstimatorConfig {
    pub fn rule(&self) -> RankRule {
        match self.rank_mode {
            RankMode::Relative => RankRule::Relative(self.rank_threshold),
            RankMode::Energy => RankRule::Energy(self.rank_threshold),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub codebook_size: usize,
    pub snr_db: Option<f64>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => config_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// A shipped preset by name, or a file path.
    pub fn resolve(source: &str) -> Result<Self> {
        let path = Path::new(source);
        if path.exists() {
            return Self::load(path);
        }
        match preset(source) {
            Some(text) => Self::from_toml(text),
            None => Err(config_err(format!(
                "no config file or preset named {source:?} (presets: {})",
                PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn geometry(&self) -> Result<SystemGeometry> {
        let g = &self.geometry;
        let carrier = match (g.carrier_hz, g.wavelength) {
            (Some(_), Some(_)) => return Err(config_err("give either geometry.carrier_hz or geometry.wavelength")),
            (Some(f), None) => f,
            (None, Some(lambda)) if lambda > 0.0 => SPEED_OF_LIGHT / lambda,
            (None, Some(lambda)) => {
                return Err(config_err(format!(
                    "geometry.wavelength must be positive, got {lambda}"
                )))
            }
            (None, None) => DEFAULT_CARRIER_HZ,
        };
        let mut geometry = SystemGeometry::at_frequency(carrier, g.antennas, g.layers, g.atoms)
            .map_err(|e| config_err(e.to_string()))?;
        if let Some(lambda) = g.wavelength {
            geometry.wavelength = lambda;
        }
        let overrides = [
            (&mut geometry.atom_length, g.atom_length),
            (&mut geometry.atom_width, g.atom_width),
            (&mut geometry.atom_pitch, g.atom_pitch),
            (&mut geometry.bs_to_layer1, g.bs_to_layer1),
            (&mut geometry.layer_spacing, g.layer_spacing),
            (&mut geometry.antenna_pitch, g.antenna_pitch),
        ];
        for (slot, value) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        geometry.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(geometry)
    }

    pub fn tau_p(&self) -> usize {
        self.scenario.tau_p.unwrap_or(self.scenario.users)
    }

    pub fn blocks(&self) -> usize {
        self.scenario
            .blocks
            .unwrap_or_else(|| self.geometry.atoms.div_ceil(self.geometry.antennas.max(1)))
    }

    pub fn layout(&self) -> UserLayout {
        UserLayout {
            placement: self.scenario.placement,
            disk_radius: self.scenario.disk_radius,
            disk_offset: self.scenario.disk_offset,
            reference_gain_db: self.scenario.reference_gain_db,
            exponent: self.scenario.path_loss_exponent,
        }
    }

    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.scenario.noise_power_dbm)
    }

    pub fn reference_gain(&self) -> f64 {
        db_to_linear(self.scenario.reference_gain_db)
    }

    /// SNR at which codebook candidates are scored: the configured value, or
    /// the middle of the sweep.
    pub fn optimizer_snr_db(&self) -> f64 {
        self.optimizer.snr_db.unwrap_or_else(|| {
            let s = &self.sweep.snr_db;
            s[s.len() / 2]
        })
    }

    pub fn validate(&self) -> Result<()> {
        let geometry = self.geometry()?;
        let s = &self.scenario;
        if s.users == 0 {
            return Err(config_err("scenario.users must be at least 1"));
        }
        if self.tau_p() < s.users {
            return Err(config_err(format!(
                "scenario.tau_p = {} is shorter than scenario.users = {}",
                self.tau_p(),
                s.users
            )));
        }
        if self.blocks() * geometry.num_antennas < geometry.atoms_per_layer {
            return Err(config_err(format!(
                "scenario.blocks = {} gives {} observations for {} atoms",
                self.blocks(),
                self.blocks() * geometry.num_antennas,
                geometry.atoms_per_layer
            )));
        }
        if !s.noise_power_dbm.is_finite() || !s.reference_gain_db.is_finite() {
            return Err(config_err("scenario noise and reference gain must be finite"));
        }
        self.layout().validate().map_err(|e| config_err(e.to_string()))?;
        if s.quadrature_order == 0 {
            return Err(config_err("scenario.quadrature_order must be positive"));
        }
        s.scattering.validate().map_err(|e| config_err(e.to_string()))?;
        let w = &self.sweep;
        if w.snr_db.is_empty() || w.snr_db.iter().any(|x| !x.is_finite()) {
            return Err(config_err("sweep.snr_db must be a non-empty list of finite values"));
        }
        if w.trials == 0 {
            return Err(config_err("sweep.trials must be at least 1"));
        }
        self.estimator
            .rule()
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        if self.estimator.kinds.is_empty() {
            return Err(config_err("estimator.kinds must name at least one estimator"));
        }
        if let Some(snr) = self.optimizer.snr_db {
            if !snr.is_finite() {
                return Err(config_err("optimizer.snr_db must be finite"));
            }
        }
        Ok(())
    }
}

/// Presets shipped with the crate.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig2a", include_str!("../../presets/fig2a.toml")),
    ("fig2b_k5_l3", include_str!("../../presets/fig2b_k5_l3.toml")),
    ("fig2b_k5_l6", include_str!("../../presets/fig2b_k5_l6.toml")),
    ("fig2b_k20_l6", include_str!("../../presets/fig2b_k20_l6.toml")),
    ("fig2c_m10_n100", include_str!("../../presets/fig2c_m10_n100.toml")),
    ("fig2c_m5_n100", include_str!("../../presets/fig2c_m5_n100.toml")),
    ("fig2c_m5_n225", include_str!("../../presets/fig2c_m5_n225.toml")),
    ("fig2d", include_str!("../../presets/fig2d.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
