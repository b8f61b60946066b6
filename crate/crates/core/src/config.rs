//! TOML application configuration.
//!
//! Every section is optional and falls back to its defaults; unknown keys
//! are rejected. A missing `[device]` section means "calibrate from
//! `[targets]` first".

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::device::{CalibrationTargets, IsolatorConfig, PortPair};
use crate::error::{domain, Error, Result};
use crate::experiments::{default_trajectory, delay_grid, Case, MagnetConfig, PhotonPairSource, ScenarioConfig};
use crate::quantum::{DetectorModel, DEFAULT_SEED};

/// Scenario fields that are not shared with other sections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSettings {
    pub case: Case,
    pub magnet_trajectory: Vec<f64>,
    pub initial_m: f64,
    pub reset_points: usize,
    pub excess_isolation_db: f64,
    pub edge_loss_db: f64,
    pub accidental_offset_ps: f64,
}

impl Default for ScenarioSettings {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self {
            case: s.case,
            magnet_trajectory: default_trajectory(),
            initial_m: s.initial_m.expect("default is initialized"),
            reset_points: s.reset_points,
            excess_isolation_db: s.excess_isolation_db,
            edge_loss_db: s.edge_loss_db,
            accidental_offset_ps: s.accidental_offset_ps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomSettings {
    pub delay_start_ps: f64,
    pub delay_stop_ps: f64,
    pub delay_step_ps: f64,
    pub mode_overlap: f64,
    /// When set, the mode overlap is chosen so that the transmitted state
    /// shows this visibility, overriding `mode_overlap`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_visibility: Option<f64>,
    pub noiseless: bool,
}

impl Default for HomSettings {
    fn default() -> Self {
        Self {
            delay_start_ps: -12.0,
            delay_stop_ps: 12.0,
            delay_step_ps: 0.5,
            mode_overlap: 0.9561,
            target_visibility: None,
            noiseless: false,
        }
    }
}

impl HomSettings {
    pub fn delays(&self) -> Result<Vec<f64>> {
        delay_grid(self.delay_start_ps, self.delay_stop_ps, self.delay_step_ps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSettings {
    pub min_nm: f64,
    pub max_nm: f64,
    pub step_nm: f64,
    pub m: f64,
    pub input_port: u8,
    pub output_port: u8,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        Self {
            min_nm: 1530.0,
            max_nm: 1570.0,
            step_nm: 0.1,
            m: 1.0,
            input_port: 1,
            output_port: 2,
        }
    }
}

impl SpectrumSettings {
    pub fn pair(&self) -> Result<PortPair> {
        PortPair::new(self.input_port, self.output_port)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub device: Option<IsolatorConfig>,
    pub targets: CalibrationTargets,
    pub magnet: MagnetConfig,
    pub source: PhotonPairSource,
    pub detector: DetectorModel,
    pub scenario: ScenarioSettings,
    pub hom: HomSettings,
    pub spectrum: SpectrumSettings,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            output_dir: PathBuf::from("out"),
            device: None,
            targets: CalibrationTargets::default(),
            magnet: MagnetConfig::default(),
            source: PhotonPairSource::default(),
            detector: DetectorModel::default(),
            scenario: ScenarioSettings::default(),
            hom: HomSettings::default(),
            spectrum: SpectrumSettings::default(),
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AppConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = &self.device {
            d.validate()?;
        }
        self.targets.validate()?;
        self.magnet.validate()?;
        self.hom.delays()?;
        if !(0.0..=1.0).contains(&self.hom.mode_overlap) {
            return Err(domain("hom.mode_overlap must lie in [0, 1]"));
        }
        self.spectrum.pair()?;
        if !(self.spectrum.min_nm < self.spectrum.max_nm) {
            return Err(domain("spectrum.min_nm must be below spectrum.max_nm"));
        }
        self.scenario().validate()
    }

    /// Scenario assembled from the shared sections.
    pub fn scenario(&self) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            case: s.case,
            magnet_trajectory: s.magnet_trajectory.clone(),
            source: self.source,
            detector: self.detector,
            seed: self.seed,
            initial_m: Some(s.initial_m),
            reset_points: s.reset_points,
            excess_isolation_db: s.excess_isolation_db,
            edge_loss_db: s.edge_loss_db,
            accidental_offset_ps: s.accidental_offset_ps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(AppConfig::from_toml("").unwrap(), AppConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = AppConfig {
            device: Some(IsolatorConfig::default()),
            seed: 7,
            ..Default::default()
        };
        cfg.scenario.case = Case::APrime;
        cfg.hom.target_visibility = Some(0.9116);
        cfg.detector.integration_time_s = 0.1 + 0.2;
        let text = cfg.to_toml().unwrap();
        let back = AppConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = AppConfig::from_toml("[detector]\nefficency = 0.5\n").unwrap_err();
        assert!(matches!(e, Error::Config(_)), "{e}");
        assert!(e.to_string().contains("efficency"));
    }

    #[test]
    fn sub_configs_are_validated() {
        assert!(AppConfig::from_toml("[detector]\nefficiency = 1.5\n").is_err());
        assert!(AppConfig::from_toml("[spectrum]\nmin_nm = 1600.0\nmax_nm = 1500.0\n").is_err());
        let cfg = AppConfig::from_toml("[scenario]\ncase = \"B'\"\n").unwrap();
        assert_eq!(cfg.scenario.case, Case::BPrime);
    }
}
