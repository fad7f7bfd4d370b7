//! Experiment configuration: a JSON file or the built-in `default` preset.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bayesopt::{BoConfig, MorrisConfig, ParamSpace};
use crate::error::{Error, Result};
use crate::robot::{JointConfig, RobotGeometry};
use crate::scenarios::GeneratorConfig;
use crate::sim::{EvalConfig, Scene};
use crate::world::EnvironmentSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeleopConfig {
    pub address: String,
    pub tick_hz: f64,
    /// Advance one control cycle per received command instead of on a timer.
    pub lockstep: bool,
    /// Robot configuration at the start of every episode.
    pub home: JointConfig,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        Self { address: "127.0.0.1:9002".into(), tick_hz: 20.0, lockstep: false, home: JointConfig::new(1.5, std::f64::consts::FRAC_PI_2, -0.6) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub environment: EnvironmentSpec,
    pub geometry: RobotGeometry,
    pub eval: EvalConfig,
    pub scenarios: GeneratorConfig,
    pub space: ParamSpace,
    pub bo: BoConfig,
    pub screening: MorrisConfig,
    pub teleop: TeleopConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            environment: EnvironmentSpec::operating_room(),
            geometry: RobotGeometry::default(),
            eval: EvalConfig::default(),
            scenarios: GeneratorConfig::default(),
            space: ParamSpace::mpc_default(),
            bo: BoConfig::default(),
            screening: MorrisConfig::default(),
            teleop: TeleopConfig::default(),
        }
    }
}

impl Config {
    /// `default` selects the built-in preset; anything else is a JSON file.
    pub fn load(spec: &str) -> Result<Self> {
        let cfg = if spec == "default" {
            Self::default()
        } else {
            let text = std::fs::read_to_string(Path::new(spec))
                .map_err(|e| Error::InvalidConfig(format!("cannot read config {spec}: {e}")))?;
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{spec}: {e}")))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.eval.validate()?;
        self.bo.validate()?;
        if !(self.teleop.tick_hz > 0.0) {
            return Err(Error::InvalidConfig("teleop tick rate must be positive".into()));
        }
        Ok(())
    }

    pub fn scene(&self) -> Result<Scene> {
        Scene::new(self.environment.clone(), self.geometry.clone())
    }
}
