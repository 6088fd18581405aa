//! Experiment configuration: one TOML file with a section per module plus a
//! `[scenario]` section, overridable from the command line with
//! `--section.key=value`.

use std::path::{Path, PathBuf};

use jointmpc::controller::{ControllerConfig, LoopConfig, RolloutConfig};
use jointmpc::costs::GoalMode;
use jointmpc::fixtures;
use jointmpc::simworld::{Interpolation, TargetScript, TargetSource, Waypoint};
use jointmpc::{CostConfig, KinematicChain, PolicyConfig, SamplingConfig, WorldModel};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Bundled chain name (`planar2`, `planar_holonomic`, `arm7`) or a path
    /// relative to the config file.
    pub chain: String,
    /// Bundled world name (`empty`, `fig3_reacher`, `table`) or a path.
    pub world: Option<String>,
    /// Initial joint positions; empty means the middle of every range.
    pub start: Vec<f64>,
    pub steps: usize,
    pub seed: u64,
    /// Standard deviation of measurement noise; 0 disables it.
    pub noise_sigma: f64,
    pub goal_mode: GoalMode,
    pub interpolation: Interpolation,
    pub source: TargetSource,
    pub waypoints: Vec<Waypoint>,
    /// Distance under which the goal counts as reached (workspace units).
    pub goal_tolerance: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "scenario".into(),
            chain: "planar2".into(),
            world: None,
            start: Vec::new(),
            steps: 100,
            seed: 0,
            noise_sigma: 0.0,
            goal_mode: GoalMode::PositionOnly,
            interpolation: Interpolation::Hold,
            source: TargetSource::Scripted,
            waypoints: vec![Waypoint {
                time: 0.0,
                position: vec![1.0, 1.0],
                orientation: None,
            }],
            goal_tolerance: 0.01,
        }
    }
}

impl ScenarioConfig {
    pub fn target_script(&self) -> TargetScript {
        TargetScript {
            waypoints: self.waypoints.clone(),
            interpolation: self.interpolation,
            source: self.source,
            mode: self.goal_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sampling: SamplingConfig,
    pub rollout: RolloutConfig,
    pub costs: CostConfig,
    pub policy: PolicyConfig,
    pub controller: LoopConfig,
    pub scenario: ScenarioConfig,
    /// Directory that relative paths are resolved against; not serialized.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Core controller settings; a relative `surrogate_path` is resolved
    /// against the config file's directory.
    pub fn controller_config(&self) -> ControllerConfig {
        let mut costs = self.costs.clone();
        if let Some(p) = &costs.surrogate_path {
            costs.surrogate_path = Some(self.resolve(p).to_string_lossy().into_owned());
        }
        ControllerConfig {
            sampling: self.sampling.clone(),
            rollout: self.rollout.clone(),
            costs,
            policy: self.policy.clone(),
            controller: self.controller.clone(),
        }
    }

    /// Parses TOML text and applies `section.key=value` overrides.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// Applies `section.key=value` overrides on top of an existing config.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut cfg = Self::from_toml_str(&self.to_toml_string(), overrides)?;
        cfg.base_dir = self.base_dir.clone();
        Ok(cfg)
    }

    /// The effective configuration as TOML; loading it back reproduces `self`.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    fn resolve(&self, name: &str) -> PathBuf {
        let p = Path::new(name);
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn load_chain(&self) -> Result<KinematicChain, HarnessError> {
        let name = self.scenario.chain.as_str();
        match name {
            "planar2" => Ok(fixtures::planar2()),
            "planar_holonomic" => Ok(fixtures::planar_holonomic()),
            "arm7" => Ok(fixtures::arm7()),
            _ => {
                let path = self.resolve(name);
                if !path.exists() {
                    return Err(HarnessError::MissingFixture(path));
                }
                Ok(KinematicChain::load(&path)?)
            }
        }
    }

    pub fn load_world(&self, dimension: usize) -> Result<WorldModel, HarnessError> {
        let Some(name) = self.scenario.world.as_deref() else {
            return Ok(WorldModel::empty(dimension));
        };
        match name {
            "empty" => Ok(fixtures::empty_world()),
            "fig3_reacher" => Ok(fixtures::fig3_world()),
            "table" => Ok(fixtures::table_world()),
            _ => {
                let path = self.resolve(name);
                if !path.exists() {
                    return Err(HarnessError::MissingFixture(path));
                }
                Ok(WorldModel::load(&path)?)
            }
        }
    }
}

/// Parses the right-hand side as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `section.key=value` override (a leading `--` is accepted).
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), HarnessError> {
    let spec = spec.trim_start_matches("--");
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override `{spec}` is not of the form section.key=value")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(HarnessError::Config(format!("override key `{key}` must be section.key")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("override `{key}`: `{part}` is not a section")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_value(value));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentConfig::from_toml_str("[costs]\nalpha_q = 3.0\n", &[]).unwrap_err();
        assert!(err.to_string().contains("alpha_q"), "{err}");
        let err = ExperimentConfig::from_toml_str("", &["--rollout.horizn=3".into()]).unwrap_err();
        assert!(err.to_string().contains("horizn"), "{err}");
        let err = ExperimentConfig::from_toml_str("[bogus]\n", &[]).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn overrides_replace_values() {
        let cfg = ExperimentConfig::from_toml_str(
            "[rollout]\nhorizon = 10\n",
            &[
                "--rollout.horizon=16".into(),
                "policy.mode=isotropic".into(),
                "--costs.alpha_p=[1.0, 2.0]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.rollout.horizon, 16);
        assert_eq!(cfg.policy.mode, jointmpc::policy::CovarianceMode::Isotropic);
        assert_eq!(cfg.costs.alpha_p, [1.0, 2.0]);
        assert!(ExperimentConfig::from_toml_str("", &["rollout=3".into()]).is_err());
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = ExperimentConfig::from_toml_str("", &["--scenario.seed=9".into(), "--sampling.mode=comb".into()])
            .unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string(), &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn missing_fixture_reports_path() {
        let cfg = ExperimentConfig::from_toml_str("[scenario]\nchain = \"nowhere/robot.chain\"\n", &[]).unwrap();
        let err = cfg.load_chain().unwrap_err();
        assert!(err.to_string().contains("nowhere/robot.chain"), "{err}");
    }
}
