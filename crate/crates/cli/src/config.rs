//! Experiment configuration files (TOML) and `--override key=value`.

use std::path::{Path, PathBuf};

use adapmen_core::envs::EnvSpec;
use adapmen_core::gating::InterventionCriterion;
use adapmen_core::training::{Algorithm, GateMode, LearnerConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Output directory, relative to the output root.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    pub steps: usize,
    #[serde(default = "default_update_interval")]
    pub update_interval: usize,
    #[serde(default)]
    pub buffer_capacity: Option<usize>,
    #[serde(default)]
    pub q_noise: f64,
    pub env: EnvSpec,
    #[serde(default)]
    pub criterion: InterventionCriterion,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub serve: ServeSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSettings {
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_mode")]
    pub mode: GateMode,
    #[serde(default)]
    pub step_delay_ms: u64,
    /// Unset: wait for the expert indefinitely.
    #[serde(default)]
    pub response_timeout_ms: Option<u64>,
    /// Session log directory; defaults to `sessions/` in the output
    /// directory.
    #[serde(default)]
    pub log_dir: Option<PathBuf>,
}

impl Default for ServeSettings {
    fn default() -> Self {
        Self {
            port: default_port(),
            mode: default_mode(),
            step_delay_ms: 0,
            response_timeout_ms: None,
            log_dir: None,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_algorithm() -> Algorithm {
    Algorithm::Adapmen
}
fn default_update_interval() -> usize {
    200
}
fn default_port() -> u16 {
    8765
}
fn default_mode() -> GateMode {
    GateMode::AdapmenGated
}

impl ExperimentConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            env: self.env.clone(),
            algorithm: self.algorithm,
            criterion: self.criterion.clone(),
            learner: self.learner.clone(),
            steps: self.steps,
            update_interval: self.update_interval,
            buffer_capacity: self.buffer_capacity,
            q_noise: self.q_noise,
        }
    }

    /// Parses `text`, applies `overrides` and validates the result.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let merged = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
        let de = toml::Deserializer::new(&merged);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.message().to_owned();
            if path == "." {
                CliError::Config(message)
            } else {
                CliError::Config(format!("field `{path}`: {message}"))
            }
        })?;
        config
            .train_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if config.seeds.is_empty() {
            return Err(CliError::Config("field `seeds`: must not be empty".into()));
        }
        config.env.build().map_err(|e| CliError::Config(format!("field `env`: {e}")))?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// `a.b.c=value`; the value is read as a TOML value, or as a bare string if
/// it is not one.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override `{spec}` has an empty key")));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just parsed"),
        Err(_) => toml::Value::String(raw.to_owned()),
    };
    let (last, parents) = path.split_last().expect("non-empty");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
