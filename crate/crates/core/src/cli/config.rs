use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::engine::AttackConfig;
use crate::error::{Error, Result};
use crate::track::{default_suite, BenchmarkOptions, ConditionKind, SequenceSpec};
use crate::zoo::ZooConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZooTrainConfig {
    pub zoo: ZooConfig,
    pub output: PathBuf,
}

impl Default for ZooTrainConfig {
    fn default() -> Self {
        Self {
            zoo: ZooConfig::default(),
            output: "zoo".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackRunConfig {
    pub zoo_dir: PathBuf,
    pub attack: AttackConfig,
    /// Leading validation images, interleaved across classes.
    pub images: usize,
    /// Episode `e` runs with seed `attack.seed + e`.
    pub episodes: usize,
    pub write_images: bool,
    pub output: PathBuf,
}

impl Default for AttackRunConfig {
    fn default() -> Self {
        Self {
            zoo_dir: "zoo".into(),
            attack: AttackConfig::default(),
            images: 100,
            episodes: 1,
            write_images: true,
            output: "attack".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackEvalConfig {
    pub zoo_dir: PathBuf,
    pub attack: AttackConfig,
    pub benchmark: BenchmarkOptions,
    pub conditions: Vec<ConditionKind>,
    pub sequences: Vec<SequenceSpec>,
    pub output: PathBuf,
}

impl Default for TrackEvalConfig {
    fn default() -> Self {
        Self {
            zoo_dir: "zoo".into(),
            attack: AttackConfig::default(),
            benchmark: BenchmarkOptions::default(),
            conditions: vec![ConditionKind::Clean, ConditionKind::RandomNoise, ConditionKind::Amga],
            sequences: default_suite(),
            output: "track_eval".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    pub zoo_dir: PathBuf,
    /// The full attack; every ablation row switches parts of it off.
    pub attack: AttackConfig,
    pub benchmark: BenchmarkOptions,
    pub sigmas: Vec<f64>,
    pub sequences: Vec<SequenceSpec>,
    pub output: PathBuf,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            zoo_dir: "zoo".into(),
            attack: AttackConfig::default(),
            benchmark: BenchmarkOptions::default(),
            sigmas: vec![0.5, 1.0, 2.0],
            sequences: default_suite(),
            output: "ablation".into(),
        }
    }
}

/// Parses a JSON config; unknown keys are config errors naming the key.
pub fn parse_config<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::config(format!("{}: {e}", origin.display())))
}

pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config::<AttackRunConfig>(r#"{"images": 4, "imagez": 3}"#, Path::new("c.json")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("imagez"), "{e}");
        let e = parse_config::<AttackRunConfig>(r#"{"attack": {"K": 3, "kappa": 1}}"#, Path::new("c.json")).unwrap_err();
        assert!(e.to_string().contains("kappa"));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: AttackRunConfig = parse_config(r#"{"attack": {"K": 3}}"#, Path::new("c.json")).unwrap();
        assert_eq!(c.attack.iterations, 3);
        assert_eq!(c.attack.mu, 0.9);
        assert_eq!(c.images, 100);
        let echo = serde_json::to_value(&c).unwrap();
        for key in ["alpha", "mu", "sigma", "epsilon", "K", "n", "seed", "smoothing_mode"] {
            assert!(echo["attack"].get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let c = TrackEvalConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse_config::<TrackEvalConfig>(&text, Path::new("e")).unwrap(), c);
        assert_eq!(c.sequences.len(), 20);
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = load_config::<ZooTrainConfig>(Path::new("/nonexistent/cfg.json")).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }
}
