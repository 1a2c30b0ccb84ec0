//! The model repository: procedural data, small classifiers, persistence
//! and task sampling.

mod arch;
mod dataset;
mod model;
mod task;
mod train;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use arch::{default_architectures, ArchDescriptor, Layer};
pub use dataset::{generate_dataset, is_validation_index, render_sample, Dataset, DatasetSpec, Split};
pub use model::{argmax_rows, ModelHeader, ModelRecord};
pub use task::{sample_task, TaskSplit};
pub use train::{accuracy_of, evaluate_accuracy, train_model, train_on, Accuracy, TrainSchedule};

use crate::error::{Error, FormatError, Result};
use crate::format::{self, ZOO_MAGIC};

pub fn save_model(record: &ModelRecord, path: &Path) -> Result<()> {
    let header = serde_json::to_string(&record.header()).expect("header serializes");
    format::write_file(path, ZOO_MAGIC, &header, &record.weights)
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelRecord, FormatError> {
    let (header, weights) = format::decode(ZOO_MAGIC, bytes)?;
    let header: ModelHeader = serde_json::from_str(&header).map_err(|e| FormatError::Header(e.to_string()))?;
    let expected: Vec<Vec<usize>> = header.arch.layers.iter().flat_map(|l| l.param_shapes()).collect();
    let found: Vec<Vec<usize>> = weights.iter().map(|w| w.shape().to_vec()).collect();
    if expected != found {
        return Err(FormatError::Header(format!(
            "weight shapes {found:?} do not match architecture {}",
            header.arch.name
        )));
    }
    Ok(ModelRecord {
        arch: header.arch,
        weights,
        train_seed: header.train_seed,
        clean_accuracy: header.clean_accuracy,
    })
}

pub fn load_model(path: &Path) -> Result<ModelRecord> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

/// Everything that determines the default zoo's weight bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZooConfig {
    pub dataset: DatasetSpec,
    pub schedule: TrainSchedule,
    /// Model `i` trains with seed `base_seed + i`.
    pub base_seed: u64,
}

impl Default for ZooConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            schedule: TrainSchedule::default(),
            base_seed: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub family: String,
    pub file: String,
    pub train_seed: u64,
    pub parameter_count: usize,
    pub clean_accuracy: f64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: ZooConfig,
    pub models: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Trains every default architecture. Models train independently and in
/// parallel; results are collected in architecture order.
pub fn train_default_zoo(config: &ZooConfig) -> Result<(Dataset, Vec<ModelRecord>)> {
    let dataset = generate_dataset(&config.dataset)?;
    let (train, val) = (dataset.train(), dataset.validation());
    let archs = default_architectures(config.dataset.image_size, config.dataset.n_classes);
    let models = archs
        .par_iter()
        .enumerate()
        .map(|(i, a)| train_on(a, &train, &val, config.base_seed + i as u64, &config.schedule))
        .collect::<Result<Vec<_>>>()?;
    Ok((dataset, models))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `<name>.amgazoo` files plus `manifest.json` into `dir`.
pub fn save_zoo(dir: &Path, config: &ZooConfig, models: &[ModelRecord]) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(models.len());
    for m in models {
        let file = format!("{}.amgazoo", m.name());
        let path = dir.join(&file);
        let header = serde_json::to_string(&m.header()).expect("header serializes");
        let bytes = format::encode(ZOO_MAGIC, &header, &m.weights);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            name: m.name().to_owned(),
            family: m.arch.family.clone(),
            file,
            train_seed: m.train_seed,
            parameter_count: m.arch.parameter_count(),
            clean_accuracy: m.clean_accuracy,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        config: config.clone(),
        models: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path,
        source: FormatError::Header(e.to_string()),
    })
}

pub fn load_zoo(dir: &Path) -> Result<(Manifest, Vec<ModelRecord>)> {
    let manifest = read_manifest(dir)?;
    let models = manifest
        .models
        .iter()
        .map(|e| load_model(&dir.join(&e.file)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, models))
}

/// Loads the zoo from `dir` when it was trained with `config`; otherwise
/// trains and saves it there first.
pub fn cached_zoo(dir: &Path, config: &ZooConfig) -> Result<(Dataset, Vec<ModelRecord>)> {
    if let Ok((manifest, models)) = load_zoo(dir) {
        if &manifest.config == config {
            return Ok((generate_dataset(&config.dataset)?, models));
        }
    }
    let (dataset, models) = train_default_zoo(config)?;
    // stage in a sibling directory so a half-written zoo is never picked up
    let staging: PathBuf = dir.with_extension(format!("staging-{}", std::process::id()));
    save_zoo(&staging, config, &models)?;
    let _ = std::fs::remove_dir_all(dir);
    std::fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))?;
    Ok((dataset, models))
}
