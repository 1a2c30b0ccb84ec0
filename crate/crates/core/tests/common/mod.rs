#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use amga::zoo::{cached_zoo, Dataset, ModelRecord, ZooConfig};

/// The default zoo, trained once and kept under cargo's per-target
/// scratch directory so later runs only load it.
pub fn default_zoo() -> &'static (Dataset, Vec<ModelRecord>) {
    static ZOO: OnceLock<(Dataset, Vec<ModelRecord>)> = OnceLock::new();
    ZOO.get_or_init(|| cached_zoo(&zoo_dir(), &ZooConfig::default()).expect("default zoo"))
}

pub fn zoo_dir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("zoo")
}
