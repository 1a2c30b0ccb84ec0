use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::attack::AttackResult;
use super::config::AttackConfig;
use crate::error::{Error, FormatError, Result};
use crate::format::{self, PERTURBATION_MAGIC};
use crate::numerics::Tensor;
use crate::render::Canvas;
use crate::zoo::TaskSplit;

/// JSON header of a perturbation file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationHeader {
    pub config: AttackConfig,
    pub split: TaskSplit,
    /// Names of the stored tensors, in file order.
    pub tensors: Vec<String>,
}

pub const PERTURBATION_TENSORS: [&str; 3] = ["delta_train", "delta_test", "delta_smoothed"];

/// Writes the three perturbation stages of `result` to `path`.
pub fn write_perturbation(path: &Path, result: &AttackResult) -> Result<()> {
    let header = PerturbationHeader {
        config: result.config_echo.clone(),
        split: result.split.clone(),
        tensors: PERTURBATION_TENSORS.iter().map(|s| s.to_string()).collect(),
    };
    let json = serde_json::to_string(&header).expect("header serializes");
    let tensors = [
        result.delta_train.clone(),
        result.delta_test.clone(),
        result.delta_smoothed.clone(),
    ];
    format::write_file(path, PERTURBATION_MAGIC, &json, &tensors)
}

pub fn read_perturbation(path: &Path) -> Result<(PerturbationHeader, Vec<Tensor>)> {
    let (json, tensors) = format::read_file(path, PERTURBATION_MAGIC)?;
    let header = serde_json::from_str(&json).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        source: FormatError::Header(e.to_string()),
    })?;
    Ok((header, tensors))
}

/// One 8-bit PPM per adversarial image, named `<prefix>_<index>.ppm`.
pub fn write_adversarial_ppms(dir: &Path, prefix: &str, images: &Tensor) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let b = images.shape().first().copied().unwrap_or(0);
    let mut paths = Vec::with_capacity(b);
    for i in 0..b {
        let path = dir.join(format!("{prefix}_{i:04}.ppm"));
        Canvas::from_tensor(&images.slice_batch(i, i + 1)?)?.write_ppm(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_amga;
    use crate::numerics::Rng;
    use crate::zoo::{default_architectures, ModelRecord};

    #[test]
    fn perturbation_file_round_trip() {
        let mut rng = Rng::new(3);
        let repo: Vec<ModelRecord> = default_architectures(16, 5)
            .iter()
            .take(4)
            .map(|a| ModelRecord::initialize(a, &mut rng).unwrap())
            .collect();
        let x = Tensor::new(vec![2, 3, 16, 16], (0..1536).map(|_| rng.uniform() as f32).collect()).unwrap();
        let res = run_amga(&x, &[0, 1], &repo, &AttackConfig { iterations: 2, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.amgadlt");
        write_perturbation(&path, &res).unwrap();
        let (h, t) = read_perturbation(&path).unwrap();
        assert_eq!(h.split, res.split);
        assert_eq!(h.config, res.config_echo);
        assert_eq!(t, vec![res.delta_train.clone(), res.delta_test.clone(), res.delta_smoothed.clone()]);
        // a model file is not a perturbation file
        std::fs::write(&path, format::encode(format::ZOO_MAGIC, "{}", &[])).unwrap();
        assert!(read_perturbation(&path).unwrap_err().to_string().contains("bad magic"));

        let ppms = write_adversarial_ppms(dir.path(), "adv", &res.adversarial_example).unwrap();
        assert_eq!(ppms.len(), 2);
        let bytes = std::fs::read(&ppms[0]).unwrap();
        assert!(bytes.starts_with(b"P6\n16 16\n255\n"));
    }
}
