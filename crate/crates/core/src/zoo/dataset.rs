//! Procedural labelled shape images.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};
use crate::render::{Canvas, SHAPE_NAMES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub seed: u64,
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub image_size: usize,
    pub noise_level: f64,
    /// Mean brightness gap between shape and background.
    pub contrast: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            seed: 2024,
            n_classes: 5,
            samples_per_class: 200,
            image_size: 32,
            noise_level: 0.1,
            contrast: 0.15,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.n_classes > SHAPE_NAMES.len() {
            return Err(Error::config(format!(
                "n_classes must be in 2..={}, got {}",
                SHAPE_NAMES.len(),
                self.n_classes
            )));
        }
        if self.image_size < 8 {
            return Err(Error::config(format!("image_size must be >= 8, got {}", self.image_size)));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return Err(Error::config("noise_level must lie in [0, 1]"));
        }
        if !(self.contrast > 0.0 && self.contrast <= 0.5) {
            return Err(Error::config("contrast must lie in (0, 0.5]"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::config("samples_per_class must be positive"));
        }
        Ok(())
    }
}

/// Images `[N×3×S×S]` with labels; sample `i` belongs to class
/// `i / samples_per_class` and is held out for validation iff `i % 5 == 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub images: Tensor,
    pub labels: Vec<usize>,
}

/// A subset of images with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> Tensor {
        self.images.slice_batch(i, i + 1).expect("index in range")
    }

    /// The first `n` samples.
    pub fn head(&self, n: usize) -> Split {
        let n = n.min(self.len());
        Split {
            images: self.images.slice_batch(0, n).expect("range"),
            labels: self.labels[..n].to_vec(),
        }
    }
}

pub fn is_validation_index(i: usize) -> bool {
    i.is_multiple_of(5)
}

/// Renders one sample of `class` into a `size×size` canvas: a shape a
/// little brighter than a textured background, plus uniform noise.
pub fn render_sample(class: usize, size: usize, noise_level: f64, contrast: f64, rng: &mut Rng) -> Canvas {
    let s = size as f64;
    let mut canvas = Canvas::new(size, size);
    let bg: [f64; 3] = [rng.uniform_range(0.05, 0.2), rng.uniform_range(0.05, 0.2), rng.uniform_range(0.05, 0.2)];
    let (fx, fy, phase) = (rng.uniform_range(0.0, 0.5), rng.uniform_range(0.0, 0.5), rng.uniform_range(0.0, 6.3));
    for y in 0..size {
        for x in 0..size {
            let tex = 0.06 * (fx * x as f64 + fy * y as f64 + phase).sin();
            for (c, b) in bg.iter().enumerate() {
                canvas.set(c, y, x, (b + tex).clamp(0.0, 1.0) as f32);
            }
        }
    }
    let fg = bg.map(|b| (b + contrast * rng.uniform_range(0.6, 1.4)).min(1.0) as f32);
    let extent = rng.uniform_range(0.62, 0.95) * s;
    let aspect = rng.uniform_range(0.9, 1.1);
    let (w, h) = (extent * aspect.min(1.0), extent / aspect.max(1.0));
    let jitter = s / 10.0;
    let cx = s / 2.0 + rng.uniform_range(-jitter, jitter);
    let cy = s / 2.0 + rng.uniform_range(-jitter, jitter);
    canvas.paint_shape(class, cx - w / 2.0, cy - h / 2.0, w, h, fg);
    if noise_level > 0.0 {
        for v in canvas.data.iter_mut() {
            *v = (*v as f64 + rng.uniform_range(-noise_level, noise_level)).clamp(0.0, 1.0) as f32;
        }
    }
    canvas
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n_classes * spec.samples_per_class;
    let size = spec.image_size;
    let root = Rng::new(spec.seed);
    let mut data = Vec::with_capacity(n * 3 * size * size);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i / spec.samples_per_class;
        let mut rng = root.fork(i as u64);
        data.extend(render_sample(class, size, spec.noise_level, spec.contrast, &mut rng).data);
        labels.push(class);
    }
    Ok(Dataset {
        spec: spec.clone(),
        images: Tensor::new(vec![n, 3, size, size], data)?,
        labels,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    fn subset(&self, keep: impl Fn(usize) -> bool) -> Split {
        let row = 3 * self.spec.image_size * self.spec.image_size;
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        let mut data = Vec::with_capacity(idx.len() * row);
        for &i in &idx {
            data.extend_from_slice(&self.images.data()[i * row..(i + 1) * row]);
        }
        let mut shape = self.images.shape().to_vec();
        shape[0] = idx.len();
        Split {
            images: Tensor::new(shape, data).expect("subset shape"),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn train(&self) -> Split {
        self.subset(|i| !is_validation_index(i))
    }

    pub fn validation(&self) -> Split {
        self.subset(is_validation_index)
    }

    /// Validation samples interleaved across classes (round-robin), so that
    /// any prefix is class-balanced.
    pub fn validation_interleaved(&self) -> Split {
        let v = self.validation();
        let c = self.n_classes();
        let per: Vec<Vec<usize>> = (0..c)
            .map(|k| (0..v.len()).filter(|&i| v.labels[i] == k).collect())
            .collect();
        let longest = per.iter().map(Vec::len).max().unwrap_or(0);
        let order: Vec<usize> = (0..longest)
            .flat_map(|j| per.iter().filter_map(move |p| p.get(j).copied()))
            .collect();
        let parts: Vec<Tensor> = order.iter().map(|&i| v.image(i)).collect();
        Split {
            images: if parts.is_empty() {
                v.images.clone()
            } else {
                Tensor::concat_batch(&parts).expect("same shape")
            },
            labels: order.iter().map(|&i| v.labels[i]).collect(),
        }
    }

    pub fn checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        h.update(&self.images.to_le_bytes());
        for l in &self.labels {
            h.update(&(*l as u32).to_le_bytes());
        }
        h.finalize()
    }

    /// Writes `NNNNN.ppm` images plus `labels.csv` (filename,label).
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut csv = String::from("filename,label\n");
        for i in 0..self.len() {
            let name = format!("{i:05}.ppm");
            let img = self.images.slice_batch(i, i + 1)?;
            Canvas::from_tensor(&img)?.write_ppm(&dir.join(&name))?;
            csv.push_str(&format!("{name},{}\n", self.labels[i]));
        }
        let path = dir.join("labels.csv");
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
    }
}
