use serde::{Deserialize, Serialize};

use super::geometry::BBox;
use super::sequence::Sequence;
use super::tracker::TEMPLATE_SIZE;
use crate::engine::{apply_perturbation, ensemble_predict, gaussian_noise, run_amga, AttackConfig};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};
use crate::render::Canvas;
use crate::zoo::{argmax_rows, ModelRecord};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackScope {
    #[default]
    InitialFrame,
    /// Every frame, each at its own ground-truth box.
    AllFrames,
}

/// Which perturbation to put on the template crop.
#[derive(Clone, Debug, PartialEq)]
pub enum CropPerturbation<'a> {
    Amga { repo: &'a [ModelRecord] },
    RandomNoise,
}

/// Attacked crop of one frame with its clean counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct CropAttack {
    pub clean: Tensor,
    pub attacked: Tensor,
    pub delta: Tensor,
    pub pseudo_label: Option<usize>,
}

pub fn template_crop(frame: &Canvas, b: &BBox) -> Tensor {
    let c = frame.crop_resize(b.x, b.y, b.w, b.h, TEMPLATE_SIZE, TEMPLATE_SIZE).to_tensor();
    c.reshape(&[1, 3, TEMPLATE_SIZE, TEMPLATE_SIZE]).expect("crop shape")
}

/// Argmax of the uniform ensemble on the clean crop.
pub fn pseudo_label(crop: &Tensor, repo: &[ModelRecord]) -> Result<usize> {
    let refs: Vec<&ModelRecord> = repo.iter().collect();
    let p = ensemble_predict(crop, &refs, &vec![0.0; refs.len()])?;
    Ok(argmax_rows(&p)[0])
}

pub fn attack_crop(crop: &Tensor, method: &CropPerturbation<'_>, config: &AttackConfig) -> Result<CropAttack> {
    match method {
        CropPerturbation::Amga { repo } => {
            let y = pseudo_label(crop, repo)?;
            let r = run_amga(crop, &[y], repo, config)?;
            Ok(CropAttack {
                clean: crop.clone(),
                attacked: r.adversarial_example,
                delta: r.delta_smoothed,
                pseudo_label: Some(y),
            })
        }
        CropPerturbation::RandomNoise => {
            let delta = gaussian_noise(crop.shape(), config.epsilon, &mut Rng::new(config.seed).fork(0x0153));
            Ok(CropAttack {
                clean: crop.clone(),
                attacked: apply_perturbation(crop, &delta, config.epsilon),
                delta,
                pseudo_label: None,
            })
        }
    }
}

/// Writes a crop-space perturbation into the frame pixels covered by `b`,
/// each frame pixel taking the crop cell its center falls in.
pub fn paste_perturbation(frame: &Canvas, b: &BBox, delta: &Tensor, epsilon: f64) -> Result<Canvas> {
    let s = TEMPLATE_SIZE;
    if delta.shape() != [1, 3, s, s] {
        return Err(Error::Dimension {
            op: "crop perturbation",
            left: vec![1, 3, s, s],
            right: delta.shape().to_vec(),
        });
    }
    let mut full = Tensor::zeros(&[3, frame.height, frame.width]);
    let d = delta.data();
    for y in 0..frame.height {
        let v = (y as f64 + 0.5 - b.y) * s as f64 / b.h;
        if !(0.0..s as f64).contains(&v) {
            continue;
        }
        for x in 0..frame.width {
            let u = (x as f64 + 0.5 - b.x) * s as f64 / b.w;
            if !(0.0..s as f64).contains(&u) {
                continue;
            }
            let (cy, cx) = (v as usize, u as usize);
            for c in 0..3 {
                full.data_mut()[(c * frame.height + y) * frame.width + x] = d[(c * s + cy) * s + cx];
            }
        }
    }
    Canvas::from_tensor(&apply_perturbation(&frame.to_tensor(), &full, epsilon))
}

/// Perturbs the sequence according to `scope`; untouched frames are copied
/// bit for bit. Returns the frame-0 crop attack for fidelity reporting.
pub fn attack_sequence(
    seq: &Sequence,
    method: &CropPerturbation<'_>,
    config: &AttackConfig,
    scope: AttackScope,
) -> Result<(Sequence, CropAttack)> {
    if seq.is_empty() {
        return Err(Error::config("cannot attack an empty sequence"));
    }
    config.validate()?;
    let mut out = seq.clone();
    let frames = match scope {
        AttackScope::InitialFrame => 1,
        AttackScope::AllFrames => seq.len(),
    };
    let mut first = None;
    for t in 0..frames {
        let b = &seq.boxes[t];
        let crop = template_crop(&seq.frames[t], b);
        let cfg = AttackConfig {
            seed: config.seed.wrapping_add(t as u64),
            ..config.clone()
        };
        let a = attack_crop(&crop, method, &cfg)?;
        out.frames[t] = paste_perturbation(&seq.frames[t], b, &a.delta, config.epsilon)?;
        if t == 0 {
            first = Some(a);
        }
    }
    Ok((out, first.expect("at least one frame attacked")))
}

/// The initial-frame protocol with the AMGA perturbation.
pub fn attack_initial_frame(seq: &Sequence, repo: &[ModelRecord], config: &AttackConfig) -> Result<Sequence> {
    Ok(attack_sequence(seq, &CropPerturbation::Amga { repo }, config, AttackScope::InitialFrame)?.0)
}
