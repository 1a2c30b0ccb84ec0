use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use super::attack::{attack_sequence, AttackScope, CropPerturbation};
use super::metrics::{compute_metrics, success_curve, TrackMetrics, TrackRun};
use super::sequence::{generate_sequence, SequenceSpec};
use super::tracker::track_frames;
use crate::engine::AttackConfig;
use crate::error::{Error, Result};
use crate::quality::{psnr, ssim};
use crate::zoo::ModelRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Clean,
    RandomNoise,
    Amga,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub name: String,
    pub kind: ConditionKind,
    #[serde(default)]
    pub attack: AttackConfig,
}

impl Condition {
    pub fn new(name: &str, kind: ConditionKind, attack: AttackConfig) -> Self {
        Self {
            name: name.into(),
            kind,
            attack,
        }
    }

    /// Clean, random noise and AMGA with one shared attack config.
    pub fn standard(attack: &AttackConfig) -> Vec<Self> {
        vec![
            Self::new("clean", ConditionKind::Clean, attack.clone()),
            Self::new("random_noise", ConditionKind::RandomNoise, attack.clone()),
            Self::new("amga", ConditionKind::Amga, attack.clone()),
        ]
    }
}

pub(crate) fn finite_or_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequenceResult {
    pub sequence: String,
    pub condition: String,
    pub metrics: TrackMetrics,
    pub success_curve: Vec<f64>,
    /// Fidelity of the attacked template crop; `inf` and `1` when untouched.
    #[serde(serialize_with = "finite_or_inf")]
    pub psnr: f64,
    pub ssim: f64,
    pub low_confidence_frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub sequences: usize,
    pub mean: TrackMetrics,
    pub success_curve: Vec<f64>,
    #[serde(serialize_with = "finite_or_inf")]
    pub psnr: f64,
    pub ssim: f64,
    /// Clean mean minus this condition's mean, when a clean condition ran.
    pub success_drop: Option<f64>,
    pub precision_drop: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub feature_model: String,
    pub attack_repo: Vec<String>,
    pub rows: Vec<SequenceResult>,
    pub summary: Vec<ConditionSummary>,
}

impl BenchmarkReport {
    pub fn summary_for(&self, condition: &str) -> Option<&ConditionSummary> {
        self.summary.iter().find(|s| s.condition == condition)
    }

    /// `sequence,condition,metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sequence,condition,metric,value\n");
        for r in &self.rows {
            for (name, v) in TrackMetrics::NAMES.iter().zip(r.metrics.values()) {
                out.push_str(&format!("{},{},{},{}\n", r.sequence, r.condition, name, v));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkOptions {
    /// Zoo model whose features drive the tracker; left out of the attack repo.
    pub feature_model: String,
    pub scope: AttackScope,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            feature_model: "conv3".into(),
            scope: AttackScope::InitialFrame,
        }
    }
}

/// Per-sequence seed so every sequence gets its own attack randomness.
fn sequence_seed(base: u64, spec: &SequenceSpec) -> u64 {
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(spec.seed)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn run_one(
    spec: &SequenceSpec,
    feature: &ModelRecord,
    repo: &[ModelRecord],
    conditions: &[Condition],
    scope: AttackScope,
) -> Result<Vec<SequenceResult>> {
    let seq = generate_sequence(spec)?;
    conditions
        .iter()
        .map(|c| {
            let config = AttackConfig {
                seed: sequence_seed(c.attack.seed, spec),
                ..c.attack.clone()
            };
            let (frames, fidelity) = match c.kind {
                ConditionKind::Clean => (seq.frames.clone(), (f64::INFINITY, 1.0)),
                ConditionKind::RandomNoise | ConditionKind::Amga => {
                    let method = if c.kind == ConditionKind::Amga {
                        CropPerturbation::Amga { repo }
                    } else {
                        CropPerturbation::RandomNoise
                    };
                    let (attacked, crop) = attack_sequence(&seq, &method, &config, scope)?;
                    let after = super::attack::template_crop(&attacked.frames[0], &seq.boxes[0]);
                    (attacked.frames, (psnr(&crop.clean, &after)?, ssim(&crop.clean, &after)?))
                }
            };
            let (predicted, low) = track_frames(&frames, seq.boxes[0], feature)?;
            let run = TrackRun::new(predicted, seq.boxes.clone(), low)?;
            Ok(SequenceResult {
                sequence: spec.name.clone(),
                condition: c.name.clone(),
                metrics: compute_metrics(&run)?,
                success_curve: success_curve(&run.iou),
                psnr: fidelity.0,
                ssim: fidelity.1,
                low_confidence_frames: run.low_confidence.iter().filter(|&&l| l).count(),
            })
        })
        .collect()
}

/// Tracks every sequence under every condition. Sequences run in parallel;
/// rows come back in spec order, conditions in the given order.
pub fn run_benchmark(
    specs: &[SequenceSpec],
    zoo: &[ModelRecord],
    conditions: &[Condition],
    options: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    if specs.is_empty() || conditions.is_empty() {
        return Err(Error::config("benchmark needs at least one sequence and one condition"));
    }
    let feature = zoo
        .iter()
        .find(|m| m.name() == options.feature_model)
        .ok_or_else(|| Error::config(format!("feature model {:?} is not in the zoo", options.feature_model)))?;
    let repo: Vec<ModelRecord> = zoo.iter().filter(|m| m.name() != options.feature_model).cloned().collect();
    for c in conditions {
        c.attack.validate()?;
    }
    let rows: Vec<SequenceResult> = specs
        .par_iter()
        .map(|s| run_one(s, feature, &repo, conditions, options.scope))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut summary: Vec<ConditionSummary> = conditions
        .iter()
        .map(|c| {
            let mine: Vec<&SequenceResult> = rows.iter().filter(|r| r.condition == c.name).collect();
            let mut m = [0.0; 6];
            for (i, slot) in m.iter_mut().enumerate() {
                *slot = mean(mine.iter().map(|r| r.metrics.values()[i]));
            }
            let curve = (0..mine[0].success_curve.len())
                .map(|i| mean(mine.iter().map(|r| r.success_curve[i])))
                .collect();
            ConditionSummary {
                condition: c.name.clone(),
                sequences: mine.len(),
                mean: TrackMetrics::from_values(m),
                success_curve: curve,
                psnr: mean(mine.iter().map(|r| r.psnr)),
                ssim: mean(mine.iter().map(|r| r.ssim)),
                success_drop: None,
                precision_drop: None,
            }
        })
        .collect();
    let clean = conditions
        .iter()
        .position(|c| c.kind == ConditionKind::Clean)
        .map(|i| summary[i].mean);
    if let Some(clean) = clean {
        for s in &mut summary {
            s.success_drop = Some(clean.success_auc - s.mean.success_auc);
            s.precision_drop = Some(clean.precision_at_20 - s.mean.precision_at_20);
        }
    }
    Ok(BenchmarkReport {
        feature_model: options.feature_model.clone(),
        attack_repo: repo.iter().map(|m| m.name().to_string()).collect(),
        rows,
        summary,
    })
}
