use serde::{Deserialize, Serialize};

use super::geometry::BBox;
use crate::error::{Error, Result};

/// Per-frame tracking outcome for one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRun {
    pub predicted: Vec<BBox>,
    pub ground_truth: Vec<BBox>,
    pub iou: Vec<f64>,
    pub center_error: Vec<f64>,
    /// Frames whose best match scored below the confidence floor.
    pub low_confidence: Vec<bool>,
}

impl TrackRun {
    pub fn new(predicted: Vec<BBox>, ground_truth: Vec<BBox>, low_confidence: Vec<bool>) -> Result<Self> {
        if predicted.len() != ground_truth.len() || low_confidence.len() != predicted.len() {
            return Err(Error::Dimension {
                op: "track run",
                left: vec![predicted.len(), low_confidence.len()],
                right: vec![ground_truth.len()],
            });
        }
        let iou = predicted.iter().zip(&ground_truth).map(|(p, g)| p.iou(g)).collect();
        let center_error = predicted.iter().zip(&ground_truth).map(|(p, g)| p.center_error(g)).collect();
        Ok(Self {
            predicted,
            ground_truth,
            iou,
            center_error,
            low_confidence,
        })
    }

    pub fn len(&self) -> usize {
        self.iou.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iou.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackMetrics {
    pub precision_at_20: f64,
    pub norm_precision_auc: f64,
    pub success_auc: f64,
    pub ao: f64,
    pub sr_050: f64,
    pub sr_075: f64,
}

impl TrackMetrics {
    pub const NAMES: [&'static str; 6] = ["precision_at_20", "norm_precision_auc", "success_auc", "ao", "sr_050", "sr_075"];

    pub fn values(&self) -> [f64; 6] {
        [
            self.precision_at_20,
            self.norm_precision_auc,
            self.success_auc,
            self.ao,
            self.sr_050,
            self.sr_075,
        ]
    }

    pub fn from_values(v: [f64; 6]) -> Self {
        Self {
            precision_at_20: v[0],
            norm_precision_auc: v[1],
            success_auc: v[2],
            ao: v[3],
            sr_050: v[4],
            sr_075: v[5],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.values()[i])
    }
}

pub const PRECISION_RADIUS: f64 = 20.0;

/// IoU thresholds `0, 0.05, …, 1`.
pub fn success_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

/// Normalized center-error thresholds `0, 0.025, …, 0.5`.
pub fn norm_precision_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.025).collect()
}

fn fraction(values: &[f64], keep: impl Fn(f64) -> bool) -> f64 {
    values.iter().filter(|&&v| keep(v)).count() as f64 / values.len() as f64
}

/// Slack for IoUs of boxes that differ only by rounding.
const IOU_SLACK: f64 = 1e-9;

/// Success rate per threshold; a frame counts at threshold `t` when its
/// IoU is at least `t`.
pub fn success_curve(iou: &[f64]) -> Vec<f64> {
    success_thresholds().into_iter().map(|t| fraction(iou, |v| v >= t - IOU_SLACK)).collect()
}

pub fn compute_metrics(run: &TrackRun) -> Result<TrackMetrics> {
    if run.is_empty() {
        return Err(Error::Contract("metrics of an empty run".into()));
    }
    let curve = success_curve(&run.iou);
    let norm: Vec<f64> = run
        .center_error
        .iter()
        .zip(&run.ground_truth)
        .map(|(e, g)| e / g.diagonal())
        .collect();
    let thresholds = norm_precision_thresholds();
    let norm_curve: Vec<f64> = thresholds.iter().map(|&t| fraction(&norm, |v| v <= t)).collect();
    Ok(TrackMetrics {
        precision_at_20: fraction(&run.center_error, |e| e <= PRECISION_RADIUS),
        norm_precision_auc: norm_curve.iter().sum::<f64>() / norm_curve.len() as f64,
        success_auc: curve.iter().sum::<f64>() / curve.len() as f64,
        ao: run.iou.iter().sum::<f64>() / run.len() as f64,
        sr_050: fraction(&run.iou, |v| v > 0.5),
        sr_075: fraction(&run.iou, |v| v > 0.75),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn perfect_run_scores_one() {
        let gt = vec![b(1.0, 2.0, 10.0, 12.0), b(3.0, 2.5, 11.0, 9.0)];
        let run = TrackRun::new(gt.clone(), gt, vec![false; 2]).unwrap();
        let m = compute_metrics(&run).unwrap();
        assert!(m.values().iter().all(|&v| v == 1.0), "{m:?}");
    }

    #[test]
    fn iou_list_arithmetic() {
        // shift boxes so the IoUs are exactly 1, 0.6 and 0.4
        let gt = vec![b(0.0, 0.0, 10.0, 10.0); 3];
        let shift = |iou: f64| 10.0 * (1.0 - iou) / (1.0 + iou);
        let pred = vec![b(0.0, 0.0, 10.0, 10.0), b(shift(0.6), 0.0, 10.0, 10.0), b(shift(0.4), 0.0, 10.0, 10.0)];
        let run = TrackRun::new(pred, gt, vec![false; 3]).unwrap();
        assert!((run.iou[1] - 0.6).abs() < 1e-12 && (run.iou[2] - 0.4).abs() < 1e-12);
        let m = compute_metrics(&run).unwrap();
        assert!((m.ao - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.sr_050 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.sr_075 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.ao, run.iou.iter().sum::<f64>() / 3.0);
    }

    #[test]
    fn precision_counts_within_radius() {
        let gt = vec![b(0.0, 0.0, 10.0, 10.0); 4];
        let pred = vec![b(0.0, 0.0, 10.0, 10.0), b(20.0, 0.0, 10.0, 10.0), b(20.1, 0.0, 10.0, 10.0), b(12.0, 16.0, 10.0, 10.0)];
        let m = compute_metrics(&TrackRun::new(pred, gt, vec![false; 4]).unwrap()).unwrap();
        assert_eq!(m.precision_at_20, 0.75);
    }

    #[test]
    fn curve_grid_and_origin() {
        let t = success_thresholds();
        assert_eq!(t.len(), 21);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[20], 1.0);
        assert_eq!(success_curve(&[0.3, 0.01, 0.9])[0], 1.0);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(TrackRun::new(vec![b(0.0, 0.0, 1.0, 1.0)], vec![], vec![]).is_err());
        let empty = TrackRun::new(vec![], vec![], vec![]).unwrap();
        assert!(compute_metrics(&empty).is_err());
    }
}
