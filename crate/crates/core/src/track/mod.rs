//! Synthetic tracking sequences, a feature-matching tracker and the
//! benchmark that attacks its first frame.

pub mod attack;
pub mod bench;
pub mod geometry;
pub mod metrics;
pub mod sequence;
pub mod tracker;

pub use attack::{attack_crop, attack_initial_frame, attack_sequence, paste_perturbation, pseudo_label, template_crop, AttackScope, CropAttack, CropPerturbation};
pub use bench::{run_benchmark, BenchmarkOptions, BenchmarkReport, Condition, ConditionKind, ConditionSummary, SequenceResult};
pub use geometry::BBox;
pub use metrics::{compute_metrics, norm_precision_thresholds, success_curve, success_thresholds, TrackMetrics, TrackRun, PRECISION_RADIUS};
pub use sequence::{default_suite, easy_suite, generate_sequence, Motion, Sequence, SequenceSpec};
pub use tracker::{track_frames, StepOutcome, Tracker};
