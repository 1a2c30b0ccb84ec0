//! Meta-gradient adversarial attack: ensemble loss, momentum sign steps with
//! input diversity, held-out refinement, Gaussian smoothing, and the
//! standard single-model baselines.

mod attack;
mod baselines;
mod config;
mod diversity;
mod ensemble;
mod export;
mod smoothing;
mod state;

pub use attack::{compose_adversarial, meta_test_refine, meta_train, run_amga, AttackResult, Composition, MetaTrainOutput};
pub use baselines::{baseline_attack, gaussian_noise, input_gradient, BaselineKind};
pub use config::{AlphaSchedule, AttackConfig, BatchMode, SmoothingMode};
pub use diversity::{apply_diversity, diversity_map, draw_diversity, input_diversity, DiversityDraw};
pub use ensemble::{beta_leaf, beta_weights, ensemble_loss, ensemble_on, ensemble_predict, EnsembleLoss};
pub use export::{read_perturbation, write_adversarial_ppms, write_perturbation, PerturbationHeader, PERTURBATION_TENSORS};
pub use smoothing::{build_gaussian_kernel, gaussian_density, smooth_perturbation, GaussianKernel};
pub use state::{
    apply_perturbation, direction_change, momentum_update, perturbation_step, sign, PerturbationState, NORM_GUARD,
};
