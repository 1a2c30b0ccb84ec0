use serde::Serialize;

use crate::engine::{baseline_attack, ensemble_predict, run_amga, AttackConfig, AttackResult, BaselineKind, SmoothingMode};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::quality::{psnr, ssim};
use crate::track::bench::finite_or_inf;
use crate::track::{Condition, ConditionKind};
use crate::zoo::{accuracy_of, evaluate_accuracy, ModelRecord, Split};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    /// Meta-train member of the episode's task.
    HeldIn,
    /// Meta-test model of the episode's task.
    MetaTest,
    /// Never touched by the attack.
    HeldOut,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub clean: f64,
    pub attacked: f64,
    pub drop: f64,
    pub random_noise: f64,
    pub random_drop: f64,
}

impl AccuracyRow {
    fn new(clean: f64, attacked: f64, random_noise: f64) -> Self {
        Self {
            clean,
            attacked,
            drop: clean - attacked,
            random_noise,
            random_drop: clean - random_noise,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelOutcome {
    pub name: String,
    pub role: ModelRole,
    pub accuracy: AccuracyRow,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeReport {
    pub seed: u64,
    pub held_in: Vec<String>,
    pub meta_test: String,
    pub held_out: Vec<String>,
    pub models: Vec<ModelOutcome>,
    /// Uniform ensemble of the held-in models.
    pub held_in_ensemble: AccuracyRow,
    pub held_out_mean_drop: f64,
    pub held_out_mean_random_drop: f64,
    #[serde(serialize_with = "finite_or_inf")]
    pub psnr: f64,
    pub ssim: f64,
    #[serde(serialize_with = "finite_or_inf")]
    pub random_psnr: f64,
    pub random_ssim: f64,
}

/// PSNR over the whole batch and mean per-image SSIM.
pub fn fidelity(clean: &Tensor, attacked: &Tensor) -> Result<(f64, f64)> {
    let b = clean.shape()[0];
    let mut s = 0.0;
    for i in 0..b {
        s += ssim(&clean.slice_batch(i, i + 1)?, &attacked.slice_batch(i, i + 1)?)?;
    }
    Ok((psnr(clean, attacked)?, s / b as f64))
}

fn ensemble_accuracy(models: &[&ModelRecord], x: &Tensor, y: &[usize]) -> Result<f64> {
    Ok(accuracy_of(&ensemble_predict(x, models, &vec![0.0; models.len()])?, y))
}

/// One seeded attack on `images`, scored against every zoo model and
/// against random noise of the same budget.
pub fn run_episode(zoo: &[ModelRecord], images: &Split, config: &AttackConfig) -> Result<(EpisodeReport, AttackResult)> {
    if images.is_empty() {
        return Err(Error::config("attack needs at least one image"));
    }
    let (x, y) = (&images.images, &images.labels[..]);
    let result = run_amga(x, y, zoo, config)?;
    let noisy = baseline_attack(BaselineKind::RandomNoise, x, y, &zoo[0], config)?;
    let adv = &result.adversarial_example;
    let split = &result.split;

    let mut models = Vec::with_capacity(zoo.len());
    for (i, m) in zoo.iter().enumerate() {
        let role = if split.train.contains(&i) {
            ModelRole::HeldIn
        } else if split.test == i {
            ModelRole::MetaTest
        } else {
            ModelRole::HeldOut
        };
        let acc = |t: &Tensor| evaluate_accuracy(m, t, y).map(|a| a.value);
        models.push(ModelOutcome {
            name: m.name().to_string(),
            role,
            accuracy: AccuracyRow::new(acc(x)?, acc(adv)?, acc(&noisy)?),
        });
    }
    let held_in: Vec<&ModelRecord> = split.train_models(zoo);
    let ens = AccuracyRow::new(
        ensemble_accuracy(&held_in, x, y)?,
        ensemble_accuracy(&held_in, adv, y)?,
        ensemble_accuracy(&held_in, &noisy, y)?,
    );
    let out: Vec<&ModelOutcome> = models.iter().filter(|m| m.role == ModelRole::HeldOut).collect();
    let mean_of = |f: &dyn Fn(&ModelOutcome) -> f64| {
        if out.is_empty() {
            0.0
        } else {
            out.iter().map(|m| f(m)).sum::<f64>() / out.len() as f64
        }
    };
    let (p, s) = fidelity(x, adv)?;
    let (rp, rs) = fidelity(x, &noisy)?;
    let report = EpisodeReport {
        seed: config.seed,
        held_in: split.train.iter().map(|&i| zoo[i].name().to_string()).collect(),
        meta_test: zoo[split.test].name().to_string(),
        held_out: out.iter().map(|m| m.name.clone()).collect(),
        held_out_mean_drop: mean_of(&|m| m.accuracy.drop),
        held_out_mean_random_drop: mean_of(&|m| m.accuracy.random_drop),
        models,
        held_in_ensemble: ens,
        psnr: p,
        ssim: s,
        random_psnr: rp,
        random_ssim: rs,
    };
    Ok((report, result))
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `wins + losses` fair coin flips. Ties are dropped by the caller.
pub fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    let mut coef = 1.0f64;
    let mut total = 0.0;
    for k in 0..=n {
        if k >= wins {
            total += coef;
        }
        coef = coef * (n - k) as f64 / (k + 1) as f64;
    }
    total / 2f64.powi(n as i32)
}

/// The component ablation rows, each derived from the full attack.
pub fn ablation_conditions(full: &AttackConfig) -> Vec<Condition> {
    let plain = AttackConfig {
        mu: 0.0,
        smoothing_mode: SmoothingMode::Disabled,
        ..full.clone()
    };
    vec![
        Condition::new("no_attack", ConditionKind::Clean, full.clone()),
        Condition::new("random_noise", ConditionKind::RandomNoise, full.clone()),
        Condition::new(
            "input_diversity",
            ConditionKind::Amga,
            AttackConfig {
                meta_test: false,
                ..plain.clone()
            },
        ),
        Condition::new(
            "meta_gradient",
            ConditionKind::Amga,
            AttackConfig {
                diversity_prob: 0.0,
                ..plain
            },
        ),
        Condition::new("full", ConditionKind::Amga, full.clone()),
        Condition::new("no_momentum", ConditionKind::Amga, AttackConfig { mu: 0.0, ..full.clone() }),
        Condition::new(
            "no_smoothing",
            ConditionKind::Amga,
            AttackConfig {
                smoothing_mode: SmoothingMode::Disabled,
                ..full.clone()
            },
        ),
    ]
}

pub fn sigma_conditions(full: &AttackConfig, sigmas: &[f64]) -> Vec<Condition> {
    sigmas
        .iter()
        .map(|&s| Condition::new(&format!("sigma_{s}"), ConditionKind::Amga, AttackConfig { sigma: s, ..full.clone() }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_tail() {
        assert_eq!(sign_test_p(0, 0), 1.0);
        assert!((sign_test_p(1, 0) - 0.5).abs() < 1e-15);
        // P(X ≥ 15 | n = 20) = 21700 / 2^20
        assert!((sign_test_p(15, 5) - 21700.0 / 1048576.0).abs() < 1e-12);
        assert!(sign_test_p(15, 5) < 0.05 && sign_test_p(14, 6) > 0.05);
    }

    #[test]
    fn ablation_rows_switch_single_components() {
        let full = AttackConfig::default();
        let rows = ablation_conditions(&full);
        let names: Vec<&str> = rows.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["no_attack", "random_noise", "input_diversity", "meta_gradient", "full", "no_momentum", "no_smoothing"]);
        assert_eq!(rows[4].attack, full);
        assert_eq!(rows[5].attack.mu, 0.0);
        assert_eq!(rows[5].attack.smoothing_mode, full.smoothing_mode);
        assert!(!rows[2].attack.meta_test && rows[2].attack.diversity_prob > 0.0);
        assert!(rows[3].attack.meta_test && rows[3].attack.diversity_prob == 0.0);
        let s = sigma_conditions(&full, &[0.5, 2.0]);
        assert_eq!(s[1].name, "sigma_2");
        assert_eq!(s[0].attack.sigma, 0.5);
    }
}
