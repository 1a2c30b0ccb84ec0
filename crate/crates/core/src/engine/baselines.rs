use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::AttackConfig;
use super::state::{apply_perturbation, momentum_update, perturbation_step, PerturbationState};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tape, Tensor};
use crate::zoo::ModelRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    RandomNoise,
    Fgsm,
    Ifgsm,
    Mim,
}

/// Cross-entropy gradient of `model` with respect to its input.
pub fn input_gradient(model: &ModelRecord, x: &Tensor, y: &[usize]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let p = model.probabilities_on(&mut tape, xv)?;
    let loss = tape.cross_entropy(p, y)?;
    if !tape.value(loss).all_finite() {
        return Err(Error::Attack { iteration: 0 });
    }
    Ok(tape.backward(loss)?.wrt(xv))
}

/// Gaussian noise rescaled so its largest magnitude is exactly `epsilon`.
pub fn gaussian_noise(shape: &[usize], epsilon: f64, rng: &mut Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let raw: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let (peak_at, peak) = raw
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    let e = epsilon as f32;
    let mut data: Vec<f32> = if peak > 0.0 {
        raw.iter().map(|v| ((v / peak) * epsilon) as f32).map(|v| v.clamp(-e, e)).collect()
    } else {
        vec![0.0; n]
    };
    if n > 0 && peak > 0.0 {
        data[peak_at] = e.copysign(raw[peak_at] as f32);
    }
    Tensor::new(shape.to_vec(), data).expect("noise shape")
}

/// Iterated sign steps on a single model; `mu = None` disables momentum.
fn iterate(model: &ModelRecord, x: &Tensor, y: &[usize], steps: usize, mu: Option<f64>, config: &AttackConfig) -> Result<Tensor> {
    let mut state = PerturbationState::new(x.shape(), 1);
    for k in 0..steps {
        let current = x.zip_map(&state.delta, |a, b| a + b)?;
        let g = input_gradient(model, &current, y).map_err(|e| match e {
            Error::Attack { .. } => Error::Attack { iteration: k },
            other => other,
        })?;
        match mu {
            Some(mu) => momentum_update(&mut state, &g, mu),
            // plain sign of the raw gradient
            None => state.momentum = g.cast(),
        }
        perturbation_step(&mut state, config.alpha, config.epsilon);
    }
    Ok(apply_perturbation(x, &state.delta, config.epsilon))
}

fn attack_one(kind: BaselineKind, x: &Tensor, y: &[usize], model: &ModelRecord, config: &AttackConfig, mut rng: Rng) -> Result<Tensor> {
    match kind {
        BaselineKind::RandomNoise => {
            let noise = gaussian_noise(x.shape(), config.epsilon, &mut rng);
            Ok(apply_perturbation(x, &noise, config.epsilon))
        }
        BaselineKind::Fgsm => iterate(model, x, y, 1, None, config),
        BaselineKind::Ifgsm => iterate(model, x, y, config.iterations, None, config),
        BaselineKind::Mim => iterate(model, x, y, config.iterations, Some(config.mu), config),
    }
}

/// Adversarial batch from a standard single-model attack, one image at a
/// time, with the same α, ε, K and μ as the main attack.
pub fn baseline_attack(kind: BaselineKind, x: &Tensor, y: &[usize], model: &ModelRecord, config: &AttackConfig) -> Result<Tensor> {
    config.validate()?;
    if x.shape().len() != 4 || x.shape()[0] != y.len() {
        return Err(Error::Dimension {
            op: "baseline input",
            left: x.shape().to_vec(),
            right: vec![y.len()],
        });
    }
    let root = Rng::new(config.seed).fork(0xba5e);
    let parts = (0..y.len())
        .into_par_iter()
        .map(|i| attack_one(kind, &x.slice_batch(i, i + 1)?, &y[i..=i], model, config, root.fork(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Tensor::concat_batch(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::default_architectures;

    fn setup() -> (ModelRecord, Tensor, Vec<usize>) {
        let mut rng = Rng::new(12);
        let m = ModelRecord::initialize(&default_architectures(16, 5)[1], &mut rng).unwrap();
        let x = Tensor::new(vec![3, 3, 16, 16], (0..3 * 768).map(|_| rng.uniform() as f32).collect()).unwrap();
        (m, x, vec![0, 2, 4])
    }

    #[test]
    fn random_noise_is_seeded_and_hits_budget() {
        let mut a = Rng::new(5);
        let n = gaussian_noise(&[1, 3, 8, 8], 8.0 / 255.0, &mut a);
        assert_eq!(n.max_abs(), (8.0f64 / 255.0) as f32);
        assert_eq!(n, gaussian_noise(&[1, 3, 8, 8], 8.0 / 255.0, &mut Rng::new(5)));
        let (m, x, y) = setup();
        let c = AttackConfig::default();
        let r1 = baseline_attack(BaselineKind::RandomNoise, &x, &y, &m, &c).unwrap();
        let r2 = baseline_attack(BaselineKind::RandomNoise, &x, &y, &m, &c).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn single_step_ifgsm_is_fgsm() {
        let (m, x, y) = setup();
        let c = AttackConfig { iterations: 1, ..Default::default() };
        assert_eq!(
            baseline_attack(BaselineKind::Ifgsm, &x, &y, &m, &c).unwrap(),
            baseline_attack(BaselineKind::Fgsm, &x, &y, &m, &c).unwrap()
        );
    }

    #[test]
    fn momentum_free_mim_is_ifgsm() {
        let (m, x, y) = setup();
        let c = AttackConfig { mu: 0.0, ..Default::default() };
        let a = baseline_attack(BaselineKind::Mim, &x, &y, &m, &c).unwrap();
        let b = baseline_attack(BaselineKind::Ifgsm, &x, &y, &m, &c).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() <= 1e-7);
        }
    }

    #[test]
    fn gradient_attacks_raise_loss() {
        let (m, x, y) = setup();
        let c = AttackConfig::default();
        let loss = |t: &Tensor| crate::numerics::ops::cross_entropy(&m.probabilities(t).unwrap(), &y).unwrap().item().unwrap();
        let clean = loss(&x);
        for kind in [BaselineKind::Fgsm, BaselineKind::Ifgsm, BaselineKind::Mim] {
            let adv = baseline_attack(kind, &x, &y, &m, &c).unwrap();
            assert!(loss(&adv) > clean, "{kind:?}");
            let worst = adv.data().iter().zip(x.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
            assert!(worst <= c.epsilon as f32);
        }
    }
}
