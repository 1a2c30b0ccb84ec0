use rayon::prelude::*;

use super::config::{AttackConfig, BatchMode, SmoothingMode};
use super::diversity::{diversity_map, draw_diversity};
use super::ensemble::{beta_leaf, beta_weights, ensemble_on};
use super::smoothing::{build_gaussian_kernel, smooth_perturbation};
use super::state::{apply_perturbation, direction_change, momentum_update, perturbation_step, sign, PerturbationState};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tape, Tensor, Var};
use crate::zoo::{sample_task, ModelRecord, TaskSplit};

/// Output of the meta-training stage for one perturbation.
#[derive(Clone, Debug)]
pub struct MetaTrainOutput {
    pub delta: Tensor,
    pub loss_trace: Vec<f64>,
    pub beta_logits: Vec<f64>,
    /// `softmax(β)` after every iteration.
    pub beta_trace: Vec<Vec<f64>>,
    /// Sign-map cosine distance between consecutive momentum tensors.
    pub direction_changes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult {
    pub split: TaskSplit,
    pub delta_train: Tensor,
    pub delta_test: Tensor,
    pub delta_smoothed: Tensor,
    pub adversarial_example: Tensor,
    /// Mean over perturbation units; K entries plus one for meta-testing.
    pub loss_trace: Vec<f64>,
    /// Final ensemble weights per perturbation unit.
    pub beta_weights: Vec<Vec<f64>>,
    pub direction_changes: Vec<f64>,
    pub config_echo: AttackConfig,
}

/// Broadcast a `[1, …]` perturbation over a batch of `b` through an index map.
fn broadcast_map(b: usize, per: usize) -> Vec<Option<usize>> {
    (0..b * per).map(|i| Some(i % per)).collect()
}

fn unit_shape(x: &Tensor) -> Vec<usize> {
    let mut s = x.shape().to_vec();
    s[0] = 1;
    s
}

fn check_input(x: &Tensor, y: &[usize]) -> Result<()> {
    if x.shape().len() != 4 || x.shape()[0] != y.len() || y.is_empty() {
        return Err(Error::Dimension {
            op: "attack input",
            left: x.shape().to_vec(),
            right: vec![y.len()],
        });
    }
    Ok(())
}

/// Records `x + δ` on the tape, broadcasting `δ` when the batch is larger
/// than one.
fn perturbed_input(tape: &mut Tape, x: &Tensor, delta: Var) -> Result<Var> {
    let xv = tape.constant(x.clone());
    let b = x.shape()[0];
    let d = if b > 1 {
        let per = tape.value(delta).len();
        tape.gather(delta, broadcast_map(b, per), x.shape())?
    } else {
        delta
    };
    tape.add(xv, d)
}

/// Crafts one perturbation shared by every image in `x` against the
/// ensemble of `models`. `rng` drives input diversity.
pub fn meta_train(
    x: &Tensor,
    y: &[usize],
    models: &[&ModelRecord],
    config: &AttackConfig,
    rng: &mut Rng,
) -> Result<MetaTrainOutput> {
    config.validate()?;
    check_input(x, y)?;
    if models.is_empty() {
        return Err(Error::Contract("meta-training needs at least one model".into()));
    }
    let kernel = match config.smoothing_mode {
        SmoothingMode::EveryIteration => Some(build_gaussian_kernel(config.sigma)?),
        _ => None,
    };
    let shape = unit_shape(x);
    let mut state = PerturbationState::new(&shape, models.len());
    let mut out = MetaTrainOutput {
        delta: Tensor::zeros(&shape),
        loss_trace: Vec::with_capacity(config.iterations),
        beta_logits: Vec::new(),
        beta_trace: Vec::with_capacity(config.iterations),
        direction_changes: Vec::new(),
    };

    for k in 0..config.iterations {
        let mut tape = Tape::new();
        let d = tape.param(state.delta.clone());
        let mut input = perturbed_input(&mut tape, x, d)?;
        if let Some(draw) = draw_diversity(config, x.shape()[2], x.shape()[3], rng) {
            input = tape.gather(input, diversity_map(x.shape(), &draw), x.shape())?;
        }
        let beta = beta_leaf(&mut tape, &state.beta_logits, config.beta_rate > 0.0);
        let p = ensemble_on(&mut tape, input, models, beta)?;
        let loss = tape.cross_entropy(p, y)?;
        let lv = tape.value(loss).item()? as f64;
        if !lv.is_finite() {
            return Err(Error::Attack { iteration: k });
        }
        out.loss_trace.push(lv);
        let grads = tape.backward(loss)?;
        let g = grads.wrt(d);
        if !g.all_finite() {
            return Err(Error::Attack { iteration: k });
        }

        let prev = state.momentum.clone();
        momentum_update(&mut state, &g, config.mu);
        if k > 0 {
            out.direction_changes.push(direction_change(&prev, &state.momentum));
        }
        perturbation_step(&mut state, config.alpha_at(k), config.epsilon);
        if let Some(kernel) = &kernel {
            state.delta = smooth_perturbation(&state.delta, kernel)?.clamp_abs(config.epsilon as f32);
        }
        if config.beta_rate > 0.0 {
            for (b, gb) in state.beta_logits.iter_mut().zip(grads.wrt(beta).data()) {
                *b += config.beta_rate * *gb as f64;
            }
        }
        out.beta_trace.push(beta_weights(&state.beta_logits));
    }
    out.delta = state.delta;
    out.beta_logits = state.beta_logits;
    Ok(out)
}

/// One sign step of size `alpha` on the held-out model's loss at
/// `x + delta_train`. Returns the refined perturbation and that loss.
pub fn meta_test_refine(
    x: &Tensor,
    y: &[usize],
    delta_train: &Tensor,
    test_model: &ModelRecord,
    config: &AttackConfig,
) -> Result<(Tensor, f64)> {
    check_input(x, y)?;
    let mut tape = Tape::new();
    let d = tape.param(delta_train.clone());
    let input = perturbed_input(&mut tape, x, d)?;
    let p = test_model.probabilities_on(&mut tape, input)?;
    let loss = tape.cross_entropy(p, y)?;
    let lv = tape.value(loss).item()? as f64;
    if !lv.is_finite() {
        return Err(Error::Attack {
            iteration: config.iterations,
        });
    }
    let g = tape.backward(loss)?.wrt(d);
    let (a, e) = (config.alpha as f32, config.epsilon as f32);
    let refined = delta_train
        .zip_map(&g, |dv, gv| (dv + a * sign(gv as f64)).clamp(-e, e))
        .expect("gradient matches perturbation");
    Ok((refined, lv))
}

/// Smoothed perturbation and the adversarial example it yields.
#[derive(Clone, Debug, PartialEq)]
pub struct Composition {
    pub delta_smoothed: Tensor,
    pub adversarial_example: Tensor,
}

/// `δ̃ = clamp(smooth(δ_test), ±ε)` and `x̃ = clip(x + δ̃, 0, 1)`.
pub fn compose_adversarial(x: &Tensor, delta_test: &Tensor, config: &AttackConfig) -> Result<Composition> {
    x.check_same_shape(delta_test, "compose_adversarial")?;
    let smoothed = match config.smoothing_mode {
        SmoothingMode::Disabled => delta_test.clone(),
        _ => smooth_perturbation(delta_test, &build_gaussian_kernel(config.sigma)?)?,
    };
    let delta_smoothed = smoothed.clamp_abs(config.epsilon as f32);
    let adversarial_example = apply_perturbation(x, &delta_smoothed, config.epsilon);
    Ok(Composition {
        delta_smoothed,
        adversarial_example,
    })
}

struct UnitOutcome {
    delta_train: Tensor,
    delta_test: Tensor,
    loss_trace: Vec<f64>,
    beta: Vec<f64>,
    direction_changes: Vec<f64>,
}

fn run_unit(
    x: &Tensor,
    y: &[usize],
    repo: &[ModelRecord],
    split: &TaskSplit,
    config: &AttackConfig,
    mut rng: Rng,
) -> Result<UnitOutcome> {
    let train = split.train_models(repo);
    let mt = meta_train(x, y, &train, config, &mut rng)?;
    let mut loss_trace = mt.loss_trace;
    let delta_test = if config.meta_test {
        let (d, l) = meta_test_refine(x, y, &mt.delta, split.test_model(repo), config)?;
        loss_trace.push(l);
        d
    } else {
        mt.delta.clone()
    };
    Ok(UnitOutcome {
        delta_train: mt.delta,
        delta_test,
        loss_trace,
        beta: beta_weights(&mt.beta_logits),
        direction_changes: mt.direction_changes,
    })
}

fn expand(delta: &Tensor, b: usize) -> Result<Tensor> {
    Tensor::concat_batch(&vec![delta.clone(); b])
}

fn mean_columns(rows: &[Vec<f64>]) -> Vec<f64> {
    let len = rows.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Samples a task from `repo`, meta-trains on its `n` models, refines on
/// the held-out one and composes the adversarial batch.
pub fn run_amga(x: &Tensor, y: &[usize], repo: &[ModelRecord], config: &AttackConfig) -> Result<AttackResult> {
    config.validate()?;
    check_input(x, y)?;
    let root = Rng::new(config.seed);
    let split = sample_task(repo.len(), config.n, &mut root.fork(0))?;
    let b = y.len();

    let units: Vec<UnitOutcome> = match config.batch_mode {
        BatchMode::PerExample => (0..b)
            .into_par_iter()
            .map(|i| run_unit(&x.slice_batch(i, i + 1)?, &y[i..=i], repo, &split, config, root.fork(1 + i as u64)))
            .collect::<Result<_>>()?,
        BatchMode::Joint => vec![run_unit(x, y, repo, &split, config, root.fork(1))?],
    };

    let (delta_train, delta_test) = match config.batch_mode {
        BatchMode::PerExample => (
            Tensor::concat_batch(&units.iter().map(|u| u.delta_train.clone()).collect::<Vec<_>>())?,
            Tensor::concat_batch(&units.iter().map(|u| u.delta_test.clone()).collect::<Vec<_>>())?,
        ),
        BatchMode::Joint => (expand(&units[0].delta_train, b)?, expand(&units[0].delta_test, b)?),
    };
    let comp = compose_adversarial(x, &delta_test, config)?;
    Ok(AttackResult {
        split,
        delta_train,
        delta_test,
        delta_smoothed: comp.delta_smoothed,
        adversarial_example: comp.adversarial_example,
        loss_trace: mean_columns(&units.iter().map(|u| u.loss_trace.clone()).collect::<Vec<_>>()),
        beta_weights: units.iter().map(|u| u.beta.clone()).collect(),
        direction_changes: mean_columns(&units.iter().map(|u| u.direction_changes.clone()).collect::<Vec<_>>()),
        config_echo: config.clone(),
    })
}
