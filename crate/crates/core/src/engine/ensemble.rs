use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::zoo::ModelRecord;

/// Records `Σ softmax(β)_i · p_i(input)` on `tape`; `beta` is a `[1, n]`
/// logit leaf.
pub fn ensemble_on(tape: &mut Tape, input: Var, models: &[&ModelRecord], beta: Var) -> Result<Var> {
    let n = models.len();
    if tape.value(beta).len() != n {
        return Err(Error::Dimension {
            op: "ensemble weights",
            left: vec![n],
            right: tape.value(beta).shape().to_vec(),
        });
    }
    let members = models
        .iter()
        .map(|m| m.probabilities_on(tape, input))
        .collect::<Result<Vec<_>>>()?;
    let weights = tape.softmax(beta)?;
    tape.mix(&members, weights)
}

pub fn beta_leaf(tape: &mut Tape, beta_logits: &[f64], trainable: bool) -> Var {
    let t = Tensor::new(vec![1, beta_logits.len()], beta_logits.iter().map(|&b| b as f32).collect())
        .expect("beta shape")
        .with_requires_grad(trainable);
    tape.leaf(t)
}

/// Weighted ensemble class probabilities for `x`.
pub fn ensemble_predict(x: &Tensor, models: &[&ModelRecord], beta_logits: &[f64]) -> Result<Tensor> {
    if models.is_empty() {
        return Err(Error::Contract("ensemble of zero models".into()));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let beta = beta_leaf(&mut tape, beta_logits, false);
    let p = ensemble_on(&mut tape, xv, models, beta)?;
    Ok(tape.value(p).clone())
}

/// Ensemble cross-entropy with its gradients.
#[derive(Clone, Debug)]
pub struct EnsembleLoss {
    pub loss: f64,
    pub grad_input: Tensor,
    pub grad_beta: Vec<f64>,
}

pub fn ensemble_loss(x: &Tensor, y: &[usize], models: &[&ModelRecord], beta_logits: &[f64]) -> Result<EnsembleLoss> {
    if models.is_empty() {
        return Err(Error::Contract("ensemble of zero models".into()));
    }
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let beta = beta_leaf(&mut tape, beta_logits, true);
    let p = ensemble_on(&mut tape, xv, models, beta)?;
    let loss = tape.cross_entropy(p, y)?;
    let grads = tape.backward(loss)?;
    Ok(EnsembleLoss {
        loss: tape.value(loss).item()? as f64,
        grad_input: grads.wrt(xv),
        grad_beta: grads.wrt(beta).data().iter().map(|&g| g as f64).collect(),
    })
}

/// Numerically stable softmax of ensemble logits, in `f64`.
pub fn beta_weights(beta_logits: &[f64]) -> Vec<f64> {
    let max = beta_logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = beta_logits.iter().map(|b| (b - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
