use serde::{Deserialize, Serialize};

use super::arch::ArchDescriptor;
use super::dataset::{Dataset, Split};
use super::model::{argmax_rows, ModelRecord};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tape, Tensor};

/// Plain minibatch SGD, no momentum, no augmentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 15,
        }
    }
}

/// Result of [`evaluate_accuracy`]. `empty` flags the zero-sample case,
/// whose accuracy is defined as 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accuracy {
    pub value: f64,
    pub correct: usize,
    pub total: usize,
    pub empty: bool,
}

const EVAL_CHUNK: usize = 64;

pub fn evaluate_accuracy(record: &ModelRecord, images: &Tensor, labels: &[usize]) -> Result<Accuracy> {
    let total = labels.len();
    if total == 0 {
        log::warn!("accuracy requested on an empty set; reporting 0.0");
        return Ok(Accuracy {
            value: 0.0,
            correct: 0,
            total: 0,
            empty: true,
        });
    }
    if images.shape().first() != Some(&total) {
        return Err(Error::Dimension {
            op: "evaluate_accuracy",
            left: images.shape().to_vec(),
            right: vec![total],
        });
    }
    let mut correct = 0;
    for start in (0..total).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(total);
        let pred = record.predict(&images.slice_batch(start, end)?)?;
        correct += pred.iter().zip(&labels[start..end]).filter(|(p, l)| p == l).count();
    }
    Ok(Accuracy {
        value: correct as f64 / total as f64,
        correct,
        total,
        empty: false,
    })
}

fn gather_rows(images: &Tensor, idx: &[usize]) -> Tensor {
    let row: usize = images.shape()[1..].iter().product();
    let mut data = Vec::with_capacity(idx.len() * row);
    for &i in idx {
        data.extend_from_slice(&images.data()[i * row..(i + 1) * row]);
    }
    let mut shape = images.shape().to_vec();
    shape[0] = idx.len();
    Tensor::new(shape, data).expect("row gather")
}

/// Trains on `train`, then records accuracy on `validation`.
pub fn train_on(
    arch: &ArchDescriptor,
    train: &Split,
    validation: &Split,
    train_seed: u64,
    schedule: &TrainSchedule,
) -> Result<ModelRecord> {
    if train.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    if schedule.batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    let root = Rng::new(train_seed);
    let mut model = ModelRecord::initialize(arch, &mut root.fork(0))?;
    model.train_seed = train_seed;
    let lr = schedule.learning_rate as f32;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..schedule.epochs {
        root.fork(1 + epoch as u64).shuffle(&mut order);
        for batch in order.chunks(schedule.batch_size) {
            let x = gather_rows(&train.images, batch);
            let y: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            let mut tape = Tape::<f32>::new();
            let params = model.bind(&mut tape, true);
            let xi = tape.constant(x);
            let logits = model.forward_on(&mut tape, xi, &params, None)?;
            let probs = tape.softmax(logits)?;
            let loss = tape.cross_entropy(probs, &y)?;
            if !tape.value(loss).all_finite() {
                return Err(Error::Training { epoch });
            }
            let grads = tape.backward(loss)?;
            for (w, p) in model.weights.iter_mut().zip(&params) {
                let g = grads.wrt(*p);
                for (wv, gv) in w.data_mut().iter_mut().zip(g.data()) {
                    *wv -= lr * gv;
                }
            }
        }
        if model.weights.iter().any(|w| !w.all_finite()) {
            return Err(Error::Training { epoch });
        }
    }

    model.clean_accuracy = evaluate_accuracy(&model, &validation.images, &validation.labels)?.value;
    Ok(model)
}

/// Trains `arch` on the dataset's training split for `epochs` epochs using
/// the default schedule otherwise.
pub fn train_model(arch: &ArchDescriptor, dataset: &Dataset, train_seed: u64, epochs: usize) -> Result<ModelRecord> {
    let schedule = TrainSchedule {
        epochs,
        ..TrainSchedule::default()
    };
    train_on(arch, &dataset.train(), &dataset.validation(), train_seed, &schedule)
}

/// Accuracy of an ensemble-free classifier whose predictions are given.
pub fn accuracy_of(predictions: &Tensor, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let pred = argmax_rows(predictions);
    pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}
