use serde::{Deserialize, Serialize};

use super::arch::{ArchDescriptor, Layer};
use crate::error::{Error, Result};
use crate::numerics::{ops, Rng, Scalar, Tape, Tensor, Var};

/// A trained member of the model repository.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelRecord {
    pub arch: ArchDescriptor,
    /// Two tensors (weights, bias) per dense/conv layer, in layer order.
    pub weights: Vec<Tensor>,
    pub train_seed: u64,
    pub clean_accuracy: f64,
}

/// JSON header stored alongside the weights in a model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub arch: ArchDescriptor,
    pub train_seed: u64,
    pub clean_accuracy: f64,
}

impl ModelRecord {
    /// He-uniform weights, zero biases.
    pub fn initialize(arch: &ArchDescriptor, rng: &mut Rng) -> Result<Self> {
        arch.activation_shapes()?;
        let mut weights = Vec::new();
        for layer in &arch.layers {
            for (k, shape) in layer.param_shapes().into_iter().enumerate() {
                if k == 1 {
                    weights.push(Tensor::zeros(&shape));
                    continue;
                }
                let fan_in: usize = match layer {
                    Layer::Dense { inputs, .. } => *inputs,
                    _ => shape[1..].iter().product(),
                };
                let bound = (6.0 / fan_in as f64).sqrt();
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| rng.uniform_range(-bound, bound) as f32).collect();
                weights.push(Tensor::new(shape, data)?);
            }
        }
        Ok(Self {
            arch: arch.clone(),
            weights,
            train_seed: 0,
            clean_accuracy: 0.0,
        })
    }

    pub fn name(&self) -> &str {
        &self.arch.name
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    pub fn header(&self) -> ModelHeader {
        ModelHeader {
            arch: self.arch.clone(),
            train_seed: self.train_seed,
            clean_accuracy: self.clean_accuracy,
        }
    }

    pub fn weights_checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for w in &self.weights {
            h.update(&w.to_le_bytes());
        }
        h.finalize()
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 4 || shape[1..] != self.arch.input {
            let mut expect = vec![0];
            expect.extend(self.arch.input);
            return Err(Error::Dimension {
                op: "model input",
                left: shape.to_vec(),
                right: expect,
            });
        }
        Ok(())
    }

    /// Records the weights on `tape`, trainable or constant.
    pub fn bind<T: Scalar>(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        self.weights
            .iter()
            .map(|w| tape.leaf(w.cast::<T>().with_requires_grad(trainable)))
            .collect()
    }

    /// Logits for `input` through the first `depth` layers (all when `None`),
    /// recorded on `tape` using bound `params`.
    pub fn forward_on<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        params: &[Var],
        depth: Option<usize>,
    ) -> Result<Var> {
        self.check_input(tape.value(input).shape())?;
        let mut x = input;
        let mut p = params.iter();
        let depth = depth.unwrap_or(self.arch.layers.len());
        for layer in &self.arch.layers[..depth] {
            x = match *layer {
                Layer::Dense { .. } => {
                    let (w, b) = (*p.next().unwrap(), *p.next().unwrap());
                    tape.dense(x, w, b)?
                }
                Layer::Conv { stride, padding, .. } => {
                    let (w, b) = (*p.next().unwrap(), *p.next().unwrap());
                    tape.conv2d(x, w, Some(b), stride, padding)?
                }
                Layer::Relu => tape.relu(x),
                Layer::Avgpool { size } => tape.avgpool2d(x, size)?,
                Layer::Maxpool { size } => tape.maxpool2d(x, size)?,
                Layer::Flatten => tape.flatten(x)?,
            };
        }
        Ok(x)
    }

    /// Class probabilities on `tape`; binds weights as constants.
    pub fn probabilities_on<T: Scalar>(&self, tape: &mut Tape<T>, input: Var) -> Result<Var> {
        let params = self.bind(tape, false);
        let logits = self.forward_on(tape, input, &params, None)?;
        tape.softmax(logits)
    }

    /// Activations after the first `depth` layers, without recording.
    pub fn run(&self, input: &Tensor, depth: usize) -> Result<Tensor> {
        self.check_input(input.shape())?;
        let mut x = input.clone();
        let mut p = self.weights.iter();
        for layer in &self.arch.layers[..depth] {
            x = match *layer {
                Layer::Dense { .. } => {
                    let (w, b) = (p.next().unwrap(), p.next().unwrap());
                    ops::dense(&x, w, b)?
                }
                Layer::Conv { stride, padding, .. } => {
                    let (w, b) = (p.next().unwrap(), p.next().unwrap());
                    ops::conv2d(&x, w, Some(b), stride, padding)?
                }
                Layer::Relu => ops::relu(&x),
                Layer::Avgpool { size } => ops::avgpool2d(&x, size)?,
                Layer::Maxpool { size } => ops::maxpool2d(&x, size)?.0,
                Layer::Flatten => {
                    let b = x.shape()[0];
                    let rest = x.len() / b.max(1);
                    x.reshape(&[b, rest])?
                }
            };
        }
        Ok(x)
    }

    /// Convolutional prefix applied to an input of any spatial size.
    pub fn run_features(&self, input: &Tensor, depth: usize) -> Result<Tensor> {
        let mut x = input.clone();
        let mut p = self.weights.iter();
        for layer in &self.arch.layers[..depth] {
            x = match *layer {
                Layer::Conv { stride, padding, .. } => {
                    let (w, b) = (p.next().unwrap(), p.next().unwrap());
                    ops::conv2d(&x, w, Some(b), stride, padding)?
                }
                Layer::Relu => ops::relu(&x),
                Layer::Avgpool { size } => ops::avgpool2d(&x, size)?,
                Layer::Maxpool { size } => ops::maxpool2d(&x, size)?.0,
                Layer::Dense { .. } | Layer::Flatten => {
                    return Err(Error::config(format!(
                        "{}: feature prefix contains a non-convolutional layer",
                        self.name()
                    )))
                }
            };
        }
        Ok(x)
    }

    pub fn logits(&self, input: &Tensor) -> Result<Tensor> {
        self.run(input, self.arch.layers.len())
    }

    pub fn probabilities(&self, input: &Tensor) -> Result<Tensor> {
        ops::softmax(&self.logits(input)?)
    }

    /// Argmax class per row; ties go to the lowest index.
    pub fn predict(&self, input: &Tensor) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(input)?))
    }
}

pub fn argmax_rows(scores: &Tensor) -> Vec<usize> {
    let c = scores.shape()[1];
    scores
        .data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::arch::default_architectures;

    #[test]
    fn tape_and_direct_forward_agree() {
        let mut rng = Rng::new(5);
        let x = Tensor::new(vec![2, 3, 32, 32], (0..6144).map(|i| (i % 97) as f32 / 97.0).collect()).unwrap();
        for arch in default_architectures(32, 5) {
            let m = ModelRecord::initialize(&arch, &mut rng).unwrap();
            let direct = m.logits(&x).unwrap();
            let mut tape = Tape::<f32>::new();
            let xi = tape.constant(x.clone());
            let params = m.bind(&mut tape, false);
            let out = m.forward_on(&mut tape, xi, &params, None).unwrap();
            assert_eq!(tape.value(out).data(), direct.data(), "{}", arch.name);
        }
    }

    #[test]
    fn argmax_ties_to_lowest() {
        let s = Tensor::new(vec![2, 3], vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(argmax_rows(&s), vec![0, 1]);
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let m = ModelRecord::initialize(&default_architectures(32, 5)[0], &mut Rng::new(1)).unwrap();
        assert!(matches!(
            m.logits(&Tensor::zeros(&[1, 3, 16, 16])),
            Err(Error::Dimension { .. })
        ));
    }
}
