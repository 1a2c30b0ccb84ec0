//! Reverse-mode differentiation over a linear operation record.
//!
//! A [`Tape`] owns every value produced while it records. Operations are
//! appended in evaluation order and [`Tape::backward`] walks them in exact
//! reverse, so gradients are reproducible bit for bit.

use super::ops;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T: Scalar> {
    Leaf,
    Dense { input: usize, weights: usize, bias: usize },
    Conv2d { input: usize, kernel: usize, bias: Option<usize>, stride: usize, pad: usize },
    Relu(usize),
    MaxPool { input: usize, argmax: Vec<usize> },
    AvgPool { input: usize, size: usize },
    Reshape(usize),
    Softmax(usize),
    CrossEntropy { probs: usize, labels: Vec<usize> },
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Sum(usize),
    Gather { input: usize, map: Vec<Option<usize>> },
    Mix { members: Vec<usize>, weights: usize },
}

#[derive(Clone, Debug)]
struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients<T: Scalar = f32> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `var`; zero when `var` does not
    /// influence the loss or was recorded without `requires_grad`.
    pub fn wrt(&self, var: Var) -> Tensor<T> {
        match self.grads.get(var.0) {
            Some(Some(g)) => g.clone(),
            Some(None) => Tensor::zeros(&self.shapes[var.0]),
            None => Tensor::scalar(T::zero()),
        }
    }

    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf; it participates in differentiation iff
    /// `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs_grad = tensor.requires_grad();
        self.push(tensor, Op::Leaf, needs_grad)
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[usize]) -> bool {
        vars.iter().any(|&v| self.nodes[v].needs_grad)
    }

    pub fn dense(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        let out = ops::dense(self.value(input), self.value(weights), self.value(bias))?;
        let ng = self.ng(&[input.0, weights.0, bias.0]);
        Ok(self.push(
            out,
            Op::Dense {
                input: input.0,
                weights: weights.0,
                bias: bias.0,
            },
            ng,
        ))
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let out = ops::conv2d(
            self.value(input),
            self.value(kernel),
            bias.map(|b| self.value(b)),
            stride,
            pad,
        )?;
        let mut deps = vec![input.0, kernel.0];
        deps.extend(bias.map(|b| b.0));
        let ng = self.ng(&deps);
        Ok(self.push(
            out,
            Op::Conv2d {
                input: input.0,
                kernel: kernel.0,
                bias: bias.map(|b| b.0),
                stride,
                pad,
            },
            ng,
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = ops::relu(self.value(input));
        let ng = self.ng(&[input.0]);
        self.push(out, Op::Relu(input.0), ng)
    }

    pub fn maxpool2d(&mut self, input: Var, size: usize) -> Result<Var> {
        let (out, argmax) = ops::maxpool2d(self.value(input), size)?;
        let ng = self.ng(&[input.0]);
        Ok(self.push(out, Op::MaxPool { input: input.0, argmax }, ng))
    }

    pub fn avgpool2d(&mut self, input: Var, size: usize) -> Result<Var> {
        let out = ops::avgpool2d(self.value(input), size)?;
        let ng = self.ng(&[input.0]);
        Ok(self.push(out, Op::AvgPool { input: input.0, size }, ng))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(input).clone().with_requires_grad(false).reshape(shape)?;
        let ng = self.ng(&[input.0]);
        Ok(self.push(out, Op::Reshape(input.0), ng))
    }

    /// Collapses all but the leading axis.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let s = self.value(input).shape();
        let batch = *s.first().unwrap_or(&1);
        let rest: usize = s.iter().skip(1).product();
        self.reshape(input, &[batch, rest])
    }

    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let out = ops::softmax(self.value(logits))?;
        let ng = self.ng(&[logits.0]);
        Ok(self.push(out, Op::Softmax(logits.0), ng))
    }

    pub fn cross_entropy(&mut self, probs: Var, labels: &[usize]) -> Result<Var> {
        let out = ops::cross_entropy(self.value(probs), labels)?;
        let ng = self.ng(&[probs.0]);
        Ok(self.push(
            out,
            Op::CrossEntropy {
                probs: probs.0,
                labels: labels.to_vec(),
            },
            ng,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let ng = self.ng(&[a.0, b.0]);
        Ok(self.push(out, Op::Add(a.0, b.0), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let ng = self.ng(&[a.0, b.0]);
        Ok(self.push(out, Op::Mul(a.0, b.0), ng))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let out = self.value(input).map(|v| v * factor);
        let ng = self.ng(&[input.0]);
        self.push(out, Op::Scale(input.0, factor), ng)
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let out = Tensor::scalar(T::lift(self.value(input).sum()));
        let ng = self.ng(&[input.0]);
        self.push(out, Op::Sum(input.0), ng)
    }

    /// Index-map gather; see [`ops::gather`].
    pub fn gather(&mut self, input: Var, map: Vec<Option<usize>>, shape: &[usize]) -> Result<Var> {
        let out = ops::gather(self.value(input), &map, shape)?;
        let ng = self.ng(&[input.0]);
        Ok(self.push(out, Op::Gather { input: input.0, map }, ng))
    }

    /// `Σ weights[i]·members[i]` where `weights` is a length-n vector.
    pub fn mix(&mut self, members: &[Var], weights: Var) -> Result<Var> {
        let out = {
            let refs: Vec<&Tensor<T>> = members.iter().map(|m| self.value(*m)).collect();
            ops::mix(&refs, self.value(weights))?
        };
        let mut deps: Vec<usize> = members.iter().map(|m| m.0).collect();
        deps.push(weights.0);
        let ng = self.ng(&deps);
        Ok(self.push(
            out,
            Op::Mix {
                members: members.iter().map(|m| m.0).collect(),
                weights: weights.0,
            },
            ng,
        ))
    }

    /// Reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        if root.needs_grad {
            grads[loss.0] = Some(Tensor::full(root.value.shape(), T::one()));
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.needs_grad {
                *g = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let val = |i: usize| &self.nodes[i].value;
        let mut send = |i: usize, delta: Tensor<T>| {
            if !self.nodes[i].needs_grad {
                return;
            }
            match &mut grads[i] {
                Some(acc) => {
                    for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                        *a = *a + *d;
                    }
                }
                slot => *slot = Some(delta.with_requires_grad(false)),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Dense { input, weights, bias } => {
                let (gx, gw, gb) = ops::dense_backward(val(*input), val(*weights), g);
                send(*input, gx);
                send(*weights, gw);
                send(*bias, gb);
            }
            Op::Conv2d { input, kernel, bias, stride, pad } => {
                let (gx, gk, gb) = ops::conv2d_backward(val(*input), val(*kernel), g, *stride, *pad)?;
                send(*input, gx);
                send(*kernel, gk);
                if let Some(b) = bias {
                    send(*b, gb);
                }
            }
            Op::Relu(input) => send(*input, ops::relu_backward(val(*input), g)),
            Op::MaxPool { input, argmax } => send(*input, ops::maxpool2d_backward(val(*input), argmax, g)),
            Op::AvgPool { input, size } => send(*input, ops::avgpool2d_backward(val(*input), *size, g)),
            Op::Reshape(input) => send(*input, g.clone().reshape(val(*input).shape())?),
            Op::Softmax(input) => send(*input, ops::softmax_backward(&node.value, g)),
            Op::CrossEntropy { probs, labels } => {
                send(*probs, ops::cross_entropy_backward(val(*probs), labels, g.data()[0]))
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Mul(a, b) => {
                send(*a, g.zip_map(val(*b), |x, y| x * y)?);
                send(*b, g.zip_map(val(*a), |x, y| x * y)?);
            }
            Op::Scale(input, f) => send(*input, g.map(|v| v * *f)),
            Op::Sum(input) => send(*input, Tensor::full(val(*input).shape(), g.data()[0])),
            Op::Gather { input, map } => send(*input, ops::gather_backward(val(*input), map, g)),
            Op::Mix { members, weights } => {
                let w = val(*weights).data();
                for (m, &wv) in members.iter().zip(w) {
                    send(*m, g.map(|v| v * wv));
                }
                let gw: Vec<T> = members
                    .iter()
                    .map(|m| {
                        T::lift(
                            val(*m)
                                .data()
                                .iter()
                                .zip(g.data())
                                .map(|(a, b)| a.as_f64() * b.as_f64())
                                .sum(),
                        )
                    })
                    .collect();
                send(*weights, Tensor::new(val(*weights).shape().to_vec(), gw)?);
            }
        }
        Ok(())
    }
}

/// Central-difference estimate of `∂f/∂x` for each element of `x`.
pub fn finite_diff_gradient<T: Scalar>(f: impl Fn(&Tensor<T>) -> T, x: &Tensor<T>, step: T) -> Tensor<T> {
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    let two_h = (step + step).as_f64();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = f(&probe).as_f64();
        probe.data_mut()[i] = orig - step;
        let down = f(&probe).as_f64();
        probe.data_mut()[i] = orig;
        out.push(T::lift((up - down) / two_h));
    }
    Tensor::new(x.shape().to_vec(), out).expect("same shape")
}
