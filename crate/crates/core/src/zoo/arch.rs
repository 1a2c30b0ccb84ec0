use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    Avgpool {
        size: usize,
    },
    Maxpool {
        size: usize,
    },
    Flatten,
}

impl Layer {
    /// Shapes of the trainable tensors this layer owns.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            Layer::Dense { inputs, outputs } => vec![vec![inputs, outputs], vec![outputs]],
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![vec![out_channels, in_channels, kernel, kernel], vec![out_channels]],
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchDescriptor {
    pub name: String,
    pub family: String,
    /// Per-sample input shape `[channels, height, width]`.
    pub input: [usize; 3],
    pub n_classes: usize,
    pub layers: Vec<Layer>,
}

impl ArchDescriptor {
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.param_shapes())
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    /// Per-sample activation shape after each layer; validates the stack.
    pub fn activation_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut cur = self.input.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |msg: String| Error::config(format!("{}: layer {i}: {msg}", self.name));
            cur = match *layer {
                Layer::Dense { inputs, outputs } => {
                    if cur != [inputs] {
                        return Err(bad(format!("dense expects [{inputs}], got {cur:?}")));
                    }
                    vec![outputs]
                }
                Layer::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    if cur.len() != 3 || cur[0] != in_channels {
                        return Err(bad(format!("conv expects {in_channels} channels, got {cur:?}")));
                    }
                    if kernel % 2 == 0 || stride == 0 || cur[1] + 2 * padding < kernel {
                        return Err(bad("invalid conv geometry".into()));
                    }
                    let f = |n: usize| (n + 2 * padding - kernel) / stride + 1;
                    vec![out_channels, f(cur[1]), f(cur[2])]
                }
                Layer::Relu => cur,
                Layer::Avgpool { size } | Layer::Maxpool { size } => {
                    if cur.len() != 3 || size == 0 || cur[1] < size {
                        return Err(bad(format!("pool {size} on {cur:?}")));
                    }
                    vec![cur[0], cur[1] / size, cur[2] / size]
                }
                Layer::Flatten => vec![cur.iter().product()],
            };
            out.push(cur.clone());
        }
        if cur != [self.n_classes] {
            return Err(Error::config(format!(
                "{}: final layer yields {cur:?}, expected [{}] logits",
                self.name, self.n_classes
            )));
        }
        Ok(out)
    }

    /// Number of leading layers forming the mid-level convolutional feature
    /// extractor: everything up to the last ReLU that follows a convolution
    /// and precedes `Flatten`. `None` for convolution-free architectures.
    pub fn feature_depth(&self) -> Option<usize> {
        let flat = self.layers.iter().position(|l| *l == Layer::Flatten)?;
        let mut seen_conv = false;
        let mut depth = None;
        for (i, l) in self.layers[..flat].iter().enumerate() {
            match l {
                Layer::Conv { .. } => seen_conv = true,
                Layer::Relu if seen_conv => depth = Some(i + 1),
                _ => {}
            }
        }
        depth
    }
}

fn conv(i: usize, o: usize, k: usize, s: usize) -> Layer {
    Layer::Conv {
        in_channels: i,
        out_channels: o,
        kernel: k,
        stride: s,
        padding: k / 2,
    }
}

fn dense(i: usize, o: usize) -> Layer {
    Layer::Dense { inputs: i, outputs: o }
}

/// The six default architectures for `3×size×size` inputs.
pub fn default_architectures(size: usize, n_classes: usize) -> Vec<ArchDescriptor> {
    use Layer::*;
    let q = size / 4;
    let arch = |name: &str, family: &str, layers: Vec<Layer>| ArchDescriptor {
        name: name.into(),
        family: family.into(),
        input: [3, size, size],
        n_classes,
        layers,
    };
    vec![
        arch(
            "conv3",
            "conv",
            vec![
                conv(3, 8, 3, 1),
                Relu,
                Maxpool { size: 2 },
                conv(8, 16, 3, 1),
                Relu,
                Maxpool { size: 2 },
                Flatten,
                dense(16 * q * q, n_classes),
            ],
        ),
        arch(
            "conv5",
            "conv",
            vec![
                conv(3, 6, 5, 1),
                Relu,
                Maxpool { size: 2 },
                conv(6, 12, 5, 1),
                Relu,
                Maxpool { size: 2 },
                Flatten,
                dense(12 * q * q, n_classes),
            ],
        ),
        arch(
            "strided",
            "strided_conv",
            vec![
                conv(3, 8, 3, 2),
                Relu,
                conv(8, 12, 3, 2),
                Relu,
                Flatten,
                dense(12 * q * q, n_classes),
            ],
        ),
        arch(
            "avgpool",
            "avgpool",
            vec![
                Avgpool { size: 2 },
                conv(3, 10, 3, 1),
                Relu,
                Avgpool { size: 2 },
                Flatten,
                dense(10 * q * q, 32),
                Relu,
                dense(32, n_classes),
            ],
        ),
        arch(
            "deep_narrow",
            "dense",
            vec![
                Flatten,
                dense(3 * size * size, 32),
                Relu,
                dense(32, 32),
                Relu,
                dense(32, 32),
                Relu,
                dense(32, n_classes),
            ],
        ),
        arch(
            "wide_shallow",
            "dense",
            vec![Flatten, dense(3 * size * size, 128), Relu, dense(128, n_classes)],
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn defaults_validate_and_are_diverse() {
        let archs = default_architectures(32, 5);
        assert_eq!(archs.len(), 6);
        for a in &archs {
            let shapes = a.activation_shapes().unwrap();
            assert_eq!(shapes.last().unwrap(), &vec![5]);
        }
        let families: HashSet<_> = archs.iter().map(|a| a.family.as_str()).collect();
        assert!(families.len() >= 4);
        let counts: HashSet<_> = archs.iter().map(|a| a.parameter_count()).collect();
        assert_eq!(counts.len(), archs.len(), "parameter counts must differ pairwise");
    }

    #[test]
    fn wrong_logit_count_rejected() {
        let mut a = default_architectures(32, 5).remove(0);
        a.n_classes = 4;
        assert!(a.activation_shapes().is_err());
    }

    #[test]
    fn feature_depth_stops_before_flatten() {
        let archs = default_architectures(32, 5);
        assert_eq!(archs[0].feature_depth(), Some(5));
        assert_eq!(archs[2].feature_depth(), Some(4));
        assert_eq!(archs[4].feature_depth(), None);
    }

    #[test]
    fn json_round_trip() {
        let a = default_architectures(32, 5).remove(3);
        let s = serde_json::to_string(&a).unwrap();
        assert!(s.contains("\"kind\":\"avgpool\""));
        assert_eq!(serde_json::from_str::<ArchDescriptor>(&s).unwrap(), a);
    }
}
