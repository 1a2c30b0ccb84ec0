use crate::error::{Error, Result};
use crate::numerics::{ops, Tensor};

/// Truncated, normalized 2-D Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel {
    pub sigma: f64,
    pub radius: usize,
    /// Row-major `(2r+1)²` values; entry `(r+v, r+u)` is offset `(u, v)`.
    pub values: Vec<f64>,
}

impl GaussianKernel {
    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn at(&self, u: isize, v: isize) -> f64 {
        let r = self.radius as isize;
        self.values[((v + r) * (2 * r + 1) + (u + r)) as usize]
    }
}

/// Unnormalized continuous density at integer offset `(u, v)`.
pub fn gaussian_density(sigma: f64, u: f64, v: f64) -> f64 {
    let s2 = sigma * sigma;
    (-(u * u + v * v) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2)
}

pub fn build_gaussian_kernel(sigma: f64) -> Result<GaussianKernel> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let r = radius as isize;
    let mut values = Vec::with_capacity((2 * radius + 1).pow(2));
    for v in -r..=r {
        for u in -r..=r {
            values.push(gaussian_density(sigma, u as f64, v as f64));
        }
    }
    let total: f64 = values.iter().sum();
    values.iter_mut().for_each(|x| *x /= total);
    Ok(GaussianKernel { sigma, radius, values })
}

/// Whole-sample mirror of `i` into `0..n`; handles offsets past one period.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m >= n as isize { period - m } else { m }) as usize
}

fn reflect_pad(x: &Tensor, r: usize) -> Tensor {
    let s = x.shape();
    let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
    let (ph, pw) = (h + 2 * r, w + 2 * r);
    let mut out = Vec::with_capacity(planes * ph * pw);
    let d = x.data();
    for p in 0..planes {
        let plane = &d[p * h * w..(p + 1) * h * w];
        for y in 0..ph {
            let sy = reflect(y as isize - r as isize, h);
            for xx in 0..pw {
                let sx = reflect(xx as isize - r as isize, w);
                out.push(plane[sy * w + sx]);
            }
        }
    }
    Tensor::new(vec![planes, 1, ph, pw], out).expect("padded shape")
}

/// Per-channel convolution of a `[B, C, H, W]` tensor with `kernel`, using
/// reflect padding so the output keeps its shape.
pub fn smooth_perturbation(delta: &Tensor, kernel: &GaussianKernel) -> Result<Tensor> {
    let s = delta.shape();
    if s.len() != 4 {
        return Err(Error::Dimension {
            op: "smooth_perturbation",
            left: s.to_vec(),
            right: vec![0, 0, 0, 0],
        });
    }
    let k = kernel.size();
    let weights = Tensor::new(vec![1, 1, k, k], kernel.values.iter().map(|&v| v as f32).collect())?;
    let padded = reflect_pad(delta, kernel.radius);
    let out = ops::conv2d(&padded, &weights, None, 1, 0)?;
    out.reshape(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn raw_density_matches_closed_form() {
        let c = gaussian_density(1.0, 0.0, 0.0);
        assert!((c - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
        assert!((c - 0.1591549).abs() < 1e-7);
        assert!((gaussian_density(1.0, 1.0, 0.0) - 0.0965324).abs() < 1e-7);
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        for sigma in [0.5, 1.0, 2.0, 1.3] {
            let k = build_gaussian_kernel(sigma).unwrap();
            assert_eq!(k.radius, (3.0f64 * sigma).ceil() as usize);
            assert!((k.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let r = k.radius as isize;
            for v in -r..=r {
                for u in -r..=r {
                    assert_eq!(k.at(u, v), k.at(-u, -v));
                    assert_eq!(k.at(u, v), k.at(v, u));
                }
            }
        }
    }

    #[test]
    fn nonpositive_sigma_is_config_error() {
        assert!(matches!(build_gaussian_kernel(0.0), Err(Error::Config(_))));
        assert!(matches!(build_gaussian_kernel(-2.0), Err(Error::Config(_))));
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect(-3, 1), 0);
    }

    #[test]
    fn constant_is_preserved() {
        let k = build_gaussian_kernel(1.0).unwrap();
        let d = Tensor::full(&[2, 3, 10, 10], 0.02);
        let out = smooth_perturbation(&d, &k).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.02).abs() < 1e-6));
    }

    #[test]
    fn impulse_reproduces_kernel() {
        let k = build_gaussian_kernel(1.0).unwrap();
        let mut d = Tensor::zeros(&[1, 1, 15, 15]);
        d.data_mut()[7 * 15 + 7] = 1.0;
        let out = smooth_perturbation(&d, &k).unwrap();
        for v in -3isize..=3 {
            for u in -3isize..=3 {
                let got = out.data()[((7 + v) * 15 + 7 + u) as usize] as f64;
                assert!((got - k.at(u, v)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = Rng::new(21);
        let k = build_gaussian_kernel(1.0).unwrap();
        let d = Tensor::new(vec![1, 3, 8, 8], (0..192).map(|_| rng.uniform_range(-1.0, 1.0) as f32).collect()).unwrap();
        let out = smooth_perturbation(&d, &k).unwrap();
        let r = k.radius as isize;
        // mirror written out independently of `reflect`
        let mirror = |i: isize| -> usize {
            let mut i = i;
            loop {
                if i < 0 {
                    i = -i;
                } else if i > 7 {
                    i = 14 - i;
                } else {
                    return i as usize;
                }
            }
        };
        for c in 0..3 {
            for y in 0..8isize {
                for x in 0..8isize {
                    let mut acc = 0.0;
                    for v in -r..=r {
                        for u in -r..=r {
                            let sv = d.data()[c * 64 + mirror(y + v) * 8 + mirror(x + u)] as f64;
                            acc += k.at(u, v) * sv;
                        }
                    }
                    let got = out.data()[c * 64 + (y * 8 + x) as usize] as f64;
                    assert!((got - acc).abs() < 1e-6, "{c} {y} {x}: {got} vs {acc}");
                }
            }
        }
    }
}
