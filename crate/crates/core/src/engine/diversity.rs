use super::config::AttackConfig;
use crate::error::Result;
use crate::numerics::{ops, Rng, Tensor};

/// One random resize-and-pad draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiversityDraw {
    pub scale: f64,
    pub offset_y: usize,
    pub offset_x: usize,
}

/// Draws a transform for an `h×w` image, or `None` when the input is left
/// untouched this time.
pub fn draw_diversity(config: &AttackConfig, h: usize, w: usize, rng: &mut Rng) -> Option<DiversityDraw> {
    if !rng.bernoulli(config.diversity_prob) {
        return None;
    }
    let scale = rng.uniform_range(config.diversity_scale_min, 1.0);
    let (nh, nw) = scaled_size(h, w, scale);
    Some(DiversityDraw {
        scale,
        offset_y: rng.below(h - nh + 1),
        offset_x: rng.below(w - nw + 1),
    })
}

fn scaled_size(h: usize, w: usize, scale: f64) -> (usize, usize) {
    let f = |n: usize| ((n as f64 * scale).floor() as usize).clamp(1, n);
    (f(h), f(w))
}

/// Index map for [`ops::gather`] realizing `draw` on a `[B, C, H, W]` shape:
/// nearest-neighbour downscale, then zero padding back to `H×W`.
pub fn diversity_map(shape: &[usize], draw: &DiversityDraw) -> Vec<Option<usize>> {
    let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (nh, nw) = scaled_size(h, w, draw.scale);
    let src = |i: usize, n: usize, m: usize| (((i as f64 + 0.5) * n as f64 / m as f64) as usize).min(n - 1);
    let mut map = Vec::with_capacity(b * c * h * w);
    for plane in 0..b * c {
        for y in 0..h {
            for x in 0..w {
                let inside = y >= draw.offset_y && y < draw.offset_y + nh && x >= draw.offset_x && x < draw.offset_x + nw;
                map.push(inside.then(|| {
                    let sy = src(y - draw.offset_y, h, nh);
                    let sx = src(x - draw.offset_x, w, nw);
                    (plane * h + sy) * w + sx
                }));
            }
        }
    }
    map
}

pub fn apply_diversity(x: &Tensor, draw: &DiversityDraw) -> Result<Tensor> {
    ops::gather(x, &diversity_map(x.shape(), draw), x.shape())
}

/// With probability `diversity_prob`, shrinks `x` spatially by a random
/// factor in `[diversity_scale_min, 1]` and zero-pads it back at a random
/// offset.
pub fn input_diversity(x: &Tensor, config: &AttackConfig, rng: &mut Rng) -> Result<Tensor> {
    let s = x.shape();
    match draw_diversity(config, s[2], s[3], rng) {
        Some(d) => apply_diversity(x, &d),
        None => Ok(x.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern() -> Tensor {
        Tensor::new(vec![1, 1, 4, 4], (1..=16).map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn zero_probability_is_identity() {
        let c = AttackConfig { diversity_prob: 0.0, ..Default::default() };
        let x = pattern();
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            assert_eq!(input_diversity(&x, &c, &mut rng).unwrap(), x);
        }
    }

    #[test]
    fn unit_scale_is_identity() {
        let d = DiversityDraw { scale: 1.0, offset_y: 0, offset_x: 0 };
        assert_eq!(apply_diversity(&pattern(), &d).unwrap(), pattern());
    }

    #[test]
    fn hand_traced_four_by_four() {
        // 4·0.9 floors to 3; rows/cols sample source 0, 2, 3
        let d = DiversityDraw { scale: 0.9, offset_y: 1, offset_x: 0 };
        let got = apply_diversity(&pattern(), &d).unwrap();
        #[rustfmt::skip]
        let want = [
            0.0, 0.0, 0.0, 0.0,
            1.0, 3.0, 4.0, 0.0,
            9.0, 11.0, 12.0, 0.0,
            13.0, 15.0, 16.0, 0.0,
        ];
        assert_eq!(got.data(), &want);
    }

    #[test]
    fn seeded_draw_is_reproducible() {
        let c = AttackConfig { diversity_prob: 1.0, diversity_scale_min: 0.5, ..Default::default() };
        let a = draw_diversity(&c, 32, 32, &mut Rng::new(9)).unwrap();
        let b = draw_diversity(&c, 32, 32, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        assert!((0.5..1.0).contains(&a.scale));
        let n = (32.0 * a.scale).floor() as usize;
        assert!(a.offset_y + n <= 32 && a.offset_x + n <= 32);
    }
}
