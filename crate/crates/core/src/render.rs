//! Procedural shape sprites and image I/O helpers.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const SHAPE_NAMES: [&str; 8] = [
    "bars", "disk", "cross", "ring", "checker", "triangle", "diamond", "frame",
];

/// Whether normalized point `(u, v)` in `[-1, 1]²` lies inside shape `class`.
pub fn covers(class: usize, u: f64, v: f64) -> bool {
    if u.abs() > 1.0 || v.abs() > 1.0 {
        return false;
    }
    let r = (u * u + v * v).sqrt();
    match class {
        0 => ((u + 1.0) * 2.5).floor() as i64 % 2 == 0,
        1 => r <= 0.9,
        2 => u.abs() < 0.28 || v.abs() < 0.28,
        3 => (0.5..=0.95).contains(&r),
        4 => (((u + 1.0) * 2.0).floor() as i64 + ((v + 1.0) * 2.0).floor() as i64) % 2 == 0,
        5 => (-0.9..=0.9).contains(&v) && u.abs() <= (v + 0.9) / 1.8,
        6 => u.abs() + v.abs() <= 0.95,
        7 => {
            let m = u.abs().max(v.abs());
            (0.62..=0.95).contains(&m)
        }
        _ => false,
    }
}

/// Planar RGB image, channel-major (`3×h×w`), values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Canvas {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Canvas {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; 3 * height * width],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        let (h, w) = match s {
            [3, h, w] | [1, 3, h, w] => (*h, *w),
            _ => {
                return Err(Error::Dimension {
                    op: "canvas",
                    left: s.to_vec(),
                    right: vec![3, 0, 0],
                })
            }
        };
        Ok(Self {
            height: h,
            width: w,
            data: t.data().to_vec(),
        })
    }

    /// `[3×h×w]` tensor view of the pixels.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![3, self.height, self.width], self.data.clone()).expect("canvas shape")
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.idx(c, y, x)]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    /// Paints shape `class` into the box `(x, y, w, h)` with 2×2 supersampling.
    pub fn paint_shape(&mut self, class: usize, bx: f64, by: f64, bw: f64, bh: f64, color: [f32; 3]) {
        let y0 = by.floor().max(0.0) as usize;
        let x0 = bx.floor().max(0.0) as usize;
        let y1 = ((by + bh).ceil() as usize).min(self.height);
        let x1 = ((bx + bw).ceil() as usize).min(self.width);
        for py in y0..y1 {
            for px in x0..x1 {
                let mut hits = 0;
                for sy in 0..2 {
                    for sx in 0..2 {
                        let fx = px as f64 + 0.25 + 0.5 * sx as f64;
                        let fy = py as f64 + 0.25 + 0.5 * sy as f64;
                        let u = (fx - bx) / bw * 2.0 - 1.0;
                        let v = (fy - by) / bh * 2.0 - 1.0;
                        if covers(class, u, v) {
                            hits += 1;
                        }
                    }
                }
                if hits == 0 {
                    continue;
                }
                let a = hits as f32 / 4.0;
                for (c, &col) in color.iter().enumerate() {
                    let i = self.idx(c, py, px);
                    self.data[i] = self.data[i] * (1.0 - a) + col * a;
                }
            }
        }
    }

    pub fn fill_rect(&mut self, x: usize, y: usize, w: usize, h: usize, color: [f32; 3]) {
        for c in 0..3 {
            for py in y..(y + h).min(self.height) {
                for px in x..(x + w).min(self.width) {
                    self.set(c, py, px, color[c]);
                }
            }
        }
    }

    /// Nearest-neighbour resample of the box `(x, y, w, h)` to `out_h×out_w`.
    /// Pixels outside the canvas read as zero.
    pub fn crop_resize(&self, x: f64, y: f64, w: f64, h: f64, out_h: usize, out_w: usize) -> Canvas {
        let mut out = Canvas::new(out_h, out_w);
        for oy in 0..out_h {
            let sy = (y + (oy as f64 + 0.5) * h / out_h as f64).floor();
            for ox in 0..out_w {
                let sx = (x + (ox as f64 + 0.5) * w / out_w as f64).floor();
                if sy < 0.0 || sx < 0.0 || sy >= self.height as f64 || sx >= self.width as f64 {
                    continue;
                }
                for c in 0..3 {
                    let v = self.get(c, sy as usize, sx as usize);
                    out.set(c, oy, ox, v);
                }
            }
        }
        out
    }

    pub fn checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for v in &self.data {
            h.update(&v.to_le_bytes());
        }
        h.finalize()
    }

    /// Binary PPM (P6), values rounded to 8 bits.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..3 {
                    out.push(to_u8(self.get(c, y, x)));
                }
            }
        }
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}

pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_distinct() {
        let grid: Vec<Vec<bool>> = (0..8)
            .map(|c| {
                (0..400)
                    .map(|i| covers(c, (i % 20) as f64 / 10.0 - 0.95, (i / 20) as f64 / 10.0 - 0.95))
                    .collect()
            })
            .collect();
        for a in 0..8 {
            for b in a + 1..8 {
                assert_ne!(grid[a], grid[b], "{} vs {}", SHAPE_NAMES[a], SHAPE_NAMES[b]);
            }
        }
    }

    #[test]
    fn ppm_header_and_size() {
        let c = Canvas::new(2, 3);
        let p = c.to_ppm();
        assert!(p.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(p.len(), 11 + 2 * 3 * 3);
    }

    #[test]
    fn crop_resize_identity() {
        let mut c = Canvas::new(4, 4);
        for (i, v) in c.data.iter_mut().enumerate() {
            *v = i as f32 / 48.0;
        }
        assert_eq!(c.crop_resize(0.0, 0.0, 4.0, 4.0, 4, 4), c);
    }
}
