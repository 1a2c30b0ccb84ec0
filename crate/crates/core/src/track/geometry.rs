use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box, top-left corner plus size, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::config(format!("degenerate box {self:?}")));
        }
        Ok(())
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    pub fn inside(&self, width: usize, height: usize) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x + self.w <= width as f64 && self.y + self.h <= height as f64
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        let inter = ix.max(0.0) * iy.max(0.0);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn center_error(&self, other: &BBox) -> f64 {
        let (a, b) = (self.center(), other.center());
        (a.0 - b.0).hypot(a.1 - b.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_shifted_boxes() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = BBox::new(5.0, 0.0, 10.0, 10.0).unwrap();
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(20.0, 20.0, 1.0, 1.0).unwrap()), 0.0);
    }

    #[test]
    fn degenerate_rejected() {
        assert!(BBox::new(0.0, 0.0, 0.0, 3.0).is_err());
        assert!(BBox::new(0.0, f64::NAN, 2.0, 3.0).is_err());
    }

    proptest! {
        #[test]
        fn iou_matches_pixel_count(ax in 0i32..20, ay in 0i32..20, aw in 1i32..12, ah in 1i32..12,
                                   bx in 0i32..20, by in 0i32..20, bw in 1i32..12, bh in 1i32..12) {
            let a = BBox::new(ax as f64, ay as f64, aw as f64, ah as f64).unwrap();
            let b = BBox::new(bx as f64, by as f64, bw as f64, bh as f64).unwrap();
            let (mut inter, mut union) = (0, 0);
            for y in 0..40 {
                for x in 0..40 {
                    let ina = x >= ax && x < ax + aw && y >= ay && y < ay + ah;
                    let inb = x >= bx && x < bx + bw && y >= by && y < by + bh;
                    inter += (ina && inb) as i32;
                    union += (ina || inb) as i32;
                }
            }
            prop_assert!((a.iou(&b) - inter as f64 / union as f64).abs() < 1e-9);
            prop_assert!((a.iou(&b) - b.iou(&a)).abs() < 1e-15);
        }
    }
}
