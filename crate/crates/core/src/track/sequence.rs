use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::BBox;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::render::{Canvas, SHAPE_NAMES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Linear,
    Sinusoidal,
    RandomWalk,
}

/// Box side length relative to the painted sprite.
const BOX_MARGIN: f64 = 1.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceSpec {
    pub name: String,
    pub seed: u64,
    pub length: usize,
    pub frame_size: usize,
    pub target_class: usize,
    pub motion: Motion,
    /// Pixels per frame (step scale for a random walk).
    pub speed: f64,
    pub occlusion_prob: f64,
    /// Relative size change per frame.
    pub scale_drift: f64,
    /// Initial side of the ground-truth box in pixels.
    pub target_size: f64,
    /// Static sprites of other classes scattered over the background.
    pub distractors: usize,
    pub contrast: f64,
    pub noise_level: f64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            name: "sequence".into(),
            seed: 0,
            length: 60,
            frame_size: 96,
            target_class: 0,
            motion: Motion::Linear,
            speed: 0.6,
            occlusion_prob: 0.0,
            scale_drift: 0.0,
            target_size: 30.0,
            distractors: 0,
            contrast: 0.15,
            noise_level: 0.03,
        }
    }
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::config(format!("{}: length must be at least 2", self.name)));
        }
        if self.target_class >= SHAPE_NAMES.len() {
            return Err(Error::config(format!("{}: unknown target class {}", self.name, self.target_class)));
        }
        if !(self.target_size >= 4.0 && self.target_size <= self.frame_size as f64) {
            return Err(Error::config(format!(
                "{}: target of {} px does not fit a {} px frame",
                self.name, self.target_size, self.frame_size
            )));
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) || !(0.0..=1.0).contains(&self.noise_level) {
            return Err(Error::config(format!("{}: probabilities must lie in [0, 1]", self.name)));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite() && self.scale_drift.abs() < 0.1) {
            return Err(Error::config(format!("{}: speed or scale_drift out of range", self.name)));
        }
        Ok(())
    }

    /// A static target on a plain textured background.
    pub fn easy(seed: u64) -> Self {
        Self {
            name: format!("easy_{seed:02}"),
            seed,
            speed: 0.0,
            target_class: seed as usize % 5,
            ..Self::default()
        }
    }
}

/// Twenty sequences cycling through classes, motion models and nuisances.
pub fn default_suite() -> Vec<SequenceSpec> {
    let motions = [Motion::Linear, Motion::Sinusoidal, Motion::RandomWalk, Motion::Linear];
    (0..20u64)
        .map(|i| SequenceSpec {
            name: format!("seq_{i:02}"),
            seed: 1000 + i,
            target_class: i as usize % 5,
            motion: motions[i as usize % 4],
            speed: [0.4, 0.8, 1.2][i as usize % 3],
            occlusion_prob: if i % 5 == 4 { 0.1 } else { 0.0 },
            scale_drift: [0.0, 0.002, -0.002][i as usize % 3],
            distractors: i as usize % 3,
            ..SequenceSpec::default()
        })
        .collect()
}

/// Five static, unoccluded sequences.
pub fn easy_suite() -> Vec<SequenceSpec> {
    (0..5).map(SequenceSpec::easy).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub spec: SequenceSpec,
    pub frames: Vec<Canvas>,
    pub boxes: Vec<BBox>,
    pub occluded: Vec<bool>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_checksums(&self) -> Vec<u32> {
        self.frames.iter().map(Canvas::checksum).collect()
    }

    pub fn checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for c in self.frame_checksums() {
            h.update(&c.to_le_bytes());
        }
        h.finalize()
    }

    /// Frames as `NNNN.ppm` plus `groundtruth.csv` (frame,x,y,w,h).
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut csv = String::from("frame,x,y,w,h\n");
        for (t, (f, b)) in self.frames.iter().zip(&self.boxes).enumerate() {
            f.write_ppm(&dir.join(format!("{t:04}.ppm")))?;
            let _ = writeln!(csv, "{t},{},{},{},{}", b.x, b.y, b.w, b.h);
        }
        let path = dir.join("groundtruth.csv");
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
    }
}

fn trajectory(spec: &SequenceSpec, rng: &mut Rng) -> Vec<BBox> {
    let f = spec.frame_size as f64;
    let n = spec.length;
    let max_side = f / 2.0;
    let sizes: Vec<f64> = (0..n)
        .map(|t| (spec.target_size * (1.0 + spec.scale_drift).powi(t as i32)).clamp(8.0_f64.min(spec.target_size), max_side.max(spec.target_size)))
        .collect();
    let fit = |c: f64, s: f64| c.clamp(s / 2.0, f - s / 2.0);
    let s0 = sizes[0];
    let (cx0, cy0) = (rng.uniform_range(s0 / 2.0, f - s0 / 2.0), rng.uniform_range(s0 / 2.0, f - s0 / 2.0));
    let theta = rng.uniform_range(0.0, std::f64::consts::TAU);
    let (dx, dy) = (theta.cos(), theta.sin());
    let smax = sizes.iter().cloned().fold(0.0, f64::max);
    let mut centers = Vec::with_capacity(n);
    match spec.motion {
        Motion::Linear => {
            // longest travel along (dx, dy) that keeps every box inside
            let room = |c: f64, d: f64| {
                if d > 1e-12 {
                    (f - smax / 2.0 - c) / d
                } else if d < -1e-12 {
                    (c - smax / 2.0) / -d
                } else {
                    f64::INFINITY
                }
            };
            let travel = room(cx0, dx).min(room(cy0, dy)).max(0.0);
            let v = spec.speed.min(travel / (n - 1) as f64);
            for t in 0..n {
                centers.push((cx0 + dx * v * t as f64, cy0 + dy * v * t as f64));
            }
        }
        Motion::Sinusoidal => {
            let amp = rng.uniform_range(0.1, 0.25) * f;
            let period = rng.uniform_range(20.0, 40.0);
            for t in 0..n {
                let along = spec.speed * t as f64;
                let across = amp * (std::f64::consts::TAU * t as f64 / period).sin();
                centers.push((cx0 + dx * along - dy * across, cy0 + dy * along + dx * across));
            }
        }
        Motion::RandomWalk => {
            let (mut x, mut y) = (cx0, cy0);
            for t in 0..n {
                if t > 0 {
                    x = fit(x + spec.speed * rng.normal(), sizes[t]);
                    y = fit(y + spec.speed * rng.normal(), sizes[t]);
                }
                centers.push((x, y));
            }
        }
    }
    centers
        .into_iter()
        .zip(sizes)
        .map(|((x, y), s)| BBox::from_center(fit(x, s), fit(y, s), s, s))
        .collect()
}

fn paint_background(canvas: &mut Canvas, rng: &mut Rng) -> [f64; 3] {
    let bg = [rng.uniform_range(0.05, 0.2), rng.uniform_range(0.05, 0.2), rng.uniform_range(0.05, 0.2)];
    let (fx, fy, phase) = (rng.uniform_range(0.0, 0.5), rng.uniform_range(0.0, 0.5), rng.uniform_range(0.0, 6.3));
    for y in 0..canvas.height {
        for x in 0..canvas.width {
            let tex = 0.06 * (fx * x as f64 + fy * y as f64 + phase).sin();
            for (c, b) in bg.iter().enumerate() {
                canvas.set(c, y, x, (b + tex).clamp(0.0, 1.0) as f32);
            }
        }
    }
    bg
}

fn sprite_color(bg: &[f64; 3], contrast: f64, rng: &mut Rng) -> [f32; 3] {
    bg.map(|b| (b + contrast * rng.uniform_range(0.6, 1.4)).min(1.0) as f32)
}

fn paint_target(canvas: &mut Canvas, class: usize, b: &BBox, color: [f32; 3]) {
    let (cx, cy) = b.center();
    let (w, h) = (b.w / BOX_MARGIN, b.h / BOX_MARGIN);
    canvas.paint_shape(class, cx - w / 2.0, cy - h / 2.0, w, h, color);
}

pub fn generate_sequence(spec: &SequenceSpec) -> Result<Sequence> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let f = spec.frame_size;
    let boxes = trajectory(spec, &mut root.fork(2));

    let mut background = Canvas::new(f, f);
    let mut brng = root.fork(1);
    let bg = paint_background(&mut background, &mut brng);
    let color = sprite_color(&bg, spec.contrast, &mut brng);
    let mut drng = root.fork(3);
    for _ in 0..spec.distractors {
        let mut class = drng.below(SHAPE_NAMES.len() - 1);
        if class >= spec.target_class {
            class += 1;
        }
        let side = spec.target_size * drng.uniform_range(0.8, 1.2);
        let (cx, cy) = (drng.uniform_range(side / 2.0, f as f64 - side / 2.0), drng.uniform_range(side / 2.0, f as f64 - side / 2.0));
        let c = sprite_color(&bg, spec.contrast, &mut drng);
        paint_target(&mut background, class % SHAPE_NAMES.len(), &BBox::from_center(cx, cy, side, side), c);
    }

    let orng = root.fork(4);
    let mut frames = Vec::with_capacity(spec.length);
    let mut occluded = Vec::with_capacity(spec.length);
    for (t, b) in boxes.iter().enumerate() {
        let mut frame = background.clone();
        paint_target(&mut frame, spec.target_class, b, color);
        let mut o = orng.fork(t as u64);
        // frame 0 defines the template and is never occluded
        let occlude = t > 0 && o.bernoulli(spec.occlusion_prob);
        if occlude {
            let (ow, oh) = (b.w * o.uniform_range(0.4, 0.77), b.h * o.uniform_range(0.4, 0.77));
            let ox = b.x + o.uniform() * (b.w - ow);
            let oy = b.y + o.uniform() * (b.h - oh);
            let g = o.uniform_range(0.2, 0.6) as f32;
            let (x0, y0) = (ox.ceil() as usize, oy.ceil() as usize);
            let (x1, y1) = ((ox + ow).floor() as usize, (oy + oh).floor() as usize);
            frame.fill_rect(x0, y0, x1.saturating_sub(x0), y1.saturating_sub(y0), [g, g, g]);
        }
        occluded.push(occlude);
        if spec.noise_level > 0.0 {
            let mut n = root.fork(1000 + t as u64);
            for v in frame.data.iter_mut() {
                *v = (*v as f64 + n.uniform_range(-spec.noise_level, spec.noise_level)).clamp(0.0, 1.0) as f32;
            }
        }
        frames.push(frame);
    }
    Ok(Sequence {
        spec: spec.clone(),
        frames,
        boxes,
        occluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_centers_are_collinear() {
        let spec = SequenceSpec { speed: 1.5, seed: 4, ..Default::default() };
        let s = generate_sequence(&spec).unwrap();
        let c: Vec<(f64, f64)> = s.boxes.iter().map(|b| b.center()).collect();
        let (a, z) = (c[0], c[c.len() - 1]);
        for p in &c {
            let cross = (z.0 - a.0) * (p.1 - a.1) - (z.1 - a.1) * (p.0 - a.0);
            assert!(cross.abs() < 1e-6, "{cross}");
        }
        assert!((z.0 - a.0).hypot(z.1 - a.1) > 1.0);
    }

    #[test]
    fn boxes_stay_inside_for_every_motion() {
        for (i, motion) in [Motion::Linear, Motion::Sinusoidal, Motion::RandomWalk].into_iter().enumerate() {
            for seed in 0..5 {
                let spec = SequenceSpec { motion, seed: seed + 10 * i as u64, speed: 3.0, scale_drift: 0.01, ..Default::default() };
                let s = generate_sequence(&spec).unwrap();
                assert_eq!(s.len(), 60);
                assert!(s.boxes.iter().all(|b| b.inside(96, 96)), "{motion:?} {seed}");
            }
        }
    }

    #[test]
    fn same_spec_same_frames() {
        let spec = default_suite().remove(5);
        assert_eq!(generate_sequence(&spec).unwrap().checksum(), generate_sequence(&spec).unwrap().checksum());
    }

    #[test]
    fn full_occlusion_marks_every_later_frame() {
        let base = SequenceSpec { seed: 9, ..Default::default() };
        let clear = generate_sequence(&base).unwrap();
        let occ = generate_sequence(&SequenceSpec { occlusion_prob: 1.0, ..base }).unwrap();
        assert_eq!(clear.frames[0], occ.frames[0]);
        for t in 1..clear.len() {
            assert!(occ.occluded[t]);
            assert_ne!(clear.frames[t], occ.frames[t], "frame {t}");
        }
        assert_eq!(clear.boxes, occ.boxes);
    }

    #[test]
    fn oversized_target_is_config_error() {
        let spec = SequenceSpec { target_size: 120.0, ..Default::default() };
        assert!(matches!(generate_sequence(&spec), Err(Error::Config(_))));
        let spec = SequenceSpec { length: 1, ..Default::default() };
        assert!(matches!(generate_sequence(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn export_writes_frames_and_truth() {
        let spec = SequenceSpec { length: 3, ..Default::default() };
        let s = generate_sequence(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.export(dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("groundtruth.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(dir.path().join("0002.ppm").exists());
    }
}
