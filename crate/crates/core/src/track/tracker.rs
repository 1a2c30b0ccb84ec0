use super::geometry::BBox;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::render::Canvas;
use crate::zoo::ModelRecord;

pub const TEMPLATE_SIZE: usize = 32;
pub const SEARCH_CONTEXT: f64 = 2.5;
/// Candidate spacing in template pixels.
pub const GRID_STRIDE: usize = 4;
pub const SCALES: [f64; 3] = [0.95, 1.0, 1.05];
pub const LOW_CONFIDENCE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub bbox: BBox,
    pub score: f64,
    pub low_confidence: bool,
}

/// Template-matching tracker on the convolutional prefix of a zoo model.
#[derive(Clone, Debug)]
pub struct Tracker {
    model: ModelRecord,
    depth: usize,
    template: Tensor,
    bbox: BBox,
    frame_size: (usize, usize),
}

fn features(model: &ModelRecord, depth: usize, crop: &Canvas) -> Result<Tensor> {
    let t = crop.to_tensor();
    let shape = t.shape().to_vec();
    model.run_features(&t.reshape(&[1, shape[0], shape[1], shape[2]])?, depth)
}

impl Tracker {
    pub fn init(frame0: &Canvas, box0: BBox, feature_model: &ModelRecord) -> Result<Self> {
        box0.validate()?;
        let depth = feature_model
            .arch
            .feature_depth()
            .ok_or_else(|| Error::config(format!("{} has no convolutional features", feature_model.name())))?;
        let crop = frame0.crop_resize(box0.x, box0.y, box0.w, box0.h, TEMPLATE_SIZE, TEMPLATE_SIZE);
        let template = features(feature_model, depth, &crop)?;
        if template.shape()[3] == 0 || !TEMPLATE_SIZE.is_multiple_of(template.shape()[3]) {
            return Err(Error::config("feature map does not tile the template"));
        }
        Ok(Self {
            model: feature_model.clone(),
            depth,
            template,
            bbox: box0,
            frame_size: (frame0.height, frame0.width),
        })
    }

    pub fn template(&self) -> &Tensor {
        &self.template
    }

    pub fn template_checksum(&self) -> u32 {
        self.template.checksum()
    }

    pub fn current(&self) -> BBox {
        self.bbox
    }

    pub fn step(&mut self, frame: &Canvas) -> Result<StepOutcome> {
        let tshape = self.template.shape();
        let (ch, th, tw) = (tshape[1], tshape[2], tshape[3]);
        let cell = TEMPLATE_SIZE / tw;
        let step = (GRID_STRIDE / cell).max(1);
        let search = (TEMPLATE_SIZE as f64 * SEARCH_CONTEXT).round() as usize;
        let (cx, cy) = self.bbox.center();
        let tdata = self.template.data();

        // (score, displacement², |s − 1|, (cx, cy, w, h))
        type Candidate = (f64, f64, f64, (f64, f64, f64, f64));
        let mut best: Option<Candidate> = None;
        for &s in &SCALES {
            let (bw, bh) = (self.bbox.w * s, self.bbox.h * s);
            let (ww, wh) = (bw * SEARCH_CONTEXT, bh * SEARCH_CONTEXT);
            let window = frame.crop_resize(cx - ww / 2.0, cy - wh / 2.0, ww, wh, search, search);
            let f = features(&self.model, self.depth, &window)?;
            let (fh, fw) = (f.shape()[2], f.shape()[3]);
            if fh < th || fw < tw {
                continue;
            }
            let (my, mx) = ((fh - th) / 2, (fw - tw) / 2);
            let fdata = f.data();
            let mut oy = my % step;
            while oy + th <= fh {
                let mut ox = mx % step;
                while ox + tw <= fw {
                    let score = cosine(tdata, fdata, ch, th, tw, fh, fw, oy, ox);
                    // one feature cell is `cell` template pixels; one template pixel is bw/32 frame pixels
                    let dy = (oy as f64 - my as f64) * cell as f64 * bh / TEMPLATE_SIZE as f64;
                    let dx = (ox as f64 - mx as f64) * cell as f64 * bw / TEMPLATE_SIZE as f64;
                    let cand = (score, dx * dx + dy * dy, (s - 1.0).abs(), (cx + dx, cy + dy, bw, bh));
                    let better = match &best {
                        None => true,
                        Some((bs, bd, bsc, _)) => {
                            score > *bs || (score == *bs && (cand.1 < *bd || (cand.1 == *bd && cand.2 < *bsc)))
                        }
                    };
                    if better {
                        best = Some(cand);
                    }
                    ox += step;
                }
                oy += step;
            }
        }
        let (score, _, _, (ncx, ncy, nw, nh)) = best.ok_or_else(|| Error::Contract("search window smaller than template".into()))?;
        let (fh, fw) = (self.frame_size.0 as f64, self.frame_size.1 as f64);
        self.bbox = BBox::from_center(ncx.clamp(0.0, fw), ncy.clamp(0.0, fh), nw.clamp(4.0, fw), nh.clamp(4.0, fh));
        Ok(StepOutcome {
            bbox: self.bbox,
            score,
            low_confidence: score.is_nan() || score < LOW_CONFIDENCE,
        })
    }
}

/// Cosine similarity of the mean-centered template and window features.
#[allow(clippy::too_many_arguments)]
fn cosine(t: &[f32], f: &[f32], ch: usize, th: usize, tw: usize, fh: usize, fw: usize, oy: usize, ox: usize) -> f64 {
    let n = (ch * th * tw) as f64;
    let (mut st, mut sf, mut stt, mut sff, mut stf) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for c in 0..ch {
        for y in 0..th {
            let trow = &t[(c * th + y) * tw..][..tw];
            let frow = &f[(c * fh + oy + y) * fw + ox..][..tw];
            for (&a, &b) in trow.iter().zip(frow) {
                let (a, b) = (a as f64, b as f64);
                st += a;
                sf += b;
                stt += a * a;
                sff += b * b;
                stf += a * b;
            }
        }
    }
    let vt = stt - st * st / n;
    let vf = sff - sf * sf / n;
    if vt <= 1e-12 || vf <= 1e-12 {
        0.0
    } else {
        (stf - st * sf / n) / (vt.sqrt() * vf.sqrt())
    }
}

/// Tracks `frames` from the given first box; frame 0 reports `box0` itself.
pub fn track_frames(frames: &[Canvas], box0: BBox, feature_model: &ModelRecord) -> Result<(Vec<BBox>, Vec<bool>)> {
    let first = frames.first().ok_or_else(|| Error::config("empty sequence"))?;
    let mut tracker = Tracker::init(first, box0, feature_model)?;
    let mut boxes = vec![box0];
    let mut low = vec![false];
    for f in &frames[1..] {
        let o = tracker.step(f)?;
        boxes.push(o.bbox);
        low.push(o.low_confidence);
    }
    Ok((boxes, low))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::track::sequence::{generate_sequence, SequenceSpec};
    use crate::zoo::default_architectures;

    fn model(seed: u64) -> ModelRecord {
        ModelRecord::initialize(&default_architectures(32, 5)[0], &mut Rng::new(seed)).unwrap()
    }

    fn short(seed: u64) -> crate::track::Sequence {
        generate_sequence(&SequenceSpec { length: 6, seed, ..SequenceSpec::easy(seed) }).unwrap()
    }

    #[test]
    fn self_match_recovers_initial_box() {
        let m = model(1);
        for seed in 0..3 {
            let s = short(seed);
            let mut t = Tracker::init(&s.frames[0], s.boxes[0], &m).unwrap();
            let o = t.step(&s.frames[0]).unwrap();
            assert!(o.bbox.iou(&s.boxes[0]) >= 0.9, "{seed}: {:?}", o);
        }
    }

    #[test]
    fn templates_depend_on_inputs_and_model() {
        let s = short(3);
        let a = Tracker::init(&s.frames[0], s.boxes[0], &model(1)).unwrap();
        let b = Tracker::init(&s.frames[0], s.boxes[0], &model(1)).unwrap();
        let c = Tracker::init(&s.frames[0], s.boxes[0], &model(2)).unwrap();
        assert_eq!(a.template_checksum(), b.template_checksum());
        assert_ne!(a.template_checksum(), c.template_checksum());
    }

    #[test]
    fn degenerate_box_is_config_error() {
        let s = short(0);
        let b = BBox { x: 3.0, y: 3.0, w: 0.0, h: 5.0 };
        assert!(matches!(Tracker::init(&s.frames[0], b, &model(1)), Err(Error::Config(_))));
    }

    #[test]
    fn pure_noise_frame_still_returns_a_box() {
        let s = short(1);
        let mut t = Tracker::init(&s.frames[0], s.boxes[0], &model(1)).unwrap();
        let mut rng = Rng::new(8);
        let mut noise = Canvas::new(96, 96);
        for v in noise.data.iter_mut() {
            *v = rng.uniform() as f32;
        }
        let o = t.step(&noise).unwrap();
        assert!(o.bbox.w > 0.0 && o.bbox.h > 0.0);
        assert_eq!(o.low_confidence, o.score < LOW_CONFIDENCE);
        // a blank frame has no structure to match at all
        let o = t.step(&Canvas::new(96, 96)).unwrap();
        assert!(o.low_confidence);
    }

    #[test]
    fn tracking_is_deterministic() {
        let s = short(2);
        let m = model(4);
        assert_eq!(track_frames(&s.frames, s.boxes[0], &m).unwrap(), track_frames(&s.frames, s.boxes[0], &m).unwrap());
    }

    #[test]
    fn mean_centered_cosine_matches_direct_formula() {
        let mut rng = Rng::new(5);
        let t: Vec<f32> = (0..2 * 2 * 2).map(|_| rng.uniform() as f32).collect();
        let f: Vec<f32> = (0..2 * 3 * 3).map(|_| rng.uniform() as f32).collect();
        let got = cosine(&t, &f, 2, 2, 2, 3, 3, 1, 0);
        let w: Vec<f64> = (0..2)
            .flat_map(|c| (0..2).flat_map(move |y| (0..2).map(move |x| (c, y, x))))
            .map(|(c, y, x)| f[c * 9 + (1 + y) * 3 + x] as f64)
            .collect();
        let tv: Vec<f64> = t.iter().map(|&v| v as f64).collect();
        let (mt, mw) = (tv.iter().sum::<f64>() / 8.0, w.iter().sum::<f64>() / 8.0);
        let dot: f64 = tv.iter().zip(&w).map(|(a, b)| (a - mt) * (b - mw)).sum();
        let na: f64 = tv.iter().map(|a| (a - mt).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = w.iter().map(|b| (b - mw).powi(2)).sum::<f64>().sqrt();
        assert!((got - dot / (na * nb)).abs() < 1e-12);
    }
}
