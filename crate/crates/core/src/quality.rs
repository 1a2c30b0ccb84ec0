//! Image fidelity measures for comparing clean and perturbed images.

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::render::to_u8;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn unit(v: f32) -> f64 {
    v.clamp(0.0, 1.0) as f64
}

/// `10·log10(peak² / MSE)`; `+∞` for identical inputs.
fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// PSNR in dB with peak 1, after clamping both images to `[0, 1]`.
pub fn psnr(reference: &Tensor, candidate: &Tensor) -> Result<f64> {
    reference.check_same_shape(candidate, "psnr")?;
    if reference.is_empty() {
        return Err(Error::config("psnr of an empty image"));
    }
    let sse: f64 = reference
        .data()
        .iter()
        .zip(candidate.data())
        .map(|(&a, &b)| (unit(a) - unit(b)).powi(2))
        .sum();
    Ok(psnr_from_mse(sse / reference.len() as f64, 1.0))
}

/// PSNR of the 8-bit quantized images with peak 255.
pub fn psnr_8bit(reference: &Tensor, candidate: &Tensor) -> Result<f64> {
    reference.check_same_shape(candidate, "psnr")?;
    if reference.is_empty() {
        return Err(Error::config("psnr of an empty image"));
    }
    let sse: f64 = reference
        .data()
        .iter()
        .zip(candidate.data())
        .map(|(&a, &b)| (to_u8(a) as f64 - to_u8(b) as f64).powi(2))
        .sum();
    Ok(psnr_from_mse(sse / reference.len() as f64, 255.0))
}

pub fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable weighted local mean over every valid window position.
fn local_mean(plane: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| g[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean single-scale SSIM over channels and valid window positions.
/// The last two axes are spatial; everything before them is a channel.
pub fn ssim(reference: &Tensor, candidate: &Tensor) -> Result<f64> {
    reference.check_same_shape(candidate, "ssim")?;
    let shape = reference.shape();
    if shape.len() < 2 {
        return Err(Error::config("ssim needs at least two spatial axes"));
    }
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::config(format!(
            "ssim needs images of at least {SSIM_WINDOW}×{SSIM_WINDOW}, got {h}×{w}"
        )));
    }
    let g = gaussian_window();
    let planes = reference.len() / (h * w);
    let mut total = 0.0;
    let mut count = 0usize;
    for p in 0..planes {
        let a: Vec<f64> = reference.data()[p * h * w..][..h * w].iter().map(|&v| unit(v)).collect();
        let b: Vec<f64> = candidate.data()[p * h * w..][..h * w].iter().map(|&v| unit(v)).collect();
        let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let (ma, mb) = (local_mean(&a, h, w, &g), local_mean(&b, h, w, &g));
        let (maa, mbb, mab) = (local_mean(&aa, h, w, &g), local_mean(&bb, h, w, &g), local_mean(&ab, h, w, &g));
        for i in 0..ma.len() {
            let (va, vb, cov) = (maa[i] - ma[i] * ma[i], mbb[i] - mb[i] * mb[i], mab[i] - ma[i] * mb[i]);
            let num = (2.0 * ma[i] * mb[i] + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (ma[i] * ma[i] + mb[i] * mb[i] + SSIM_C1) * (va + vb + SSIM_C2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}
