//! Tape-free forward kernels and their vector-Jacobian products.
//!
//! Reductions accumulate in `f64` and round once into the element type.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Floor inside the cross-entropy logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

fn dim_err<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Error {
    Error::Dimension {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn rank_err<T: Scalar>(op: &'static str, t: &Tensor<T>, rank: usize) -> Error {
    Error::Dimension {
        op,
        left: t.shape().to_vec(),
        right: vec![rank],
    }
}

/// `input[batch×in] · weights[in×out] + bias[out]`.
pub fn dense<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (is, ws, bs) = (input.shape(), weights.shape(), bias.shape());
    if is.len() != 2 || ws.len() != 2 || is[1] != ws[0] {
        return Err(dim_err("dense", input, weights));
    }
    if bs != [ws[1]] {
        return Err(dim_err("dense", weights, bias));
    }
    let (batch, n_in, n_out) = (is[0], is[1], ws[1]);
    let (x, w, b) = (input.data(), weights.data(), bias.data());
    let mut out = Vec::with_capacity(batch * n_out);
    let mut acc = vec![0f64; n_out];
    for r in 0..batch {
        for (a, bv) in acc.iter_mut().zip(b) {
            *a = bv.as_f64();
        }
        for i in 0..n_in {
            let xv = x[r * n_in + i].as_f64();
            if xv == 0.0 {
                continue;
            }
            let row = &w[i * n_out..(i + 1) * n_out];
            for (a, wv) in acc.iter_mut().zip(row) {
                *a += xv * wv.as_f64();
            }
        }
        out.extend(acc.iter().map(|&a| T::lift(a)));
    }
    Tensor::new(vec![batch, n_out], out)
}

/// Gradients of [`dense`] with respect to input, weights and bias.
pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (batch, n_in) = (input.shape()[0], input.shape()[1]);
    let n_out = weights.shape()[1];
    let (x, w, g) = (input.data(), weights.data(), grad_out.data());

    let mut gx = Vec::with_capacity(batch * n_in);
    for r in 0..batch {
        let grow = &g[r * n_out..(r + 1) * n_out];
        for i in 0..n_in {
            let wrow = &w[i * n_out..(i + 1) * n_out];
            let s: f64 = wrow.iter().zip(grow).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
            gx.push(T::lift(s));
        }
    }

    let mut gw = vec![0f64; n_in * n_out];
    let mut gb = vec![0f64; n_out];
    for r in 0..batch {
        let grow = &g[r * n_out..(r + 1) * n_out];
        for (a, gv) in gb.iter_mut().zip(grow) {
            *a += gv.as_f64();
        }
        for i in 0..n_in {
            let xv = x[r * n_in + i].as_f64();
            if xv == 0.0 {
                continue;
            }
            let dst = &mut gw[i * n_out..(i + 1) * n_out];
            for (a, gv) in dst.iter_mut().zip(grow) {
                *a += xv * gv.as_f64();
            }
        }
    }
    (
        Tensor::new(vec![batch, n_in], gx).expect("shape"),
        Tensor::new(vec![n_in, n_out], gw.into_iter().map(T::lift).collect()).expect("shape"),
        Tensor::new(vec![n_out], gb.into_iter().map(T::lift).collect()).expect("shape"),
    )
}

/// Geometry of a 2-D convolution, derived from operand shapes.
#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    batch: usize,
    in_ch: usize,
    h: usize,
    w: usize,
    out_ch: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

fn conv_geom<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>, stride: usize, pad: usize) -> Result<ConvGeom> {
    let (is, ks) = (input.shape(), kernel.shape());
    if is.len() != 4 || ks.len() != 4 || is[1] != ks[1] {
        return Err(dim_err("conv2d", input, kernel));
    }
    if stride == 0 {
        return Err(Error::config("conv2d stride must be positive"));
    }
    let (kh, kw) = (ks[2], ks[3]);
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::config(format!("conv2d kernel must be odd-sized, got {kh}x{kw}")));
    }
    let (ph, pw) = (is[2] + 2 * pad, is[3] + 2 * pad);
    if kh > ph || kw > pw {
        return Err(dim_err("conv2d", input, kernel));
    }
    Ok(ConvGeom {
        batch: is[0],
        in_ch: is[1],
        h: is[2],
        w: is[3],
        out_ch: ks[0],
        kh,
        kw,
        stride,
        pad,
        oh: (ph - kh) / stride + 1,
        ow: (pw - kw) / stride + 1,
    })
}

/// Valid output index range `[lo, hi)` along one axis for kernel tap `k`.
#[inline]
fn tap_range(k: usize, pad: usize, stride: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    // input index = o*stride + k - pad must lie in [0, len_in)
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let hi = if len_in + pad > k {
        ((len_in + pad - k - 1) / stride + 1).min(len_out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Cross-correlation with zero padding, NCHW layout.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = conv_geom(input, kernel, stride, pad)?;
    if let Some(b) = bias {
        if b.shape() != [g.out_ch] {
            return Err(dim_err("conv2d", kernel, b));
        }
    }
    let (x, k) = (input.data(), kernel.data());
    let plane = g.oh * g.ow;
    let mut out = Vec::with_capacity(g.batch * g.out_ch * plane);
    let mut acc = vec![0f64; plane];
    for n in 0..g.batch {
        for o in 0..g.out_ch {
            let b0 = bias.map_or(0.0, |b| b.data()[o].as_f64());
            acc.iter_mut().for_each(|a| *a = b0);
            for c in 0..g.in_ch {
                let xin = &x[(n * g.in_ch + c) * g.h * g.w..][..g.h * g.w];
                for ky in 0..g.kh {
                    let (oy0, oy1) = tap_range(ky, g.pad, g.stride, g.h, g.oh);
                    for kx in 0..g.kw {
                        let wv = k[((o * g.in_ch + c) * g.kh + ky) * g.kw + kx].as_f64();
                        if wv == 0.0 {
                            continue;
                        }
                        let (ox0, ox1) = tap_range(kx, g.pad, g.stride, g.w, g.ow);
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky - g.pad;
                            let row = &xin[iy * g.w..(iy + 1) * g.w];
                            let arow = &mut acc[oy * g.ow..(oy + 1) * g.ow];
                            for ox in ox0..ox1 {
                                arow[ox] += wv * row[ox * g.stride + kx - g.pad].as_f64();
                            }
                        }
                    }
                }
            }
            out.extend(acc.iter().map(|&a| T::lift(a)));
        }
    }
    Tensor::new(vec![g.batch, g.out_ch, g.oh, g.ow], out)
}

/// Gradients of [`conv2d`]: (input, kernel, bias).
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let g = conv_geom(input, kernel, stride, pad)?;
    let (x, k, go) = (input.data(), kernel.data(), grad_out.data());
    let plane = g.oh * g.ow;

    let mut gx = vec![0f64; x.len()];
    let mut gk = vec![0f64; k.len()];
    let mut gb = vec![0f64; g.out_ch];
    for n in 0..g.batch {
        for o in 0..g.out_ch {
            let gplane = &go[(n * g.out_ch + o) * plane..][..plane];
            gb[o] += gplane.iter().map(|v| v.as_f64()).sum::<f64>();
            for c in 0..g.in_ch {
                let base = (n * g.in_ch + c) * g.h * g.w;
                for ky in 0..g.kh {
                    let (oy0, oy1) = tap_range(ky, g.pad, g.stride, g.h, g.oh);
                    for kx in 0..g.kw {
                        let kidx = ((o * g.in_ch + c) * g.kh + ky) * g.kw + kx;
                        let wv = k[kidx].as_f64();
                        let (ox0, ox1) = tap_range(kx, g.pad, g.stride, g.w, g.ow);
                        let mut kacc = 0f64;
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky - g.pad;
                            let grow = &gplane[oy * g.ow..(oy + 1) * g.ow];
                            let xrow = base + iy * g.w;
                            for ox in ox0..ox1 {
                                let ix = ox * g.stride + kx - g.pad;
                                let gv = grow[ox].as_f64();
                                kacc += gv * x[xrow + ix].as_f64();
                                gx[xrow + ix] += gv * wv;
                            }
                        }
                        gk[kidx] += kacc;
                    }
                }
            }
        }
    }
    let cast = |v: Vec<f64>| v.into_iter().map(T::lift).collect::<Vec<_>>();
    Ok((
        Tensor::new(input.shape().to_vec(), cast(gx))?,
        Tensor::new(kernel.shape().to_vec(), cast(gk))?,
        Tensor::new(vec![g.out_ch], cast(gb))?,
    ))
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    input
        .zip_map(grad_out, |x, g| if x > T::zero() { g } else { T::zero() })
        .expect("relu grad shape")
}

fn pool_geom<T: Scalar>(op: &'static str, input: &Tensor<T>, size: usize) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let s = input.shape();
    if s.len() != 4 || size == 0 || s[2] < size || s[3] < size {
        return Err(rank_err(op, input, 4));
    }
    Ok((s[0], s[1], s[2], s[3], s[2] / size, s[3] / size))
}

/// Non-overlapping max pooling; returns the output and flat argmax indices.
/// Ties resolve to the first element in row-major window order.
pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, size: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let (b, c, h, w, oh, ow) = pool_geom("maxpool2d", input, size)?;
    let x = input.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut arg = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * size * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = base + (oy * size + dy) * w + ox * size + dx;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![b, c, oh, ow], out)?, arg))
}

pub fn maxpool2d_backward<T: Scalar>(input: &Tensor<T>, argmax: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let mut gx = Tensor::zeros(input.shape());
    let d = gx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        d[i] = d[i] + g;
    }
    gx
}

pub fn avgpool2d<T: Scalar>(input: &Tensor<T>, size: usize) -> Result<Tensor<T>> {
    let (b, c, h, w, oh, ow) = pool_geom("avgpool2d", input, size)?;
    let x = input.data();
    let norm = 1.0 / (size * size) as f64;
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0f64;
                for dy in 0..size {
                    let row = base + (oy * size + dy) * w + ox * size;
                    s += x[row..row + size].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                out.push(T::lift(s * norm));
            }
        }
    }
    Tensor::new(vec![b, c, oh, ow], out)
}

pub fn avgpool2d_backward<T: Scalar>(input: &Tensor<T>, size: usize, grad_out: &Tensor<T>) -> Tensor<T> {
    let s = input.shape();
    let (h, w) = (s[2], s[3]);
    let (oh, ow) = (h / size, w / size);
    let norm = T::lift(1.0 / (size * size) as f64);
    let mut gx = Tensor::zeros(s);
    let d = gx.data_mut();
    let g = grad_out.data();
    for plane in 0..s[0] * s[1] {
        for oy in 0..oh {
            for ox in 0..ow {
                let gv = g[(plane * oh + oy) * ow + ox] * norm;
                for dy in 0..size {
                    for dx in 0..size {
                        d[plane * h * w + (oy * size + dy) * w + ox * size + dx] = gv;
                    }
                }
            }
        }
    }
    gx
}

/// Row-wise softmax of a `[batch×classes]` tensor, max-subtracted.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let s = logits.shape();
    if s.len() != 2 || s[1] == 0 {
        return Err(rank_err("softmax", logits, 2));
    }
    let c = s[1];
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(c) {
        let m = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v.as_f64() - m).exp()).collect();
        let z: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| T::lift(v / z)));
    }
    Tensor::new(s.to_vec(), out)
}

pub fn softmax_backward<T: Scalar>(probs: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let c = probs.shape()[1];
    let mut out = Vec::with_capacity(probs.len());
    for (p, g) in probs.data().chunks(c).zip(grad_out.data().chunks(c)) {
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
        out.extend(p.iter().zip(g).map(|(a, b)| T::lift(a.as_f64() * (b.as_f64() - dot))));
    }
    Tensor::new(probs.shape().to_vec(), out).expect("softmax grad shape")
}

fn check_labels<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<(usize, usize)> {
    let s = probs.shape();
    if s.len() != 2 {
        return Err(rank_err("cross_entropy", probs, 2));
    }
    if labels.len() != s[0] {
        return Err(Error::Dimension {
            op: "cross_entropy",
            left: s.to_vec(),
            right: vec![labels.len()],
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= s[1]) {
        return Err(Error::Index {
            op: "cross_entropy",
            index: bad,
            bound: s[1],
        });
    }
    Ok((s[0], s[1]))
}

/// Mean over the batch of `-ln(p[label] + 1e-12)`.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
    let (b, c) = check_labels(probs, labels)?;
    if b == 0 {
        return Err(Error::Contract("cross_entropy over an empty batch".into()));
    }
    let p = probs.data();
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &l)| -(p[r * c + l].as_f64() + LOG_FLOOR).ln())
        .sum();
    Ok(Tensor::scalar(T::lift(total / b as f64)))
}

pub fn cross_entropy_backward<T: Scalar>(probs: &Tensor<T>, labels: &[usize], grad_out: T) -> Tensor<T> {
    let (b, c) = (probs.shape()[0], probs.shape()[1]);
    let mut g = Tensor::zeros(probs.shape());
    let scale = grad_out.as_f64() / b as f64;
    let p = probs.data();
    let d = g.data_mut();
    for (r, &l) in labels.iter().enumerate() {
        d[r * c + l] = T::lift(-scale / (p[r * c + l].as_f64() + LOG_FLOOR));
    }
    g
}

/// Weighted sum `Σ weights[i]·members[i]` of equally shaped tensors.
pub fn mix<T: Scalar>(members: &[&Tensor<T>], weights: &Tensor<T>) -> Result<Tensor<T>> {
    let first = members
        .first()
        .ok_or_else(|| Error::Contract("mix of zero members".into()))?;
    if weights.len() != members.len() {
        return Err(Error::Dimension {
            op: "mix",
            left: vec![members.len()],
            right: weights.shape().to_vec(),
        });
    }
    let mut acc = vec![0f64; first.len()];
    for (m, w) in members.iter().zip(weights.data()) {
        first.check_same_shape(m, "mix")?;
        let wv = w.as_f64();
        for (a, v) in acc.iter_mut().zip(m.data()) {
            *a += wv * v.as_f64();
        }
    }
    Tensor::new(first.shape().to_vec(), acc.into_iter().map(T::lift).collect())
}

/// Output `j` takes `input[map[j]]`, or zero where `map[j]` is `None`.
pub fn gather<T: Scalar>(input: &Tensor<T>, map: &[Option<usize>], shape: &[usize]) -> Result<Tensor<T>> {
    if map.len() != shape.iter().product::<usize>() {
        return Err(Error::Dimension {
            op: "gather",
            left: vec![map.len()],
            right: shape.to_vec(),
        });
    }
    let x = input.data();
    let mut out = Vec::with_capacity(map.len());
    for m in map {
        match m {
            Some(i) if *i < x.len() => out.push(x[*i]),
            Some(i) => {
                return Err(Error::Index {
                    op: "gather",
                    index: *i,
                    bound: x.len(),
                })
            }
            None => out.push(T::zero()),
        }
    }
    Tensor::new(shape.to_vec(), out)
}

pub fn gather_backward<T: Scalar>(input: &Tensor<T>, map: &[Option<usize>], grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = Tensor::zeros(input.shape());
    let d = g.data_mut();
    for (m, &gv) in map.iter().zip(grad_out.data()) {
        if let Some(i) = m {
            d[*i] = d[*i] + gv;
        }
    }
    g
}
