//! Reference implementations used only by tests. They follow the textbook
//! definitions directly, with no shared code from the library.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rqpipe_core::Plane;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_plane(rng: &mut ChaCha8Rng, w: usize, h: usize, bit_depth: u8) -> Plane {
    let max = (1u32 << bit_depth) - 1;
    let data = (0..w * h).map(|_| rng.gen_range(0..=max) as u16).collect();
    Plane::from_vec(w, h, bit_depth, data).unwrap()
}

pub fn sinc_kernel(x: f64, a: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x.abs() >= a {
        return 0.0;
    }
    let px = std::f64::consts::PI * x;
    a * px.sin() * (px / a).sin() / (px * px)
}

/// Non-separable Lanczos resampling: every output sample is a normalised 2-D
/// weighted sum over the source window, indices clamped to the edge.
pub fn lanczos_direct(p: &Plane, out_w: usize, out_h: usize, a: f64) -> Vec<f64> {
    let (w, h) = (p.width(), p.height());
    let sx = out_w as f64 / w as f64;
    let sy = out_h as f64 / h as f64;
    let mut out = vec![0.0; out_w * out_h];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let cx = (ox as f64 + 0.5) / sx - 0.5;
            let cy = (oy as f64 + 0.5) / sy - 0.5;
            let (kx, ky) = (sx.min(1.0), sy.min(1.0));
            let (rx, ry) = (a / kx, a / ky);
            let mut num = 0.0;
            let mut den = 0.0;
            let x0 = (cx - rx).floor() as i64;
            let x1 = (cx + rx).ceil() as i64;
            let y0 = (cy - ry).floor() as i64;
            let y1 = (cy + ry).ceil() as i64;
            for y in y0..=y1 {
                let wy = sinc_kernel((y as f64 - cy) * ky, a);
                for x in x0..=x1 {
                    let wx = sinc_kernel((x as f64 - cx) * kx, a);
                    let xs = x.clamp(0, w as i64 - 1) as usize;
                    let ys = y.clamp(0, h as i64 - 1) as usize;
                    num += wx * wy * p.get(xs, ys) as f64;
                    den += wx * wy;
                }
            }
            out[oy * out_w + ox] = num / den;
        }
    }
    out
}

pub fn psnr_naive(a: &Plane, b: &Plane, bit_depth: u32) -> f64 {
    let mut sum = 0.0f64;
    for y in 0..a.height() {
        for x in 0..a.width() {
            let d = a.get(x, y) as f64 - b.get(x, y) as f64;
            sum += d * d;
        }
    }
    let mse = sum / (a.width() * a.height()) as f64;
    let peak = ((1u64 << bit_depth) - 1) as f64;
    10.0 * (peak * peak / mse).log10()
}

/// Plain nested-loop 2-D cross-correlation in f64 with zero padding.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_naive(
    x: &[f64],
    (c, h, w): (usize, usize, usize),
    weights: &[f64],
    bias: &[f64],
    (oc, kh, kw): (usize, usize, usize),
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; oc * oh * ow];
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[o];
                for i in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as i64 - pad as i64;
                            let ix = (ox * stride + kx) as i64 - pad as i64;
                            if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                continue;
                            }
                            let wv = weights[((o * c + i) * kh + ky) * kw + kx];
                            acc += wv * x[(i * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    (out, oh, ow)
}

pub fn leaky(v: f64, alpha: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        alpha * v
    }
}

/// Composite trapezoid rule with `n` intervals.
pub fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = 0.5 * (f(lo) + f(hi));
    for k in 1..n {
        s += f(lo + k as f64 * h);
    }
    s * h
}
