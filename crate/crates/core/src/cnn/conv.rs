use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::weights::ConvWeights;
use crate::error::{Error, Result};

/// Accumulator precision for convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Single,
    /// Accumulate in f64, store f32.
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvParams {
    pub stride: usize,
    pub pad: usize,
}

impl Default for ConvParams {
    fn default() -> Self {
        ConvParams { stride: 1, pad: 0 }
    }
}

fn out_len(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Range of output positions `o` for which `o*stride + tap - pad` lands in
/// `0..input`.
#[inline]
fn valid_range(out: usize, input: usize, tap: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > tap { (pad - tap).div_ceil(stride) } else { 0 };
    // o*stride + tap - pad <= input - 1  =>  o <= (input - 1 + pad - tap) / stride
    let hi = if input + pad > tap {
        ((input - 1 + pad - tap) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// 2-D cross-correlation with zero padding, one bias per output channel.
///
/// Each output value accumulates its taps in (input channel, ky, kx) order and
/// adds the bias last, independent of tensor size, so cropping an input and
/// convolving gives bit-identical interiors.
pub fn conv2d(
    x: &Tensor,
    w: &ConvWeights,
    params: ConvParams,
    precision: Precision,
    layer: &str,
) -> Result<Tensor> {
    if x.channels() != w.in_ch {
        return Err(Error::shape(
            layer,
            format!("expects {} input channels, got {}", w.in_ch, x.channels()),
        ));
    }
    let (oh, ow) = match (
        out_len(x.height(), w.kh, params.stride, params.pad),
        out_len(x.width(), w.kw, params.stride, params.pad),
    ) {
        (Some(h), Some(w)) => (h, w),
        _ => {
            return Err(Error::shape(
                layer,
                format!(
                    "{}x{} kernel (stride {}, pad {}) does not fit {}x{} input",
                    w.kh,
                    w.kw,
                    params.stride,
                    params.pad,
                    x.height(),
                    x.width()
                ),
            ))
        }
    };
    let mut out = Tensor::zeros(w.out_ch, oh, ow);
    let plane = oh * ow;
    if plane == 0 {
        return Ok(out);
    }
    match precision {
        Precision::Single => out
            .data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(oc, dst)| {
                accumulate::<f32>(x, w, params, oc, oh, ow, dst, |a| a);
            }),
        Precision::Double => out
            .data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(oc, dst)| {
                accumulate::<f64>(x, w, params, oc, oh, ow, dst, |a| a as f32);
            }),
    }
    Ok(out)
}

trait Acc: Copy + Default + std::ops::AddAssign + std::ops::Mul<Output = Self> + std::ops::Add<Output = Self> {
    fn from_f32(v: f32) -> Self;
}

impl Acc for f32 {
    #[inline]
    fn from_f32(v: f32) -> Self {
        v
    }
}

impl Acc for f64 {
    #[inline]
    fn from_f32(v: f32) -> Self {
        v as f64
    }
}

#[allow(clippy::too_many_arguments)]
fn accumulate<A: Acc>(
    x: &Tensor,
    w: &ConvWeights,
    params: ConvParams,
    oc: usize,
    oh: usize,
    ow: usize,
    dst: &mut [f32],
    finish: impl Fn(A) -> f32,
) {
    let (ih, iw) = (x.height(), x.width());
    let s = params.stride;
    let p = params.pad;
    let mut acc = vec![A::default(); oh * ow];
    for ic in 0..w.in_ch {
        let src = x.channel(ic);
        for ky in 0..w.kh {
            let (y0, y1) = valid_range(oh, ih, ky, s, p);
            for kx in 0..w.kw {
                let wv = A::from_f32(w.weight(oc, ic, ky, kx));
                let (x0, x1) = valid_range(ow, iw, kx, s, p);
                for oy in y0..y1 {
                    let iy = oy * s + ky - p;
                    let src_row = &src[iy * iw..(iy + 1) * iw];
                    let acc_row = &mut acc[oy * ow..(oy + 1) * ow];
                    if s == 1 {
                        let base = kx + x0 - p;
                        for (a, &v) in acc_row[x0..x1].iter_mut().zip(&src_row[base..base + (x1 - x0)]) {
                            *a += wv * A::from_f32(v);
                        }
                    } else {
                        for ox in x0..x1 {
                            acc_row[ox] += wv * A::from_f32(src_row[ox * s + kx - p]);
                        }
                    }
                }
            }
        }
    }
    let bias = A::from_f32(w.bias[oc]);
    for (d, a) in dst.iter_mut().zip(acc) {
        *d = finish(a + bias);
    }
}
