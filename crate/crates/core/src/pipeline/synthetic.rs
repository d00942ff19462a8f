//! Deterministic test content: smooth gradients and moving sinusoids with a
//! little seeded noise, so that downsampling, coding and post-processing all
//! have something to work on.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::frame_io::{write_sequence, ChromaFormat, Frame, Plane, VideoSpec};

fn pattern_plane(w: usize, h: usize, bit_depth: u8, t: f64, phase: f64, rng: &mut ChaCha8Rng) -> Plane {
    let max = ((1u32 << bit_depth) - 1) as f64;
    let (fw, fh) = (w.max(1) as f64, h.max(1) as f64);
    let data = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x as f64, y as f64)))
        .map(|(x, y)| {
            let u = x / fw;
            let v = y / fh;
            let wave = (std::f64::consts::TAU * (1.5 * u + 1.0 * v) + t * 0.7 + phase).sin();
            let ripple = (std::f64::consts::TAU * (2.5 * u - 2.0 * v) - t * 0.4).cos();
            let detail = (std::f64::consts::TAU * (6.0 * u + 5.0 * v) + t * 0.9 + phase).sin()
                * (std::f64::consts::TAU * (4.0 * v - 3.0 * u)).cos();
            let noise: f64 = rng.gen_range(-0.5..0.5);
            let level = 0.5 + 0.2 * (u - v) + 0.12 * wave + 0.06 * ripple + 0.1 * detail + 0.004 * noise;
            (level.clamp(0.0, 1.0) * max).round() as u16
        })
        .collect();
    Plane::from_vec(w, h, bit_depth, data).expect("samples clamped to range")
}

/// Generates `spec.frame_count` frames of synthetic content.
pub fn generate(spec: &VideoSpec, seed: u64) -> Result<Vec<Frame>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.frame_count)
        .map(|i| {
            let t = i as f64;
            let y = pattern_plane(spec.width, spec.height, spec.bit_depth, t, 0.0, &mut rng);
            match spec.chroma {
                ChromaFormat::C400 => Ok(Frame::monochrome(y)),
                ChromaFormat::C420 => {
                    let (cw, ch) = spec.chroma_dims().expect("4:2:0 has chroma");
                    let cb = pattern_plane(cw, ch, spec.bit_depth, t, 1.3, &mut rng);
                    let cr = pattern_plane(cw, ch, spec.bit_depth, t, 2.6, &mut rng);
                    Frame::new(y, Some((cb, cr)))
                }
            }
        })
        .collect()
}

/// Generates content and writes it to `path`, returning the bytes written.
pub fn write_synthetic(path: impl AsRef<Path>, spec: &VideoSpec, seed: u64) -> Result<u64> {
    write_sequence(&generate(spec, seed)?, spec, path)
}
