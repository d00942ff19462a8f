//! Spatial resampling: Lanczos filtering for downscaling and nearest-neighbour
//! duplication for upscaling.
//!
//! Filtering is separable (horizontal pass, then vertical) with double
//! precision intermediates and a single rounding at the end. Output sample `i`
//! is centred on source position `(i + 0.5) / scale - 0.5`. When shrinking, the
//! kernel is stretched by `1 / scale` so it also acts as the anti-alias filter.
//! Taps falling outside the plane are clamped to the nearest edge sample and
//! each tap set is renormalised to sum to one.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{Frame, Plane};

pub const DEFAULT_LANCZOS_TAPS: u32 = 3;

/// Lanczos kernel `sinc(x) * sinc(x / a)` on `(-a, a)`, zero elsewhere.
pub fn lanczos_weight(x: f64, a: u32) -> f64 {
    let a = a as f64;
    let x = x.abs();
    if x == 0.0 {
        return 1.0;
    }
    if x >= a {
        return 0.0;
    }
    let px = std::f64::consts::PI * x;
    a * px.sin() * (px / a).sin() / (px * px)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ResampleFilter {
    Lanczos { a: u32 },
    NearestNeighbor,
}

impl ResampleFilter {
    pub fn lanczos(a: u32) -> Result<Self> {
        if a == 0 {
            return Err(Error::Config("Lanczos tap parameter must be >= 1".into()));
        }
        Ok(ResampleFilter::Lanczos { a })
    }
}

impl Default for ResampleFilter {
    fn default() -> Self {
        ResampleFilter::Lanczos {
            a: DEFAULT_LANCZOS_TAPS,
        }
    }
}

impl fmt::Display for ResampleFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResampleFilter::Lanczos { a } => write!(f, "lanczos:{a}"),
            ResampleFilter::NearestNeighbor => f.write_str("nn"),
        }
    }
}

impl FromStr for ResampleFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.split_once(':') {
            None if s == "nn" || s == "nearest" => Ok(ResampleFilter::NearestNeighbor),
            None if s == "lanczos" => Ok(ResampleFilter::default()),
            Some(("lanczos", a)) => {
                let a = a
                    .parse()
                    .map_err(|_| Error::Config(format!("bad Lanczos parameter in `{s}`")))?;
                ResampleFilter::lanczos(a)
            }
            _ => Err(Error::Config(format!(
                "unknown filter `{s}` (expected lanczos[:a] or nn)"
            ))),
        }
    }
}

impl TryFrom<String> for ResampleFilter {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ResampleFilter> for String {
    fn from(f: ResampleFilter) -> String {
        f.to_string()
    }
}

/// Rational scale `numerator / denominator`, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ScaleFactor {
    num: u32,
    den: u32,
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl ScaleFactor {
    pub const ONE: ScaleFactor = ScaleFactor { num: 1, den: 1 };
    pub const HALF: ScaleFactor = ScaleFactor { num: 1, den: 2 };
    pub const TWO: ScaleFactor = ScaleFactor { num: 2, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Config(format!("scale {num}/{den} must be positive")));
        }
        let g = gcd(num, den);
        Ok(ScaleFactor {
            num: num / g,
            den: den / g,
        })
    }

    pub fn numerator(&self) -> u32 {
        self.num
    }

    pub fn denominator(&self) -> u32 {
        self.den
    }

    pub fn inverse(&self) -> ScaleFactor {
        ScaleFactor {
            num: self.den,
            den: self.num,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.num == self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Scaled length, or an error if it is not a whole number of samples.
    pub fn apply(&self, len: usize) -> Result<usize> {
        let scaled = len as u64 * self.num as u64;
        if !scaled.is_multiple_of(self.den as u64) {
            return Err(Error::Dimension(format!(
                "length {len} is not divisible under scale {self}"
            )));
        }
        Ok((scaled / self.den as u64) as usize)
    }
}

impl fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for ScaleFactor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad scale `{s}` (expected N/D)"));
        match s.trim().split_once('/') {
            Some((n, d)) => ScaleFactor::new(
                n.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            ),
            None => ScaleFactor::new(s.trim().parse().map_err(|_| bad())?, 1),
        }
    }
}

impl TryFrom<String> for ScaleFactor {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScaleFactor> for String {
    fn from(f: ScaleFactor) -> String {
        f.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub index: usize,
    pub weight: f64,
    /// Twice the scaled distance to the output centre as an exact integer.
    /// Mirrored positions get equal keys; accumulation runs in key order so
    /// mirrored inputs give bit-identical sums.
    key: u64,
}

/// Weights contributing to one output sample, in accumulation order.
#[derive(Debug, Clone, PartialEq)]
pub struct TapSet {
    pub taps: Vec<Tap>,
}

impl TapSet {
    pub fn weight_sum(&self) -> f64 {
        self.taps.iter().map(|t| t.weight).sum()
    }

    /// Accumulates `f(index) * weight` in canonical order. Equal-key taps are
    /// added to each other before joining the running sum.
    #[inline]
    fn accumulate(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        let taps = &self.taps;
        let mut acc = 0.0;
        let mut k = 0;
        while k < taps.len() {
            let p = taps[k].weight * f(taps[k].index);
            if k + 1 < taps.len() && taps[k + 1].key == taps[k].key {
                let q = taps[k + 1].weight * f(taps[k + 1].index);
                acc += p + q;
                k += 2;
            } else {
                acc += p;
                k += 1;
            }
        }
        acc
    }
}

/// Builds the normalised Lanczos tap table mapping `in_len` samples onto
/// `scale.apply(in_len)` samples.
pub fn lanczos_taps(in_len: usize, scale: ScaleFactor, a: u32) -> Result<Vec<TapSet>> {
    if a == 0 {
        return Err(Error::Config("Lanczos tap parameter must be >= 1".into()));
    }
    let out_len = scale.apply(in_len)?;
    let num = scale.num as i64;
    let den = scale.den as i64;
    let shrinking = num < den;
    // offset(j, i) = ((2j+1)·num − (2i+1)·den) / (2·num) in source samples;
    // the kernel argument divides by 2·den when shrinking (stretched kernel)
    // and by 2·num otherwise.
    let arg_den = if shrinking { 2 * den } else { 2 * num } as f64;
    let support = if shrinking {
        a as f64 * den as f64 / num as f64
    } else {
        a as f64
    };
    let last = in_len as i64 - 1;
    let sets = (0..out_len as i64)
        .map(|i| {
            let centre = ((2 * i + 1) * den - num) as f64 / (2 * num) as f64;
            let lo = (centre - support).floor() as i64;
            let hi = (centre + support).ceil() as i64;
            // (clamped index, own distance key, weight) before merging.
            let mut raw: Vec<(usize, u64, f64)> = Vec::with_capacity((hi - lo + 1) as usize);
            for j in lo..=hi {
                let t = (2 * j + 1) * num - (2 * i + 1) * den;
                let w = lanczos_weight(t as f64 / arg_den, a);
                if w == 0.0 {
                    continue;
                }
                raw.push((j.clamp(0, last) as usize, t.unsigned_abs(), w));
            }
            // Several taps clamp onto an edge sample; they are merged nearest
            // first so the merge is mirror-stable too.
            raw.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
            let mut taps: Vec<Tap> = Vec::new();
            for (idx, _, w) in raw {
                match taps.last_mut() {
                    Some(t) if t.index == idx => t.weight += w,
                    _ => {
                        let idx_t = (2 * idx as i64 + 1) * num - (2 * i + 1) * den;
                        taps.push(Tap {
                            index: idx,
                            weight: w,
                            key: idx_t.unsigned_abs(),
                        });
                    }
                }
            }
            taps.sort_by(|x, y| x.key.cmp(&y.key).then(x.index.cmp(&y.index)));
            let total = TapSet { taps: taps.clone() }.accumulate(|_| 1.0);
            for t in &mut taps {
                t.weight /= total;
            }
            TapSet { taps }
        })
        .collect();
    Ok(sets)
}

/// Source index for output `i` under nearest-neighbour mapping:
/// `floor(i / scale)`. Picks the top-left sample when shrinking and
/// duplicates when growing.
#[inline]
fn nn_source(i: usize, scale: ScaleFactor) -> usize {
    (i as u64 * scale.den as u64 / scale.num as u64) as usize
}

fn check_output(p: &Plane, scale: ScaleFactor) -> Result<(usize, usize)> {
    let w = scale.apply(p.width()).map_err(|_| {
        Error::Dimension(format!(
            "plane width {} does not divide under scale {scale}",
            p.width()
        ))
    })?;
    let h = scale.apply(p.height()).map_err(|_| {
        Error::Dimension(format!(
            "plane height {} does not divide under scale {scale}",
            p.height()
        ))
    })?;
    Ok((w, h))
}

fn nn_plane(p: &Plane, scale: ScaleFactor) -> Result<Plane> {
    let (w, h) = check_output(p, scale)?;
    let cols: Vec<usize> = (0..w).map(|x| nn_source(x, scale)).collect();
    let mut data = vec![0u16; w * h];
    data.par_chunks_mut(w.max(1)).enumerate().for_each(|(y, row)| {
        let src = p.row(nn_source(y, scale));
        for (o, &c) in row.iter_mut().zip(&cols) {
            *o = src[c];
        }
    });
    Plane::from_vec(w, h, p.bit_depth(), data)
}

/// Separable Lanczos resampling without the final rounding.
pub fn lanczos_plane_f64(p: &Plane, scale: ScaleFactor, a: u32) -> Result<(usize, usize, Vec<f64>)> {
    let (w, h) = check_output(p, scale)?;
    let xs = lanczos_taps(p.width(), scale, a)?;
    let ys = lanczos_taps(p.height(), scale, a)?;

    // Horizontal pass: in_h rows of w samples.
    let mut horiz = vec![0f64; w * p.height()];
    horiz.par_chunks_mut(w.max(1)).enumerate().for_each(|(y, row)| {
        let src = p.row(y);
        for (o, set) in row.iter_mut().zip(&xs) {
            *o = set.accumulate(|j| src[j] as f64);
        }
    });

    // Vertical pass.
    let mut out = vec![0f64; w * h];
    out.par_chunks_mut(w.max(1)).enumerate().for_each(|(y, row)| {
        let set = &ys[y];
        for (x, o) in row.iter_mut().enumerate() {
            *o = set.accumulate(|j| horiz[j * w + x]);
        }
    });
    Ok((w, h, out))
}

fn quantize(values: &[f64], max: u16) -> Vec<u16> {
    values
        .iter()
        .map(|&v| v.round().clamp(0.0, max as f64) as u16)
        .collect()
}

/// Resamples a plane by `scale` with `filter`.
pub fn resample_plane(p: &Plane, scale: ScaleFactor, filter: ResampleFilter) -> Result<Plane> {
    if scale.is_identity() {
        return Ok(p.clone());
    }
    match filter {
        ResampleFilter::NearestNeighbor => nn_plane(p, scale),
        ResampleFilter::Lanczos { a } => {
            let (w, h, values) = lanczos_plane_f64(p, scale, a)?;
            Plane::from_vec(w, h, p.bit_depth(), quantize(&values, p.max_value()))
        }
    }
}

/// Shrinks a plane. `scale` must not exceed 1.
pub fn downsample_plane(p: &Plane, scale: ScaleFactor, filter: ResampleFilter) -> Result<Plane> {
    if scale.num > scale.den {
        return Err(Error::Config(format!("downsampling needs scale <= 1, got {scale}")));
    }
    resample_plane(p, scale, filter)
}

/// Integer-factor nearest-neighbour upscaling: every sample is copied into a
/// `k`×`k` block.
pub fn upsample_plane_nn(p: &Plane, scale: ScaleFactor) -> Result<Plane> {
    if scale.den != 1 {
        return Err(Error::Config(format!(
            "nearest-neighbour upsampling needs an integer factor, got {scale}"
        )));
    }
    nn_plane(p, scale)
}

/// Applies `filter` at `scale` to every plane of a frame.
pub fn resample_frame(frame: &Frame, scale: ScaleFactor, filter: ResampleFilter) -> Result<Frame> {
    if scale.is_identity() {
        return Ok(frame.clone());
    }
    let out_w = scale.apply(frame.width())?;
    let out_h = scale.apply(frame.height())?;
    if frame.cb.is_some() && (out_w % 2 != 0 || out_h % 2 != 0) {
        return Err(Error::Dimension(format!(
            "4:2:0 output would be {out_w}x{out_h}; luma dimensions must stay even"
        )));
    }
    frame.try_map_planes(|p| resample_plane(p, scale, filter))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Down,
    Up,
}

/// A down/up filter pair for one scale step, e.g. Lanczos 1/2 down and NN 2/1
/// up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resampler {
    /// Downscale factor (≤ 1); upscaling uses its inverse.
    pub scale: ScaleFactor,
    pub down: ResampleFilter,
    pub up: ResampleFilter,
}

impl Resampler {
    pub fn new(scale: ScaleFactor, down: ResampleFilter, up: ResampleFilter) -> Result<Self> {
        if scale.num > scale.den {
            return Err(Error::Config(format!(
                "resampler scale is the downscale factor and must be <= 1, got {scale}"
            )));
        }
        Ok(Resampler { scale, down, up })
    }

    pub fn apply(&self, frame: &Frame, direction: Direction) -> Result<Frame> {
        match direction {
            Direction::Down => resample_frame(frame, self.scale, self.down),
            Direction::Up => resample_frame(frame, self.scale.inverse(), self.up),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_io::{ChromaFormat, VideoSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_values() {
        assert_eq!(lanczos_weight(0.0, 3), 1.0);
        assert!(lanczos_weight(2.0, 3).abs() < 1e-15);
        assert!((lanczos_weight(0.5, 3) - 6.0 / (std::f64::consts::PI.powi(2))).abs() < 1e-12);
        assert!((lanczos_weight(0.5, 3) - 0.60793).abs() < 1e-5);
        assert_eq!(lanczos_weight(3.0, 3), 0.0);
        assert_eq!(lanczos_weight(-7.5, 3), 0.0);
        for x in [0.1, 0.7, 1.3, 2.9] {
            assert_eq!(lanczos_weight(x, 3), lanczos_weight(-x, 3));
        }
    }

    #[test]
    fn filter_and_scale_parsing() {
        assert_eq!("lanczos:3".parse::<ResampleFilter>().unwrap(), ResampleFilter::Lanczos { a: 3 });
        assert_eq!("nn".parse::<ResampleFilter>().unwrap(), ResampleFilter::NearestNeighbor);
        assert!("lanczos:0".parse::<ResampleFilter>().is_err());
        assert!("bicubic".parse::<ResampleFilter>().is_err());
        assert_eq!("2/4".parse::<ScaleFactor>().unwrap(), ScaleFactor::HALF);
        assert_eq!("2".parse::<ScaleFactor>().unwrap(), ScaleFactor::TWO);
        assert!("0/1".parse::<ScaleFactor>().is_err());
    }

    #[test]
    fn nn_upsample_duplicates() {
        let p = Plane::from_rows(8, &[&[1, 2], &[3, 4]]).unwrap();
        let up = upsample_plane_nn(&p, ScaleFactor::TWO).unwrap();
        let expected = Plane::from_rows(
            8,
            &[&[1, 1, 2, 2], &[1, 1, 2, 2], &[3, 3, 4, 4], &[3, 3, 4, 4]],
        )
        .unwrap();
        assert_eq!(up, expected);
        assert!(upsample_plane_nn(&p, ScaleFactor::HALF).is_err());
    }

    #[test]
    fn nn_decimation_inverts_duplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<u16> = (0..6 * 4).map(|_| rng.gen_range(0..1024)).collect();
        let p = Plane::from_vec(6, 4, 10, data).unwrap();
        let up = upsample_plane_nn(&p, ScaleFactor::TWO).unwrap();
        let down = downsample_plane(&up, ScaleFactor::HALF, ResampleFilter::NearestNeighbor).unwrap();
        assert_eq!(down, p);
    }

    #[test]
    fn odd_dimensions_rejected_for_half() {
        let p = Plane::filled(5, 4, 8, 10);
        assert!(matches!(
            downsample_plane(&p, ScaleFactor::HALF, ResampleFilter::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn constant_planes_are_preserved() {
        for &(w, h, v) in &[(16, 16, 77u16), (6, 10, 1023), (2, 2, 0), (30, 8, 512)] {
            let p = Plane::filled(w, h, 10, v);
            let d = downsample_plane(&p, ScaleFactor::HALF, ResampleFilter::default()).unwrap();
            assert_eq!(d.dims(), (w / 2, h / 2));
            assert!(d.data().iter().all(|&s| s == v));
        }
    }

    #[test]
    fn full_hd_to_half() {
        let spec = VideoSpec::new(1920, 1080, 10, ChromaFormat::C420, 1).unwrap();
        let f = Frame::constant(&spec, 600, 500);
        let r = Resampler::new(ScaleFactor::HALF, ResampleFilter::default(), ResampleFilter::NearestNeighbor)
            .unwrap();
        let d = r.apply(&f, Direction::Down).unwrap();
        assert_eq!(d.y.dims(), (960, 540));
        assert_eq!(d.cb.as_ref().unwrap().dims(), (480, 270));
        assert!(d.y.data().iter().all(|&v| v == 600));
        let u = r.apply(&d, Direction::Up).unwrap();
        assert_eq!(u, f);
    }

    #[test]
    fn monochrome_frames_only_touch_luma() {
        let p = Plane::filled(8, 8, 8, 3);
        let f = Frame::monochrome(p);
        let d = resample_frame(&f, ScaleFactor::HALF, ResampleFilter::default()).unwrap();
        assert!(d.cb.is_none() && d.cr.is_none());
        assert_eq!(d.y.dims(), (4, 4));
    }

    #[test]
    fn tap_sets_sum_to_one() {
        for n in [2usize, 4, 6, 16, 32, 50] {
            for a in 1..=4 {
                for scale in [ScaleFactor::HALF, ScaleFactor::TWO, ScaleFactor::new(1, 4).unwrap()] {
                    let Ok(sets) = lanczos_taps(n, scale, a) else { continue };
                    for s in &sets {
                        assert!((s.weight_sum() - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn half_scale_tap_layout() {
        // Stretched Lanczos-3 at scale 1/2 reaches 6 source samples each side
        // of the centre 16.5.
        let sets = lanczos_taps(32, ScaleFactor::HALF, 3).unwrap();
        let mid = &sets[8];
        let mut idx: Vec<usize> = mid.taps.iter().map(|t| t.index).collect();
        idx.sort();
        assert_eq!(idx, (11..=22).collect::<Vec<_>>());
        // symmetric about 16.5
        for t in &mid.taps {
            let mirror = mid.taps.iter().find(|u| u.index == 33 - t.index).unwrap();
            assert_eq!(t.weight, mirror.weight);
        }
    }

    #[test]
    fn mirrored_input_gives_mirrored_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let data: Vec<u16> = (0..24 * 12).map(|_| rng.gen_range(0..256)).collect();
            let p = Plane::from_vec(24, 12, 8, data).unwrap();
            let a = downsample_plane(&p, ScaleFactor::HALF, ResampleFilter::default()).unwrap();
            let b = downsample_plane(&p.mirrored_horizontally(), ScaleFactor::HALF, ResampleFilter::default())
                .unwrap();
            assert_eq!(a.mirrored_horizontally(), b);
            let (_, _, fa) = lanczos_plane_f64(&p, ScaleFactor::HALF, 3).unwrap();
            let (_, _, fb) = lanczos_plane_f64(&p.mirrored_horizontally(), ScaleFactor::HALF, 3).unwrap();
            for y in 0..6 {
                for x in 0..12 {
                    assert_eq!(fa[y * 12 + x].to_bits(), fb[y * 12 + 11 - x].to_bits());
                }
            }
        }
    }

    #[test]
    fn lanczos_upscale_keeps_constants() {
        let p = Plane::filled(5, 3, 8, 200);
        let u = resample_plane(&p, ScaleFactor::TWO, ResampleFilter::default()).unwrap();
        assert_eq!(u.dims(), (10, 6));
        assert!(u.data().iter().all(|&v| v == 200));
    }
}
