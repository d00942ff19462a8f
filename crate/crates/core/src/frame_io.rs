//! Raw planar video sequences (8/10-bit, 4:2:0 or monochrome) and their
//! in-memory representation.
//!
//! 8-bit samples take one byte each. 10-bit samples occupy the low bits of a
//! 16-bit little-endian word. Frames are stored back to back with no header,
//! so frame `k` always starts at byte `k * frame_size_bytes(spec)`.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChromaFormat {
    /// 4:2:0, chroma planes at half width and half height.
    C420,
    /// Luma only (used for depth maps).
    C400,
}

impl fmt::Display for ChromaFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChromaFormat::C420 => f.write_str("420"),
            ChromaFormat::C400 => f.write_str("400"),
        }
    }
}

impl FromStr for ChromaFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "420" | "c420" | "yuv420" | "yuv420p" => Ok(ChromaFormat::C420),
            "400" | "c400" | "gray" | "mono" => Ok(ChromaFormat::C400),
            other => Err(Error::InvalidSpec(format!("unknown chroma format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoSpec {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub chroma: ChromaFormat,
    pub frame_count: usize,
    #[serde(default)]
    pub label: String,
}

impl VideoSpec {
    pub fn new(
        width: usize,
        height: usize,
        bit_depth: u8,
        chroma: ChromaFormat,
        frame_count: usize,
    ) -> Result<Self> {
        let spec = VideoSpec {
            width,
            height,
            bit_depth,
            chroma,
            frame_count,
            label: String::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_frame_count(mut self, frame_count: usize) -> Self {
        self.frame_count = frame_count;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidSpec(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if self.bit_depth != 8 && self.bit_depth != 10 {
            return Err(Error::InvalidSpec(format!(
                "bit depth must be 8 or 10, got {}",
                self.bit_depth
            )));
        }
        if self.chroma == ChromaFormat::C420 && (!self.width.is_multiple_of(2) || !self.height.is_multiple_of(2)) {
            return Err(Error::InvalidSpec(format!(
                "4:2:0 requires even dimensions, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Bytes per stored sample: 1 for 8-bit, 2 for 10-bit.
    pub fn container_bytes(&self) -> usize {
        if self.bit_depth > 8 {
            2
        } else {
            1
        }
    }

    pub fn max_value(&self) -> u16 {
        max_sample(self.bit_depth)
    }

    pub fn chroma_dims(&self) -> Option<(usize, usize)> {
        match self.chroma {
            ChromaFormat::C420 => Some((self.width / 2, self.height / 2)),
            ChromaFormat::C400 => None,
        }
    }

    pub fn samples_per_frame(&self) -> usize {
        let luma = self.width * self.height;
        match self.chroma_dims() {
            Some((cw, ch)) => luma + 2 * cw * ch,
            None => luma,
        }
    }

    /// Parses the compact `WxH:bitdepth:chroma[:frames]` form, e.g.
    /// `1920x1080:10:420` or `64x64:8:400:8`. A missing frame count is 0 and
    /// is usually filled in from the file size.
    pub fn parse_compact(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSpec(format!("expected WxH:bitdepth:chroma[:frames], got `{s}`"));
        let mut parts = s.split(':');
        let dims = parts.next().ok_or_else(bad)?;
        let (w, h) = dims.split_once(['x', 'X']).ok_or_else(bad)?;
        let width = w.trim().parse().map_err(|_| bad())?;
        let height = h.trim().parse().map_err(|_| bad())?;
        let bit_depth = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let chroma = parts.next().ok_or_else(bad)?.trim().parse()?;
        let frame_count = match parts.next() {
            Some(n) => n.trim().parse().map_err(|_| bad())?,
            None => 0,
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        VideoSpec::new(width, height, bit_depth, chroma, frame_count)
    }
}

impl fmt::Display for VideoSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}:{}:{}:{}",
            self.width, self.height, self.bit_depth, self.chroma, self.frame_count
        )
    }
}

impl FromStr for VideoSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VideoSpec::parse_compact(s)
    }
}

pub fn max_sample(bit_depth: u8) -> u16 {
    ((1u32 << bit_depth) - 1) as u16
}

/// Size of one stored frame in bytes.
pub fn frame_size_bytes(spec: &VideoSpec) -> u64 {
    (spec.samples_per_frame() * spec.container_bytes()) as u64
}

/// A rectangular raster of unsigned samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    width: usize,
    height: usize,
    bit_depth: u8,
    data: Vec<u16>,
}

impl Plane {
    pub fn new(width: usize, height: usize, bit_depth: u8) -> Self {
        Plane::filled(width, height, bit_depth, 0)
    }

    pub fn filled(width: usize, height: usize, bit_depth: u8, value: u16) -> Self {
        debug_assert!(value <= max_sample(bit_depth));
        Plane {
            width,
            height,
            bit_depth,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, bit_depth: u8, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "plane {}x{} needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        let max = max_sample(bit_depth);
        if let Some(&v) = data.iter().find(|&&v| v > max) {
            return Err(Error::SampleRange {
                frame: 0,
                value: v,
                bit_depth,
            });
        }
        Ok(Plane {
            width,
            height,
            bit_depth,
            data,
        })
    }

    /// Builds a plane from rows; convenient in tests.
    pub fn from_rows(bit_depth: u8, rows: &[&[u16]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Plane::from_vec(width, height, bit_depth, rows.concat())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn max_value(&self) -> u16 {
        max_sample(self.bit_depth)
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    /// Mutable access to the samples. Callers keep values within the bit depth.
    pub fn data_mut(&mut self) -> &mut [u16] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<u16> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u16) {
        self.data[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[u16] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        self.data.chunks_exact(self.width.max(1))
    }

    /// Copies out a `w`×`h` window starting at (`x`, `y`).
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Plane> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::Dimension(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{} plane",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            data.extend_from_slice(&self.row(row)[x..x + w]);
        }
        Ok(Plane {
            width: w,
            height: h,
            bit_depth: self.bit_depth,
            data,
        })
    }

    pub fn mirrored_horizontally(&self) -> Plane {
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.width.max(1)) {
            row.reverse();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub y: Plane,
    pub cb: Option<Plane>,
    pub cr: Option<Plane>,
}

impl Frame {
    pub fn new(y: Plane, chroma: Option<(Plane, Plane)>) -> Result<Self> {
        if let Some((cb, cr)) = &chroma {
            let expected = (y.width() / 2, y.height() / 2);
            if !y.width().is_multiple_of(2) || !y.height().is_multiple_of(2) {
                return Err(Error::Dimension(format!(
                    "4:2:0 frame needs even luma dimensions, got {}x{}",
                    y.width(),
                    y.height()
                )));
            }
            if cb.dims() != expected || cr.dims() != expected {
                return Err(Error::Dimension(format!(
                    "chroma planes must be {}x{}, got {}x{} and {}x{}",
                    expected.0,
                    expected.1,
                    cb.width(),
                    cb.height(),
                    cr.width(),
                    cr.height()
                )));
            }
        }
        let (cb, cr) = match chroma {
            Some((cb, cr)) => (Some(cb), Some(cr)),
            None => (None, None),
        };
        Ok(Frame { y, cb, cr })
    }

    pub fn monochrome(y: Plane) -> Self {
        Frame { y, cb: None, cr: None }
    }

    /// A frame filled with one value in every plane.
    pub fn constant(spec: &VideoSpec, luma: u16, chroma: u16) -> Self {
        let y = Plane::filled(spec.width, spec.height, spec.bit_depth, luma);
        let (cb, cr) = match spec.chroma_dims() {
            Some((w, h)) => (
                Some(Plane::filled(w, h, spec.bit_depth, chroma)),
                Some(Plane::filled(w, h, spec.bit_depth, chroma)),
            ),
            None => (None, None),
        };
        Frame { y, cb, cr }
    }

    pub fn chroma_format(&self) -> ChromaFormat {
        if self.cb.is_some() {
            ChromaFormat::C420
        } else {
            ChromaFormat::C400
        }
    }

    pub fn width(&self) -> usize {
        self.y.width()
    }

    pub fn height(&self) -> usize {
        self.y.height()
    }

    pub fn bit_depth(&self) -> u8 {
        self.y.bit_depth()
    }

    pub fn planes(&self) -> impl Iterator<Item = &Plane> {
        std::iter::once(&self.y).chain(self.cb.iter()).chain(self.cr.iter())
    }

    pub fn planes_mut(&mut self) -> impl Iterator<Item = &mut Plane> {
        std::iter::once(&mut self.y)
            .chain(self.cb.iter_mut())
            .chain(self.cr.iter_mut())
    }

    /// Applies `f` to every plane, keeping the chroma layout.
    pub fn try_map_planes<F>(&self, mut f: F) -> Result<Frame>
    where
        F: FnMut(&Plane) -> Result<Plane>,
    {
        let y = f(&self.y)?;
        let chroma = match (&self.cb, &self.cr) {
            (Some(cb), Some(cr)) => Some((f(cb)?, f(cr)?)),
            _ => None,
        };
        Frame::new(y, chroma)
    }

    pub fn matches(&self, spec: &VideoSpec) -> bool {
        self.width() == spec.width
            && self.height() == spec.height
            && self.bit_depth() == spec.bit_depth
            && self.chroma_format() == spec.chroma
    }
}

/// What to do with 10-bit container words that have bits set above the
/// declared bit depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RangePolicy {
    /// Fail with [`Error::SampleRange`].
    #[default]
    Reject,
    /// Keep the low `bit_depth` bits and log a warning.
    Mask,
}

/// Sequential frame reader over a raw planar file.
pub struct SequenceReader {
    reader: BufReader<File>,
    path: PathBuf,
    spec: VideoSpec,
    policy: RangePolicy,
    next: usize,
    buf: Vec<u8>,
    warned: bool,
}

impl SequenceReader {
    pub fn open(path: impl AsRef<Path>, spec: &VideoSpec) -> Result<Self> {
        SequenceReader::open_with(path, spec, RangePolicy::default())
    }

    pub fn open_with(path: impl AsRef<Path>, spec: &VideoSpec, policy: RangePolicy) -> Result<Self> {
        let path = path.as_ref();
        spec.validate()?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let actual = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let expected = spec.frame_count as u64 * frame_size_bytes(spec);
        if actual < expected {
            return Err(Error::Truncated { expected, actual });
        }
        Ok(SequenceReader {
            reader: BufReader::new(file),
            path: path.to_path_buf(),
            spec: spec.clone(),
            policy,
            next: 0,
            buf: vec![0; frame_size_bytes(spec) as usize],
            warned: false,
        })
    }

    pub fn spec(&self) -> &VideoSpec {
        &self.spec
    }

    fn read_frame(&mut self) -> Result<Frame> {
        let index = self.next;
        self.reader
            .read_exact(&mut self.buf)
            .map_err(|e| Error::io(&self.path, e))?;
        let frame = decode_frame(&self.buf, &self.spec, index, self.policy, &mut self.warned)?;
        self.next += 1;
        Ok(frame)
    }
}

impl Iterator for SequenceReader {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.spec.frame_count {
            return None;
        }
        let res = self.read_frame();
        if res.is_err() {
            // Stop after the first error.
            self.next = self.spec.frame_count;
        }
        Some(res)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.spec.frame_count - self.next;
        (left, Some(left))
    }
}

/// Opens `path` and yields exactly `spec.frame_count` frames.
pub fn read_sequence(path: impl AsRef<Path>, spec: &VideoSpec) -> Result<SequenceReader> {
    SequenceReader::open(path, spec)
}

/// Reads the whole sequence into memory.
pub fn read_all(path: impl AsRef<Path>, spec: &VideoSpec) -> Result<Vec<Frame>> {
    read_sequence(path, spec)?.collect()
}

/// Reads a single frame by seeking to its byte offset.
pub fn read_frame_at(path: impl AsRef<Path>, spec: &VideoSpec, index: usize) -> Result<Frame> {
    let path = path.as_ref();
    spec.validate()?;
    if index >= spec.frame_count {
        return Err(Error::Dimension(format!(
            "frame index {index} out of range 0..{}",
            spec.frame_count
        )));
    }
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let actual = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let size = frame_size_bytes(spec);
    let expected = (index as u64 + 1) * size;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    file.seek(SeekFrom::Start(index as u64 * size))
        .map_err(|e| Error::io(path, e))?;
    let mut buf = vec![0; size as usize];
    file.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    decode_frame(&buf, spec, index, RangePolicy::Reject, &mut false)
}

fn decode_frame(
    buf: &[u8],
    spec: &VideoSpec,
    index: usize,
    policy: RangePolicy,
    warned: &mut bool,
) -> Result<Frame> {
    let max = spec.max_value();
    let bytes = spec.container_bytes();
    let mut offset = 0;
    let mut plane = |w: usize, h: usize| -> Result<Plane> {
        let n = w * h;
        let raw = &buf[offset..offset + n * bytes];
        offset += n * bytes;
        let mut data = Vec::with_capacity(n);
        if bytes == 1 {
            data.extend(raw.iter().map(|&b| b as u16));
        } else {
            for word in raw.chunks_exact(2) {
                let mut v = u16::from_le_bytes([word[0], word[1]]);
                if v > max {
                    match policy {
                        RangePolicy::Reject => {
                            return Err(Error::SampleRange {
                                frame: index,
                                value: v,
                                bit_depth: spec.bit_depth,
                            })
                        }
                        RangePolicy::Mask => {
                            if !*warned {
                                log::warn!(
                                    "frame {index}: sample {v:#06x} has bits above {} bits; masking",
                                    spec.bit_depth
                                );
                                *warned = true;
                            }
                            v &= max;
                        }
                    }
                }
                data.push(v);
            }
        }
        Ok(Plane {
            width: w,
            height: h,
            bit_depth: spec.bit_depth,
            data,
        })
    };
    let y = plane(spec.width, spec.height)?;
    let chroma = match spec.chroma_dims() {
        Some((w, h)) => Some((plane(w, h)?, plane(w, h)?)),
        None => None,
    };
    Frame::new(y, chroma)
}

fn encode_plane(p: &Plane, bytes: usize, out: &mut Vec<u8>) {
    if bytes == 1 {
        out.extend(p.data().iter().map(|&v| v as u8));
    } else {
        for &v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Writes frames in raw planar layout and returns the number of bytes written.
pub fn write_sequence<'a, I>(frames: I, spec: &VideoSpec, path: impl AsRef<Path>) -> Result<u64>
where
    I: IntoIterator<Item = &'a Frame>,
{
    let path = path.as_ref();
    spec.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    let mut buf = Vec::with_capacity(frame_size_bytes(spec) as usize);
    let mut written = 0u64;
    let max = spec.max_value();
    for (index, frame) in frames.into_iter().enumerate() {
        if !frame.matches(spec) {
            return Err(Error::Dimension(format!(
                "frame {index} is {}x{} {}-bit {}, expected {}x{} {}-bit {}",
                frame.width(),
                frame.height(),
                frame.bit_depth(),
                frame.chroma_format(),
                spec.width,
                spec.height,
                spec.bit_depth,
                spec.chroma
            )));
        }
        if let Some(&v) = frame.planes().flat_map(|p| p.data()).find(|&&v| v > max) {
            return Err(Error::SampleRange {
                frame: index,
                value: v,
                bit_depth: spec.bit_depth,
            });
        }
        buf.clear();
        for p in frame.planes() {
            encode_plane(p, spec.container_bytes(), &mut buf);
        }
        writer.write_all(&buf).map_err(|e| Error::io(path, e))?;
        written += buf.len() as u64;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(written)
}

/// Byte accounting for a raw file under a given spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileAccounting {
    pub file_bytes: u64,
    pub frame_bytes: u64,
    pub whole_frames: u64,
    pub trailing_bytes: u64,
}

pub fn account_file(path: impl AsRef<Path>, spec: &VideoSpec) -> Result<FileAccounting> {
    let path = path.as_ref();
    spec.validate()?;
    let file_bytes = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    let frame_bytes = frame_size_bytes(spec);
    Ok(FileAccounting {
        file_bytes,
        frame_bytes,
        whole_frames: file_bytes / frame_bytes,
        trailing_bytes: file_bytes % frame_bytes,
    })
}

/// Fills in `frame_count` from the file size when the spec leaves it at 0.
pub fn resolve_frame_count(path: impl AsRef<Path>, spec: &VideoSpec) -> Result<VideoSpec> {
    if spec.frame_count > 0 {
        return Ok(spec.clone());
    }
    let acc = account_file(path, spec)?;
    if acc.trailing_bytes != 0 {
        log::warn!(
            "{} trailing bytes after {} whole frames",
            acc.trailing_bytes,
            acc.whole_frames
        );
    }
    Ok(spec.clone().with_frame_count(acc.whole_frames as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(w: usize, h: usize, bd: u8, c: ChromaFormat, n: usize) -> VideoSpec {
        VideoSpec::new(w, h, bd, c, n).unwrap()
    }

    #[test]
    fn frame_sizes() {
        assert_eq!(frame_size_bytes(&spec(1920, 1080, 10, ChromaFormat::C420, 1)), 6_220_800);
        assert_eq!(frame_size_bytes(&spec(2, 2, 8, ChromaFormat::C400, 1)), 4);
        assert_eq!(frame_size_bytes(&spec(4096, 2048, 8, ChromaFormat::C420, 1)), 12_582_912);
        assert_eq!(frame_size_bytes(&spec(4, 4, 8, ChromaFormat::C420, 1)), 24);
    }

    #[test]
    fn reads_8bit_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.yuv");
        std::fs::write(&path, [0u8, 1, 2, 3]).unwrap();
        let frames = read_all(&path, &spec(2, 2, 8, ChromaFormat::C400, 1)).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].y.row(0), &[0, 1]);
        assert_eq!(frames[0].y.row(1), &[2, 3]);
    }

    #[test]
    fn reads_10bit_max() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.yuv");
        let bytes: Vec<u8> = std::iter::repeat_n(1023u16.to_le_bytes(), 4).flatten().collect();
        std::fs::write(&path, bytes).unwrap();
        let frames = read_all(&path, &spec(2, 2, 10, ChromaFormat::C400, 1)).unwrap();
        assert!(frames[0].y.data().iter().all(|&v| v == 1023));
    }

    #[test]
    fn two_420_frames_consume_48_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.yuv");
        let bytes: Vec<u8> = (0..48u8).collect();
        std::fs::write(&path, &bytes).unwrap();
        let frames = read_all(&path, &spec(4, 4, 8, ChromaFormat::C420, 2)).unwrap();
        assert_eq!(frames.len(), 2);
        // second frame starts at byte 24
        assert_eq!(frames[1].y.get(0, 0), 24);
        assert_eq!(frames[1].cb.as_ref().unwrap().get(0, 0), 40);
        assert_eq!(frames[1].cr.as_ref().unwrap().get(0, 0), 44);
    }

    #[test]
    fn truncated_file_names_both_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.yuv");
        std::fs::write(&path, [0u8; 47]).unwrap();
        let err = read_sequence(&path, &spec(4, 4, 8, ChromaFormat::C420, 2)).err().unwrap();
        match err {
            Error::Truncated { expected, actual } => {
                assert_eq!((expected, actual), (48, 47));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn out_of_range_10bit_sample() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.yuv");
        let mut bytes = Vec::new();
        for v in [1u16, 2, 3, 4, 5, 6, 0x0400 | 7, 8] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();
        let s = spec(2, 2, 10, ChromaFormat::C400, 2);
        let results: Vec<_> = read_sequence(&path, &s).unwrap().collect();
        assert!(results[0].is_ok());
        assert!(matches!(results[1], Err(Error::SampleRange { frame: 1, value: 0x0407, .. })));

        let masked: Vec<_> = SequenceReader::open_with(&path, &s, RangePolicy::Mask)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(masked[1].y.get(0, 1), 7);
    }

    #[test]
    fn write_sizes_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(4, 4, 10, ChromaFormat::C420, 1);
        let f = Frame::constant(&s, 1000, 512);
        assert_eq!(write_sequence([&f], &s, dir.path().join("a.yuv")).unwrap(), 48);
        let empty: Vec<Frame> = Vec::new();
        let p = dir.path().join("b.yuv");
        assert_eq!(write_sequence(&empty, &s, &p).unwrap(), 0);
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 0);
    }

    #[test]
    fn write_rejects_mismatched_frame() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(4, 4, 8, ChromaFormat::C420, 2);
        let good = Frame::constant(&s, 1, 2);
        let bad = Frame::constant(&spec(8, 4, 8, ChromaFormat::C420, 1), 1, 2);
        let err = write_sequence([&good, &bad], &s, dir.path().join("a.yuv")).unwrap_err();
        assert!(err.to_string().contains("frame 1"), "{err}");
    }

    #[test]
    fn compact_spec_parsing() {
        let s = VideoSpec::parse_compact("1920x1080:10:420").unwrap();
        assert_eq!((s.width, s.height, s.bit_depth, s.chroma, s.frame_count), (1920, 1080, 10, ChromaFormat::C420, 0));
        let s: VideoSpec = "64x64:8:400:8".parse().unwrap();
        assert_eq!(s.frame_count, 8);
        assert!(VideoSpec::parse_compact("63x64:8:420").is_err());
        assert!(VideoSpec::parse_compact("64x64:12:420").is_err());
        assert!(VideoSpec::parse_compact("64x64").is_err());
    }

    #[test]
    fn random_access_matches_sequential() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(4, 2, 10, ChromaFormat::C420, 3);
        let frames: Vec<Frame> = (0..3).map(|i| Frame::constant(&s, 100 * i, 7 * i)).collect();
        let p = dir.path().join("a.yuv");
        write_sequence(&frames, &s, &p).unwrap();
        assert_eq!(read_frame_at(&p, &s, 2).unwrap(), frames[2]);
    }

    fn arb_frames() -> impl Strategy<Value = (VideoSpec, Vec<Frame>)> {
        (1usize..5, 1usize..5, prop::bool::ANY, prop::bool::ANY, 0usize..3).prop_flat_map(
            |(hw, hh, ten, color, n)| {
                let bd = if ten { 10 } else { 8 };
                let chroma = if color { ChromaFormat::C420 } else { ChromaFormat::C400 };
                let s = VideoSpec::new(hw * 2, hh * 2, bd, chroma, n).unwrap();
                let count = s.samples_per_frame() * n;
                let max = s.max_value();
                (Just(s), prop::collection::vec(0..=max, count))
            },
        )
        .prop_map(|(s, samples)| {
            let per = s.samples_per_frame();
            let frames = samples
                .chunks(per.max(1))
                .filter(|c| c.len() == per)
                .map(|c| {
                    let luma = s.width * s.height;
                    let y = Plane::from_vec(s.width, s.height, s.bit_depth, c[..luma].to_vec()).unwrap();
                    let chroma = s.chroma_dims().map(|(w, h)| {
                        let n = w * h;
                        (
                            Plane::from_vec(w, h, s.bit_depth, c[luma..luma + n].to_vec()).unwrap(),
                            Plane::from_vec(w, h, s.bit_depth, c[luma + n..].to_vec()).unwrap(),
                        )
                    });
                    Frame::new(y, chroma).unwrap()
                })
                .collect();
            (s, frames)
        })
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity((s, frames) in arb_frames()) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("x.yuv");
            let n = write_sequence(&frames, &s, &p).unwrap();
            prop_assert_eq!(n, frames.len() as u64 * frame_size_bytes(&s));
            let back = read_all(&p, &s).unwrap();
            prop_assert_eq!(back, frames);
        }
    }
}
