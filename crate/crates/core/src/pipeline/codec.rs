//! Codec adapters.
//!
//! The mock codec is a hermetic stand-in for a real encoder/decoder pair: an
//! 8×8 orthonormal DCT-II on mid-grey-centred samples, uniform scalar
//! quantisation with step `2^((qp - 4) / 6)`, and a bit count taken from
//! signed exp-Golomb code lengths of the quantised coefficients. External
//! codecs are driven through shell command templates.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{Frame, Plane};
use crate::metrics::{expand_template, run_shell, shell_quote};

pub const MOCK_BLOCK: usize = 8;
pub const MOCK_QP_MAX: i32 = 63;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodecAdapter {
    #[default]
    Mock,
    /// Placeholders: `{in}`, `{out}`, `{qp}`, `{w}`, `{h}`, `{bitdepth}`,
    /// `{frames}`, `{fps}`, `{work}`. For `encode`, `{in}` is the raw input
    /// and `{out}` the first bitstream; for `decode`, `{in}` is the first
    /// bitstream and `{out}` the reconstructed raw file.
    External {
        encode: String,
        decode: String,
        /// Bitstream files whose sizes are summed for the bitrate.
        #[serde(default = "default_bitstreams")]
        bitstreams: Vec<String>,
    },
}

fn default_bitstreams() -> Vec<String> {
    vec!["{work}/stream.bin".into()]
}

const ENCODE_PLACEHOLDERS: [&str; 5] = ["{in}", "{out}", "{qp}", "{w}", "{h}"];
const DECODE_PLACEHOLDERS: [&str; 2] = ["{in}", "{out}"];

impl CodecAdapter {
    pub fn validate(&self) -> Result<()> {
        if let CodecAdapter::External {
            encode,
            decode,
            bitstreams,
        } = self
        {
            for p in ENCODE_PLACEHOLDERS {
                if !encode.contains(p) {
                    return Err(Error::Config(format!("encode template lacks {p}")));
                }
            }
            for p in DECODE_PLACEHOLDERS {
                if !decode.contains(p) {
                    return Err(Error::Config(format!("decode template lacks {p}")));
                }
            }
            if bitstreams.is_empty() {
                return Err(Error::Config("external codec lists no bitstreams".into()));
            }
        }
        Ok(())
    }
}

/// Step size for a QP: doubles every 6 QPs, 1.0 at QP 4.
pub fn quant_step(qp: i32) -> f64 {
    2f64.powf((qp - 4) as f64 / 6.0)
}

/// Orthonormal DCT-II basis, `basis[k][n]`.
fn dct_basis() -> &'static [[f64; MOCK_BLOCK]; MOCK_BLOCK] {
    static BASIS: OnceLock<[[f64; MOCK_BLOCK]; MOCK_BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let n = MOCK_BLOCK as f64;
        let mut b = [[0.0; MOCK_BLOCK]; MOCK_BLOCK];
        for (k, row) in b.iter_mut().enumerate() {
            let alpha = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for (i, v) in row.iter_mut().enumerate() {
                *v = alpha * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n)).cos();
            }
        }
        b
    })
}

type Block = [[f64; MOCK_BLOCK]; MOCK_BLOCK];

fn forward_dct(x: &Block) -> Block {
    let c = dct_basis();
    let mut tmp = [[0.0; MOCK_BLOCK]; MOCK_BLOCK];
    for (r, row) in x.iter().enumerate() {
        for k in 0..MOCK_BLOCK {
            tmp[r][k] = (0..MOCK_BLOCK).map(|n| c[k][n] * row[n]).sum();
        }
    }
    let mut out = [[0.0; MOCK_BLOCK]; MOCK_BLOCK];
    for k in 0..MOCK_BLOCK {
        for col in 0..MOCK_BLOCK {
            out[k][col] = (0..MOCK_BLOCK).map(|n| c[k][n] * tmp[n][col]).sum();
        }
    }
    out
}

fn inverse_dct(y: &Block) -> Block {
    let c = dct_basis();
    let mut tmp = [[0.0; MOCK_BLOCK]; MOCK_BLOCK];
    for n in 0..MOCK_BLOCK {
        for col in 0..MOCK_BLOCK {
            tmp[n][col] = (0..MOCK_BLOCK).map(|k| c[k][n] * y[k][col]).sum();
        }
    }
    let mut out = [[0.0; MOCK_BLOCK]; MOCK_BLOCK];
    for (r, row) in tmp.iter().enumerate() {
        for n in 0..MOCK_BLOCK {
            out[r][n] = (0..MOCK_BLOCK).map(|k| c[k][n] * row[k]).sum();
        }
    }
    out
}

/// Signed exp-Golomb length: 1 bit for zero, otherwise
/// `2·floor(log2(2|v|)) + 1` plus a sign bit.
pub fn coefficient_bits(v: i32) -> u64 {
    if v == 0 {
        return 1;
    }
    let mag = 2 * v.unsigned_abs() as u64;
    let floor_log2 = 63 - mag.leading_zeros() as u64;
    2 * floor_log2 + 1 + 1
}

/// Quantised coefficients of one plane, block by block.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedPlane {
    width: usize,
    height: usize,
    bit_depth: u8,
    blocks_x: usize,
    blocks_y: usize,
    coeffs: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockBitstream {
    pub qp: i32,
    frames: Vec<Vec<CodedPlane>>,
    pub total_bits: u64,
}

impl MockBitstream {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

fn encode_plane(p: &Plane, step: f64) -> (CodedPlane, u64) {
    let (w, h) = p.dims();
    let bx = w.div_ceil(MOCK_BLOCK);
    let by = h.div_ceil(MOCK_BLOCK);
    let mid = (1u32 << (p.bit_depth() - 1)) as f64;
    let mut coeffs = Vec::with_capacity(bx * by * MOCK_BLOCK * MOCK_BLOCK);
    let mut bits = 0u64;
    for byi in 0..by {
        for bxi in 0..bx {
            let mut block = [[0.0; MOCK_BLOCK]; MOCK_BLOCK];
            for (r, row) in block.iter_mut().enumerate() {
                // Edge replication for partial blocks.
                let y = (byi * MOCK_BLOCK + r).min(h - 1);
                for (c, v) in row.iter_mut().enumerate() {
                    let x = (bxi * MOCK_BLOCK + c).min(w - 1);
                    *v = p.get(x, y) as f64 - mid;
                }
            }
            for row in forward_dct(&block) {
                for c in row {
                    let q = (c / step).round() as i32;
                    bits += coefficient_bits(q);
                    coeffs.push(q);
                }
            }
        }
    }
    (
        CodedPlane {
            width: w,
            height: h,
            bit_depth: p.bit_depth(),
            blocks_x: bx,
            blocks_y: by,
            coeffs,
        },
        bits,
    )
}

fn decode_plane(cp: &CodedPlane, step: f64) -> Result<Plane> {
    let mid = (1u32 << (cp.bit_depth - 1)) as f64;
    let max = ((1u32 << cp.bit_depth) - 1) as f64;
    let mut out = Plane::new(cp.width, cp.height, cp.bit_depth);
    let per_block = MOCK_BLOCK * MOCK_BLOCK;
    for byi in 0..cp.blocks_y {
        for bxi in 0..cp.blocks_x {
            let base = (byi * cp.blocks_x + bxi) * per_block;
            let mut block = [[0.0; MOCK_BLOCK]; MOCK_BLOCK];
            for (r, row) in block.iter_mut().enumerate() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = cp.coeffs[base + r * MOCK_BLOCK + c] as f64 * step;
                }
            }
            let rec = inverse_dct(&block);
            for (r, row) in rec.iter().enumerate() {
                let y = byi * MOCK_BLOCK + r;
                if y >= cp.height {
                    break;
                }
                for (c, v) in row.iter().enumerate() {
                    let x = bxi * MOCK_BLOCK + c;
                    if x >= cp.width {
                        break;
                    }
                    out.set(x, y, (v + mid).round().clamp(0.0, max) as u16);
                }
            }
        }
    }
    Ok(out)
}

pub fn mock_encode(frames: &[Frame], qp: i32) -> Result<MockBitstream> {
    if !(0..=MOCK_QP_MAX).contains(&qp) {
        return Err(Error::Config(format!("mock codec QP {qp} outside 0..={MOCK_QP_MAX}")));
    }
    let step = quant_step(qp);
    let coded: Vec<(Vec<CodedPlane>, u64)> = frames
        .par_iter()
        .map(|f| {
            let mut bits = 0;
            let planes = f
                .planes()
                .map(|p| {
                    let (cp, b) = encode_plane(p, step);
                    bits += b;
                    cp
                })
                .collect();
            (planes, bits)
        })
        .collect();
    let total_bits = coded.iter().map(|(_, b)| b).sum();
    Ok(MockBitstream {
        qp,
        frames: coded.into_iter().map(|(p, _)| p).collect(),
        total_bits,
    })
}

pub fn mock_decode(bs: &MockBitstream) -> Result<Vec<Frame>> {
    let step = quant_step(bs.qp);
    bs.frames
        .par_iter()
        .map(|planes| {
            let mut decoded = planes.iter().map(|cp| decode_plane(cp, step));
            let y = decoded.next().ok_or_else(|| Error::Dimension("frame without planes".into()))??;
            let chroma = match (decoded.next(), decoded.next()) {
                (Some(cb), Some(cr)) => Some((cb?, cr?)),
                _ => None,
            };
            Frame::new(y, chroma)
        })
        .collect()
}

/// Encodes and decodes `frames` at `qp`, returning the reconstruction and the
/// total bit count.
pub fn mock_encode_decode(frames: &[Frame], qp: i32) -> Result<(Vec<Frame>, u64)> {
    let bs = mock_encode(frames, qp)?;
    Ok((mock_decode(&bs)?, bs.total_bits))
}

/// Values substituted into external codec templates.
pub(crate) struct ExternalJob<'a> {
    pub work: &'a Path,
    pub input: &'a Path,
    pub decoded: &'a Path,
    pub qp: i32,
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub frames: usize,
    pub fps: f64,
}

pub(crate) struct ExternalOutcome {
    pub bitstream_bytes: u64,
    pub bitstreams: Vec<PathBuf>,
    pub encode_seconds: f64,
    pub decode_seconds: f64,
}

pub(crate) fn run_external(encode: &str, decode: &str, bitstreams: &[String], job: &ExternalJob) -> Result<ExternalOutcome> {
    let mut vars: BTreeMap<&str, String> = BTreeMap::new();
    vars.insert("qp", job.qp.to_string());
    vars.insert("w", job.width.to_string());
    vars.insert("h", job.height.to_string());
    vars.insert("bitdepth", job.bit_depth.to_string());
    vars.insert("frames", job.frames.to_string());
    vars.insert("fps", job.fps.to_string());
    vars.insert("work", job.work.to_string_lossy().into_owned());
    let streams: Vec<PathBuf> = bitstreams
        .iter()
        .map(|t| PathBuf::from(expand_template(t, &vars)))
        .collect();
    vars.insert("work", shell_quote(&job.work.to_string_lossy()));

    let mut enc_vars = vars.clone();
    enc_vars.insert("in", shell_quote(&job.input.to_string_lossy()));
    enc_vars.insert("out", shell_quote(&streams[0].to_string_lossy()));
    let t = std::time::Instant::now();
    run_shell(&expand_template(encode, &enc_vars))?;
    let encode_seconds = t.elapsed().as_secs_f64();

    let mut bytes = 0;
    for s in &streams {
        bytes += std::fs::metadata(s)
            .map_err(|e| Error::Tool {
                command: encode.to_string(),
                status: "missing bitstream".into(),
                output: format!("{}: {e}", s.display()),
            })?
            .len();
    }

    let mut dec_vars = vars;
    dec_vars.insert("in", shell_quote(&streams[0].to_string_lossy()));
    dec_vars.insert("out", shell_quote(&job.decoded.to_string_lossy()));
    let t = std::time::Instant::now();
    run_shell(&expand_template(decode, &dec_vars))?;
    let decode_seconds = t.elapsed().as_secs_f64();

    Ok(ExternalOutcome {
        bitstream_bytes: bytes,
        bitstreams: streams,
        encode_seconds,
        decode_seconds,
    })
}
