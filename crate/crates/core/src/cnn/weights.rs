//! `RQPW1` weight files.
//!
//! Layout (all integers u32 little-endian, all reals f32 little-endian):
//!
//! ```text
//! "RQPW1"                      5-byte magic
//! layer_count
//! repeated layer_count times:
//!     id_len, id (UTF-8)
//!     out_ch, in_ch, kh, kw
//!     out_ch*in_ch*kh*kw weights, (out, in, ky, kx) order
//!     out_ch biases
//! ```
//!
//! Nothing may follow the last layer.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;

use super::network::{LayerOp, NetworkSpec};
use crate::error::{Error, Result};

pub const WEIGHT_MAGIC: &[u8; 5] = b"RQPW1";

#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kh: usize,
    pub kw: usize,
    /// `(out, in, ky, kx)` row-major.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvWeights {
    pub fn new(out_ch: usize, in_ch: usize, kh: usize, kw: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if weights.len() != out_ch * in_ch * kh * kw {
            return Err(Error::Weights(format!(
                "shape ({out_ch}, {in_ch}, {kh}, {kw}) needs {} weights, got {}",
                out_ch * in_ch * kh * kw,
                weights.len()
            )));
        }
        if bias.len() != out_ch {
            return Err(Error::Weights(format!(
                "{out_ch} output channels need {out_ch} biases, got {}",
                bias.len()
            )));
        }
        Ok(ConvWeights {
            out_ch,
            in_ch,
            kh,
            kw,
            weights,
            bias,
        })
    }

    pub fn zeros(out_ch: usize, in_ch: usize, kh: usize, kw: usize) -> Self {
        ConvWeights {
            out_ch,
            in_ch,
            kh,
            kw,
            weights: vec![0.0; out_ch * in_ch * kh * kw],
            bias: vec![0.0; out_ch],
        }
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f32 {
        self.weights[((o * self.in_ch + i) * self.kh + ky) * self.kw + kx]
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.out_ch, self.in_ch, self.kh, self.kw)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightFile {
    layers: BTreeMap<String, ConvWeights>,
}

impl WeightFile {
    pub fn new() -> Self {
        WeightFile::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, w: ConvWeights) {
        self.layers.insert(id.into(), w);
    }

    pub fn get(&self, id: &str) -> Option<&ConvWeights> {
        self.layers.get(id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut ConvWeights> {
        self.layers.get_mut(id)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ConvWeights)> {
        self.layers.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// All-zero parameters for every convolution of `spec`.
    pub fn zeros_for(spec: &NetworkSpec) -> Self {
        let mut wf = WeightFile::new();
        for l in &spec.layers {
            if let LayerOp::Conv2d { in_ch, out_ch, kernel, .. } = l.op {
                wf.insert(l.id.clone(), ConvWeights::zeros(out_ch, in_ch, kernel, kernel));
            }
        }
        wf
    }

    /// Uniform random parameters in `±scale / sqrt(fan_in)`, seeded.
    pub fn random_for(spec: &NetworkSpec, seed: u64, scale: f32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut wf = WeightFile::new();
        for l in &spec.layers {
            if let LayerOp::Conv2d { in_ch, out_ch, kernel, .. } = l.op {
                let bound = scale / ((in_ch * kernel * kernel) as f32).sqrt();
                let n = out_ch * in_ch * kernel * kernel;
                let weights = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
                let bias = (0..out_ch).map(|_| rng.gen_range(-bound..=bound) * 0.1).collect();
                wf.insert(l.id.clone(), ConvWeights { out_ch, in_ch, kh: kernel, kw: kernel, weights, bias });
            }
        }
        wf
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for (id, w) in &self.layers {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for d in [w.out_ch, w.in_ch, w.kh, w.kw] {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in w.weights.iter().chain(&w.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(5)? != WEIGHT_MAGIC {
            return Err(Error::Weights("missing RQPW1 magic".into()));
        }
        let count = cur.u32()? as usize;
        let mut wf = WeightFile::new();
        for _ in 0..count {
            let id_len = cur.u32()? as usize;
            let id = std::str::from_utf8(cur.take(id_len)?)
                .map_err(|_| Error::Weights("layer id is not UTF-8".into()))?
                .to_string();
            let out_ch = cur.u32()? as usize;
            let in_ch = cur.u32()? as usize;
            let kh = cur.u32()? as usize;
            let kw = cur.u32()? as usize;
            let n = out_ch
                .checked_mul(in_ch)
                .and_then(|v| v.checked_mul(kh))
                .and_then(|v| v.checked_mul(kw))
                .ok_or_else(|| Error::Weights(format!("layer `{id}`: shape overflows")))?;
            let weights = cur.f32s(n)?;
            let bias = cur.f32s(out_ch)?;
            if wf.layers.contains_key(&id) {
                return Err(Error::Weights(format!("duplicate layer `{id}`")));
            }
            wf.insert(id, ConvWeights { out_ch, in_ch, kh, kw, weights, bias });
        }
        if cur.pos != bytes.len() {
            return Err(Error::Weights(format!(
                "{} trailing bytes after last layer",
                bytes.len() - cur.pos
            )));
        }
        Ok(wf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        WeightFile::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Weights(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::Weights("length overflows".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightFile {
        let mut wf = WeightFile::new();
        wf.insert("head", ConvWeights::new(2, 1, 3, 3, (0..18).map(|v| v as f32 * 0.5).collect(), vec![0.1, -0.2]).unwrap());
        wf.insert("tail", ConvWeights::new(1, 2, 1, 1, vec![1.0, -1.0], vec![0.0]).unwrap());
        wf
    }

    #[test]
    fn byte_layout() {
        let mut wf = WeightFile::new();
        wf.insert("c", ConvWeights::new(1, 1, 1, 1, vec![1.5], vec![-2.0]).unwrap());
        let b = wf.to_bytes();
        let mut expected = b"RQPW1".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.push(b'c');
        for _ in 0..4 {
            expected.extend_from_slice(&1u32.to_le_bytes());
        }
        expected.extend_from_slice(&1.5f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(b, expected);
    }

    #[test]
    fn round_trip() {
        let wf = sample();
        assert_eq!(WeightFile::from_bytes(&wf.to_bytes()).unwrap(), wf);
    }

    #[test]
    fn rejects_bad_input() {
        let wf = sample();
        let mut b = wf.to_bytes();
        b.push(0);
        assert!(WeightFile::from_bytes(&b).unwrap_err().to_string().contains("trailing"));
        let b = wf.to_bytes();
        assert!(WeightFile::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(WeightFile::from_bytes(b"RQPW2\0\0\0\0").is_err());
    }
}
