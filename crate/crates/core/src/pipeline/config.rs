//! Experiment configuration (TOML).
//!
//! ```toml
//! [experiment]
//! work_dir = "work"
//! anchor = "Anchor"
//!
//! [qps]
//! pairs = [[22, 4], [27, 7], [32, 11], [37, 15]]
//!
//! [sequence.A]
//! path = "classroom_v0.yuv"
//! spec = "4096x2048:10:420"
//! frame_rate = 30
//! preset = "A"
//!
//! [method.Anchor]
//! scale = "1/1"
//!
//! [method.Rescaled]
//! scale = "1/2"
//! down_filter = "lanczos:3"
//! up_filter = "nn"
//! qp_offset = -6
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::codec::{CodecAdapter, MOCK_QP_MAX};
use super::presets::SequencePreset;
use crate::bd::Interpolation;
use crate::cnn::{build_mfrnet_style, MfrnetConfig, Network, NetworkSpec, WeightFile};
use crate::error::{Error, Result};
use crate::frame_io::{resolve_frame_count, VideoSpec};
use crate::metrics::{Aggregation, ExternalMetric, DEFAULT_PSNR_CAP_DB};
use crate::resample::{ResampleFilter, ScaleFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QpPair {
    pub qp_texture: i32,
    pub qp_depth: i32,
}

impl QpPair {
    pub fn new(qp_texture: i32, qp_depth: i32) -> Self {
        QpPair {
            qp_texture,
            qp_depth,
        }
    }
}

impl From<[i32; 2]> for QpPair {
    fn from(p: [i32; 2]) -> Self {
        QpPair::new(p[0], p[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentKind {
    #[default]
    Texture,
    Depth,
}

fn default_fps() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub path: PathBuf,
    /// Compact `WxH:bitdepth:chroma[:frames]` form.
    pub spec: String,
    #[serde(default)]
    pub frames: Option<usize>,
    #[serde(default = "default_fps")]
    pub frame_rate: f64,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub content: ContentKind,
}

/// Where the post-processing network description comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum NetSource<'a> {
    Path(&'a Path),
    Builder(&'a MfrnetConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostprocConfig {
    /// Network description file (JSON); exclusive with `mfrnet`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<PathBuf>,
    /// Build a dense-block network in place of a description file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mfrnet: Option<MfrnetConfig>,
    /// Weight files keyed by base texture QP (one model per QP group).
    pub weights: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub tile: Option<usize>,
    #[serde(default)]
    pub overlap: Option<usize>,
    /// Also post-process chroma planes (luma only by default).
    #[serde(default)]
    pub chroma: bool,
}

impl PostprocConfig {
    pub fn source(&self, label: &str) -> Result<NetSource<'_>> {
        match (&self.net, &self.mfrnet) {
            (Some(p), None) => Ok(NetSource::Path(p)),
            (None, Some(m)) => Ok(NetSource::Builder(m)),
            _ => Err(Error::Config(format!(
                "method `{label}`: postproc needs exactly one of `net` or `mfrnet`"
            ))),
        }
    }
}

fn default_scale() -> ScaleFactor {
    ScaleFactor::ONE
}

fn default_up() -> ResampleFilter {
    ResampleFilter::NearestNeighbor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    /// Downscale factor applied before encoding; 1/1 disables resampling.
    #[serde(default = "default_scale")]
    pub scale: ScaleFactor,
    #[serde(default)]
    pub down_filter: ResampleFilter,
    #[serde(default = "default_up")]
    pub up_filter: ResampleFilter,
    /// Down filter for depth sequences, when it should differ from texture.
    #[serde(default)]
    pub depth_down_filter: Option<ResampleFilter>,
    /// Added to the texture QP of every pair.
    #[serde(default)]
    pub qp_offset: i32,
    #[serde(default)]
    pub codec: CodecAdapter,
    #[serde(default)]
    pub postproc: Option<PostprocConfig>,
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            scale: ScaleFactor::ONE,
            down_filter: ResampleFilter::default(),
            up_filter: ResampleFilter::NearestNeighbor,
            depth_down_filter: None,
            qp_offset: 0,
            codec: CodecAdapter::default(),
            postproc: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "yes")]
    pub psnr_y: bool,
    #[serde(default)]
    pub external: Vec<ExternalMetric>,
}

fn yes() -> bool {
    true
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            psnr_y: true,
            external: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpSchedule {
    pub pairs: Vec<[i32; 2]>,
}

impl Default for QpSchedule {
    fn default() -> Self {
        QpSchedule {
            pairs: vec![[22, 4], [27, 7], [32, 11], [37, 15]],
        }
    }
}

fn default_work() -> PathBuf {
    PathBuf::from("work")
}

fn default_anchor() -> String {
    "Anchor".into()
}

fn default_cap() -> f64 {
    DEFAULT_PSNR_CAP_DB
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_work")]
    pub work_dir: PathBuf,
    #[serde(default = "default_anchor")]
    pub anchor: String,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default = "default_cap")]
    pub psnr_cap_db: f64,
    #[serde(default)]
    pub bd_interpolation: Interpolation,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            name: String::new(),
            work_dir: default_work(),
            anchor: default_anchor(),
            workers: None,
            aggregation: Aggregation::default(),
            psnr_cap_db: DEFAULT_PSNR_CAP_DB,
            bd_interpolation: Interpolation::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: ExperimentSettings,
    #[serde(default)]
    pub qps: QpSchedule,
    #[serde(default)]
    pub sequence: BTreeMap<String, SequenceConfig>,
    #[serde(default)]
    pub method: BTreeMap<String, MethodConfig>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("experiment file: {e}")))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        ExperimentConfig::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn work_dir(&self) -> PathBuf {
        self.resolve(&self.experiment.work_dir)
    }

    pub fn qp_pairs(&self) -> Vec<QpPair> {
        self.qps.pairs.iter().map(|&p| p.into()).collect()
    }

    /// Pairs as coded by `method`: the texture QP shifted by its offset,
    /// depth QP unchanged.
    pub fn coded_pairs(&self, method: &MethodConfig) -> Vec<(QpPair, QpPair)> {
        self.qp_pairs()
            .into_iter()
            .map(|p| (p, QpPair::new(p.qp_texture + method.qp_offset, p.qp_depth)))
            .collect()
    }

    /// Fully resolved spec of a sequence (frame count from the file when not
    /// given).
    pub fn sequence_spec(&self, id: &str) -> Result<VideoSpec> {
        let s = self
            .sequence
            .get(id)
            .ok_or_else(|| Error::Config(format!("no sequence `{id}`")))?;
        let mut spec = VideoSpec::parse_compact(&s.spec)?;
        if let Some(n) = s.frames {
            spec.frame_count = n;
        }
        spec.label = s.name.clone().unwrap_or_else(|| id.to_string());
        resolve_frame_count(self.resolve(&s.path), &spec)
    }

    /// Loads the network and all weight files of a post-processing config,
    /// keyed by base texture QP.
    pub fn load_postproc(&self, label: &str, pp: &PostprocConfig) -> Result<BTreeMap<i32, Network>> {
        let spec = match pp.source(label)? {
            NetSource::Path(net) => NetworkSpec::load(self.resolve(net))?,
            NetSource::Builder(mfrnet) => build_mfrnet_style(mfrnet),
        };
        spec.validate()?;
        if pp.weights.is_empty() {
            return Err(Error::Config(format!("method `{label}`: post-processing has no weight files")));
        }
        let mut models = BTreeMap::new();
        for (qp, path) in &pp.weights {
            let qp: i32 = qp
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("method `{label}`: weight key `{qp}` is not a QP")))?;
            let path = self.resolve(path);
            let weights = WeightFile::load(&path).map_err(|e| {
                Error::Config(format!(
                    "method `{label}`: weights for QP group {qp} ({}): {e}",
                    path.display()
                ))
            })?;
            let net = Network::new(spec.clone(), weights)
                .map_err(|e| Error::Config(format!("method `{label}`: QP group {qp}: {e}")))?;
            models.insert(qp, net);
        }
        Ok(models)
    }

    /// Checks everything that can be checked without running a job.
    pub fn validate(&self) -> Result<()> {
        if self.sequence.is_empty() {
            return Err(Error::Config("no [sequence.*] sections".into()));
        }
        if self.method.is_empty() {
            return Err(Error::Config("no [method.*] sections".into()));
        }
        if self.qps.pairs.is_empty() {
            return Err(Error::Config("[qps] pairs is empty".into()));
        }
        for (id, s) in &self.sequence {
            let spec = self.sequence_spec(id)?;
            if spec.frame_count == 0 {
                return Err(Error::Config(format!("sequence `{id}` has no frames")));
            }
            if s.frame_rate.is_nan() || s.frame_rate <= 0.0 {
                return Err(Error::Config(format!("sequence `{id}`: frame_rate must be positive")));
            }
            if let Some(p) = &s.preset {
                let preset = SequencePreset::by_id(p)
                    .ok_or_else(|| Error::Config(format!("sequence `{id}`: unknown preset `{p}`")))?;
                if (preset.width, preset.height) != (spec.width, spec.height) {
                    log::warn!(
                        "sequence `{id}` is {}x{} but preset {} is {}x{}",
                        spec.width,
                        spec.height,
                        preset.id,
                        preset.width,
                        preset.height
                    );
                }
            }
            crate::frame_io::read_sequence(self.resolve(&s.path), &spec)?;
        }
        for (label, m) in &self.method {
            if m.scale.numerator() > m.scale.denominator() {
                return Err(Error::Config(format!(
                    "method `{label}`: scale is the downscale factor and must be <= 1"
                )));
            }
            m.codec.validate()?;
            if matches!(m.codec, CodecAdapter::Mock) {
                for (_, coded) in self.coded_pairs(m) {
                    for qp in [coded.qp_texture, coded.qp_depth] {
                        if !(0..=MOCK_QP_MAX).contains(&qp) {
                            return Err(Error::Config(format!(
                                "method `{label}`: QP {qp} outside 0..={MOCK_QP_MAX}"
                            )));
                        }
                    }
                }
            }
            if let Some(pp) = &m.postproc {
                let models = self.load_postproc(label, pp)?;
                if let (Some(tile), Some(overlap)) = (pp.tile, pp.overlap) {
                    let r = models.values().next().and_then(Network::receptive_radius);
                    match r {
                        Some(r) if overlap >= r && tile > 0 => {}
                        Some(r) => {
                            return Err(Error::Config(format!(
                                "method `{label}`: tile overlap {overlap} below receptive radius {r}"
                            )))
                        }
                        None => {
                            return Err(Error::Config(format!("method `{label}`: network is not tileable")))
                        }
                    }
                }
            }
        }
        for m in &self.metrics.external {
            m.validate()?;
        }
        if !self.metrics.psnr_y && self.metrics.external.is_empty() {
            return Err(Error::Config("no metrics enabled".into()));
        }
        Ok(())
    }
}

/// Picks the model trained for the base QP closest to `qp` (ties go to the
/// lower QP).
pub(crate) fn nearest_model<T>(models: &BTreeMap<i32, T>, qp: i32) -> Option<(i32, &T)> {
    models
        .iter()
        .min_by_key(|(k, _)| ((**k - qp).abs(), **k))
        .map(|(k, v)| (*k, v))
}
