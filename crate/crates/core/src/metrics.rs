//! Full-reference quality: native PSNR-Y and a wrapper for external metric
//! tools (VMAF, IV-PSNR, ...) that are driven through command templates.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{max_sample, Frame, Plane, VideoSpec};

pub const PSNR_Y: &str = "psnr_y";
pub const DEFAULT_PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Aggregation {
    /// Mean of per-frame values; infinite PSNR frames are clipped to the cap.
    #[default]
    MeanOfPerFrame,
    /// PSNR of the mean MSE over all frames.
    FromMeanMse,
}


impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" | "mean_of_per_frame" => Ok(Aggregation::MeanOfPerFrame),
            "mse" | "from_mean_mse" => Ok(Aggregation::FromMeanMse),
            _ => Err(Error::Config(format!("unknown aggregation `{s}` (mean|mse)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub metric_id: String,
    /// Infinite values are serialised as `null`.
    #[serde(with = "finite_or_null")]
    pub per_frame: Vec<f64>,
    pub sequence_value: f64,
    pub aggregation: Aggregation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<String>,
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opt: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opt: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(opt.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

fn check_dims(a: &Plane, b: &Plane) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!(
            "planes differ in size: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Sum of squared sample differences, exact in integer arithmetic.
pub fn sse_plane(a: &Plane, b: &Plane) -> Result<u64> {
    check_dims(a, b)?;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum())
}

pub fn mse_plane(a: &Plane, b: &Plane) -> Result<f64> {
    let n = a.data().len();
    let sse = sse_plane(a, b)?;
    if n == 0 {
        return Ok(0.0);
    }
    Ok(sse as f64 / n as f64)
}

/// `10 log10(peak² / mse)`, or `+inf` when `mse == 0`.
pub fn psnr_from_mse(mse: f64, bit_depth: u8) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    let peak = max_sample(bit_depth) as f64;
    10.0 * (peak * peak / mse).log10()
}

/// Luma PSNR in dB. Identical luma gives `f64::INFINITY`.
pub fn psnr_y(a: &Frame, b: &Frame, bit_depth: u8) -> Result<f64> {
    if a.bit_depth() != b.bit_depth() || a.bit_depth() != bit_depth {
        return Err(Error::Dimension(format!(
            "bit depth mismatch: {} vs {} (expected {bit_depth})",
            a.bit_depth(),
            b.bit_depth()
        )));
    }
    Ok(psnr_from_mse(mse_plane(&a.y, &b.y)?, bit_depth))
}

/// Per-frame PSNR-Y aggregated into a sequence value. `cap_db` clips infinite
/// frames before a mean-of-frames aggregation.
pub fn sequence_psnr_y(
    reference: &[Frame],
    distorted: &[Frame],
    aggregation: Aggregation,
    cap_db: f64,
) -> Result<QualityScore> {
    if reference.len() != distorted.len() {
        return Err(Error::Dimension(format!(
            "sequences differ in length: {} vs {} frames",
            reference.len(),
            distorted.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Dimension("empty sequence".into()));
    }
    let bit_depth = reference[0].bit_depth();
    let mses: Vec<f64> = reference
        .par_iter()
        .zip(distorted)
        .map(|(a, b)| {
            if a.bit_depth() != b.bit_depth() {
                return Err(Error::Dimension("bit depth mismatch".into()));
            }
            mse_plane(&a.y, &b.y)
        })
        .collect::<Result<_>>()?;
    let per_frame: Vec<f64> = mses.iter().map(|&m| psnr_from_mse(m, bit_depth)).collect();
    let sequence_value = match aggregation {
        Aggregation::MeanOfPerFrame => {
            per_frame.iter().map(|&p| p.min(cap_db)).sum::<f64>() / per_frame.len() as f64
        }
        Aggregation::FromMeanMse => {
            let mean = mses.iter().sum::<f64>() / mses.len() as f64;
            psnr_from_mse(mean, bit_depth).min(cap_db)
        }
    };
    Ok(QualityScore {
        metric_id: PSNR_Y.to_string(),
        per_frame,
        sequence_value,
        aggregation,
        tool: None,
    })
}

/// An external full-reference metric invoked via a shell command template.
///
/// Placeholders: `{ref}`, `{dist}` (required), `{w}`, `{h}`, `{bitdepth}`,
/// `{frames}`, `{out}`. When `{out}` is used the tool's scores are read from
/// that file; otherwise from stdout. Output is either one number per line
/// (per-frame scores) or `key=value` lines, where the key matching the metric
/// id (or the only key) gives the sequence value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalMetric {
    pub id: String,
    pub command: String,
    /// Optional command whose first output line identifies the tool version.
    #[serde(default)]
    pub version_command: Option<String>,
}

const REQUIRED_METRIC_PLACEHOLDERS: [&str; 2] = ["{ref}", "{dist}"];

/// Quotes a value for `sh -c`.
pub(crate) fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}

pub(crate) fn run_shell(command: &str) -> Result<(String, String)> {
    let output = Command::new("sh")
        .arg("-c")
        .arg(command)
        .output()
        .map_err(|e| Error::Tool {
            command: command.to_string(),
            status: "spawn failed".into(),
            output: e.to_string(),
        })?;
    let stdout = String::from_utf8_lossy(&output.stdout).into_owned();
    let stderr = String::from_utf8_lossy(&output.stderr).into_owned();
    if !output.status.success() {
        return Err(Error::Tool {
            command: command.to_string(),
            status: output.status.to_string(),
            output: if stderr.trim().is_empty() { stdout } else { stderr },
        });
    }
    Ok((stdout, stderr))
}

pub(crate) fn expand_template(template: &str, vars: &BTreeMap<&str, String>) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

impl ExternalMetric {
    pub fn validate(&self) -> Result<()> {
        for p in REQUIRED_METRIC_PLACEHOLDERS {
            if !self.command.contains(p) {
                return Err(Error::Config(format!(
                    "metric `{}` command template lacks {p}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn version(&self) -> Option<String> {
        let cmd = self.version_command.as_ref()?;
        match run_shell(cmd) {
            Ok((out, err)) => out
                .lines()
                .chain(err.lines())
                .map(str::trim)
                .find(|l| !l.is_empty())
                .map(str::to_string),
            Err(e) => {
                log::warn!("version probe for `{}` failed: {e}", self.id);
                None
            }
        }
    }

    /// Runs the tool on `reference` vs `distorted` and parses its scores.
    pub fn evaluate(
        &self,
        reference: &Path,
        distorted: &Path,
        spec: &VideoSpec,
        scratch_dir: &Path,
    ) -> Result<QualityScore> {
        self.validate()?;
        let out_path = scratch_dir.join(format!("{}.scores.txt", self.id));
        let mut vars = BTreeMap::new();
        vars.insert("ref", shell_quote(&reference.to_string_lossy()));
        vars.insert("dist", shell_quote(&distorted.to_string_lossy()));
        vars.insert("w", spec.width.to_string());
        vars.insert("h", spec.height.to_string());
        vars.insert("bitdepth", spec.bit_depth.to_string());
        vars.insert("frames", spec.frame_count.to_string());
        vars.insert("out", shell_quote(&out_path.to_string_lossy()));
        let command = expand_template(&self.command, &vars);
        log::debug!("metric `{}`: {command}", self.id);
        let (stdout, _) = run_shell(&command)?;
        let text = if self.command.contains("{out}") {
            std::fs::read_to_string(&out_path).map_err(|e| Error::io(&out_path, e))?
        } else {
            stdout
        };
        let mut score = parse_metric_output(&self.id, &text, spec.frame_count)?;
        score.tool = self.version().or_else(|| {
            self.command.split_whitespace().next().map(str::to_string)
        });
        Ok(score)
    }
}

/// Parses tool output: numbers one per line, and/or `key=value` summaries.
pub fn parse_metric_output(id: &str, text: &str, frame_count: usize) -> Result<QualityScore> {
    let mut per_frame = Vec::new();
    let mut summary: Vec<(String, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Parse(format!("metric `{id}` output line {}: `{line}`", lineno + 1));
        if let Some((k, v)) = line.split_once('=') {
            summary.push((k.trim().to_string(), v.trim().parse().map_err(|_| bad())?));
        } else {
            per_frame.push(line.parse::<f64>().map_err(|_| bad())?);
        }
    }
    if !per_frame.is_empty() && frame_count > 0 && per_frame.len() != frame_count {
        return Err(Error::Parse(format!(
            "metric `{id}` reported {} per-frame values for {frame_count} frames",
            per_frame.len()
        )));
    }
    let from_summary = match summary.as_slice() {
        [] => None,
        [(_, v)] => Some(*v),
        many => many.iter().find(|(k, _)| k == id).map(|(_, v)| *v),
    };
    let sequence_value = match (from_summary, per_frame.is_empty()) {
        (Some(v), _) => v,
        (None, false) => per_frame.iter().sum::<f64>() / per_frame.len() as f64,
        (None, true) => {
            return Err(Error::Parse(format!("metric `{id}` produced no scores")));
        }
    };
    if !sequence_value.is_finite() {
        return Err(Error::Parse(format!("metric `{id}` value is not finite")));
    }
    Ok(QualityScore {
        metric_id: id.to_string(),
        per_frame,
        sequence_value,
        aggregation: Aggregation::MeanOfPerFrame,
        tool: None,
    })
}
