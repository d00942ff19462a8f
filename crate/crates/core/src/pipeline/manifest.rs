//! Append-only run manifest: one JSON record per line, one line per finished
//! job. Later lines for the same job supersede earlier ones.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::QpPair;
use crate::error::{Error, Result};
use crate::metrics::QualityScore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl Artifact {
    pub fn from_file(role: &str, path: &Path) -> Result<Self> {
        Ok(Artifact {
            role: role.to_string(),
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }

    pub fn is_intact(&self) -> bool {
        sha256_file(&self.path).is_ok_and(|h| h == self.sha256)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JobKey {
    pub sequence: String,
    pub method: String,
    pub qp: QpPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub sequence: String,
    pub method: String,
    /// Pair as listed in the experiment (the Anchor's QPs).
    pub qp: QpPair,
    /// Pair actually handed to the codec after the method's texture offset.
    pub coded_qp: QpPair,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub bitrate_kbps: Option<f64>,
    #[serde(default)]
    pub bits: Option<u64>,
    pub frames: usize,
    pub scores: BTreeMap<String, QualityScore>,
    /// Wall-clock seconds per stage for the whole job.
    pub stage_timings: BTreeMap<String, f64>,
    pub artifacts: Vec<Artifact>,
    /// Hash of the native-resolution original every score is computed against.
    pub reference_sha256: String,
    pub reference_dims: [usize; 2],
    pub toolkit_version: String,
    pub effective_config: serde_json::Value,
    #[serde(default)]
    pub notes: Vec<String>,
    pub timestamp_unix: f64,
}

impl JobRecord {
    pub fn key(&self) -> JobKey {
        JobKey {
            sequence: self.sequence.clone(),
            method: self.method.clone(),
            qp: self.qp,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == JobStatus::Ok
    }

    /// Stage seconds per frame.
    pub fn per_frame(&self, stage: &str) -> f64 {
        self.stage_timings.get(stage).copied().unwrap_or(0.0) / self.frames.max(1) as f64
    }

    /// A copy with the run-dependent fields (timings, timestamps) cleared.
    pub fn without_timing(&self) -> JobRecord {
        let mut r = self.clone();
        r.stage_timings.values_mut().for_each(|v| *v = 0.0);
        r.timestamp_unix = 0.0;
        r
    }
}

/// Jobs of a run, the last record per job winning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunManifest {
    pub records: Vec<JobRecord>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(RunManifest::default()),
            Err(e) => return Err(Error::io(path, e)),
        };
        let mut latest: BTreeMap<JobKey, JobRecord> = BTreeMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: JobRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    // A crash can leave a torn final line.
                    log::warn!("{}:{}: skipping unreadable record: {e}", path.display(), i + 1);
                    continue;
                }
            };
            latest.insert(rec.key(), rec);
        }
        Ok(RunManifest {
            records: latest.into_values().collect(),
        })
    }

    pub fn get(&self, key: &JobKey) -> Option<&JobRecord> {
        self.records.iter().find(|r| &r.key() == key)
    }

    pub fn sequences(&self) -> Vec<String> {
        let mut v: Vec<String> = self.records.iter().map(|r| r.sequence.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn methods(&self) -> Vec<String> {
        let mut v: Vec<String> = self.records.iter().map(|r| r.method.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn sorted(&self) -> Vec<&JobRecord> {
        let mut v: Vec<&JobRecord> = self.records.iter().collect();
        v.sort_by_key(|r| r.key());
        v
    }
}

/// Serialised, line-at-a-time manifest writer.
pub(crate) struct ManifestAppender {
    path: PathBuf,
    file: Mutex<File>,
}

impl ManifestAppender {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(ManifestAppender {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn append(&self, rec: &JobRecord) -> Result<()> {
        let mut line = serde_json::to_string(rec).map_err(|e| Error::Parse(e.to_string()))?;
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        f.sync_data().map_err(|e| Error::io(&self.path, e))
    }
}
