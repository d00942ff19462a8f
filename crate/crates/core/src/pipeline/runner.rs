use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use super::codec::{mock_decode, mock_encode, run_external, CodecAdapter, ExternalJob};
use super::config::{nearest_model, ContentKind, ExperimentConfig, MethodConfig, QpPair};
use super::manifest::{sha256_file, Artifact, JobRecord, JobStatus, ManifestAppender, RunManifest};
use super::{stage, TOOLKIT_VERSION};
use crate::cnn::{tiled_apply, Network};
use crate::error::{Error, Result};
use crate::frame_io::{read_all, write_sequence, Frame, VideoSpec};
use crate::metrics::{sequence_psnr_y, PSNR_Y};
use crate::resample::{resample_frame, ResampleFilter};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const WORKERS_ENV: &str = "RQPIPE_WORKERS";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides both the config and `RQPIPE_WORKERS`.
    pub workers: Option<usize>,
    /// Re-run jobs even when intact results exist.
    pub force: bool,
}

struct SequenceData {
    id: String,
    path: PathBuf,
    spec: VideoSpec,
    frames: Vec<Frame>,
    sha256: String,
    frame_rate: f64,
    content: ContentKind,
}

struct Job<'a> {
    seq: &'a SequenceData,
    label: &'a str,
    method: &'a MethodConfig,
    models: Option<&'a BTreeMap<i32, Network>>,
    qp: QpPair,
    coded: QpPair,
}

fn worker_count(cfg: &ExperimentConfig, opts: &RunOptions) -> usize {
    opts.workers
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .or(cfg.experiment.workers)
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Runs every (sequence, method, QP pair) job of `cfg`, appending one record
/// per finished job to `<work_dir>/manifest.jsonl`, and returns the complete
/// manifest. Jobs whose records and artifacts are intact are skipped.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest> {
    cfg.validate()?;
    let work = cfg.work_dir();
    std::fs::create_dir_all(&work).map_err(|e| Error::io(&work, e))?;
    let manifest_path = work.join(MANIFEST_FILE);

    let mut models: BTreeMap<&str, BTreeMap<i32, Network>> = BTreeMap::new();
    for (label, m) in &cfg.method {
        if let Some(pp) = &m.postproc {
            models.insert(label, cfg.load_postproc(label, pp)?);
        }
    }

    let sequences: Vec<SequenceData> = cfg
        .sequence
        .iter()
        .map(|(id, s)| {
            let spec = cfg.sequence_spec(id)?;
            let path = cfg.resolve(&s.path);
            Ok(SequenceData {
                id: id.clone(),
                frames: read_all(&path, &spec)?,
                sha256: sha256_file(&path)?,
                path,
                spec,
                frame_rate: s.frame_rate,
                content: s.content,
            })
        })
        .collect::<Result<_>>()?;

    let existing = RunManifest::load(&manifest_path)?;
    let mut jobs = Vec::new();
    for seq in &sequences {
        for (label, method) in &cfg.method {
            for (qp, coded) in cfg.coded_pairs(method) {
                jobs.push(Job {
                    seq,
                    label,
                    method,
                    models: models.get(label.as_str()),
                    qp,
                    coded,
                });
            }
        }
    }
    let pending: Vec<&Job> = jobs
        .iter()
        .filter(|j| {
            if opts.force {
                return true;
            }
            let key = super::manifest::JobKey {
                sequence: j.seq.id.clone(),
                method: j.label.to_string(),
                qp: j.qp,
            };
            match existing.get(&key) {
                Some(r) if r.is_ok() && r.reference_sha256 == j.seq.sha256 && r.artifacts.iter().all(Artifact::is_intact) => {
                    log::info!("skipping {} / {} / {:?}: results intact", j.seq.id, j.label, j.qp);
                    false
                }
                _ => true,
            }
        })
        .collect();

    let appender = Arc::new(ManifestAppender::open(&manifest_path)?);
    let workers = worker_count(cfg, opts);
    log::info!("{} jobs ({} pending) on {workers} workers", jobs.len(), pending.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        pending.par_iter().try_for_each(|job| {
            let rec = run_job(cfg, job, &work);
            if rec.status == JobStatus::Failed {
                log::error!(
                    "{} / {} / {:?} failed: {}",
                    rec.sequence,
                    rec.method,
                    rec.qp,
                    rec.error.as_deref().unwrap_or("")
                );
            }
            appender.append(&rec)
        })
    })?;
    RunManifest::load(&manifest_path)
}

fn run_job(cfg: &ExperimentConfig, job: &Job, work: &Path) -> JobRecord {
    let seq = job.seq;
    let mut rec = JobRecord {
        sequence: seq.id.clone(),
        method: job.label.to_string(),
        qp: job.qp,
        coded_qp: job.coded,
        status: JobStatus::Ok,
        error: None,
        bitrate_kbps: None,
        bits: None,
        frames: seq.spec.frame_count,
        scores: BTreeMap::new(),
        stage_timings: stage::ALL.iter().map(|s| (s.to_string(), 0.0)).collect(),
        artifacts: Vec::new(),
        reference_sha256: seq.sha256.clone(),
        reference_dims: [seq.spec.width, seq.spec.height],
        toolkit_version: TOOLKIT_VERSION.to_string(),
        effective_config: serde_json::json!({
            "sequence": cfg.sequence.get(&seq.id),
            "spec": seq.spec,
            "method": job.method,
            "aggregation": cfg.experiment.aggregation,
            "psnr_cap_db": cfg.experiment.psnr_cap_db,
            "metrics": cfg.metrics,
        }),
        notes: Vec::new(),
        timestamp_unix: 0.0,
    };
    if let Err(e) = process(cfg, job, work, &mut rec) {
        rec.status = JobStatus::Failed;
        rec.error = Some(e.to_string());
    }
    rec.timestamp_unix = now_unix();
    rec
}

fn timed<T>(rec: &mut JobRecord, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f();
    *rec.stage_timings.entry(name.to_string()).or_insert(0.0) += t.elapsed().as_secs_f64();
    out
}

fn process(cfg: &ExperimentConfig, job: &Job, work: &Path, rec: &mut JobRecord) -> Result<()> {
    let seq = job.seq;
    let m = job.method;
    let dir = work
        .join(sanitize(&seq.id))
        .join(sanitize(job.label))
        .join(format!("qp{}_{}", job.qp.qp_texture, job.qp.qp_depth));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let codec_qp = match seq.content {
        ContentKind::Texture => job.coded.qp_texture,
        ContentKind::Depth => job.coded.qp_depth,
    };
    rec.notes.push(format!(
        "{:?} sequence coded at QP {codec_qp} (texture offset {} applied to texture QPs only)",
        seq.content, m.qp_offset
    ));

    // Downsample.
    let down_filter = match (seq.content, m.depth_down_filter) {
        (ContentKind::Depth, Some(f)) => f,
        _ => m.down_filter,
    };
    let coded_input: Vec<Frame> = if m.scale.is_identity() {
        seq.frames.clone()
    } else {
        rec.notes.push(format!("downsample {} with {down_filter}", m.scale));
        timed(rec, stage::DOWNSAMPLE, || {
            seq.frames
                .par_iter()
                .map(|f| resample_frame(f, m.scale, down_filter))
                .collect::<Result<Vec<_>>>()
        })?
    };
    let coded_spec = VideoSpec {
        width: coded_input[0].width(),
        height: coded_input[0].height(),
        ..seq.spec.clone()
    };

    // Encode + decode.
    let decoded: Vec<Frame> = match &m.codec {
        CodecAdapter::Mock => {
            let bs = timed(rec, stage::ENCODE, || mock_encode(&coded_input, codec_qp))?;
            rec.bits = Some(bs.total_bits);
            rec.bitrate_kbps = Some(bs.total_bits as f64 * seq.frame_rate / seq.spec.frame_count as f64 / 1000.0);
            timed(rec, stage::DECODE, || mock_decode(&bs))?
        }
        CodecAdapter::External {
            encode,
            decode,
            bitstreams,
        } => {
            let input = dir.join("codec_input.yuv");
            let decoded_path = dir.join("decoded.yuv");
            write_sequence(&coded_input, &coded_spec, &input)?;
            let out = run_external(
                encode,
                decode,
                bitstreams,
                &ExternalJob {
                    work: &dir,
                    input: &input,
                    decoded: &decoded_path,
                    qp: codec_qp,
                    width: coded_spec.width,
                    height: coded_spec.height,
                    bit_depth: coded_spec.bit_depth,
                    frames: coded_spec.frame_count,
                    fps: seq.frame_rate,
                },
            )?;
            *rec.stage_timings.get_mut(stage::ENCODE).expect("stage") += out.encode_seconds;
            *rec.stage_timings.get_mut(stage::DECODE).expect("stage") += out.decode_seconds;
            rec.bits = Some(out.bitstream_bytes * 8);
            rec.bitrate_kbps =
                Some(out.bitstream_bytes as f64 * 8.0 * seq.frame_rate / seq.spec.frame_count as f64 / 1000.0);
            if out.bitstreams.len() > 1 {
                rec.notes.push(format!("bitrate sums {} bitstreams", out.bitstreams.len()));
            }
            for b in &out.bitstreams {
                rec.artifacts.push(Artifact::from_file("bitstream", b)?);
            }
            let frames = timed(rec, stage::DECODE, || read_all(&decoded_path, &coded_spec))?;
            std::fs::remove_file(&input).ok();
            frames
        }
    };

    // Upsample back to native resolution.
    let mut recon: Vec<Frame> = if m.scale.is_identity() {
        decoded
    } else {
        let up = m.scale.inverse();
        let filter: ResampleFilter = m.up_filter;
        timed(rec, stage::UPSAMPLE, || {
            decoded
                .par_iter()
                .map(|f| resample_frame(f, up, filter))
                .collect::<Result<Vec<_>>>()
        })?
    };

    // Post-process.
    if let (Some(pp), Some(models)) = (&m.postproc, job.models) {
        let (group, net) = nearest_model(models, job.qp.qp_texture)
            .ok_or_else(|| Error::Config(format!("method `{}` has no models", job.label)))?;
        rec.notes.push(format!(
            "post-processing model for base QP {} = QP group {group}{}",
            job.qp.qp_texture,
            if pp.chroma { ", luma+chroma" } else { ", luma only" }
        ));
        let apply = |p: &crate::frame_io::Plane| match pp.tile {
            Some(tile) => tiled_apply(net, p, tile, pp.overlap.unwrap_or(net.receptive_radius().unwrap_or(0))),
            None => net.apply_plane(p),
        };
        recon = timed(rec, stage::POSTPROCESS, || {
            recon
                .iter()
                .map(|f| {
                    let y = apply(&f.y)?;
                    let chroma = match (&f.cb, &f.cr) {
                        (Some(cb), Some(cr)) if pp.chroma => Some((apply(cb)?, apply(cr)?)),
                        (Some(cb), Some(cr)) => Some((cb.clone(), cr.clone())),
                        _ => None,
                    };
                    Frame::new(y, chroma)
                })
                .collect::<Result<Vec<_>>>()
        })?;
    }

    if recon.iter().any(|f| !f.matches(&seq.spec)) {
        return Err(Error::Dimension(format!(
            "reconstruction does not match the native {}x{} original",
            seq.spec.width, seq.spec.height
        )));
    }
    let recon_path = dir.join("recon.yuv");
    write_sequence(&recon, &seq.spec, &recon_path)?;
    rec.artifacts.push(Artifact::from_file("recon", &recon_path)?);

    // Metrics, always against the native original.
    let scores = timed(rec, stage::METRICS, || {
        let mut scores = BTreeMap::new();
        if cfg.metrics.psnr_y {
            let s = sequence_psnr_y(
                &seq.frames,
                &recon,
                cfg.experiment.aggregation,
                cfg.experiment.psnr_cap_db,
            )?;
            scores.insert(PSNR_Y.to_string(), s);
        }
        for ext in &cfg.metrics.external {
            let s = ext.evaluate(&seq.path, &recon_path, &seq.spec, &dir)?;
            scores.insert(ext.id.clone(), s);
        }
        Ok(scores)
    })?;
    rec.scores = scores;
    Ok(())
}
