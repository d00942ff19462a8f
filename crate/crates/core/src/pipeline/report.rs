use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::manifest::{JobRecord, RunManifest};
use super::stage;
use crate::bd::{bd_quality, bd_rate, Interpolation, RqCurve, RqPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RqRow {
    pub method: String,
    pub qp_texture: i32,
    pub qp_depth: i32,
    pub coded_qp_texture: i32,
    pub bitrate_kbps: f64,
    pub quality: f64,
}

/// Rate-quality points of every method for one (sequence, metric).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RqTable {
    pub sequence: String,
    pub metric_id: String,
    pub rows: Vec<RqRow>,
}

impl RqTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn curve(&self, method: &str) -> Result<RqCurve> {
        let pts = self
            .rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| RqPoint::new(r.bitrate_kbps, r.quality))
            .collect();
        RqCurve::new(format!("{}/{method}", self.sequence), self.metric_id.clone(), pts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BdCell {
    pub delta_quality: Option<f64>,
    pub delta_rate_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BdRow {
    pub sequence: String,
    pub cells: BTreeMap<String, BdCell>,
}

/// BD statistics of one method against the anchor, one row per sequence
/// plus a `Total` row holding the arithmetic mean of the sequence rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BdTable {
    pub method: String,
    pub anchor: String,
    pub interpolation: Interpolation,
    pub metrics: Vec<String>,
    pub rows: Vec<BdRow>,
    pub total: BdRow,
    pub warnings: Vec<String>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values {
        sum += v?;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

impl BdTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sequence");
        for m in &self.metrics {
            let _ = write!(out, ",bd_{m},bd_rate_{m}_percent");
        }
        out.push('\n');
        for row in self.rows.iter().chain(std::iter::once(&self.total)) {
            out.push_str(&row.sequence);
            for m in &self.metrics {
                let c = row.cells.get(m);
                let _ = write!(
                    out,
                    ",{},{}",
                    fmt_opt(c.and_then(|c| c.delta_quality)),
                    fmt_opt(c.and_then(|c| c.delta_rate_percent))
                );
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodTiming {
    pub method: String,
    pub jobs: usize,
    /// Mean seconds per frame for each stage.
    pub per_frame: BTreeMap<String, f64>,
    pub total_per_frame: f64,
    /// Per-stage change relative to the anchor, in percent. `None` when the
    /// anchor spends no time in that stage.
    pub delta_percent: BTreeMap<String, Option<f64>>,
    pub total_delta_percent: Option<f64>,
    /// Post-processing time as a share of decode + upsample time.
    pub postprocess_decode_side_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingSummary {
    pub anchor: String,
    pub methods: Vec<MethodTiming>,
}

fn pct(x: f64, base: f64) -> Option<f64> {
    (base > 0.0).then(|| 100.0 * (x - base) / base)
}

impl TimingSummary {
    fn build(records: &[&JobRecord], anchor: &str) -> Self {
        let mut by_method: BTreeMap<&str, Vec<&JobRecord>> = BTreeMap::new();
        for r in records {
            by_method.entry(&r.method).or_default().push(r);
        }
        let means = |recs: &[&JobRecord]| -> BTreeMap<String, f64> {
            stage::ALL
                .iter()
                .map(|s| {
                    let m = recs.iter().map(|r| r.per_frame(s)).sum::<f64>() / recs.len().max(1) as f64;
                    (s.to_string(), m)
                })
                .collect()
        };
        let anchor_means = by_method.get(anchor).map(|r| means(r)).unwrap_or_default();
        let anchor_total: f64 = anchor_means.values().sum();
        let methods = by_method
            .iter()
            .map(|(method, recs)| {
                let per_frame = means(recs);
                let total: f64 = per_frame.values().sum();
                let delta_percent = per_frame
                    .iter()
                    .map(|(s, &v)| (s.clone(), pct(v, anchor_means.get(s).copied().unwrap_or(0.0))))
                    .collect();
                let pp = per_frame[stage::POSTPROCESS];
                let decode_side = per_frame[stage::DECODE] + per_frame[stage::UPSAMPLE];
                MethodTiming {
                    method: method.to_string(),
                    jobs: recs.len(),
                    per_frame,
                    total_per_frame: total,
                    delta_percent,
                    total_delta_percent: pct(total, anchor_total),
                    postprocess_decode_side_percent: (pp > 0.0 && decode_side > 0.0)
                        .then(|| 100.0 * pp / decode_side),
                }
            })
            .collect();
        TimingSummary {
            anchor: anchor.to_string(),
            methods,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,stage,seconds_per_frame,delta_vs_anchor_percent\n");
        for m in &self.methods {
            for (s, v) in &m.per_frame {
                let _ = writeln!(out, "{},{s},{v:.9},{}", m.method, fmt_opt(m.delta_percent[s]));
            }
            let _ = writeln!(
                out,
                "{},total,{:.9},{}",
                m.method,
                m.total_per_frame,
                fmt_opt(m.total_delta_percent)
            );
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = format!("Per-frame stage times (relative to {})\n", self.anchor);
        for m in &self.methods {
            let _ = writeln!(out, "{} ({} jobs)", m.method, m.jobs);
            for (s, v) in &m.per_frame {
                let d = match m.delta_percent[s] {
                    Some(d) => format!("{d:+.2}%"),
                    None => "n/a".to_string(),
                };
                let _ = writeln!(out, "  {s:<12} {:>12.3} ms  {d}", v * 1e3);
            }
            let d = m.total_delta_percent.map_or("n/a".to_string(), |d| format!("{d:+.2}%"));
            let _ = writeln!(out, "  {:<12} {:>12.3} ms  {d}", "total", m.total_per_frame * 1e3);
            if let Some(p) = m.postprocess_decode_side_percent {
                let _ = writeln!(out, "  post-processing adds {p:.2}% to decode-side time");
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub rq_tables: Vec<RqTable>,
    pub bd_tables: Vec<BdTable>,
    pub timing: TimingSummary,
    pub warnings: Vec<String>,
}

fn file_part(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

impl ReportBundle {
    /// Writes `rq_<sequence>_<metric>.csv`, `bd_<method>.csv`, `timing.csv`
    /// and `timing.txt` into `dir`, returning the paths written.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        let mut put = |name: String, text: String| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            files.push(p);
            Ok(())
        };
        for t in &self.rq_tables {
            put(
                format!("rq_{}_{}.csv", file_part(&t.sequence), file_part(&t.metric_id)),
                t.to_csv()?,
            )?;
        }
        for t in &self.bd_tables {
            put(format!("bd_{}.csv", file_part(&t.method)), t.to_csv())?;
        }
        put("timing.csv".into(), self.timing.to_csv())?;
        put("timing.txt".into(), self.timing.render())?;
        if !self.warnings.is_empty() {
            put("warnings.txt".into(), self.warnings.join("\n") + "\n")?;
        }
        Ok(files)
    }
}

/// Builds RQ tables, BD tables against `anchor` and the timing summary from
/// the successful jobs of `manifest`.
pub fn assemble_report(manifest: &RunManifest, anchor: &str, interp: Interpolation) -> Result<ReportBundle> {
    let mut warnings = Vec::new();
    let ok: Vec<&JobRecord> = manifest
        .sorted()
        .into_iter()
        .filter(|r| {
            if !r.is_ok() {
                warnings.push(format!(
                    "{} / {} / QP {}: failed job excluded ({})",
                    r.sequence,
                    r.method,
                    r.qp.qp_texture,
                    r.error.as_deref().unwrap_or("no message")
                ));
            }
            r.is_ok() && r.bitrate_kbps.is_some()
        })
        .collect();
    if !ok.iter().any(|r| r.method == anchor) {
        return Err(Error::Config(format!(
            "manifest has no successful jobs for anchor method `{anchor}`"
        )));
    }

    let sequences: BTreeSet<&str> = ok.iter().map(|r| r.sequence.as_str()).collect();
    let methods: BTreeSet<&str> = ok.iter().map(|r| r.method.as_str()).collect();
    let metrics: BTreeSet<&str> = ok.iter().flat_map(|r| r.scores.keys().map(String::as_str)).collect();

    let mut rq_tables = Vec::new();
    for &seq in &sequences {
        for &metric in &metrics {
            let rows: Vec<RqRow> = ok
                .iter()
                .filter(|r| r.sequence == seq)
                .filter_map(|r| {
                    Some(RqRow {
                        method: r.method.clone(),
                        qp_texture: r.qp.qp_texture,
                        qp_depth: r.qp.qp_depth,
                        coded_qp_texture: r.coded_qp.qp_texture,
                        bitrate_kbps: r.bitrate_kbps?,
                        quality: r.scores.get(metric)?.sequence_value,
                    })
                })
                .collect();
            if !rows.is_empty() {
                rq_tables.push(RqTable {
                    sequence: seq.to_string(),
                    metric_id: metric.to_string(),
                    rows,
                });
            }
        }
    }

    let metric_list: Vec<String> = metrics.iter().map(|m| m.to_string()).collect();
    let mut bd_tables = Vec::new();
    for &method in methods.iter().filter(|&&m| m != anchor) {
        let mut table_warnings = Vec::new();
        let mut rows = Vec::new();
        for &seq in &sequences {
            let mut cells = BTreeMap::new();
            for t in rq_tables.iter().filter(|t| t.sequence == seq) {
                let curves = t.curve(anchor).and_then(|a| Ok((a, t.curve(method)?)));
                let (a, m) = match curves {
                    Ok(c) => c,
                    Err(e) => {
                        table_warnings.push(format!("{seq} / {}: {e}", t.metric_id));
                        continue;
                    }
                };
                let dq = match bd_quality(&a, &m, interp) {
                    Ok(r) => {
                        table_warnings.extend(r.warnings.iter().map(|w| format!("{seq} / {}: {w}", t.metric_id)));
                        r.delta_quality
                    }
                    Err(e) => {
                        table_warnings.push(format!("{seq} / {}: {e}", t.metric_id));
                        None
                    }
                };
                let dr = match bd_rate(&a, &m, interp) {
                    Ok(r) => {
                        table_warnings.extend(r.warnings.iter().map(|w| format!("{seq} / {}: {w}", t.metric_id)));
                        r.delta_rate_percent
                    }
                    Err(e) => {
                        table_warnings.push(format!("{seq} / {} BD-rate: {e}", t.metric_id));
                        None
                    }
                };
                cells.insert(
                    t.metric_id.clone(),
                    BdCell {
                        delta_quality: dq,
                        delta_rate_percent: dr,
                    },
                );
            }
            rows.push(BdRow {
                sequence: seq.to_string(),
                cells,
            });
        }
        let total = BdRow {
            sequence: "Total".to_string(),
            cells: metric_list
                .iter()
                .map(|m| {
                    let cell = |f: fn(&BdCell) -> Option<f64>| {
                        mean(rows.iter().map(|r| r.cells.get(m).and_then(f)))
                    };
                    (
                        m.clone(),
                        BdCell {
                            delta_quality: cell(|c| c.delta_quality),
                            delta_rate_percent: cell(|c| c.delta_rate_percent),
                        },
                    )
                })
                .collect(),
        };
        warnings.extend(table_warnings.iter().map(|w| format!("{method}: {w}")));
        bd_tables.push(BdTable {
            method: method.to_string(),
            anchor: anchor.to_string(),
            interpolation: interp,
            metrics: metric_list.clone(),
            rows,
            total,
            warnings: table_warnings,
        });
    }

    Ok(ReportBundle {
        rq_tables,
        bd_tables,
        timing: TimingSummary::build(&ok, anchor),
        warnings,
    })
}
