//! Experiment orchestration: the Anchor / Re-scaled / post-processed method
//! chains, codec adapters (including a hermetic mock codec), the append-only
//! run manifest and report assembly.

mod codec;
mod config;
mod manifest;
mod patch;
mod presets;
mod report;
mod runner;
pub mod synthetic;

pub use codec::{
    mock_decode, mock_encode, mock_encode_decode, quant_step, CodecAdapter, MockBitstream, MOCK_BLOCK,
    MOCK_QP_MAX,
};
pub use config::{
    ContentKind, ExperimentConfig, ExperimentSettings, MethodConfig, MetricsConfig, NetSource, PostprocConfig,
    QpPair, QpSchedule, SequenceConfig,
};
pub use manifest::{Artifact, JobKey, JobRecord, JobStatus, RunManifest};
pub use patch::{dump_patch, write_pgm};
pub use presets::{SequencePreset, SequenceType, SEQUENCE_PRESETS};
pub use report::{assemble_report, BdTable, ReportBundle, RqTable, TimingSummary};
pub use runner::{run_experiment, RunOptions};

/// Version string recorded in every manifest entry.
pub const TOOLKIT_VERSION: &str = concat!("rqpipe ", env!("CARGO_PKG_VERSION"));

/// Stage names used in `stage_timings`.
pub mod stage {
    pub const DOWNSAMPLE: &str = "downsample";
    pub const ENCODE: &str = "encode";
    pub const DECODE: &str = "decode";
    pub const UPSAMPLE: &str = "upsample";
    pub const POSTPROCESS: &str = "postprocess";
    pub const METRICS: &str = "metrics";
    pub const ALL: [&str; 6] = [DOWNSAMPLE, ENCODE, DECODE, UPSAMPLE, POSTPROCESS, METRICS];
}
