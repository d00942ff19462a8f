use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use rqpipe_core::bd::{bd_quality, bd_rate, Interpolation, RqCurve};
use rqpipe_core::cnn::{build_mfrnet_style, tiled_apply, MfrnetConfig, Network, NetworkSpec, WeightFile};
use rqpipe_core::frame_io::{account_file, read_all, resolve_frame_count, write_sequence, Frame};
use rqpipe_core::metrics::{sequence_psnr_y, Aggregation, DEFAULT_PSNR_CAP_DB};
use rqpipe_core::pipeline::{
    assemble_report, dump_patch, mock_encode_decode, run_experiment, synthetic, ExperimentConfig, RunManifest,
    RunOptions,
};
use rqpipe_core::resample::resample_frame;
use rqpipe_core::{ResampleFilter, ScaleFactor, VideoSpec};

#[derive(Parser)]
#[command(name = "rqpipe", version, about = "Resolution-adaptive coding experiments on raw YUV video")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every job of an experiment config and write its report.
    Run(RunArgs),
    /// Build RQ tables, BD tables and the timing summary from a manifest.
    Report(ReportArgs),
    /// BD statistics between two rate-quality CSV files.
    Bd(BdArgs),
    /// Luma PSNR between two sequences.
    Psnr(PsnrArgs),
    /// Resample a sequence by a rational factor.
    Resample(ResampleArgs),
    /// Apply a post-processing network to a sequence.
    Postproc(PostprocArgs),
    /// Encode and decode a sequence with the built-in mock codec.
    MockCodec(MockCodecArgs),
    /// Write a luma patch as an 8-bit PGM.
    DumpPatch(DumpPatchArgs),
    /// Show the geometry of a raw YUV file.
    YuvInfo(YuvInfoArgs),
    /// Write a synthetic test sequence.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// Re-run jobs that already have intact results.
    #[arg(long)]
    force: bool,
    /// Report directory (default: <work_dir>/report).
    #[arg(long)]
    report_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    manifest: PathBuf,
    #[arg(long, default_value = "Anchor")]
    anchor: String,
    #[arg(long, default_value = "pchip")]
    interp: Interpolation,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct BdArgs {
    /// CSV with `bitrate_kbps,quality` columns.
    reference: PathBuf,
    test: PathBuf,
    #[arg(long, default_value = "pchip")]
    interp: Interpolation,
    #[arg(long, default_value = "quality")]
    metric: String,
}

/// Input sequence and its geometry, `WxH:bitdepth:chroma[:frames]`.
#[derive(Args)]
struct Input {
    #[arg(long = "in", short = 'i')]
    input: PathBuf,
    #[arg(long)]
    spec: VideoSpec,
}

impl Input {
    fn spec(&self) -> anyhow::Result<VideoSpec> {
        Ok(resolve_frame_count(&self.input, &self.spec)?)
    }

    fn read(&self) -> anyhow::Result<(VideoSpec, Vec<Frame>)> {
        let spec = self.spec()?;
        let frames = read_all(&self.input, &spec).with_context(|| format!("reading {}", self.input.display()))?;
        Ok((spec, frames))
    }
}

#[derive(Args)]
struct PsnrArgs {
    reference: PathBuf,
    distorted: PathBuf,
    #[arg(long)]
    spec: VideoSpec,
    /// `mean` (of per-frame PSNR) or `mse` (PSNR of mean MSE).
    #[arg(long, default_value = "mean")]
    aggregation: Aggregation,
    #[arg(long, default_value_t = DEFAULT_PSNR_CAP_DB)]
    cap: f64,
    /// Print per-frame values as well.
    #[arg(long)]
    per_frame: bool,
}

#[derive(Args)]
struct ResampleArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, short)]
    out: PathBuf,
    /// Rational factor such as `1/2` or `2`.
    #[arg(long)]
    scale: ScaleFactor,
    /// `lanczos[:a]` or `nn`.
    #[arg(long, default_value = "lanczos:3")]
    filter: ResampleFilter,
}

#[derive(Args)]
struct PostprocArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, short)]
    out: PathBuf,
    /// Network description (JSON). Without it a dense-block network is built
    /// from `--blocks/--convs/--channels/--growth`.
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    #[arg(long, default_value_t = 4)]
    convs: usize,
    #[arg(long, default_value_t = 32)]
    channels: usize,
    #[arg(long, default_value_t = 16)]
    growth: usize,
    /// Weight file; required unless `--random-seed` is given.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Use seeded random weights (for smoke tests and timing).
    #[arg(long, conflicts_with = "weights")]
    random_seed: Option<u64>,
    #[arg(long)]
    tile: Option<usize>,
    #[arg(long)]
    overlap: Option<usize>,
    /// Also filter the chroma planes.
    #[arg(long)]
    chroma: bool,
}

#[derive(Args)]
struct MockCodecArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    qp: i32,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
}

#[derive(Args)]
struct DumpPatchArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    #[arg(long)]
    x: usize,
    #[arg(long)]
    y: usize,
    #[arg(long)]
    w: usize,
    #[arg(long)]
    h: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct YuvInfoArgs {
    #[command(flatten)]
    input: Input,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, short)]
    out: PathBuf,
    /// Geometry including the frame count, e.g. `64x64:8:420:8`.
    #[arg(long)]
    spec: VideoSpec,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Bd(a) => bd(a),
        Command::Psnr(a) => psnr(a),
        Command::Resample(a) => resample(a),
        Command::Postproc(a) => postproc(a),
        Command::MockCodec(a) => mock_codec(a),
        Command::DumpPatch(a) => {
            let spec = a.input.spec()?;
            dump_patch(&a.input.input, &spec, a.frame, a.x, a.y, a.w, a.h, &a.out)?;
            println!("wrote {}", a.out.display());
            Ok(())
        }
        Command::YuvInfo(a) => yuv_info(a),
        Command::Synth(a) => {
            if a.spec.frame_count == 0 {
                bail!("synthetic spec needs a frame count, e.g. 64x64:8:420:8");
            }
            let bytes = synthetic::write_synthetic(&a.out, &a.spec, a.seed)?;
            println!("wrote {} ({bytes} bytes, {})", a.out.display(), a.spec);
            Ok(())
        }
    }
}

fn write_report(manifest: &RunManifest, anchor: &str, interp: Interpolation, dir: &Path) -> anyhow::Result<()> {
    let bundle = assemble_report(manifest, anchor, interp)?;
    let files = bundle.write_dir(dir)?;
    for t in &bundle.bd_tables {
        println!("BD vs {} for {} ({}):", t.anchor, t.method, t.interpolation);
        print!("{}", t.to_csv());
    }
    print!("{}", bundle.timing.render());
    for w in &bundle.warnings {
        log::warn!("{w}");
    }
    println!("{} report files in {}", files.len(), dir.display());
    Ok(())
}

fn run(a: RunArgs) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let manifest = run_experiment(
        &cfg,
        &RunOptions {
            workers: a.workers,
            force: a.force,
        },
    )?;
    let failed = manifest.records.iter().filter(|r| !r.is_ok()).count();
    println!("{} jobs recorded, {failed} failed", manifest.records.len());
    let dir = a.report_dir.unwrap_or_else(|| cfg.work_dir().join("report"));
    write_report(&manifest, &cfg.experiment.anchor, cfg.experiment.bd_interpolation, &dir)?;
    if failed > 0 {
        bail!("{failed} job(s) failed; see the manifest for details");
    }
    Ok(())
}

fn report(a: ReportArgs) -> anyhow::Result<()> {
    let manifest = RunManifest::load(&a.manifest)?;
    if manifest.records.is_empty() {
        bail!("{} has no job records", a.manifest.display());
    }
    write_report(&manifest, &a.anchor, a.interp, &a.out)
}

fn bd(a: BdArgs) -> anyhow::Result<()> {
    let r = RqCurve::from_csv_path("reference", &a.metric, &a.reference)?;
    let t = RqCurve::from_csv_path("test", &a.metric, &a.test)?;
    let q = bd_quality(&r, &t, a.interp)?;
    println!("BD-{} ({}): {:.6}", a.metric, a.interp, q.delta_quality.unwrap_or(f64::NAN));
    match bd_rate(&r, &t, a.interp) {
        Ok(res) => {
            println!("BD-rate: {:.4}%", res.delta_rate_percent.unwrap_or(f64::NAN));
            for w in res.warnings {
                eprintln!("warning: {w}");
            }
        }
        Err(e) => eprintln!("BD-rate unavailable: {e}"),
    }
    for w in q.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn psnr(a: PsnrArgs) -> anyhow::Result<()> {
    let spec = resolve_frame_count(&a.reference, &a.spec)?;
    let r = read_all(&a.reference, &spec)?;
    let d = read_all(&a.distorted, &spec)?;
    let s = sequence_psnr_y(&r, &d, a.aggregation, a.cap)?;
    if a.per_frame {
        for (i, v) in s.per_frame.iter().enumerate() {
            println!("frame {i}: {v:.4}");
        }
    }
    println!("psnr_y: {:.4} dB", s.sequence_value);
    Ok(())
}

fn resample(a: ResampleArgs) -> anyhow::Result<()> {
    let (spec, frames) = a.input.read()?;
    let out: Vec<Frame> = frames
        .iter()
        .map(|f| resample_frame(f, a.scale, a.filter))
        .collect::<Result<_, _>>()?;
    let out_spec = VideoSpec {
        width: out[0].width(),
        height: out[0].height(),
        ..spec
    };
    write_sequence(&out, &out_spec, &a.out)?;
    println!("wrote {} ({out_spec})", a.out.display());
    Ok(())
}

fn postproc(a: PostprocArgs) -> anyhow::Result<()> {
    let spec = match &a.net {
        Some(p) => NetworkSpec::load(p)?,
        None => build_mfrnet_style(&MfrnetConfig::new(a.blocks, a.convs, a.channels, a.growth)),
    };
    let weights = match (&a.weights, a.random_seed) {
        (Some(p), _) => WeightFile::load(p)?,
        (None, Some(seed)) => WeightFile::random_for(&spec, seed, 0.05),
        (None, None) => bail!("either --weights or --random-seed is required"),
    };
    let net = Network::new(spec, weights)?;
    let (vspec, frames) = a.input.read()?;
    let radius = net.receptive_radius().unwrap_or(0);
    let apply = |p: &rqpipe_core::Plane| match a.tile {
        Some(t) => tiled_apply(&net, p, t, a.overlap.unwrap_or(radius)),
        None => net.apply_plane(p),
    };
    let start = std::time::Instant::now();
    let out = frames
        .iter()
        .map(|f| {
            let chroma = match (&f.cb, &f.cr) {
                (Some(cb), Some(cr)) if a.chroma => Some((apply(cb)?, apply(cr)?)),
                (Some(cb), Some(cr)) => Some((cb.clone(), cr.clone())),
                _ => None,
            };
            Frame::new(apply(&f.y)?, chroma)
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_sequence(&out, &vspec, &a.out)?;
    println!(
        "wrote {} ({} frames, {:.3} s/frame)",
        a.out.display(),
        out.len(),
        start.elapsed().as_secs_f64() / out.len().max(1) as f64
    );
    Ok(())
}

fn mock_codec(a: MockCodecArgs) -> anyhow::Result<()> {
    let (spec, frames) = a.input.read()?;
    let (decoded, bits) = mock_encode_decode(&frames, a.qp)?;
    write_sequence(&decoded, &spec, &a.out)?;
    let s = sequence_psnr_y(&frames, &decoded, Aggregation::default(), DEFAULT_PSNR_CAP_DB)?;
    println!(
        "qp {}: {bits} bits, {:.3} kbps at {} fps, psnr_y {:.4} dB",
        a.qp,
        bits as f64 * a.fps / frames.len() as f64 / 1000.0,
        a.fps,
        s.sequence_value
    );
    Ok(())
}

fn yuv_info(a: YuvInfoArgs) -> anyhow::Result<()> {
    let acc = account_file(&a.input.input, &a.input.spec)?;
    let spec = &a.input.spec;
    println!("file:           {}", a.input.input.display());
    println!("geometry:       {}x{} {}-bit {}", spec.width, spec.height, spec.bit_depth, spec.chroma);
    println!("bytes/frame:    {}", acc.frame_bytes);
    println!("file bytes:     {}", acc.file_bytes);
    println!("whole frames:   {}", acc.whole_frames);
    if acc.trailing_bytes > 0 {
        println!("trailing bytes: {} (partial frame)", acc.trailing_bytes);
    }
    if spec.frame_count > 0 && spec.frame_count as u64 > acc.whole_frames {
        bail!(
            "spec declares {} frames but the file holds {}",
            spec.frame_count,
            acc.whole_frames
        );
    }
    Ok(())
}
