use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use traum_annotate::{AnnotateError, AnnotationContext, AppState, ClipDescriptor, PairStore};
use traum_core::analysis::{trajectory_csv, SegmentLabeling, SegmentReport};
use traum_core::dataset::{build_training_batch, PairDataset};
use traum_core::embedding::{extract_embedding_sequence, EmbeddingCache};
use traum_core::mapper::{estimate_style_stats, train, MapperParams, StyleStats};
use traum_core::pipeline::{analyze_track, render_track, PipelineConfig};
use traum_core::render::{assemble_video, render_sequence, sample_styles};
use traum_core::styleflow::StyleSequence;

#[derive(Parser)]
#[command(
    name = "traum",
    version,
    about = "Map music to generated-image style sequences"
)]
struct Cli {
    /// Pipeline config JSON.
    #[arg(long, global = true, env = "TRAUM_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for every random draw; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw styles from the generator's sampler.
    Sample(SampleArgs),
    /// Per-dimension mean and deviation of a styles file.
    Stats(StatsArgs),
    /// Audio embeddings at a fixed rate.
    Embed(EmbedArgs),
    /// Fit the transfer function to an annotated pair dataset.
    Train(TrainArgs),
    /// Audio track to frames and manifest.
    Render(RenderArgs),
    /// Run the labeling service.
    Annotate(AnnotateArgs),
    /// PCA trajectories and segment distances for a track.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    truncation: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Also render each sampled style into this directory.
    #[arg(long)]
    frames: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    styles: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    audio: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the video rate.
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    dataset: PathBuf,
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Receives params.json and loss.csv.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args)]
struct RenderArgs {
    audio: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    no_smooth: bool,
    /// Mux frames and audio into this file when ffmpeg is available.
    #[arg(long)]
    video: Option<PathBuf>,
    #[arg(long)]
    truncation: Option<f64>,
}

#[derive(Args)]
struct AnnotateArgs {
    /// JSON array of `{clip_id, audio_path, start_s?, end_s?}`.
    clips: PathBuf,
    /// Style stats for refinement; estimated from fresh samples if absent.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long, default_value = "pairs.jsonl")]
    data: PathBuf,
    #[arg(long, default_value = "thumbs")]
    thumbs: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

#[derive(Args)]
struct AnalyzeArgs {
    audio: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    segments: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

struct Failure {
    code: &'static str,
    message: String,
}

impl From<traum_core::Error> for Failure {
    fn from(e: traum_core::Error) -> Self {
        Failure {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl From<AnnotateError> for Failure {
    fn from(e: AnnotateError) -> Self {
        Failure {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        traum_core::Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        traum_core::Error::from(e).into()
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn missing(what: &str) -> Failure {
    Failure {
        code: "InvalidConfig",
        message: format!("{what} is required (flag or config)"),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    if !path.exists() {
        return Err(traum_core::Error::FileNotFound(path.to_path_buf()).into());
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        traum_core::Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
        .into()
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn load_config(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.training.seed = cfg.seed;
    Ok(cfg)
}

fn load_stats(flag: &Option<PathBuf>, cfg: &PipelineConfig) -> CliResult<StyleStats> {
    let path = flag
        .as_ref()
        .or(cfg.stats_path.as_ref())
        .ok_or_else(|| missing("--stats"))?;
    read_json(path)
}

fn load_model(args: &ModelArgs, cfg: &PipelineConfig) -> CliResult<(MapperParams, StyleStats)> {
    let path = args
        .params
        .as_ref()
        .or(cfg.params_path.as_ref())
        .ok_or_else(|| missing("--params"))?;
    Ok((read_json(path)?, load_stats(&args.stats, cfg)?))
}

fn cmd_sample(cfg: &PipelineConfig, a: &SampleArgs) -> CliResult {
    let styles = sample_styles(&cfg.generator, a.n, cfg.seed, a.truncation)?;
    let seq = StyleSequence::flat(1.0, styles)?;
    seq.write_file(&a.out)?;
    if let Some(dir) = &a.frames {
        let hierarchy = cfg.hierarchy();
        let ext = traum_core::styleflow::expand_to_layers(&seq, &hierarchy)?;
        render_sequence(&cfg.generator, &ext, dir, Path::new(""))?;
    }
    println!("wrote {} styles to {}", a.n, a.out.display());
    Ok(())
}

fn cmd_stats(a: &StatsArgs) -> CliResult {
    let seq = StyleSequence::read_file(&a.styles)?;
    let rows = seq
        .data()
        .to_shape((seq.len() * seq.layers(), seq.dim()))
        .map_err(|e| traum_core::Error::Shape(e.to_string()))?
        .to_owned();
    let stats = estimate_style_stats(rows.view())?;
    write_json(&a.out, &stats)?;
    println!(
        "stats over {} samples, {} dims",
        stats.n_samples(),
        stats.dim()
    );
    Ok(())
}

fn cmd_embed(cfg: &PipelineConfig, a: &EmbedArgs) -> CliResult {
    let rate = a.rate.unwrap_or(cfg.video_rate_hz);
    let seq = extract_embedding_sequence(&a.audio, &cfg.encoder, rate)?;
    seq.write_file(&a.out)?;
    println!("{} embeddings of dim {} at {rate} Hz", seq.len(), seq.dim());
    Ok(())
}

fn cmd_train(mut cfg: PipelineConfig, a: &TrainArgs) -> CliResult {
    if let Some(lr) = a.learning_rate {
        cfg.training.learning_rate = lr;
    }
    if let Some(s) = a.max_steps {
        cfg.training.max_steps = s;
    }
    if let Some(b) = a.batch_size {
        cfg.training.batch_size = b;
    }
    let stats = load_stats(&a.stats, &cfg)?;
    let dataset = PairDataset::read(&a.dataset)?;
    let mut cache = EmbeddingCache::new(cfg.encoder.clone(), cfg.pair_rate_hz);
    let batch = build_training_batch(&dataset, &mut cache, &cfg.pair_expansion)?;
    let outcome = train(&batch, &stats, &cfg.training)?;
    std::fs::create_dir_all(&a.out_dir)?;
    write_json(&a.out_dir.join("params.json"), &outcome.params)?;
    std::fs::write(a.out_dir.join("loss.csv"), outcome.loss_csv())?;
    println!(
        "{} pairs, {} rows, {} steps, final loss {:?}",
        dataset.len(),
        batch.len(),
        outcome.steps(),
        outcome.final_loss()
    );
    Ok(())
}

fn cmd_render(mut cfg: PipelineConfig, a: &RenderArgs) -> CliResult {
    if a.truncation.is_some() {
        cfg.truncation = a.truncation;
    }
    let (params, stats) = load_model(&a.model, &cfg)?;
    let manifest = render_track(&a.audio, &params, &stats, &cfg, &a.out_dir, !a.no_smooth)?;
    println!(
        "{} frames in {}",
        manifest.frames.len(),
        a.out_dir.display()
    );
    if let Some(video) = &a.video {
        if assemble_video(&a.out_dir, &manifest, video)? {
            println!("video {}", video.display());
        } else {
            eprintln!("warning: ffmpeg not found; frames and manifest only");
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SegmentReports {
    audio: SegmentReport,
    style: SegmentReport,
}

fn cmd_analyze(cfg: &PipelineConfig, a: &AnalyzeArgs) -> CliResult {
    let (params, stats) = load_model(&a.model, cfg)?;
    let segments: Option<SegmentLabeling> = a.segments.as_deref().map(read_json).transpose()?;
    let out = analyze_track(&a.audio, &params, &stats, cfg, segments.as_ref())?;
    std::fs::create_dir_all(&a.out_dir)?;
    std::fs::write(
        a.out_dir.join("audio_trajectory.csv"),
        trajectory_csv(&out.audio, out.rate_hz),
    )?;
    std::fs::write(
        a.out_dir.join("style_trajectory.csv"),
        trajectory_csv(&out.style, out.rate_hz),
    )?;
    println!(
        "{} trajectory points at {} Hz",
        out.audio.points.nrows(),
        out.rate_hz
    );
    if let (Some(audio), Some(style)) = (out.audio_segments, out.style_segments) {
        if let Some(r) = style.ratio {
            println!("style inter/intra ratio {r:?}");
        }
        write_json(
            &a.out_dir.join("segment_report.json"),
            &SegmentReports { audio, style },
        )?;
    }
    Ok(())
}

fn read_clips(path: &Path) -> CliResult<Vec<ClipDescriptor>> {
    let mut clips: Vec<ClipDescriptor> = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for c in &mut clips {
        if c.audio_path.is_relative() {
            c.audio_path = base.join(&c.audio_path);
        }
    }
    Ok(clips)
}

const STATS_SAMPLES: usize = 10_000;

fn cmd_annotate(cfg: &PipelineConfig, a: &AnnotateArgs) -> CliResult {
    let clips = read_clips(&a.clips)?;
    let stats = match &a.stats {
        Some(_) => load_stats(&a.stats, cfg)?,
        None => match &cfg.stats_path {
            Some(p) => read_json(p)?,
            None => {
                let samples = sample_styles(&cfg.generator, STATS_SAMPLES, cfg.seed, None)?;
                estimate_style_stats(samples.view())?
            }
        },
    };
    let store = Arc::new(PairStore::open(&a.data)?);
    let ctx = Arc::new(AnnotationContext::new(
        cfg.generator.clone(),
        stats,
        &a.thumbs,
        store,
    )?);
    // Validates the clip list before the port is opened.
    traum_annotate::new_session("check", clips.clone(), ctx.clone(), cfg.seed, "")?;

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        println!("{} clips in {}", clips.len(), a.clips.display());
        traum_annotate::serve(listener, AppState::new(ctx, cfg.seed), async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let cfg = load_config(&cli)?;
    match &cli.cmd {
        Cmd::Sample(a) => cmd_sample(&cfg, a),
        Cmd::Stats(a) => cmd_stats(a),
        Cmd::Embed(a) => cmd_embed(&cfg, a),
        Cmd::Train(a) => cmd_train(cfg, a),
        Cmd::Render(a) => cmd_render(cfg, a),
        Cmd::Annotate(a) => cmd_annotate(&cfg, a),
        Cmd::Analyze(a) => cmd_analyze(&cfg, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message);
            ExitCode::FAILURE
        }
    }
}
