//! End-to-end wiring used by the command line: audio → embeddings → styles
//! → frames, plus the trajectory/segment analysis.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    segment_similarity, trajectory_pair, SegmentLabeling, SegmentReport, Trajectory2D,
};
use crate::dataset::PairExpansion;
use crate::embedding::{
    extract_embedding_sequence, AudioEmbeddingSequence, EncoderSpec, ANALYSIS_RATE_HZ,
    VIDEO_RATE_HZ,
};
use crate::error::{Error, Result};
use crate::mapper::{MapperParams, StyleStats, TrainingConfig};
use crate::render::{render_sequence, FrameManifest, GeneratorAdapter};
use crate::styleflow::{
    expand_to_layers, map_sequence, smooth_styles, truncate, HierarchyConfig, SmoothingConfig,
    StyleSequence,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub encoder: EncoderSpec,
    pub generator: GeneratorAdapter,
    pub params_path: Option<PathBuf>,
    pub stats_path: Option<PathBuf>,
    pub video_rate_hz: f64,
    pub analysis_rate_hz: f64,
    pub smoothing: SmoothingConfig,
    /// Defaults to the standard split for `generator.n_layers`.
    pub hierarchy: Option<HierarchyConfig>,
    /// Pull styles toward the style mean by this factor before rendering;
    /// off by default.
    pub truncation: Option<f64>,
    pub training: TrainingConfig,
    pub pair_expansion: PairExpansion,
    /// Rate at which clip embeddings are extracted for training pairs.
    pub pair_rate_hz: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            encoder: EncoderSpec::default(),
            generator: GeneratorAdapter::default(),
            params_path: None,
            stats_path: None,
            video_rate_hz: VIDEO_RATE_HZ,
            analysis_rate_hz: ANALYSIS_RATE_HZ,
            smoothing: SmoothingConfig::default(),
            hierarchy: None,
            truncation: None,
            training: TrainingConfig::default(),
            pair_expansion: PairExpansion::default(),
            pair_rate_hz: VIDEO_RATE_HZ,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn hierarchy(&self) -> HierarchyConfig {
        self.hierarchy
            .clone()
            .unwrap_or_else(|| HierarchyConfig::standard(self.generator.n_layers))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("video_rate_hz", self.video_rate_hz),
            ("analysis_rate_hz", self.analysis_rate_hz),
            ("pair_rate_hz", self.pair_rate_hz),
        ] {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        self.encoder.validate()?;
        self.generator.validate()?;
        self.training.validate()?;
        let h = self.hierarchy();
        h.validate()?;
        if h.n_layers != self.generator.n_layers {
            return Err(Error::InvalidConfig(format!(
                "hierarchy covers {} layers, generator has {}",
                h.n_layers, self.generator.n_layers
            )));
        }
        Ok(())
    }
}

/// Per-frame styles for an embedding sequence, expanded to the generator's
/// layers and optionally smoothed.
pub fn stylize(
    audio: &AudioEmbeddingSequence,
    params: &MapperParams,
    stats: &StyleStats,
    cfg: &PipelineConfig,
    smooth: bool,
) -> Result<StyleSequence> {
    let mut flat = map_sequence(audio, params, stats)?;
    if let Some(psi) = cfg.truncation {
        flat = truncate(&flat, stats.mu().view(), psi)?;
    }
    let hierarchy = cfg.hierarchy();
    let extended = expand_to_layers(&flat, &hierarchy)?;
    if smooth {
        smooth_styles(&extended, &hierarchy, &cfg.smoothing)
    } else {
        Ok(extended)
    }
}

pub fn render_track(
    audio_path: &Path,
    params: &MapperParams,
    stats: &StyleStats,
    cfg: &PipelineConfig,
    out_dir: &Path,
    smooth: bool,
) -> Result<FrameManifest> {
    cfg.validate()?;
    let audio = extract_embedding_sequence(audio_path, &cfg.encoder, cfg.video_rate_hz)?;
    let styles = stylize(&audio, params, stats, cfg, smooth)?;
    render_sequence(&cfg.generator, &styles, out_dir, audio_path)
}

#[derive(Debug, Clone)]
pub struct TrackAnalysis {
    pub rate_hz: f64,
    pub audio: Trajectory2D,
    pub style: Trajectory2D,
    pub audio_segments: Option<SegmentReport>,
    pub style_segments: Option<SegmentReport>,
}

/// Trajectories and segment reports at the analysis rate. Styles are the
/// unsmoothed per-frame map outputs.
pub fn analyze_embeddings(
    audio: &AudioEmbeddingSequence,
    params: &MapperParams,
    stats: &StyleStats,
    segments: Option<&SegmentLabeling>,
) -> Result<TrackAnalysis> {
    let styles = map_sequence(audio, params, stats)?;
    let (a, s) = trajectory_pair(audio, &styles)?;
    let (audio_segments, style_segments) = match segments {
        Some(lab) => (
            Some(segment_similarity(
                audio.data().view(),
                lab,
                audio.rate_hz(),
            )?),
            Some(segment_similarity(styles.layer(0), lab, styles.rate_hz())?),
        ),
        None => (None, None),
    };
    Ok(TrackAnalysis {
        rate_hz: audio.rate_hz(),
        audio: a,
        style: s,
        audio_segments,
        style_segments,
    })
}

pub fn analyze_track(
    audio_path: &Path,
    params: &MapperParams,
    stats: &StyleStats,
    cfg: &PipelineConfig,
    segments: Option<&SegmentLabeling>,
) -> Result<TrackAnalysis> {
    cfg.encoder.validate()?;
    let audio = extract_embedding_sequence(audio_path, &cfg.encoder, cfg.analysis_rate_hz)?;
    analyze_embeddings(&audio, params, stats, segments)
}
