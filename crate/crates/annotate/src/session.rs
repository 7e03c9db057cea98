//! Labeling sessions: one clip at a time, candidate batches drawn from the
//! generator, and a pair recorded when the annotator picks a candidate.

use std::collections::{HashSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use traum_core::dataset::PairRecord;
use traum_core::mapper::StyleStats;
use traum_core::render::{render_sequence, sample_styles, GeneratorAdapter};
use traum_core::styleflow::StyleSequence;

use crate::error::{AnnotateError, Result};
use crate::store::PairStore;

pub const DEFAULT_BATCH_SIZE: usize = 200;
pub const DEFAULT_SPREAD: f64 = 0.3;
pub const DEFAULT_CLIP_S: f64 = 10.0;
pub const DEFAULT_THUMB_RESOLUTION: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipDescriptor {
    pub clip_id: String,
    pub audio_path: PathBuf,
    #[serde(default)]
    pub start_s: f64,
    #[serde(default = "default_end")]
    pub end_s: f64,
}

fn default_end() -> f64 {
    DEFAULT_CLIP_S
}

impl ClipDescriptor {
    pub fn new(clip_id: impl Into<String>, audio_path: impl Into<PathBuf>) -> Self {
        ClipDescriptor {
            clip_id: clip_id.into(),
            audio_path: audio_path.into(),
            start_s: 0.0,
            end_s: DEFAULT_CLIP_S,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.clip_id.is_empty() {
            return Err(AnnotateError::InvalidRequest(
                "clip_id must not be empty".into(),
            ));
        }
        if !(self.start_s.is_finite() && self.end_s.is_finite() && self.end_s > self.start_s) {
            return Err(AnnotateError::InvalidRequest(format!(
                "clip {} has empty span [{}, {})",
                self.clip_id, self.start_s, self.end_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    Random,
    Refine,
}

/// Styles shown together, with one thumbnail per row of `styles`.
#[derive(Debug, Clone)]
pub struct CandidateBatch {
    pub batch_id: usize,
    pub seed: u64,
    pub mode: CandidateMode,
    pub styles: Array2<f64>,
    pub thumbnails: Vec<PathBuf>,
}

impl CandidateBatch {
    pub fn len(&self) -> usize {
        self.styles.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn style(&self, index: usize) -> Result<ArrayView1<'_, f64>> {
        if index >= self.len() {
            return Err(AnnotateError::CandidateOutOfRange {
                batch_id: self.batch_id,
                index,
                len: self.len(),
            });
        }
        Ok(self.styles.row(index))
    }
}

/// Shared by every session of a service.
#[derive(Debug)]
pub struct AnnotationContext {
    pub adapter: GeneratorAdapter,
    pub stats: StyleStats,
    pub thumb_root: PathBuf,
    pub thumb_resolution: u32,
    pub store: Arc<PairStore>,
}

impl AnnotationContext {
    pub fn new(
        adapter: GeneratorAdapter,
        stats: StyleStats,
        thumb_root: impl Into<PathBuf>,
        store: Arc<PairStore>,
    ) -> Result<Self> {
        adapter.validate()?;
        if stats.dim() != adapter.style_dim {
            return Err(traum_core::Error::DimensionMismatch {
                expected: adapter.style_dim,
                found: stats.dim(),
            }
            .into());
        }
        let thumb_resolution = DEFAULT_THUMB_RESOLUTION.min(adapter.resolution);
        Ok(AnnotationContext {
            adapter,
            stats,
            thumb_root: thumb_root.into(),
            thumb_resolution,
            store,
        })
    }
}

#[derive(Debug)]
pub struct AnnotationSession {
    id: String,
    ctx: Arc<AnnotationContext>,
    annotator: String,
    queue: VecDeque<ClipDescriptor>,
    total: usize,
    done: HashSet<String>,
    history: Vec<CandidateBatch>,
    seed: u64,
}

fn batch_seed(base: u64, batch_id: usize) -> u64 {
    // splitmix64 finalizer; a bijection, so distinct batches get distinct seeds.
    let mut x = (base ^ batch_id as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn same_bits(a: ArrayView1<f64>, b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

pub fn new_session(
    id: impl Into<String>,
    clips: Vec<ClipDescriptor>,
    ctx: Arc<AnnotationContext>,
    seed: u64,
    annotator: impl Into<String>,
) -> Result<AnnotationSession> {
    if clips.is_empty() {
        return Err(AnnotateError::EmptyClipList);
    }
    let mut seen = HashSet::new();
    for c in &clips {
        c.validate()?;
        if !seen.insert(c.clip_id.clone()) {
            return Err(AnnotateError::DuplicateClipId(c.clip_id.clone()));
        }
    }
    Ok(AnnotationSession {
        id: id.into(),
        ctx,
        annotator: annotator.into(),
        total: clips.len(),
        queue: clips.into(),
        done: HashSet::new(),
        history: Vec::new(),
        seed,
    })
}

impl AnnotationSession {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn context(&self) -> &AnnotationContext {
        &self.ctx
    }

    pub fn active_clip(&self) -> Option<&ClipDescriptor> {
        self.queue.front()
    }

    pub fn remaining(&self) -> usize {
        self.queue.len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn labeled(&self) -> usize {
        self.done.len()
    }

    pub fn history(&self) -> &[CandidateBatch] {
        &self.history
    }

    pub fn batch(&self, batch_id: usize) -> Result<&CandidateBatch> {
        self.history
            .get(batch_id)
            .ok_or(AnnotateError::UnknownBatch(batch_id))
    }

    pub fn clip(&self, clip_id: &str) -> Option<&ClipDescriptor> {
        self.queue.iter().find(|c| c.clip_id == clip_id)
    }

    fn thumb_dir(&self, batch_id: usize) -> PathBuf {
        self.ctx
            .thumb_root
            .join(&self.id)
            .join(format!("batch_{batch_id:04}"))
    }

    fn push_batch(
        &mut self,
        mode: CandidateMode,
        seed: u64,
        styles: Array2<f64>,
        resolution: Option<u32>,
    ) -> Result<&CandidateBatch> {
        let batch_id = self.history.len();
        let active = self.active_clip().ok_or(AnnotateError::NoActiveClip)?;
        let adapter = self
            .ctx
            .adapter
            .with_resolution(resolution.unwrap_or(self.ctx.thumb_resolution));
        let n = styles.nrows();
        let layers = adapter.n_layers;
        let per_layer = styles
            .view()
            .insert_axis(Axis(1))
            .broadcast((n, layers, styles.ncols()))
            .expect("broadcast over layers")
            .to_owned();
        let seq = StyleSequence::extended(1.0, per_layer)?;
        let dir = self.thumb_dir(batch_id);
        let manifest = render_sequence(&adapter, &seq, &dir, &active.audio_path)?;
        let thumbnails = manifest.frames.iter().map(|f| dir.join(&f.file)).collect();
        self.history.push(CandidateBatch {
            batch_id,
            seed,
            mode,
            styles,
            thumbnails,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    /// Fresh styles from the generator's sampler, untruncated.
    pub fn sample_candidates(
        &mut self,
        n: usize,
        resolution: Option<u32>,
    ) -> Result<&CandidateBatch> {
        if self.active_clip().is_none() {
            return Err(AnnotateError::NoActiveClip);
        }
        let seed = batch_seed(self.seed, self.history.len());
        let styles = sample_styles(&self.ctx.adapter, n, seed, None)?;
        self.push_batch(CandidateMode::Random, seed, styles, resolution)
    }

    /// `anchor + spread·σ⊙g` per candidate, `g` standard normal.
    pub fn refine_candidates(
        &mut self,
        anchor: ArrayView1<f64>,
        n: usize,
        spread: f64,
        resolution: Option<u32>,
    ) -> Result<&CandidateBatch> {
        if self.active_clip().is_none() {
            return Err(AnnotateError::NoActiveClip);
        }
        let d = self.ctx.stats.dim();
        if anchor.len() != d {
            return Err(AnnotateError::InvalidAnchor(format!(
                "anchor has {} entries, styles have {d}",
                anchor.len()
            )));
        }
        if anchor.iter().any(|v| !v.is_finite()) {
            return Err(AnnotateError::InvalidAnchor(
                "anchor has a non-finite entry".into(),
            ));
        }
        if !(spread.is_finite() && spread >= 0.0) {
            return Err(AnnotateError::InvalidRequest(format!(
                "spread {spread} must be finite and non-negative"
            )));
        }
        if n == 0 {
            return Err(AnnotateError::InvalidRequest("n must be at least 1".into()));
        }
        let seed = batch_seed(self.seed, self.history.len());
        let styles = refine_styles(anchor, self.ctx.stats.sigma(), n, spread, seed);
        if styles.iter().any(|v| !v.is_finite()) {
            return Err(AnnotateError::InvalidAnchor(
                "refined candidates overflow".into(),
            ));
        }
        self.push_batch(CandidateMode::Refine, seed, styles, resolution)
    }

    /// Records `style` for `clip_id`. The style must match, bit for bit, a
    /// candidate from this session's history.
    pub fn record_pair(&mut self, clip_id: &str, style: &[f64]) -> Result<PairRecord> {
        if self.done.contains(clip_id) || self.ctx.store.is_labeled(clip_id) {
            return Err(AnnotateError::ClipAlreadyLabeled(clip_id.to_string()));
        }
        let active = self.active_clip().ok_or(AnnotateError::NoActiveClip)?;
        if active.clip_id != clip_id {
            return Err(AnnotateError::NotActiveClip {
                expected: active.clip_id.clone(),
                got: clip_id.to_string(),
            });
        }
        let served = self
            .history
            .iter()
            .any(|b| b.styles.outer_iter().any(|row| same_bits(row, style)));
        if !served {
            return Err(AnnotateError::UnknownStyle);
        }
        let record = PairRecord {
            clip_id: active.clip_id.clone(),
            audio_path: active.audio_path.clone(),
            start_s: active.start_s,
            end_s: active.end_s,
            style: style.to_vec(),
            annotator: self.annotator.clone(),
            created_at: Utc::now(),
        };
        record.validate()?;
        let record = self.ctx.store.append(record)?;
        self.done.insert(record.clip_id.clone());
        self.queue.pop_front();
        Ok(record)
    }

    /// Records candidate `index` of batch `batch_id` for the active clip.
    pub fn record_candidate(
        &mut self,
        clip_id: Option<&str>,
        batch_id: usize,
        index: usize,
    ) -> Result<PairRecord> {
        let style = self.batch(batch_id)?.style(index)?.to_vec();
        let clip_id = match clip_id {
            Some(c) => c.to_string(),
            None => self
                .active_clip()
                .ok_or(AnnotateError::NoActiveClip)?
                .clip_id
                .clone(),
        };
        self.record_pair(&clip_id, &style)
    }

    /// Moves the active clip to the end of the queue.
    pub fn skip(&mut self) -> Result<&ClipDescriptor> {
        let clip = self.queue.pop_front().ok_or(AnnotateError::NoActiveClip)?;
        self.queue.push_back(clip);
        Ok(self.queue.front().expect("nonempty"))
    }

    pub fn thumbnail(&self, batch_id: usize, file: &str) -> Result<&Path> {
        let batch = self.batch(batch_id)?;
        batch
            .thumbnails
            .iter()
            .find(|p| p.file_name().is_some_and(|f| f == file))
            .map(PathBuf::as_path)
            .ok_or_else(|| AnnotateError::InvalidRequest(format!("no thumbnail {file}")))
    }
}

pub fn refine_styles(
    anchor: ArrayView1<f64>,
    sigma: &Array1<f64>,
    n: usize,
    spread: f64,
    seed: u64,
) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = anchor.len();
    Array2::from_shape_fn((n, d), |(_, j)| {
        let g: f64 = rng.sample(StandardNormal);
        anchor[j] + spread * sigma[j] * g
    })
}
