//! Fixed-rate audio embedding sequences and the encoders that produce them.
//!
//! Embedding `t` of a sequence is centered at `t / rate_hz` seconds and
//! summarizes a `window_s` context around that instant; the parts of a
//! window that fall outside the track are treated as silence.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::MonoAudio;
use crate::container::{ContainerKind, RawContainer};
use crate::error::{Error, Result};

/// Audio context covered by one embedding, in seconds.
pub const DEFAULT_WINDOW_S: f64 = 3.7;
/// Embeddings per second at video rate.
pub const VIDEO_RATE_HZ: f64 = 30.0;
/// Embeddings per second for trajectory analysis (one per third of a second).
pub const ANALYSIS_RATE_HZ: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioEmbeddingSequence {
    rate_hz: f64,
    window_s: f64,
    data: Array2<f64>,
}

impl AudioEmbeddingSequence {
    pub fn new(rate_hz: f64, window_s: f64, data: Array2<f64>) -> Result<Self> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rate_hz {rate_hz} must be positive"
            )));
        }
        if !(window_s > 0.0 && window_s.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "window_s {window_s} must be positive"
            )));
        }
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::shape(
                "embedding sequence needs at least one frame and one dim",
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("audio embeddings".into()));
        }
        Ok(AudioEmbeddingSequence {
            rate_hz,
            window_s,
            data,
        })
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn window_s(&self) -> f64 {
        self.window_s
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn center_s(&self, t: usize) -> f64 {
        t as f64 / self.rate_hz
    }

    pub fn to_container(&self) -> RawContainer {
        RawContainer {
            kind: ContainerKind::Embedding,
            frames: self.len() as u64,
            layers: 1,
            dim: self.dim() as u64,
            rate_hz: self.rate_hz,
            window_s: self.window_s,
            values: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        self.to_container().write_file(path)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let raw = RawContainer::read_file(path)?;
        if raw.kind != ContainerKind::Embedding {
            return Err(Error::format(path, "expected a TREM embedding container"));
        }
        let data = Array2::from_shape_vec(
            (raw.frames as usize, raw.dim as usize),
            raw.values.iter().map(|&v| v as f64).collect(),
        )
        .map_err(|e| Error::format(path, e.to_string()))?;
        AudioEmbeddingSequence::new(raw.rate_hz, raw.window_s, data)
    }
}

/// `ceil(duration · rate)`, tolerant of float noise just above an integer.
pub fn frame_count(duration_s: f64, rate_hz: f64) -> usize {
    let x = duration_s * rate_hz;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// A TREM file, or a directory holding `<audio stem>.trem` files.
    PrecomputedFile,
    /// An executable invoked as
    /// `path <mono.wav> <rate_hz> <window_s> <out.trem>`; it must write a
    /// TREM file with `ceil(duration · rate_hz)` rows of its penultimate
    /// activation.
    ExternalModel,
    /// Built-in log band-energy features; needs no model.
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    #[serde(default)]
    pub path: PathBuf,
    pub d_a: usize,
    #[serde(default = "default_window")]
    pub window_s: f64,
    #[serde(default = "default_hop")]
    pub hop_s: f64,
}

fn default_window() -> f64 {
    DEFAULT_WINDOW_S
}

fn default_hop() -> f64 {
    0.01
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            kind: EncoderKind::Spectral,
            path: PathBuf::new(),
            d_a: 64,
            window_s: DEFAULT_WINDOW_S,
            hop_s: default_hop(),
        }
    }
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_a == 0 {
            return Err(Error::InvalidConfig(
                "encoder d_a must be at least 1".into(),
            ));
        }
        if !(self.hop_s > 0.0) {
            return Err(Error::InvalidConfig(
                "encoder hop_s must be positive".into(),
            ));
        }
        if !(self.window_s >= self.hop_s) {
            return Err(Error::InvalidConfig(
                "encoder window_s must be at least hop_s".into(),
            ));
        }
        Ok(())
    }

    fn precomputed_path(&self, audio_path: &Path) -> PathBuf {
        if self.path.is_dir() {
            let stem = audio_path
                .file_stem()
                .map(|s| s.to_os_string())
                .unwrap_or_default();
            let mut name = stem;
            name.push(".trem");
            self.path.join(name)
        } else {
            self.path.clone()
        }
    }
}

/// Produces the embedding sequence for `audio_path` at `rate_hz`.
///
/// Precomputed files are returned verbatim, including their stored rate.
pub fn extract_embedding_sequence(
    audio_path: &Path,
    spec: &EncoderSpec,
    rate_hz: f64,
) -> Result<AudioEmbeddingSequence> {
    spec.validate()?;
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "rate_hz {rate_hz} must be positive"
        )));
    }
    match spec.kind {
        EncoderKind::PrecomputedFile => {
            let path = spec.precomputed_path(audio_path);
            let seq = AudioEmbeddingSequence::read_file(&path)?;
            if seq.dim() != spec.d_a {
                return Err(Error::DimensionMismatch {
                    expected: spec.d_a,
                    found: seq.dim(),
                });
            }
            Ok(seq)
        }
        EncoderKind::Spectral => {
            let audio = MonoAudio::read_wav(audio_path)?;
            spectral_embeddings(&audio, spec, rate_hz)
        }
        EncoderKind::ExternalModel => {
            let audio = MonoAudio::read_wav(audio_path)?;
            external_embeddings(&audio, spec, rate_hz)
        }
    }
}

fn external_embeddings(
    audio: &MonoAudio,
    spec: &EncoderSpec,
    rate_hz: f64,
) -> Result<AudioEmbeddingSequence> {
    if !spec.path.exists() {
        return Err(Error::FileNotFound(spec.path.clone()));
    }
    let dir = tempfile::tempdir()?;
    let wav = dir.path().join("mono.wav");
    let out = dir.path().join("out.trem");
    audio.write_wav(&wav)?;
    let output = Command::new(&spec.path)
        .arg(&wav)
        .arg(rate_hz.to_string())
        .arg(spec.window_s.to_string())
        .arg(&out)
        .output()
        .map_err(|e| Error::EncoderFailure(format!("{}: {e}", spec.path.display())))?;
    if !output.status.success() {
        return Err(Error::EncoderFailure(format!(
            "{} exited with {}: {}",
            spec.path.display(),
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let seq = AudioEmbeddingSequence::read_file(&out).map_err(|e| match e {
        Error::FileNotFound(_) => Error::EncoderFailure("encoder wrote no output file".into()),
        other => other,
    })?;
    if seq.dim() != spec.d_a {
        return Err(Error::DimensionMismatch {
            expected: spec.d_a,
            found: seq.dim(),
        });
    }
    let expected = frame_count(audio.duration_s(), rate_hz);
    if seq.len() != expected {
        return Err(Error::EncoderFailure(format!(
            "encoder returned {} frames, expected {expected}",
            seq.len()
        )));
    }
    Ok(seq)
}

const LOW_HZ: f64 = 30.0;
const POWER_FLOOR: f64 = 1e-10;

/// Log band energies from a Hann-windowed STFT, averaged over each
/// embedding window. `d_a` bands are spaced logarithmically between 30 Hz
/// and Nyquist.
pub fn spectral_embeddings(
    audio: &MonoAudio,
    spec: &EncoderSpec,
    rate_hz: f64,
) -> Result<AudioEmbeddingSequence> {
    spec.validate()?;
    let sr = audio.sample_rate as f64;
    let n_out = frame_count(audio.duration_s(), rate_hz);
    if n_out == 0 {
        return Err(Error::EncoderFailure("audio is empty".into()));
    }
    let frame_len = ((0.046 * sr).round() as usize).next_power_of_two().max(64);
    let hop = ((spec.hop_s * sr).round() as usize).max(1);
    let n_frames = audio.samples.len().div_ceil(hop).max(1);
    let bands = spec.d_a;

    let n_bins = frame_len / 2;
    let high_hz = sr / 2.0;
    let log_span = (high_hz / LOW_HZ).ln();
    let band_of: Vec<usize> = (1..=n_bins)
        .map(|k| {
            let f = k as f64 * sr / frame_len as f64;
            if f <= LOW_HZ || log_span <= 0.0 {
                0
            } else {
                (((f / LOW_HZ).ln() / log_span * bands as f64) as usize).min(bands - 1)
            }
        })
        .collect();
    let hann: Vec<f64> = (0..frame_len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / frame_len as f64).cos())
        .collect();

    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_len);
    // prefix[f] = sum of band powers of frames 0..f
    let mut prefix = Array2::<f64>::zeros((n_frames + 1, bands));
    let mut buf = vec![Complex::new(0.0, 0.0); frame_len];
    let half = frame_len as isize / 2;
    for f in 0..n_frames {
        let center = (f * hop) as isize;
        for (i, slot) in buf.iter_mut().enumerate() {
            let idx = center - half + i as isize;
            let x = if idx >= 0 && (idx as usize) < audio.samples.len() {
                audio.samples[idx as usize] as f64
            } else {
                0.0
            };
            *slot = Complex::new(x * hann[i], 0.0);
        }
        fft.process(&mut buf);
        let mut power = vec![0.0; bands];
        for (k, &band) in band_of.iter().enumerate() {
            power[band] += buf[k + 1].norm_sqr() / frame_len as f64;
        }
        for b in 0..bands {
            prefix[[f + 1, b]] = prefix[[f, b]] + power[b];
        }
    }

    let frames_per_s = sr / hop as f64;
    let mut data = Array2::<f64>::zeros((n_out, bands));
    for (t, mut row) in data.outer_iter_mut().enumerate() {
        let c = t as f64 / rate_hz;
        let first = ((c - spec.window_s / 2.0) * frames_per_s).ceil() as i64;
        let last = ((c + spec.window_s / 2.0) * frames_per_s).ceil() as i64 - 1;
        let nominal = (last - first + 1).max(1) as f64;
        let lo = first.clamp(0, n_frames as i64) as usize;
        let hi = (last + 1).clamp(0, n_frames as i64) as usize;
        for b in 0..bands {
            let sum = if hi > lo {
                prefix[[hi, b]] - prefix[[lo, b]]
            } else {
                0.0
            };
            row[b] = (POWER_FLOOR + (sum / nominal).max(0.0)).ln();
        }
    }
    AudioEmbeddingSequence::new(rate_hz, spec.window_s, data)
}

/// Mean of all embeddings whose center time lies in `[start_s, end_s)`.
pub fn pool_clip_embedding(
    seq: &AudioEmbeddingSequence,
    start_s: f64,
    end_s: f64,
) -> Result<Array1<f64>> {
    if !(start_s >= 0.0 && start_s < end_s) {
        return Err(Error::InvalidConfig(format!(
            "clip range [{start_s}, {end_s}) is invalid"
        )));
    }
    let mut acc = Array1::<f64>::zeros(seq.dim());
    let mut count = 0usize;
    for (t, row) in seq.data.outer_iter().enumerate() {
        let c = seq.center_s(t);
        if c >= start_s && c < end_s {
            acc += &row;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyRange { start_s, end_s });
    }
    Ok(acc / count as f64)
}

/// Embedding rows nearest to `start_s, start_s + hop_s, …` (all `< end_s`).
pub fn sample_clip_rows(
    seq: &AudioEmbeddingSequence,
    start_s: f64,
    end_s: f64,
    hop_s: f64,
) -> Result<Vec<ArrayView1<'_, f64>>> {
    if !(start_s >= 0.0 && start_s < end_s) {
        return Err(Error::InvalidConfig(format!(
            "clip range [{start_s}, {end_s}) is invalid"
        )));
    }
    if !(hop_s > 0.0) {
        return Err(Error::InvalidConfig("hop_s must be positive".into()));
    }
    let last = seq.len() - 1;
    let mut rows = Vec::new();
    let mut k = 0usize;
    loop {
        let c = start_s + k as f64 * hop_s;
        if c >= end_s {
            break;
        }
        let idx = ((c * seq.rate_hz).round() as usize).min(last);
        rows.push(seq.data.row(idx));
        k += 1;
    }
    Ok(rows)
}

/// Memoizes extraction per audio path.
#[derive(Debug)]
pub struct EmbeddingCache {
    spec: EncoderSpec,
    rate_hz: f64,
    entries: HashMap<PathBuf, Arc<AudioEmbeddingSequence>>,
}

impl EmbeddingCache {
    pub fn new(spec: EncoderSpec, rate_hz: f64) -> Self {
        EmbeddingCache {
            spec,
            rate_hz,
            entries: HashMap::new(),
        }
    }

    pub fn get(&mut self, audio_path: &Path) -> Result<Arc<AudioEmbeddingSequence>> {
        if let Some(seq) = self.entries.get(audio_path) {
            return Ok(seq.clone());
        }
        let seq = Arc::new(extract_embedding_sequence(
            audio_path,
            &self.spec,
            self.rate_hz,
        )?);
        self.entries.insert(audio_path.to_path_buf(), seq.clone());
        Ok(seq)
    }
}
