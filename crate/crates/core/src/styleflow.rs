//! Audio embedding sequence → style sequence, per-layer expansion, and
//! hierarchy-dependent temporal smoothing.

use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{ContainerKind, RawContainer};
use crate::embedding::AudioEmbeddingSequence;
use crate::error::{Error, Result};
use crate::mapper::{forward_map_rows, MapperParams, StyleStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Flat,
    Extended,
}

/// Time-ordered styles stored as `T × L × D_s`; flat sequences have `L = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleSequence {
    rate_hz: f64,
    layout: Layout,
    data: Array3<f64>,
}

impl StyleSequence {
    pub fn flat(rate_hz: f64, data: Array2<f64>) -> Result<Self> {
        let (t, d) = data.dim();
        let data = data
            .into_shape((t, 1, d))
            .map_err(|e| Error::shape(e.to_string()))?;
        Self::build(rate_hz, Layout::Flat, data)
    }

    pub fn extended(rate_hz: f64, data: Array3<f64>) -> Result<Self> {
        Self::build(rate_hz, Layout::Extended, data)
    }

    fn build(rate_hz: f64, layout: Layout, data: Array3<f64>) -> Result<Self> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rate_hz {rate_hz} must be positive"
            )));
        }
        let (t, l, d) = data.dim();
        if t == 0 || l == 0 || d == 0 {
            return Err(Error::shape(format!(
                "style sequence shape {t}x{l}x{d} has an empty axis"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("style sequence".into()));
        }
        Ok(StyleSequence {
            rate_hz,
            layout,
            data,
        })
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layers(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn dim(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// One frame, `L × D_s`.
    pub fn frame(&self, t: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), t)
    }

    /// All frames of one layer, `T × D_s`.
    pub fn layer(&self, l: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(1), l)
    }

    /// `T × (L·D_s)` view of every frame, layers concatenated.
    pub fn frames_matrix(&self) -> Array2<f64> {
        let (t, l, d) = self.data.dim();
        self.data
            .as_standard_layout()
            .into_owned()
            .into_shape((t, l * d))
            .expect("standard layout")
    }

    pub fn to_container(&self) -> RawContainer {
        RawContainer {
            kind: ContainerKind::Style,
            frames: self.len() as u64,
            layers: self.layers() as u64,
            dim: self.dim() as u64,
            rate_hz: self.rate_hz,
            window_s: 0.0,
            values: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        self.to_container().write_file(path)
    }

    /// Reads a TRST file. Files with one layer load as flat sequences.
    pub fn read_file(path: &Path) -> Result<Self> {
        let raw = RawContainer::read_file(path)?;
        Self::from_container(raw, path)
    }

    pub fn from_container(raw: RawContainer, origin: &Path) -> Result<Self> {
        if raw.kind != ContainerKind::Style {
            return Err(Error::format(origin, "expected a TRST style container"));
        }
        let data = Array3::from_shape_vec(
            (raw.frames as usize, raw.layers as usize, raw.dim as usize),
            raw.values.iter().map(|&v| v as f64).collect(),
        )
        .map_err(|e| Error::format(origin, e.to_string()))?;
        let layout = if raw.layers == 1 {
            Layout::Flat
        } else {
            Layout::Extended
        };
        StyleSequence::build(raw.rate_hz, layout, data)
    }
}

/// Partition of generator layers into coarse, middle and fine groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub n_layers: usize,
    pub coarse: Range<usize>,
    pub middle: Range<usize>,
    pub fine: Range<usize>,
}

impl HierarchyConfig {
    /// Coarse = layers 0–3, middle = 4–7, fine = the rest, truncated to
    /// `n_layers`.
    pub fn standard(n_layers: usize) -> Self {
        let a = n_layers.min(4);
        let b = n_layers.min(8);
        HierarchyConfig {
            n_layers,
            coarse: 0..a,
            middle: a..b,
            fine: b..n_layers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::InvalidConfig("n_layers must be at least 1".into()));
        }
        let mut covered = vec![0u8; self.n_layers];
        for r in self.groups() {
            if r.start > r.end || r.end > self.n_layers {
                return Err(Error::InvalidConfig(format!(
                    "layer range {r:?} lies outside 0..{}",
                    self.n_layers
                )));
            }
            for l in r.clone() {
                covered[l] += 1;
            }
        }
        if let Some(l) = covered.iter().position(|&c| c != 1) {
            return Err(Error::InvalidConfig(format!(
                "layer {l} is covered {} times; groups must partition 0..{}",
                covered[l], self.n_layers
            )));
        }
        Ok(())
    }

    pub fn groups(&self) -> [&Range<usize>; 3] {
        [&self.coarse, &self.middle, &self.fine]
    }
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig::standard(18)
    }
}

/// Averaging window lengths in seconds, per layer group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub coarse_window_s: f64,
    pub middle_window_s: f64,
    pub fine_window_s: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            coarse_window_s: 3.0,
            middle_window_s: 2.0,
            fine_window_s: 0.3,
        }
    }
}

impl SmoothingConfig {
    pub fn windows_s(&self) -> [f64; 3] {
        [
            self.coarse_window_s,
            self.middle_window_s,
            self.fine_window_s,
        ]
    }

    /// Frame counts for coarse, middle and fine groups at `rate_hz`.
    pub fn window_frames(&self, rate_hz: f64) -> Result<[usize; 3]> {
        let [c, m, f] = self.windows_s();
        Ok([
            window_frames(c, rate_hz)?,
            window_frames(m, rate_hz)?,
            window_frames(f, rate_hz)?,
        ])
    }
}

/// `round(window_s · rate_hz)`, bumped to the next odd number when even.
pub fn window_frames(window_s: f64, rate_hz: f64) -> Result<usize> {
    if !(window_s > 0.0 && window_s.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "smoothing window {window_s} s must be positive"
        )));
    }
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "rate_hz {rate_hz} must be positive"
        )));
    }
    let n = (window_s * rate_hz).round() as usize;
    Ok(if n.is_multiple_of(2) { n + 1 } else { n })
}

/// Applies the mapper to every frame; no temporal mixing.
pub fn map_sequence(
    seq: &AudioEmbeddingSequence,
    params: &MapperParams,
    stats: &StyleStats,
) -> Result<StyleSequence> {
    let styles = forward_map_rows(seq.data().view(), params, stats)?;
    StyleSequence::flat(seq.rate_hz(), styles)
}

/// Pulls every style toward `mean` by factor `psi` in (0, 1]; `psi = 1`
/// returns the input unchanged.
pub fn truncate(seq: &StyleSequence, mean: ArrayView1<f64>, psi: f64) -> Result<StyleSequence> {
    if !(psi > 0.0 && psi <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "truncation {psi} must lie in (0, 1]"
        )));
    }
    if mean.len() != seq.dim() {
        return Err(Error::shape(
            "truncation mean length differs from style dimension",
        ));
    }
    if psi == 1.0 {
        return Ok(seq.clone());
    }
    let mut out = seq.clone();
    for mut frame in out.data.outer_iter_mut() {
        for mut layer in frame.outer_iter_mut() {
            for (v, &m) in layer.iter_mut().zip(mean.iter()) {
                *v = m + psi * (*v - m);
            }
        }
    }
    Ok(out)
}

/// Replicates each flat frame across `hierarchy.n_layers` layers.
pub fn expand_to_layers(seq: &StyleSequence, hierarchy: &HierarchyConfig) -> Result<StyleSequence> {
    if seq.layout != Layout::Flat {
        return Err(Error::shape("expand_to_layers needs a flat sequence"));
    }
    hierarchy.validate()?;
    let flat = seq.layer(0);
    let (t, d) = flat.dim();
    let data = flat
        .insert_axis(Axis(1))
        .broadcast((t, hierarchy.n_layers, d))
        .expect("unit axis broadcasts")
        .to_owned();
    StyleSequence::extended(seq.rate_hz, data)
}

/// Centered moving average along time of one `T`-long column, with the
/// window shrinking to the available frames at the edges.
fn centered_mean(column: &[f64], window: usize, out: &mut [f64]) {
    let t_len = column.len();
    let half = window / 2;
    let mut prefix = Vec::with_capacity(t_len + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in column {
        acc += v;
        prefix.push(acc);
    }
    for (t, o) in out.iter_mut().enumerate() {
        let lo = t.saturating_sub(half);
        let hi = (t + half + 1).min(t_len);
        *o = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
    }
}

/// Replaces each layer group by a centered moving average of that group's
/// window length.
pub fn smooth_styles(
    seq: &StyleSequence,
    hierarchy: &HierarchyConfig,
    cfg: &SmoothingConfig,
) -> Result<StyleSequence> {
    if seq.layout != Layout::Extended {
        return Err(Error::shape("smooth_styles needs an extended sequence"));
    }
    hierarchy.validate()?;
    if hierarchy.n_layers != seq.layers() {
        return Err(Error::shape(format!(
            "hierarchy describes {} layers, sequence has {}",
            hierarchy.n_layers,
            seq.layers()
        )));
    }
    let windows = cfg.window_frames(seq.rate_hz)?;
    let mut layer_window = vec![1usize; seq.layers()];
    for (group, &w) in hierarchy.groups().into_iter().zip(windows.iter()) {
        for l in group.clone() {
            layer_window[l] = w;
        }
    }

    let (t_len, n_layers, d) = seq.data.dim();
    let smoothed: Vec<Array2<f64>> = (0..n_layers)
        .into_par_iter()
        .map(|l| {
            let src = seq.data.index_axis(Axis(1), l);
            let mut dst = Array2::<f64>::zeros((t_len, d));
            let mut col = vec![0.0; t_len];
            let mut res = vec![0.0; t_len];
            for j in 0..d {
                for (c, &v) in col.iter_mut().zip(src.column(j).iter()) {
                    *c = v;
                }
                centered_mean(&col, layer_window[l], &mut res);
                for (o, &v) in dst.column_mut(j).iter_mut().zip(res.iter()) {
                    *o = v;
                }
            }
            dst
        })
        .collect();

    let mut out = seq.data.clone();
    for (l, layer) in smoothed.into_iter().enumerate() {
        out.index_axis_mut(Axis(1), l).assign(&layer);
    }
    StyleSequence::extended(seq.rate_hz, out)
}
