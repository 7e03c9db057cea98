//! Trajectory and segment diagnostics for embedding sequences.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::embedding::AudioEmbeddingSequence;
use crate::error::{Error, Result};
use crate::styleflow::StyleSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    Style,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modality::Audio => f.write_str("audio"),
            Modality::Style => f.write_str("style"),
        }
    }
}

/// Eigenvalues (descending) and unit eigenvectors (columns) of a symmetric
/// matrix, by cyclic Jacobi rotation.
pub fn symmetric_eigen(matrix: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "matrix must be square");
    let mut a = matrix.to_owned();
    let mut v = Array2::<f64>::eye(n);
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    (values, vectors)
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is
/// nonnegative.
pub fn normalize_sign(v: &mut ndarray::ArrayViewMut1<f64>) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory2D {
    /// `T × k` projected coordinates.
    pub points: Array2<f64>,
    /// Fraction of total variance per component, non-increasing.
    pub explained_variance: Vec<f64>,
    /// `k × D` unit loading vectors.
    pub loadings: Array2<f64>,
    pub source: Option<Modality>,
}

/// Projects mean-centered rows onto the top-`k` principal axes.
///
/// Uses the `D × D` covariance, or the `T × T` Gram matrix when there are
/// fewer rows than columns; both give the same nonzero spectrum.
pub fn pca_project(data: ArrayView2<f64>, k: usize) -> Result<Trajectory2D> {
    let (t_len, d) = data.dim();
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if t_len < k + 1 {
        return Err(Error::shape(format!(
            "PCA to {k} dims needs at least {} rows, got {t_len}",
            k + 1
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PCA input".into()));
    }
    let mean = data.mean_axis(Axis(0)).expect("t_len > 0");
    let centered = &data - &mean;
    let raw_scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n = t_len as f64;

    let (eigvals, loadings) = if t_len < d {
        let gram = centered.dot(&centered.t()) / n;
        let (vals, vecs) = symmetric_eigen(gram.view());
        let mut loadings = Array2::<f64>::zeros((k, d));
        for i in 0..k.min(t_len) {
            let dir = centered.t().dot(&vecs.column(i));
            let norm = dir.dot(&dir).sqrt();
            if norm > 0.0 {
                loadings.row_mut(i).assign(&(dir / norm));
            }
        }
        (vals, loadings)
    } else {
        let cov = centered.t().dot(&centered) / n;
        let (vals, vecs) = symmetric_eigen(cov.view());
        let loadings = vecs.t().slice(ndarray::s![0..k, ..]).to_owned();
        (vals, loadings)
    };

    let total: f64 = centered.iter().map(|v| v * v).sum::<f64>() / n;
    let tol = (1e-12 * total).max(1e-24 * raw_scale * raw_scale);
    let nonzero = eigvals.iter().filter(|&&l| l > tol).count();
    if nonzero < k {
        return Err(Error::RankDeficient {
            modality: None,
            found: nonzero,
            needed: k,
        });
    }

    let mut loadings = loadings;
    for mut row in loadings.outer_iter_mut() {
        normalize_sign(&mut row);
    }
    let points = centered.dot(&loadings.t());
    let explained_variance = eigvals.iter().take(k).map(|l| l / total).collect();
    Ok(Trajectory2D {
        points,
        explained_variance,
        loadings,
        source: None,
    })
}

/// Independent 2-D PCA of an audio and a style sequence sampled on the same
/// timeline.
pub fn trajectory_pair(
    audio: &AudioEmbeddingSequence,
    style: &StyleSequence,
) -> Result<(Trajectory2D, Trajectory2D)> {
    if audio.len() != style.len() {
        return Err(Error::LengthMismatch(format!(
            "{} audio frames vs {} style frames",
            audio.len(),
            style.len()
        )));
    }
    if (audio.rate_hz() - style.rate_hz()).abs() > 1e-9 * audio.rate_hz() {
        return Err(Error::LengthMismatch(format!(
            "audio at {} Hz vs styles at {} Hz",
            audio.rate_hz(),
            style.rate_hz()
        )));
    }
    let tag = |m: Modality| {
        move |e: Error| match e {
            Error::RankDeficient { found, needed, .. } => Error::RankDeficient {
                modality: Some(m),
                found,
                needed,
            },
            other => other,
        }
    };
    let mut a = pca_project(audio.data().view(), 2).map_err(tag(Modality::Audio))?;
    let mut s = pca_project(style.frames_matrix().view(), 2).map_err(tag(Modality::Style))?;
    a.source = Some(Modality::Audio);
    s.source = Some(Modality::Style);
    Ok((a, s))
}

/// `t_s,x,y,source` rows for a 2-D trajectory sampled at `rate_hz`.
pub fn trajectory_csv(traj: &Trajectory2D, rate_hz: f64) -> String {
    let source = traj.source.map(|m| m.to_string()).unwrap_or_default();
    let mut out = String::from("t_s,x,y,source\n");
    for (t, p) in traj.points.outer_iter().enumerate() {
        out.push_str(&format!(
            "{:?},{:?},{:?},{source}\n",
            t as f64 / rate_hz,
            p[0],
            p.get(1).copied().unwrap_or(0.0)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LabelingWire")]
pub struct SegmentLabeling {
    boundaries: Vec<Segment>,
}

#[derive(Deserialize)]
struct LabelingWire {
    boundaries: Vec<Segment>,
}

impl TryFrom<LabelingWire> for SegmentLabeling {
    type Error = Error;

    fn try_from(w: LabelingWire) -> Result<Self> {
        SegmentLabeling::new(w.boundaries)
    }
}

impl SegmentLabeling {
    pub fn new(boundaries: Vec<Segment>) -> Result<Self> {
        for s in &boundaries {
            if !(s.start_s < s.end_s) {
                return Err(Error::InvalidConfig(format!(
                    "segment {:?} has empty span [{}, {})",
                    s.label, s.start_s, s.end_s
                )));
            }
        }
        for pair in boundaries.windows(2) {
            if pair[1].start_s < pair[0].end_s {
                return Err(Error::InvalidConfig(format!(
                    "segments {:?} and {:?} overlap or are out of order",
                    pair[0].label, pair[1].label
                )));
            }
        }
        Ok(SegmentLabeling { boundaries })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.boundaries
    }

    /// Frame indices (centers `t / rate_hz`) that fall in each segment.
    pub fn assign(&self, n_frames: usize, rate_hz: f64) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.boundaries.len()];
        for t in 0..n_frames {
            let c = t as f64 / rate_hz;
            if let Some(i) = self
                .boundaries
                .iter()
                .position(|s| c >= s.start_s && c < s.end_s)
            {
                out[i].push(t);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub label: String,
    pub n_frames: usize,
    pub intra_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub segments: Vec<SegmentStats>,
    /// Mean distance over all within-segment pairs, pooled.
    pub intra_mean: f64,
    /// Mean distance over all pairs drawn from different segments; `None`
    /// with a single segment.
    pub inter_mean: Option<f64>,
    /// `inter_mean / intra_mean`; `None` when undefined.
    pub ratio: Option<f64>,
}

fn euclid(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Within- and across-segment mean pairwise Euclidean distances.
pub fn segment_similarity(
    seq: ArrayView2<f64>,
    labeling: &SegmentLabeling,
    rate_hz: f64,
) -> Result<SegmentReport> {
    if !(rate_hz > 0.0) {
        return Err(Error::InvalidConfig("rate_hz must be positive".into()));
    }
    let groups = labeling.assign(seq.nrows(), rate_hz);
    for (seg, idx) in labeling.segments().iter().zip(&groups) {
        if idx.len() < 2 {
            return Err(Error::DegenerateSegment {
                label: seg.label.clone(),
                n_frames: idx.len(),
            });
        }
    }

    let mut segments = Vec::with_capacity(groups.len());
    let (mut intra_sum, mut intra_pairs) = (0.0, 0usize);
    for (seg, idx) in labeling.segments().iter().zip(&groups) {
        let mut s = 0.0;
        let mut pairs = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                s += euclid(seq.row(i), seq.row(j));
                pairs += 1;
            }
        }
        intra_sum += s;
        intra_pairs += pairs;
        segments.push(SegmentStats {
            label: seg.label.clone(),
            n_frames: idx.len(),
            intra_mean: s / pairs as f64,
        });
    }

    let (mut inter_sum, mut inter_pairs) = (0.0, 0usize);
    for (g, a) in groups.iter().enumerate() {
        for b in &groups[g + 1..] {
            for &i in a {
                for &j in b {
                    inter_sum += euclid(seq.row(i), seq.row(j));
                    inter_pairs += 1;
                }
            }
        }
    }

    let intra_mean = if intra_pairs > 0 {
        intra_sum / intra_pairs as f64
    } else {
        0.0
    };
    let inter_mean = (inter_pairs > 0).then(|| inter_sum / inter_pairs as f64);
    let ratio = inter_mean
        .filter(|_| intra_mean > 0.0)
        .map(|m| m / intra_mean);
    Ok(SegmentReport {
        segments,
        intra_mean,
        inter_mean,
        ratio,
    })
}
