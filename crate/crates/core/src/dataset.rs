//! Annotated (music clip, chosen style) pairs and their JSON-lines storage.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embedding::{pool_clip_embedding, sample_clip_rows, EmbeddingCache};
use crate::error::{Error, Result};
use crate::mapper::PairBatch;

/// Field order here is the on-disk field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub clip_id: String,
    pub audio_path: PathBuf,
    pub start_s: f64,
    pub end_s: f64,
    pub style: Vec<f64>,
    pub annotator: String,
    pub created_at: DateTime<Utc>,
}

impl PairRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.end_s - self.start_s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "clip {} has empty span [{}, {})",
                self.clip_id, self.start_s, self.end_s
            )));
        }
        if self.style.is_empty() || self.style.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("style of clip {}", self.clip_id)));
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> Result<String> {
        let mut line = serde_json::to_string(self)?;
        line.push('\n');
        Ok(line)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairDataset {
    pub records: Vec<PairRecord>,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        if self.records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_json_line()?);
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str, origin: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: PairRecord = serde_json::from_str(line)
                .map_err(|e| Error::format(origin, format!("line {}: {e}", n + 1)))?;
            r.validate()?;
            records.push(r);
        }
        Ok(PairDataset { records })
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let f = BufReader::new(File::open(path)?);
        let mut text = String::new();
        for line in f.lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::from_jsonl(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    /// Style dimension shared by all records.
    pub fn style_dim(&self) -> Result<usize> {
        let first = self.records.first().ok_or(Error::EmptyDataset)?;
        let d = first.style.len();
        if let Some(r) = self.records.iter().find(|r| r.style.len() != d) {
            return Err(Error::shape(format!(
                "clip {} has a {}-dim style, expected {d}",
                r.clip_id,
                r.style.len()
            )));
        }
        Ok(d)
    }
}

/// Appends one record per `write` call to a JSONL file.
pub fn append_record(path: &Path, record: &PairRecord) -> Result<()> {
    let line = record.to_json_line()?;
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    f.sync_data()?;
    Ok(())
}

/// How one annotated clip turns into training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PairExpansion {
    /// One row per `hop_s` step inside the clip, all sharing the clip's style.
    Windows { hop_s: f64 },
    /// One row: the mean embedding over the clip.
    Pool,
}

impl Default for PairExpansion {
    fn default() -> Self {
        PairExpansion::Windows { hop_s: 1.0 }
    }
}

/// Embeds every record's clip and stacks the (embedding, style) rows.
pub fn build_training_batch(
    dataset: &PairDataset,
    embeddings: &mut EmbeddingCache,
    expansion: &PairExpansion,
) -> Result<PairBatch> {
    let d_s = dataset.style_dim()?;
    let mut z_rows: Vec<Vec<f64>> = Vec::new();
    let mut w_rows: Vec<&[f64]> = Vec::new();
    for r in &dataset.records {
        r.validate()?;
        let seq = embeddings.get(&r.audio_path)?;
        match expansion {
            PairExpansion::Pool => {
                z_rows.push(pool_clip_embedding(&seq, r.start_s, r.end_s)?.to_vec());
                w_rows.push(&r.style);
            }
            PairExpansion::Windows { hop_s } => {
                for row in sample_clip_rows(&seq, r.start_s, r.end_s, *hop_s)? {
                    z_rows.push(row.to_vec());
                    w_rows.push(&r.style);
                }
            }
        }
    }
    let d_a = z_rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
    let z = Array2::from_shape_vec((z_rows.len(), d_a), z_rows.into_iter().flatten().collect())
        .map_err(|e| Error::shape(e.to_string()))?;
    let w = Array2::from_shape_vec(
        (w_rows.len(), d_s),
        w_rows.into_iter().flat_map(|s| s.iter().copied()).collect(),
    )
    .map_err(|e| Error::shape(e.to_string()))?;
    PairBatch::new(z, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{AudioEmbeddingSequence, EncoderKind, EncoderSpec};
    use chrono::TimeZone;

    fn record(id: &str, style: Vec<f64>) -> PairRecord {
        PairRecord {
            clip_id: id.into(),
            audio_path: PathBuf::from(format!("{id}.wav")),
            start_s: 0.0,
            end_s: 10.0,
            style,
            annotator: "ann".into(),
            created_at: Utc.with_ymd_and_hms(2026, 1, 2, 3, 4, 5).unwrap(),
        }
    }

    #[test]
    fn field_order_is_stable() {
        let line = record("c1", vec![0.5]).to_json_line().unwrap();
        assert_eq!(
            line,
            "{\"clip_id\":\"c1\",\"audio_path\":\"c1.wav\",\"start_s\":0.0,\"end_s\":10.0,\
             \"style\":[0.5],\"annotator\":\"ann\",\"created_at\":\"2026-01-02T03:04:05Z\"}\n"
        );
    }

    #[test]
    fn export_import_export_is_byte_identical() {
        let ds = PairDataset {
            records: (0..100)
                .map(|i| {
                    record(
                        &format!("c{i}"),
                        (0..512).map(|j| (i * j) as f64 / 7.0 - 1e-3).collect(),
                    )
                })
                .collect(),
        };
        let text = ds.to_jsonl().unwrap();
        assert_eq!(text.lines().count(), 100);
        let back = PairDataset::from_jsonl(&text, Path::new("mem")).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_jsonl().unwrap(), text);
    }

    #[test]
    fn empty_export_fails() {
        assert!(matches!(
            PairDataset::default().to_jsonl(),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn append_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        append_record(&path, &record("a", vec![1.0])).unwrap();
        append_record(&path, &record("b", vec![2.0])).unwrap();
        let ds = PairDataset::read(&path).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.records[1].clip_id, "b");
    }

    #[test]
    fn training_rows_from_precomputed_embeddings() {
        let dir = tempfile::tempdir().unwrap();
        let data = Array2::from_shape_fn((300, 2), |(t, j)| (t + j) as f64);
        AudioEmbeddingSequence::new(30.0, 3.7, data)
            .unwrap()
            .write_file(&dir.path().join("c1.trem"))
            .unwrap();
        let spec = EncoderSpec {
            kind: EncoderKind::PrecomputedFile,
            path: dir.path().to_path_buf(),
            d_a: 2,
            ..Default::default()
        };
        let ds = PairDataset {
            records: vec![record("c1", vec![0.1, 0.2, 0.3])],
        };
        let mut cache = EmbeddingCache::new(spec, 30.0);
        let batch = build_training_batch(&ds, &mut cache, &PairExpansion::default()).unwrap();
        assert_eq!(batch.len(), 10);
        assert_eq!(batch.z()[[3, 0]], 90.0);
        assert_eq!(batch.w().row(9).to_vec(), vec![0.1, 0.2, 0.3]);

        let pooled = build_training_batch(&ds, &mut cache, &PairExpansion::Pool).unwrap();
        assert_eq!(pooled.len(), 1);
        assert_eq!(pooled.z()[[0, 0]], 149.5);
    }

    #[test]
    fn mixed_style_dims_are_rejected() {
        let ds = PairDataset {
            records: vec![record("a", vec![1.0]), record("b", vec![1.0, 2.0])],
        };
        assert!(matches!(ds.style_dim(), Err(Error::Shape(_))));
    }
}
