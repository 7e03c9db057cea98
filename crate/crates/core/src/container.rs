//! Little-endian binary container shared by embedding ("TREM") and style
//! ("TRST") sequences.
//!
//! Layout:
//!
//! ```text
//! magic     [u8; 4]   "TREM" | "TRST"
//! version   u32       1
//! T         u64       frames
//! L         u64       layers          (TRST only)
//! D         u64       values per layer
//! rate_hz   f64
//! window_s  f64
//! payload   f32 × T·[L]·D, row-major
//! ```
//!
//! Every written file gets a `<file>.json` sidecar with the header fields.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"TREM";
pub const STYLE_MAGIC: [u8; 4] = *b"TRST";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Embedding,
    Style,
}

impl ContainerKind {
    pub fn magic(self) -> [u8; 4] {
        match self {
            ContainerKind::Embedding => EMBEDDING_MAGIC,
            ContainerKind::Style => STYLE_MAGIC,
        }
    }

    fn from_magic(magic: [u8; 4]) -> Option<Self> {
        match &magic {
            b"TREM" => Some(ContainerKind::Embedding),
            b"TRST" => Some(ContainerKind::Style),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawContainer {
    pub kind: ContainerKind,
    pub frames: u64,
    /// Always 1 for embedding containers.
    pub layers: u64,
    pub dim: u64,
    pub rate_hz: f64,
    pub window_s: f64,
    pub values: Vec<f32>,
}

/// Header metadata as written to the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub magic: String,
    pub version: u32,
    #[serde(rename = "T")]
    pub frames: u64,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none", default)]
    pub layers: Option<u64>,
    #[serde(rename = "D")]
    pub dim: u64,
    pub rate_hz: f64,
    pub window_s: f64,
}

impl RawContainer {
    pub fn expected_len(&self) -> Option<usize> {
        let n = self
            .frames
            .checked_mul(self.layers)?
            .checked_mul(self.dim)?;
        usize::try_from(n).ok()
    }

    pub fn encode<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&self.kind.magic())?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.frames.to_le_bytes())?;
        if self.kind == ContainerKind::Style {
            w.write_all(&self.layers.to_le_bytes())?;
        }
        w.write_all(&self.dim.to_le_bytes())?;
        w.write_all(&self.rate_hz.to_le_bytes())?;
        w.write_all(&self.window_s.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    /// Decodes a container; `origin` is only used to label errors.
    pub fn decode<R: Read>(mut r: R, origin: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::format(origin, reason);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| bad("truncated header"))?;
        let kind = ContainerKind::from_magic(magic).ok_or_else(|| bad("unknown magic"))?;
        let version = read_u32(&mut r).map_err(|_| bad("truncated header"))?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let frames = read_u64(&mut r).map_err(|_| bad("truncated header"))?;
        let layers = match kind {
            ContainerKind::Style => read_u64(&mut r).map_err(|_| bad("truncated header"))?,
            ContainerKind::Embedding => 1,
        };
        let dim = read_u64(&mut r).map_err(|_| bad("truncated header"))?;
        let rate_hz = read_f64(&mut r).map_err(|_| bad("truncated header"))?;
        let window_s = read_f64(&mut r).map_err(|_| bad("truncated header"))?;

        let mut out = RawContainer {
            kind,
            frames,
            layers,
            dim,
            rate_hz,
            window_s,
            values: Vec::new(),
        };
        let n = out
            .expected_len()
            .ok_or_else(|| bad("payload size overflows"))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * 4 {
            return Err(bad(&format!(
                "payload holds {} bytes, header implies {}",
                bytes.len(),
                n * 4
            )));
        }
        out.values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(out)
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            magic: String::from_utf8_lossy(&self.kind.magic()).into_owned(),
            version: VERSION,
            frames: self.frames,
            layers: (self.kind == ContainerKind::Style).then_some(self.layers),
            dim: self.dim,
            rate_hz: self.rate_hz,
            window_s: self.window_s,
        }
    }

    /// Writes the binary file and its JSON sidecar.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let f = File::create(path)?;
        self.encode(BufWriter::new(f))?;
        let sidecar = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(sidecar_path(path), sidecar)?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::decode(BufReader::new(f), path)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
