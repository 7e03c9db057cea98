//! PCM WAV input, downmixed to mono.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MonoAudio {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl MonoAudio {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        Ok(MonoAudio {
            samples,
            sample_rate,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Reads an integer or float PCM WAV file; multi-channel input is
    /// averaged to mono.
    pub fn read_wav(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let mut reader =
            hound::WavReader::open(path).map_err(|e| Error::format(path, e.to_string()))?;
        let spec = reader.spec();
        let channels = spec.channels.max(1) as usize;
        let interleaved: Vec<f32> = match spec.sample_format {
            hound::SampleFormat::Float => reader
                .samples::<f32>()
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(path, e.to_string()))?,
            hound::SampleFormat::Int => {
                let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f32 * scale))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::format(path, e.to_string()))?
            }
        };
        let samples = interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect();
        MonoAudio::new(samples, spec.sample_rate)
    }

    /// Writes 32-bit float mono WAV.
    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w =
            hound::WavWriter::create(path, spec).map_err(|e| Error::format(path, e.to_string()))?;
        for &s in &self.samples {
            w.write_sample(s)
                .map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.finalize()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(())
    }
}

/// Deterministic test tone: a sum of sines whose frequencies change every
/// `segment_s` seconds, so spectral features vary over time.
pub fn synth_tone(duration_s: f64, sample_rate: u32, segment_s: f64) -> MonoAudio {
    let n = (duration_s * sample_rate as f64).round() as usize;
    let base = [110.0, 220.0, 330.0, 523.25, 880.0, 1760.0];
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            let seg = (t / segment_s) as usize;
            let f1 = base[seg % base.len()];
            let f2 = base[(seg * 3 + 1) % base.len()] * 1.5;
            (0.5 * (2.0 * std::f64::consts::PI * f1 * t).sin()
                + 0.25 * (2.0 * std::f64::consts::PI * f2 * t).sin()) as f32
        })
        .collect();
    MonoAudio {
        samples,
        sample_rate,
    }
}
