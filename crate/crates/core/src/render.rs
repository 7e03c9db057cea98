//! Style sampling and frame rendering through a generator adapter.
//!
//! Two adapters exist. The toy adapter is a pure-Rust procedural painter
//! that lets the whole pipeline run without a neural model. The external
//! adapter drives a generator executable through files:
//!
//! * rendering: `model <styles.trst> <out_dir>`, one `frame_%06d.png` per
//!   style frame;
//! * style sampling: `model --map <latents.trst> <styles.trst>`, mapping
//!   each latent row to a style through the generator's mapping network.
//!
//! A nonzero exit status or missing output is a `BackendFailure`.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::Command;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::styleflow::StyleSequence;

/// Toy-transform sensitivity: pixel values move by at most this many
/// quantization steps per unit change of a style coordinate (∞-norm).
pub const TOY_LIPSCHITZ: f64 = 127.5;

/// Value of every pixel for the all-zero style under the toy adapter.
pub const TOY_MID_GRAY: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Toy,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorAdapter {
    pub kind: AdapterKind,
    /// Square output side in pixels.
    pub resolution: u32,
    pub n_layers: usize,
    pub style_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    /// Cells per side of the toy adapter's color grid.
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_grid() -> usize {
    8
}

impl Default for GeneratorAdapter {
    fn default() -> Self {
        GeneratorAdapter::toy(256, 18, 512)
    }
}

impl GeneratorAdapter {
    pub fn toy(resolution: u32, n_layers: usize, style_dim: usize) -> Self {
        GeneratorAdapter {
            kind: AdapterKind::Toy,
            resolution,
            n_layers,
            style_dim,
            model_path: None,
            grid: default_grid(),
        }
    }

    pub fn external(
        model_path: PathBuf,
        resolution: u32,
        n_layers: usize,
        style_dim: usize,
    ) -> Self {
        GeneratorAdapter {
            kind: AdapterKind::External,
            resolution,
            n_layers,
            style_dim,
            model_path: Some(model_path),
            grid: default_grid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 4 || !self.resolution.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "resolution {} must be a power of two >= 4",
                self.resolution
            )));
        }
        if self.n_layers == 0 || self.style_dim == 0 || self.grid == 0 {
            return Err(Error::InvalidConfig(
                "n_layers, style_dim and grid must be positive".into(),
            ));
        }
        if self.kind == AdapterKind::External && self.model_path.is_none() {
            return Err(Error::InvalidConfig(
                "external adapter requires model_path".into(),
            ));
        }
        Ok(())
    }

    /// Same adapter at another output resolution (thumbnails).
    pub fn with_resolution(&self, resolution: u32) -> Self {
        GeneratorAdapter {
            resolution,
            ..self.clone()
        }
    }

    fn model(&self) -> Result<&Path> {
        self.model_path
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("external adapter requires model_path".into()))
    }
}

/// 8-bit RGB image, row-major, `size × size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub size: u32,
    pub rgb: Vec<u8>,
}

impl Frame {
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y * self.size + x) as usize;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(w, self.size, self.size);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::BackendFailure(e.to_string()))?;
        writer
            .write_image_data(&self.rgb)
            .map_err(|e| Error::BackendFailure(e.to_string()))?;
        Ok(())
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|_| {
            Error::BackendFailure(format!("generator produced no {}", path.display()))
        })?;
        let mut dec = png::Decoder::new(file);
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec
            .read_info()
            .map_err(|e| Error::BackendFailure(format!("{}: {e}", path.display())))?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::BackendFailure(format!("{}: {e}", path.display())))?;
        if info.width != info.height {
            return Err(Error::BackendFailure(format!(
                "{} is {}x{}, expected a square frame",
                path.display(),
                info.width,
                info.height
            )));
        }
        buf.truncate(info.buffer_size());
        let rgb = match info.color_type {
            png::ColorType::Rgb => buf,
            png::ColorType::Rgba => buf
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
            png::ColorType::GrayscaleAlpha => buf
                .chunks_exact(2)
                .flat_map(|p| [p[0], p[0], p[0]])
                .collect(),
            png::ColorType::Indexed => {
                return Err(Error::BackendFailure("indexed PNG left unexpanded".into()))
            }
        };
        Ok(Frame {
            size: info.width,
            rgb,
        })
    }
}

/// Draws `n` styles. Truncation `psi` in (0, 1) pulls the batch toward its
/// own column mean; `psi = 1` and `None` are identical.
pub fn sample_styles(
    adapter: &GeneratorAdapter,
    n: usize,
    seed: u64,
    truncation: Option<f64>,
) -> Result<Array2<f64>> {
    adapter.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig(
            "sample count must be at least 1".into(),
        ));
    }
    if let Some(psi) = truncation {
        if !(psi > 0.0 && psi <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "truncation {psi} must lie in (0, 1]"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latents = Array2::from_shape_simple_fn((n, adapter.style_dim), || {
        rng.sample::<f64, _>(StandardNormal)
    });
    let mut styles = match adapter.kind {
        AdapterKind::Toy => latents,
        AdapterKind::External => external_map(adapter, latents)?,
    };
    if let Some(psi) = truncation.filter(|&p| p < 1.0) {
        let mean = styles.mean_axis(Axis(0)).expect("n >= 1");
        for mut row in styles.outer_iter_mut() {
            for (v, &m) in row.iter_mut().zip(mean.iter()) {
                *v = m + psi * (*v - m);
            }
        }
    }
    Ok(styles)
}

fn external_map(adapter: &GeneratorAdapter, latents: Array2<f64>) -> Result<Array2<f64>> {
    let n = latents.nrows();
    let dir = tempfile::tempdir()?;
    let z_path = dir.path().join("latents.trst");
    let w_path = dir.path().join("styles.trst");
    StyleSequence::flat(1.0, latents)?.write_file(&z_path)?;
    run_model(
        adapter.model()?,
        &[
            Path::new("--map").as_os_str(),
            z_path.as_os_str(),
            w_path.as_os_str(),
        ],
    )?;
    let styles = StyleSequence::read_file(&w_path)
        .map_err(|e| Error::BackendFailure(format!("reading mapped styles: {e}")))?;
    if styles.len() != n || styles.dim() != adapter.style_dim {
        return Err(Error::BackendFailure(format!(
            "mapping returned {}x{} styles, expected {n}x{}",
            styles.len(),
            styles.dim(),
            adapter.style_dim
        )));
    }
    Ok(styles.layer(0).to_owned())
}

fn run_model(model: &Path, args: &[&std::ffi::OsStr]) -> Result<()> {
    let output = Command::new(model)
        .args(args)
        .output()
        .map_err(|e| Error::BackendFailure(format!("{}: {e}", model.display())))?;
    if !output.status.success() {
        return Err(Error::BackendFailure(format!(
            "{} exited with {}: {}",
            model.display(),
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    Ok(())
}

/// Toy painter: `grid × grid` cells, cell `k` colored from style
/// coordinates `3k, 3k+1, 3k+2` (wrapping past `D_s`), averaged over layers
/// and squashed as `127.5·(1 + tanh(v))`.
fn toy_frame(adapter: &GeneratorAdapter, style: ArrayView2<f64>) -> Frame {
    let g = adapter.grid;
    let d = style.ncols();
    let n_layers = style.nrows() as f64;
    let colors: Vec<u8> = (0..3 * g * g)
        .map(|idx| {
            let v = style.column(idx % d).sum() / n_layers;
            let shade = 127.5 * (1.0 + v.tanh());
            shade.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    let size = adapter.resolution as usize;
    let mut rgb = vec![0u8; 3 * size * size];
    for y in 0..size {
        let cy = y * g / size;
        for x in 0..size {
            let cx = x * g / size;
            let cell = 3 * (cy * g + cx);
            let px = 3 * (y * size + x);
            rgb[px..px + 3].copy_from_slice(&colors[cell..cell + 3]);
        }
    }
    Frame {
        size: adapter.resolution,
        rgb,
    }
}

fn check_frame_shape(adapter: &GeneratorAdapter, layers: usize, dim: usize) -> Result<()> {
    if layers != adapter.n_layers {
        return Err(Error::shape(format!(
            "style has {layers} layers, generator expects {}",
            adapter.n_layers
        )));
    }
    if dim != adapter.style_dim {
        return Err(Error::shape(format!(
            "style has {dim} dims, generator expects {}",
            adapter.style_dim
        )));
    }
    Ok(())
}

/// Renders one extended style frame (`L × D_s`).
pub fn render_frame(adapter: &GeneratorAdapter, style: ArrayView2<f64>) -> Result<Frame> {
    adapter.validate()?;
    check_frame_shape(adapter, style.nrows(), style.ncols())?;
    match adapter.kind {
        AdapterKind::Toy => Ok(toy_frame(adapter, style)),
        AdapterKind::External => {
            let dir = tempfile::tempdir()?;
            let styles = dir.path().join("styles.trst");
            let data = style.insert_axis(Axis(0)).to_owned();
            StyleSequence::extended(1.0, data)?.write_file(&styles)?;
            let out = dir.path().join("frames");
            std::fs::create_dir(&out)?;
            run_model(adapter.model()?, &[styles.as_os_str(), out.as_os_str()])?;
            Frame::read_png(&out.join(frame_name(0)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub i: usize,
    /// Relative to the manifest's directory.
    pub file: PathBuf,
    /// Index of the style frame this image was generated from.
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub rate_hz: f64,
    pub audio: PathBuf,
    pub frames: Vec<FrameEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn frame_name(i: usize) -> String {
    format!("frame_{i:06}.png")
}

impl FrameManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn remove_frames(out_dir: &Path, n: usize) {
    for i in 0..n {
        let _ = std::fs::remove_file(out_dir.join(frame_name(i)));
    }
}

/// Renders every frame of an extended sequence into `out_dir` and writes
/// `manifest.json`. On failure the frames written so far are removed.
pub fn render_sequence(
    adapter: &GeneratorAdapter,
    seq: &StyleSequence,
    out_dir: &Path,
    audio_path: &Path,
) -> Result<FrameManifest> {
    adapter.validate()?;
    check_frame_shape(adapter, seq.layers(), seq.dim())?;
    std::fs::create_dir_all(out_dir)?;
    let t_len = seq.len();

    let rendered: Result<()> = match adapter.kind {
        AdapterKind::Toy => (0..t_len).into_par_iter().try_for_each(|t| {
            toy_frame(adapter, seq.frame(t)).write_png(&out_dir.join(frame_name(t)))
        }),
        AdapterKind::External => render_external(adapter, seq, out_dir),
    };
    if let Err(e) = rendered {
        remove_frames(out_dir, t_len);
        return Err(e);
    }

    let manifest = FrameManifest {
        rate_hz: seq.rate_hz(),
        audio: audio_path.to_path_buf(),
        frames: (0..t_len)
            .map(|i| FrameEntry {
                i,
                file: PathBuf::from(frame_name(i)),
                source: i,
            })
            .collect(),
    };
    std::fs::write(
        out_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

fn render_external(adapter: &GeneratorAdapter, seq: &StyleSequence, out_dir: &Path) -> Result<()> {
    let dir = tempfile::tempdir()?;
    let styles = dir.path().join("styles.trst");
    seq.write_file(&styles)?;
    run_model(adapter.model()?, &[styles.as_os_str(), out_dir.as_os_str()])?;
    if let Some(missing) = (0..seq.len()).find(|&i| !out_dir.join(frame_name(i)).is_file()) {
        return Err(Error::BackendFailure(format!(
            "generator did not write {}",
            frame_name(missing)
        )));
    }
    Ok(())
}

/// Muxes the manifest's frames and audio with `ffmpeg`. Returns `Ok(false)`
/// when no `ffmpeg` executable is available; the manifest is then the
/// deliverable.
pub fn assemble_video(manifest_dir: &Path, manifest: &FrameManifest, out: &Path) -> Result<bool> {
    let probe = Command::new("ffmpeg").arg("-version").output();
    if probe.is_err() {
        return Ok(false);
    }
    let pattern = manifest_dir.join("frame_%06d.png");
    let mut cmd = Command::new("ffmpeg");
    cmd.arg("-y")
        .args(["-framerate", &manifest.rate_hz.to_string()])
        .arg("-i")
        .arg(&pattern);
    if manifest.audio.is_file() {
        cmd.arg("-i").arg(&manifest.audio).arg("-shortest");
    }
    cmd.args(["-c:v", "libx264", "-pix_fmt", "yuv420p"])
        .arg(out);
    let output = cmd
        .output()
        .map_err(|e| Error::BackendFailure(format!("ffmpeg: {e}")))?;
    if !output.status.success() {
        return Err(Error::BackendFailure(format!(
            "ffmpeg exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    Ok(true)
}

/// Extended sequence that repeats one `L × D_s` frame `t_len` times.
pub fn repeat_frame(frame: ArrayView2<f64>, t_len: usize, rate_hz: f64) -> Result<StyleSequence> {
    let (l, d) = frame.dim();
    let data = frame
        .insert_axis(Axis(0))
        .broadcast((t_len, l, d))
        .expect("unit axis broadcasts")
        .to_owned();
    StyleSequence::extended(rate_hz, Array3::from(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest};

    fn adapter() -> GeneratorAdapter {
        GeneratorAdapter::toy(32, 4, 16)
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_styles(&adapter(), 200, 5, None).unwrap();
        let b = sample_styles(&adapter(), 200, 5, None).unwrap();
        assert_eq!(a.dim(), (200, 16));
        assert_eq!(a, b);
        assert_ne!(a, sample_styles(&adapter(), 200, 6, None).unwrap());
    }

    #[test]
    fn unit_truncation_is_noop() {
        let a = sample_styles(&adapter(), 50, 1, None).unwrap();
        let b = sample_styles(&adapter(), 50, 1, Some(1.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_shrinks_spread() {
        let a = sample_styles(&adapter(), 100, 1, None).unwrap();
        let b = sample_styles(&adapter(), 100, 1, Some(0.5)).unwrap();
        let spread = |m: &Array2<f64>| {
            let mean = m.mean_axis(Axis(0)).unwrap();
            m.outer_iter()
                .map(|r| (&r - &mean).mapv(|v| v * v).sum())
                .sum::<f64>()
        };
        assert!((spread(&b) - 0.25 * spread(&a)).abs() < 1e-9 * spread(&a));
        assert!(sample_styles(&adapter(), 10, 1, Some(0.0)).is_err());
    }

    #[test]
    fn zero_style_is_mid_gray() {
        let a = adapter();
        let f = render_frame(&a, Array2::zeros((4, 16)).view()).unwrap();
        assert!(f.rgb.iter().all(|&v| v == TOY_MID_GRAY));
        assert_eq!(f.rgb.len(), 32 * 32 * 3);
    }

    #[test]
    fn rendering_is_deterministic() {
        let a = adapter();
        let s = sample_styles(&GeneratorAdapter::toy(32, 1, 64), 4, 9, None).unwrap();
        let style = s.slice(ndarray::s![0..4, 0..16]).to_owned();
        assert_eq!(
            render_frame(&a, style.view()).unwrap(),
            render_frame(&a, style.view()).unwrap()
        );
    }

    #[test]
    fn tiny_perturbation_moves_at_most_one_step() {
        let a = adapter();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let style = Array2::from_shape_simple_fn((4, 16), || rng.gen_range(-2.0..2.0));
            let mut nudged = style.clone();
            let (l, j) = (rng.gen_range(0..4), rng.gen_range(0..16));
            nudged[[l, j]] += 1e-9;
            let f0 = render_frame(&a, style.view()).unwrap();
            let f1 = render_frame(&a, nudged.view()).unwrap();
            let max = f0
                .rgb
                .iter()
                .zip(&f1.rgb)
                .map(|(x, y)| x.abs_diff(*y))
                .max()
                .unwrap();
            assert!(max <= 1);
        }
    }

    #[test]
    fn layer_mismatch_is_shape_error() {
        assert!(matches!(
            render_frame(&adapter(), Array2::zeros((3, 16)).view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn adapter_validation() {
        assert!(GeneratorAdapter::toy(48, 1, 1).validate().is_err());
        assert!(GeneratorAdapter::toy(2, 1, 1).validate().is_err());
        let mut ext = GeneratorAdapter::toy(64, 1, 1);
        ext.kind = AdapterKind::External;
        assert!(ext.validate().is_err());
    }

    #[test]
    fn sequence_writes_frames_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let a = adapter();
        let styles = sample_styles(&GeneratorAdapter::toy(32, 1, 16), 7, 2, None).unwrap();
        let flat = StyleSequence::flat(30.0, styles).unwrap();
        let ext = crate::styleflow::expand_to_layers(
            &flat,
            &crate::styleflow::HierarchyConfig::standard(4),
        )
        .unwrap();
        let m = render_sequence(&a, &ext, dir.path(), Path::new("song.wav")).unwrap();
        assert_eq!(m.frames.len(), 7);
        for (i, e) in m.frames.iter().enumerate() {
            assert_eq!(e.i, i);
            assert!(dir.path().join(&e.file).is_file());
        }
        let back = FrameManifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, m);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap())
                .unwrap();
        assert_eq!(json["rate_hz"], 30.0);
        assert_eq!(json["audio"], "song.wav");
        assert_eq!(json["frames"][3]["file"], "frame_000003.png");
        let f = Frame::read_png(&dir.path().join("frame_000002.png")).unwrap();
        assert_eq!(f, render_frame(&a, ext.frame(2)).unwrap());
    }

    #[test]
    fn single_frame_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let ext = repeat_frame(Array2::zeros((4, 16)).view(), 1, 30.0).unwrap();
        let m = render_sequence(&adapter(), &ext, dir.path(), Path::new("a.wav")).unwrap();
        assert_eq!(m.frames.len(), 1);
        let pngs = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .path()
                    .extension()
                    .is_some_and(|x| x == "png")
            })
            .count();
        assert_eq!(pngs, 1);
    }

    #[cfg(unix)]
    fn script(dir: &Path, body: &str) -> PathBuf {
        use std::os::unix::fs::PermissionsExt;
        let p = dir.join("gen.sh");
        std::fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
        std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
        p
    }

    #[cfg(unix)]
    #[test]
    fn failing_external_generator_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        // writes one frame, then fails
        let gen = script(
            dir.path(),
            &format!(
                "cp {} \"$2/frame_000000.png\"; echo boom >&2; exit 1",
                dir.path().join("seed.png").display()
            ),
        );
        toy_frame(&adapter(), Array2::zeros((4, 16)).view())
            .write_png(&dir.path().join("seed.png"))
            .unwrap();
        let a = GeneratorAdapter::external(gen, 32, 4, 16);
        let ext = repeat_frame(Array2::zeros((4, 16)).view(), 3, 30.0).unwrap();
        match render_sequence(&a, &ext, &out, Path::new("a.wav")) {
            Err(Error::BackendFailure(msg)) => assert!(msg.contains("boom")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(!out.join("frame_000000.png").exists());
    }

    #[cfg(unix)]
    #[test]
    fn external_generator_contract() {
        let dir = tempfile::tempdir().unwrap();
        let seed = dir.path().join("seed.png");
        toy_frame(&adapter(), Array2::zeros((4, 16)).view())
            .write_png(&seed)
            .unwrap();
        // frame count read from the TRST header (bytes 8..16, little-endian)
        let body = format!(
            r#"if [ "$1" = "--map" ]; then cp "$2" "$3"; exit 0; fi
n=$(od -An -tu8 -j8 -N8 "$1" | tr -d ' ')
i=0
while [ $i -lt $n ]; do cp {seed} "$2/$(printf 'frame_%06d.png' $i)"; i=$((i+1)); done"#,
            seed = seed.display()
        );
        let gen = script(dir.path(), &body);
        let a = GeneratorAdapter::external(gen, 32, 4, 16);

        let out = dir.path().join("out");
        let ext = repeat_frame(Array2::zeros((4, 16)).view(), 5, 30.0).unwrap();
        let m = render_sequence(&a, &ext, &out, Path::new("a.wav")).unwrap();
        assert_eq!(m.frames.len(), 5);
        assert!(out.join("frame_000004.png").is_file());

        let f = render_frame(&a, Array2::zeros((4, 16)).view()).unwrap();
        assert!(f.rgb.iter().all(|&v| v == TOY_MID_GRAY));

        // identity mapping network: styles equal the f32-rounded latents
        let s = sample_styles(&a, 3, 4, None).unwrap();
        let z = sample_styles(&adapter(), 3, 4, None).unwrap();
        assert_eq!(s, z.mapv(|v| v as f32 as f64));
    }

    proptest! {
        #[test]
        fn toy_transform_is_lipschitz(
            a in prop::collection::vec(-3.0f64..3.0, 64),
            delta in prop::collection::vec(-0.05f64..0.05, 64),
        ) {
            let adapter = adapter();
            let s0 = Array2::from_shape_vec((4, 16), a.clone()).unwrap();
            let s1 = Array2::from_shape_vec((4, 16), a.iter().zip(&delta).map(|(x, d)| x + d).collect()).unwrap();
            let d = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let f0 = render_frame(&adapter, s0.view()).unwrap();
            let f1 = render_frame(&adapter, s1.view()).unwrap();
            let max = f0.rgb.iter().zip(&f1.rgb).map(|(x, y)| x.abs_diff(*y)).max().unwrap() as f64;
            prop_assert!(max <= TOY_LIPSCHITZ * d + 1.0);
        }
    }
}
