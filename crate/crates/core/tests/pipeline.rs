use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use traum_core::analysis::{Segment, SegmentLabeling};
use traum_core::embedding::{AudioEmbeddingSequence, EncoderKind, EncoderSpec};
use traum_core::mapper::{forward_map, MapperParams, StyleStats};
use traum_core::pipeline::{analyze_embeddings, render_track, stylize, PipelineConfig};
use traum_core::render::{Frame, GeneratorAdapter};
use traum_core::styleflow::Layout;

fn model(seed: u64, d_a: usize, d_s: usize) -> (MapperParams, StyleStats) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Array2::from_shape_simple_fn((d_s, d_a), || rng.sample::<f64, _>(StandardNormal));
    let params = MapperParams::new(w, Array1::zeros(d_s)).unwrap();
    let stats = StyleStats::new(Array1::zeros(d_s), Array1::from_elem(d_s, 0.5), 100).unwrap();
    (params, stats)
}

fn ramp(t_len: usize, d_a: usize, rate: f64) -> AudioEmbeddingSequence {
    let data = Array2::from_shape_fn((t_len, d_a), |(t, j)| ((t as f64) * 0.1 + j as f64).sin());
    AudioEmbeddingSequence::new(rate, 3.7, data).unwrap()
}

fn small_config(n_layers: usize, d_s: usize) -> PipelineConfig {
    PipelineConfig {
        generator: GeneratorAdapter::toy(8, n_layers, d_s),
        ..PipelineConfig::default()
    }
}

#[test]
fn stylize_without_smoothing_is_the_per_frame_map() {
    let (params, stats) = model(1, 5, 3);
    let audio = ramp(40, 5, 30.0);
    let cfg = small_config(6, 3);
    let seq = stylize(&audio, &params, &stats, &cfg, false).unwrap();
    assert_eq!(seq.layout(), Layout::Extended);
    assert_eq!((seq.len(), seq.layers(), seq.dim()), (40, 6, 3));
    for t in [0, 17, 39] {
        let expected = forward_map(audio.data().row(t), &params, &stats).unwrap();
        for l in 0..6 {
            assert_eq!(seq.frame(t).row(l), expected);
        }
    }
}

#[test]
fn smoothing_changes_fine_layers_least() {
    let (params, stats) = model(2, 5, 3);
    let audio = ramp(120, 5, 30.0);
    let cfg = small_config(18, 3);
    let raw = stylize(&audio, &params, &stats, &cfg, false).unwrap();
    let smooth = stylize(&audio, &params, &stats, &cfg, true).unwrap();
    let change = |l: usize| -> f64 { (&raw.layer(l) - &smooth.layer(l)).mapv(f64::abs).sum() };
    assert!(change(0) > change(10));
    assert!(change(10) > 0.0);
    assert_eq!(change(0), change(3));
}

#[test]
fn truncation_pulls_toward_the_mean() {
    let (params, stats) = model(3, 4, 2);
    let audio = ramp(10, 4, 3.0);
    let mut cfg = small_config(2, 2);
    let full = stylize(&audio, &params, &stats, &cfg, false).unwrap();
    cfg.truncation = Some(0.5);
    let half = stylize(&audio, &params, &stats, &cfg, false).unwrap();
    for (a, b) in full.data().iter().zip(half.data().iter()) {
        assert!((b - 0.5 * a).abs() < 1e-12);
    }
}

#[test]
fn render_track_from_precomputed_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("song.trem");
    ramp(30, 5, 30.0).write_file(&emb).unwrap();
    let (params, stats) = model(4, 5, 4);
    let cfg = PipelineConfig {
        encoder: EncoderSpec {
            kind: EncoderKind::PrecomputedFile,
            path: emb.clone(),
            d_a: 5,
            ..EncoderSpec::default()
        },
        ..small_config(4, 4)
    };
    let out = dir.path().join("frames");
    let manifest = render_track(&emb, &params, &stats, &cfg, &out, true).unwrap();
    assert_eq!(manifest.frames.len(), 30);
    assert_eq!(manifest.rate_hz, 30.0);
    let f = Frame::read_png(&out.join(&manifest.frames[29].file)).unwrap();
    assert_eq!(f.size, 8);
}

#[test]
fn config_defaults_and_partial_json() {
    let cfg: PipelineConfig = serde_json::from_str(r#"{"seed": 4, "video_rate_hz": 24}"#).unwrap();
    assert_eq!(cfg.seed, 4);
    assert_eq!(cfg.video_rate_hz, 24.0);
    assert_eq!(cfg.analysis_rate_hz, 3.0);
    assert_eq!(cfg.hierarchy().n_layers, 18);
    cfg.validate().unwrap();
    let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);

    let bad = PipelineConfig {
        analysis_rate_hz: 0.0,
        ..PipelineConfig::default()
    };
    assert!(bad.validate().is_err());
    let mut bad = small_config(4, 2);
    bad.hierarchy = Some(traum_core::styleflow::HierarchyConfig::standard(18));
    assert!(bad.validate().is_err());
}

#[test]
fn analysis_reports_both_modalities() {
    let (params, stats) = model(5, 6, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data = Array2::from_shape_fn((30, 6), |(t, j)| {
        (if t < 15 { 5.0 } else { -5.0 }) * (j as f64 + 1.0) * 0.2
            + 0.1 * rng.sample::<f64, _>(StandardNormal)
    });
    let audio = AudioEmbeddingSequence::new(3.0, 3.7, data).unwrap();
    let lab = SegmentLabeling::new(vec![
        Segment {
            start_s: 0.0,
            end_s: 5.0,
            label: "a".into(),
        },
        Segment {
            start_s: 5.0,
            end_s: 10.0,
            label: "b".into(),
        },
    ])
    .unwrap();
    let out = analyze_embeddings(&audio, &params, &stats, Some(&lab)).unwrap();
    assert_eq!(out.audio.points.nrows(), 30);
    assert_eq!(out.style.points.nrows(), 30);
    assert!(out.audio_segments.unwrap().ratio.unwrap() > 1.0);
    assert!(out.style_segments.unwrap().ratio.unwrap() > 1.0);
    let none = analyze_embeddings(&audio, &params, &stats, None).unwrap();
    assert!(none.audio_segments.is_none());
}
