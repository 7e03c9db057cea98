//! Audio-embedding → style-embedding mapping for music-driven image
//! generation.
//!
//! The pieces, in pipeline order:
//!
//! - [`embedding`]: fixed-rate audio embedding sequences from precomputed
//!   files, an external encoder process, or built-in spectral features.
//! - [`mapper`]: the bounded `2σ·tanh(Wz + b) + μ` transfer function, its L1
//!   objective, gradients and training loop.
//! - [`styleflow`]: per-frame mapping, per-layer expansion and
//!   coarse/middle/fine temporal smoothing.
//! - [`render`]: style sampling and frame rendering through a generator
//!   adapter, frame manifests.
//! - [`dataset`]: annotated clip/style pairs and their JSONL storage.
//! - [`analysis`]: PCA trajectories and intra/inter-segment distances.
//! - [`pipeline`]: end-to-end wiring for the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod audio;
pub mod container;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod mapper;
pub mod pipeline;
pub mod render;
pub mod styleflow;

pub use error::{Error, Result};
