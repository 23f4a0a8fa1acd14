//! Medical image segmentation pipeline.
//!
//! End-to-end building blocks for volumetric segmentation experiments:
//! NIfTI-1 file I/O, intensity/geometry preprocessing, overlapping patch
//! decomposition and merging, seeded data augmentation, batch assembly with
//! an on-disk cache, segmentation metrics and losses, a pluggable model
//! interface with a trainable per-voxel reference classifier, and automatic
//! evaluation (k-fold / leave-one-out / percentage / detailed splits).
//!
//! All randomness is derived from a single 64-bit seed, so every pipeline
//! stage is reproducible bit-for-bit across runs and thread counts.

pub mod augment;
pub mod batching;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod metrics;
pub mod model;
pub mod nifti;
pub mod patching;
pub mod preprocess;
pub mod rng;
pub mod sample_io;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{ClassMap, ScoreVolume, Volume};
