//! Shared fixtures: synthetic phantom datasets written as NIfTI samples.
#![allow(dead_code)]

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use medsegpipe::config::{AnalysisMode, BatchMode, EvalSpec, Normalization, PipelineConfig};
use medsegpipe::metrics::LossKind;
use medsegpipe::nifti;
use medsegpipe::rng::{stream, tag};
use medsegpipe::volume::{ClassMap, Volume};

pub const PHANTOM_EXTENT: usize = 32;

/// A bright sphere (class 1) on dark background with Gaussian noise at
/// sigma = 0.1 of the sphere/background contrast.
pub fn sphere_phantom(seed: u64) -> (Volume, ClassMap) {
    build_phantom(seed, false)
}

/// Sphere (class 1, intensity 1) plus cuboid (class 2, intensity 2), placed
/// in disjoint halves of the volume.
pub fn three_class_phantom(seed: u64) -> (Volume, ClassMap) {
    build_phantom(seed, true)
}

fn build_phantom(seed: u64, with_cuboid: bool) -> (Volume, ClassMap) {
    let n = PHANTOM_EXTENT;
    let mut rng = stream(seed, &[tag::SYNTH, 1]);
    let noise = Normal::new(0.0, 0.1).unwrap();

    // sphere in the lower z half so an optional cuboid never overlaps
    let cz = rng.gen_range(10.0..14.0);
    let cy = rng.gen_range(13.0..19.0);
    let cx = rng.gen_range(13.0..19.0);
    let radius: f64 = rng.gen_range(6.0..9.0);

    let cuboid = if with_cuboid {
        let z0 = rng.gen_range(20..24);
        let y0 = rng.gen_range(6..16);
        let x0 = rng.gen_range(6..16);
        let dz = rng.gen_range(4..7);
        let dy = rng.gen_range(6..10);
        let dx = rng.gen_range(6..10);
        Some((z0, y0, x0, dz, dy, dx))
    } else {
        None
    };

    let mut data = vec![0f32; n * n * n];
    let mut ids = vec![0u32; n * n * n];
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let i = (z * n + y) * n + x;
                let d2 =
                    (z as f64 - cz).powi(2) + (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                let mut value = 0.0f64;
                if d2.sqrt() <= radius {
                    ids[i] = 1;
                    value = 1.0;
                }
                if let Some((z0, y0, x0, dz, dy, dx)) = cuboid {
                    if z >= z0 && z < z0 + dz && y >= y0 && y < y0 + dy && x >= x0 && x < x0 + dx {
                        ids[i] = 2;
                        value = 2.0;
                    }
                }
                data[i] = (value + noise.sample(&mut rng)) as f32;
            }
        }
    }

    let n_classes = if with_cuboid { 3 } else { 2 };
    (
        Volume::new(vec![n; 3], vec![1.0; 3], data).unwrap(),
        ClassMap::new(vec![n; 3], vec![1.0; 3], ids, n_classes).unwrap(),
    )
}

/// Write `count` phantom samples under `dir` as `phantom_<i>/imaging.nii`
/// plus `segmentation.nii`.
pub fn write_phantom_dataset(dir: &Path, count: usize, three_class: bool) -> Vec<String> {
    let mut ids = Vec::with_capacity(count);
    for i in 0..count {
        let (image, labels) = if three_class {
            three_class_phantom(9000 + i as u64)
        } else {
            sphere_phantom(1000 + i as u64)
        };
        let id = format!("phantom_{i:02}");
        let sample_dir = dir.join(&id);
        std::fs::create_dir_all(&sample_dir).unwrap();
        nifti::write_volume_file(&sample_dir.join("imaging.nii"), &image).unwrap();
        nifti::write_labels_file(&sample_dir.join("segmentation.nii"), &labels).unwrap();
        ids.push(id);
    }
    ids
}

/// Patch-wise training setup used by the synthetic end-to-end runs.
pub fn benchmark_config(data_dir: &Path, output_dir: &Path, n_classes: usize) -> PipelineConfig {
    PipelineConfig {
        data_dir: data_dir.to_path_buf(),
        output_dir: output_dir.to_path_buf(),
        cache_dir: None,
        mode: AnalysisMode::Patch3d,
        patch_shape: Some(vec![16, 16, 16]),
        patch_overlap: vec![0, 0, 0],
        prediction_overlap: vec![8, 8, 8],
        clip: None,
        normalization: Normalization::ZScore,
        target_spacing: None,
        n_classes,
        skip_blank: true,
        augment: false,
        batch_size: 2,
        batch_mode: BatchMode::Cached,
        loss: LossKind::Combined,
        learning_rate: 1.0,
        epochs: 30,
        shuffle: true,
        seed: 2024,
        evaluation: EvalSpec::KFold(3),
        ..PipelineConfig::default()
    }
}

/// The benchmark config rendered in the CLI's flat key=value format.
pub fn benchmark_config_text(data_dir: &Path, output_dir: &Path, n_classes: usize) -> String {
    format!(
        "data_dir = {}\n\
         output_dir = {}\n\
         mode = 3d_patch\n\
         patch_shape = 16,16,16\n\
         prediction_overlap = 8,8,8\n\
         normalization = zscore\n\
         n_classes = {n_classes}\n\
         skip_blank = true\n\
         batch_size = 2\n\
         loss = combined\n\
         learning_rate = 1.0\n\
         epochs = 30\n\
         shuffle = true\n\
         seed = 2024\n\
         evaluation = kfold(3)\n",
        data_dir.display(),
        output_dir.display(),
    )
}
