//! Intensity and geometry normalization of volumes before patching, plus
//! one-hot label encoding.
//!
//! Pipeline order is clip -> resample -> normalize, so clipping operates in
//! the original physical units. Statistics are computed per volume in double
//! precision.

use crate::error::{Error, Result};
use crate::volume::{num_elements, ClassMap, ScoreVolume, Volume};

/// Sampling mode for geometric resampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Trilinear (bilinear in 2D) with edge-clamped sampling.
    Linear,
    /// Nearest neighbour; never invents values.
    Nearest,
}

/// Z-score normalization: output has mean 0 and population std 1.
/// A constant volume (std below 1e-12) maps to all zeros.
pub fn zscore_normalize(v: &Volume) -> Volume {
    let (mean, std) = mean_std(v.data());
    let data = if std < 1e-12 {
        vec![0.0f32; v.len()]
    } else {
        v.data()
            .iter()
            .map(|&x| (((x as f64) - mean) / std) as f32)
            .collect()
    };
    v.with_data(data).expect("length preserved")
}

/// Two-pass mean and population standard deviation in f64.
pub fn mean_std(data: &[f32]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = data.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Affine map of the value range onto [lo, hi]; constant input maps to lo.
pub fn scale_range(v: &Volume, lo: f64, hi: f64) -> Result<Volume> {
    if !(lo < hi) {
        return Err(Error::InvalidRange { lo, hi });
    }
    let min = v.data().iter().fold(f32::INFINITY, |a, &b| a.min(b)) as f64;
    let max = v.data().iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    let span = max - min;
    let data = if span <= 0.0 {
        vec![lo as f32; v.len()]
    } else {
        v.data()
            .iter()
            .map(|&x| {
                let t = ((x as f64) - min) / span;
                (lo * (1.0 - t) + hi * t) as f32
            })
            .collect()
    };
    v.with_data(data)
}

/// Clamp every voxel into [min, max].
pub fn clip(v: &Volume, min: f64, max: f64) -> Result<Volume> {
    if !(min < max) {
        return Err(Error::InvalidRange { lo: min, hi: max });
    }
    let (lo, hi) = (min as f32, max as f32);
    let data = v.data().iter().map(|&x| x.clamp(lo, hi)).collect();
    v.with_data(data)
}

fn output_extents(shape: &[usize], old_sp: &[f64], new_sp: &[f64]) -> Vec<usize> {
    shape
        .iter()
        .zip(old_sp.iter().zip(new_sp))
        .map(|(&e, (&o, &n))| ((e as f64) * o / n).round().max(1.0) as usize)
        .collect()
}

/// Source coordinate of output voxel center `i` when each output step covers
/// `ratio` input voxels (voxel centers aligned in physical space).
fn src_coord(i: usize, ratio: f64) -> f64 {
    (i as f64 + 0.5) * ratio - 0.5
}

fn resample_scalar<T: Copy>(
    data: &[T],
    in_shape: &[usize],
    out_shape: &[usize],
    ratios: &[f64],
    mode: Interpolation,
    to_f64: impl Fn(T) -> f64,
    from_f64: impl Fn(f64) -> T,
    pick: impl Fn(T) -> T,
) -> Vec<T> {
    let rank = in_shape.len();
    let in_strides = crate::volume::strides(in_shape);
    let n_out = num_elements(out_shape);
    let mut out = Vec::with_capacity(n_out);

    let mut coord = vec![0usize; rank];
    for _ in 0..n_out {
        let src: Vec<f64> = coord
            .iter()
            .zip(ratios)
            .zip(in_shape)
            .map(|((&i, &r), &extent)| src_coord(i, r).clamp(0.0, (extent - 1) as f64))
            .collect();

        match mode {
            Interpolation::Nearest => {
                let flat: usize = src
                    .iter()
                    .zip(in_shape)
                    .zip(&in_strides)
                    .map(|((&s, &extent), &stride)| {
                        let idx = ((s + 0.5).floor() as usize).min(extent - 1);
                        idx * stride
                    })
                    .sum();
                out.push(pick(data[flat]));
            }
            Interpolation::Linear => {
                // Multilinear blend over the 2^rank corner voxels.
                let mut lo = vec![0usize; rank];
                let mut hi = vec![0usize; rank];
                let mut frac = vec![0f64; rank];
                for a in 0..rank {
                    let base = src[a].floor();
                    let i0 = base as usize;
                    lo[a] = i0;
                    hi[a] = (i0 + 1).min(in_shape[a] - 1);
                    frac[a] = src[a] - base;
                }
                let mut acc = 0.0f64;
                for corner in 0..(1usize << rank) {
                    let mut w = 1.0f64;
                    let mut flat = 0usize;
                    for a in 0..rank {
                        if corner & (1 << a) != 0 {
                            w *= frac[a];
                            flat += hi[a] * in_strides[a];
                        } else {
                            w *= 1.0 - frac[a];
                            flat += lo[a] * in_strides[a];
                        }
                    }
                    if w != 0.0 {
                        acc += w * to_f64(data[flat]);
                    }
                }
                out.push(from_f64(acc));
            }
        }

        for axis in (0..rank).rev() {
            coord[axis] += 1;
            if coord[axis] < out_shape[axis] {
                break;
            }
            coord[axis] = 0;
        }
    }
    out
}

/// Resample a volume to a new voxel spacing. New extent per axis is
/// `max(1, round(extent * old_spacing / new_spacing))`.
pub fn resample(v: &Volume, target_spacing: &[f64], mode: Interpolation) -> Result<Volume> {
    validate_target_spacing(v.rank(), target_spacing)?;
    let out_shape = output_extents(v.shape(), v.spacing(), target_spacing);
    let ratios: Vec<f64> = v
        .spacing()
        .iter()
        .zip(target_spacing)
        .map(|(&o, &n)| n / o)
        .collect();
    let data = resample_scalar(
        v.data(),
        v.shape(),
        &out_shape,
        &ratios,
        mode,
        |x| x as f64,
        |x| x as f32,
        |x| x,
    );
    Volume::reshaped(out_shape, target_spacing.to_vec(), data)
}

/// Resample a label map to a new voxel spacing (always nearest neighbour).
pub fn resample_labels(m: &ClassMap, target_spacing: &[f64]) -> Result<ClassMap> {
    validate_target_spacing(m.rank(), target_spacing)?;
    let out_shape = output_extents(m.shape(), m.spacing(), target_spacing);
    let ratios: Vec<f64> = m
        .spacing()
        .iter()
        .zip(target_spacing)
        .map(|(&o, &n)| n / o)
        .collect();
    let data = resample_scalar(
        m.data(),
        m.shape(),
        &out_shape,
        &ratios,
        Interpolation::Nearest,
        |x| x as f64,
        |x| x as u32,
        |x| x,
    );
    ClassMap::new(out_shape, target_spacing.to_vec(), data, m.n_classes())
}

/// Resample a label map onto an explicit output shape (nearest neighbour),
/// used to restore predictions to the pre-resampling geometry.
pub fn resample_labels_to_shape(
    m: &ClassMap,
    out_shape: &[usize],
    out_spacing: &[f64],
) -> Result<ClassMap> {
    if out_shape.len() != m.rank() {
        return Err(Error::ShapeMismatch(format!(
            "target rank {} != labels rank {}",
            out_shape.len(),
            m.rank()
        )));
    }
    let ratios: Vec<f64> = m
        .shape()
        .iter()
        .zip(out_shape)
        .map(|(&i, &o)| i as f64 / o as f64)
        .collect();
    let data = resample_scalar(
        m.data(),
        m.shape(),
        out_shape,
        &ratios,
        Interpolation::Nearest,
        |x| x as f64,
        |x| x as u32,
        |x| x,
    );
    ClassMap::new(
        out_shape.to_vec(),
        out_spacing.to_vec(),
        data,
        m.n_classes(),
    )
}

fn validate_target_spacing(rank: usize, target: &[f64]) -> Result<()> {
    if target.len() != rank {
        return Err(Error::InvalidSpacing(format!(
            "target spacing rank {} != volume rank {rank}",
            target.len()
        )));
    }
    if target.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidSpacing(format!("{target:?}")));
    }
    Ok(())
}

/// One binary channel per class; channel c is 1 where `labels == c`.
pub fn one_hot_encode(labels: &ClassMap) -> ScoreVolume {
    let voxels = labels.len();
    let c = labels.n_classes();
    let mut data = vec![0.0f32; c * voxels];
    for (i, &id) in labels.data().iter().enumerate() {
        data[id as usize * voxels + i] = 1.0;
    }
    ScoreVolume::new(labels.shape().to_vec(), labels.spacing().to_vec(), c, data)
        .expect("shape is valid by construction")
}

/// Per-voxel argmax over channels; ties break toward the lowest class index.
pub fn one_hot_decode(scores: &ScoreVolume) -> ClassMap {
    let voxels = scores.voxels();
    let mut ids = vec![0u32; voxels];
    for (i, id) in ids.iter_mut().enumerate() {
        let mut best_c = 0usize;
        let mut best = scores.data()[i];
        for c in 1..scores.n_classes() {
            let s = scores.data()[c * voxels + i];
            if s > best {
                best = s;
                best_c = c;
            }
        }
        *id = best_c as u32;
    }
    ClassMap::new(
        scores.shape().to_vec(),
        scores.spacing().to_vec(),
        ids,
        scores.n_classes(),
    )
    .expect("ids in range by construction")
}
