//! Deterministic decomposition of volumes into (optionally overlapping)
//! patches and exact reconstruction of per-class score volumes from patch
//! predictions.
//!
//! End-of-axis handling is clamp-back: when the last patch would overrun,
//! its origin moves back to `extent - patch`, producing extra overlap instead
//! of padding. Only volumes smaller than the patch are zero-padded at the
//! high end.

use crate::error::{Error, Result};
use crate::volume::{flat_index, num_elements, strides, ClassMap, ScoreVolume, Volume};

/// Patch shape, overlap and the ordered list of patch origins covering a
/// volume. Origins are ordered lexicographically, slowest axis first.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub patch_shape: Vec<usize>,
    pub overlap: Vec<usize>,
    pub origins: Vec<Vec<usize>>,
    pub padded_shape: Vec<usize>,
    pub original_shape: Vec<usize>,
}

impl PatchGrid {
    pub fn stride(&self) -> Vec<usize> {
        self.patch_shape
            .iter()
            .zip(&self.overlap)
            .map(|(&p, &o)| p - o)
            .collect()
    }

    pub fn n_patches(&self) -> usize {
        self.origins.len()
    }

    pub fn needs_padding(&self) -> bool {
        self.padded_shape != self.original_shape
    }
}

fn axis_origins(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut origins = Vec::new();
    let mut p = 0usize;
    loop {
        if p + patch >= extent {
            origins.push(extent - patch);
            break;
        }
        origins.push(p);
        p += stride;
    }
    origins
}

/// Compute the patch grid for a volume shape.
///
/// Per axis the origins are 0, stride, 2*stride, ... with
/// `stride = patch - overlap`; a final overrunning patch is clamped back to
/// `extent - patch`. Volumes smaller than the patch are zero-padded at the
/// high end and `padded_shape` records it.
pub fn compute_grid(
    volume_shape: &[usize],
    patch_shape: &[usize],
    overlap: &[usize],
) -> Result<PatchGrid> {
    let rank = volume_shape.len();
    if patch_shape.len() != rank || overlap.len() != rank {
        return Err(Error::InvalidPatchSpec(format!(
            "rank mismatch: shape {volume_shape:?}, patch {patch_shape:?}, overlap {overlap:?}"
        )));
    }
    if volume_shape.iter().any(|&e| e == 0) {
        return Err(Error::InvalidPatchSpec(format!(
            "zero extent in {volume_shape:?}"
        )));
    }
    for axis in 0..rank {
        if patch_shape[axis] == 0 || overlap[axis] >= patch_shape[axis] {
            return Err(Error::InvalidPatchSpec(format!(
                "axis {axis}: need patch > overlap >= 0, got patch {} overlap {}",
                patch_shape[axis], overlap[axis]
            )));
        }
    }

    let padded_shape: Vec<usize> = volume_shape
        .iter()
        .zip(patch_shape)
        .map(|(&e, &p)| e.max(p))
        .collect();

    let per_axis: Vec<Vec<usize>> = padded_shape
        .iter()
        .zip(patch_shape)
        .zip(overlap)
        .map(|((&extent, &patch), &ov)| axis_origins(extent, patch, patch - ov))
        .collect();

    let mut origins = Vec::new();
    let counts: Vec<usize> = per_axis.iter().map(Vec::len).collect();
    let total: usize = counts.iter().product();
    let mut idx = vec![0usize; rank];
    for _ in 0..total {
        origins.push(
            idx.iter()
                .enumerate()
                .map(|(a, &i)| per_axis[a][i])
                .collect(),
        );
        for axis in (0..rank).rev() {
            idx[axis] += 1;
            if idx[axis] < counts[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }

    Ok(PatchGrid {
        patch_shape: patch_shape.to_vec(),
        overlap: overlap.to_vec(),
        origins,
        padded_shape,
        original_shape: volume_shape.to_vec(),
    })
}

/// Copy the sub-block at `origin`; coordinates beyond `shape` read `pad`.
fn extract_block<T: Copy>(
    data: &[T],
    shape: &[usize],
    origin: &[usize],
    patch_shape: &[usize],
    pad: T,
) -> Vec<T> {
    let rank = shape.len();
    let n = num_elements(patch_shape);
    let mut out = Vec::with_capacity(n);
    let mut coord = vec![0usize; rank];
    for _ in 0..n {
        let mut inside = true;
        let mut src = vec![0usize; rank];
        for a in 0..rank {
            let c = origin[a] + coord[a];
            if c >= shape[a] {
                inside = false;
                break;
            }
            src[a] = c;
        }
        out.push(if inside {
            data[flat_index(&src, shape)]
        } else {
            pad
        });
        for axis in (0..rank).rev() {
            coord[axis] += 1;
            if coord[axis] < patch_shape[axis] {
                break;
            }
            coord[axis] = 0;
        }
    }
    out
}

fn check_grid(grid: &PatchGrid, shape: &[usize]) -> Result<()> {
    if grid.original_shape != shape {
        return Err(Error::GridShapeMismatch {
            grid: grid.original_shape.clone(),
            volume: shape.to_vec(),
        });
    }
    Ok(())
}

/// Extract image patches; one per grid origin, in grid order.
pub fn extract_patches(v: &Volume, grid: &PatchGrid) -> Result<Vec<Volume>> {
    check_grid(grid, v.shape())?;
    grid.origins
        .iter()
        .map(|origin| {
            let data = extract_block(v.data(), v.shape(), origin, &grid.patch_shape, 0.0);
            Volume::new(grid.patch_shape.clone(), v.spacing().to_vec(), data)
        })
        .collect()
}

/// Extract label patches; padding reads background (class 0).
pub fn extract_label_patches(m: &ClassMap, grid: &PatchGrid) -> Result<Vec<ClassMap>> {
    check_grid(grid, m.shape())?;
    grid.origins
        .iter()
        .map(|origin| {
            let data = extract_block(m.data(), m.shape(), origin, &grid.patch_shape, 0);
            ClassMap::new(
                grid.patch_shape.clone(),
                m.spacing().to_vec(),
                data,
                m.n_classes(),
            )
        })
        .collect()
}

/// Extract per-class score patches, channel by channel.
pub fn extract_score_patches(s: &ScoreVolume, grid: &PatchGrid) -> Result<Vec<ScoreVolume>> {
    check_grid(grid, s.shape())?;
    let voxels = s.voxels();
    grid.origins
        .iter()
        .map(|origin| {
            let patch_voxels = num_elements(&grid.patch_shape);
            let mut data = Vec::with_capacity(s.n_classes() * patch_voxels);
            for c in 0..s.n_classes() {
                data.extend(extract_block(
                    &s.data()[c * voxels..(c + 1) * voxels],
                    s.shape(),
                    origin,
                    &grid.patch_shape,
                    0.0,
                ));
            }
            ScoreVolume::new(
                grid.patch_shape.clone(),
                s.spacing().to_vec(),
                s.n_classes(),
                data,
            )
        })
        .collect()
}

/// True iff every voxel of the label patch is background (class 0).
pub fn is_blank(label_patch: &ClassMap) -> bool {
    label_patch.data().iter().all(|&id| id == 0)
}

/// Reassemble per-class score patches into one score volume.
///
/// Every output voxel is the arithmetic mean of all patch contributions that
/// cover it, accumulated in double precision; the padding region is cropped
/// so the output has the grid's original shape.
pub fn merge_patches(score_patches: &[ScoreVolume], grid: &PatchGrid) -> Result<ScoreVolume> {
    if score_patches.len() != grid.origins.len() {
        return Err(Error::PatchCountMismatch {
            expected: grid.origins.len(),
            actual: score_patches.len(),
        });
    }
    let first = score_patches.first().ok_or(Error::PatchCountMismatch {
        expected: grid.origins.len(),
        actual: 0,
    })?;
    let n_classes = first.n_classes();
    for p in score_patches {
        if p.shape() != grid.patch_shape.as_slice() {
            return Err(Error::GridShapeMismatch {
                grid: grid.patch_shape.clone(),
                volume: p.shape().to_vec(),
            });
        }
        if p.n_classes() != n_classes {
            return Err(Error::ShapeMismatch(format!(
                "patch channel counts differ: {} vs {}",
                p.n_classes(),
                n_classes
            )));
        }
    }

    let padded_voxels = num_elements(&grid.padded_shape);
    let patch_voxels = num_elements(&grid.patch_shape);
    let padded_strides = strides(&grid.padded_shape);
    let rank = grid.padded_shape.len();

    let mut sums = vec![0f64; n_classes * padded_voxels];
    let mut counts = vec![0u32; padded_voxels];

    for (patch, origin) in score_patches.iter().zip(&grid.origins) {
        let mut coord = vec![0usize; rank];
        for local in 0..patch_voxels {
            let mut flat = 0usize;
            for a in 0..rank {
                flat += (origin[a] + coord[a]) * padded_strides[a];
            }
            counts[flat] += 1;
            for c in 0..n_classes {
                sums[c * padded_voxels + flat] += patch.data()[c * patch_voxels + local] as f64;
            }
            for axis in (0..rank).rev() {
                coord[axis] += 1;
                if coord[axis] < grid.patch_shape[axis] {
                    break;
                }
                coord[axis] = 0;
            }
        }
    }
    // counts are shared by all channels, so only channel 0 incremented them
    for (flat, &cnt) in counts.iter().enumerate() {
        debug_assert!(cnt > 0, "grid coverage hole at flat index {flat}");
    }

    let out_voxels = num_elements(&grid.original_shape);
    let mut data = vec![0f32; n_classes * out_voxels];
    crate::volume::for_each_coord(&grid.original_shape, |out_flat, coord| {
        let mut padded_flat = 0usize;
        for a in 0..rank {
            padded_flat += coord[a] * padded_strides[a];
        }
        let cnt = counts[padded_flat] as f64;
        for c in 0..n_classes {
            data[c * out_voxels + out_flat] = (sums[c * padded_voxels + padded_flat] / cnt) as f32;
        }
    });

    ScoreVolume::new(
        grid.original_shape.clone(),
        first.spacing().to_vec(),
        n_classes,
        data,
    )
}

/// Split a 3D volume into its axial (first-axis) 2D slices.
pub fn slice_2d(v: &Volume) -> Result<Vec<Volume>> {
    if v.rank() != 3 {
        return Err(Error::NotThreeDimensional(v.rank()));
    }
    let (nz, ny, nx) = (v.shape()[0], v.shape()[1], v.shape()[2]);
    let spacing = vec![v.spacing()[1], v.spacing()[2]];
    (0..nz)
        .map(|z| {
            let data = v.data()[z * ny * nx..(z + 1) * ny * nx].to_vec();
            Volume::new(vec![ny, nx], spacing.clone(), data)
        })
        .collect()
}

/// Split a 3D label map into axial 2D slices.
pub fn slice_labels_2d(m: &ClassMap) -> Result<Vec<ClassMap>> {
    if m.rank() != 3 {
        return Err(Error::NotThreeDimensional(m.rank()));
    }
    let (nz, ny, nx) = (m.shape()[0], m.shape()[1], m.shape()[2]);
    let spacing = vec![m.spacing()[1], m.spacing()[2]];
    (0..nz)
        .map(|z| {
            let data = m.data()[z * ny * nx..(z + 1) * ny * nx].to_vec();
            ClassMap::new(vec![ny, nx], spacing.clone(), data, m.n_classes())
        })
        .collect()
}

/// Stack 2D slices back into a 3D volume (inverse of [`slice_2d`]).
pub fn stack_slices(slices: &[Volume], z_spacing: f64) -> Result<Volume> {
    let first = slices
        .first()
        .ok_or_else(|| Error::EmptyInput("no slices".into()))?;
    let mut data = Vec::with_capacity(slices.len() * first.len());
    for s in slices {
        if s.shape() != first.shape() {
            return Err(Error::ShapeMismatch("slice shapes differ".into()));
        }
        data.extend_from_slice(s.data());
    }
    Volume::new(
        vec![slices.len(), first.shape()[0], first.shape()[1]],
        vec![z_spacing, first.spacing()[0], first.spacing()[1]],
        data,
    )
}
