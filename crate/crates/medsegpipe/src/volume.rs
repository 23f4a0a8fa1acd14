//! Core array types: scalar volumes, integer label maps and per-class score
//! volumes.
//!
//! All arrays are stored flat in row-major order with axes ordered slowest to
//! fastest as (z, y, x) — the last axis is contiguous. Voxel spacing is carried
//! per axis in millimeters, in the same axis order as `shape`.

use crate::error::{Error, Result};

/// Row-major strides for a shape (last axis contiguous).
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub(crate) fn num_elements(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Flat index of a multi-dimensional coordinate.
pub(crate) fn flat_index(coord: &[usize], shape: &[usize]) -> usize {
    debug_assert_eq!(coord.len(), shape.len());
    let mut idx = 0;
    for (c, extent) in coord.iter().zip(shape) {
        debug_assert!(c < extent);
        idx = idx * extent + c;
    }
    idx
}

/// Iterate all coordinates of a shape in lexicographic order, calling `f`
/// with (flat index, coordinate).
pub(crate) fn for_each_coord(shape: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let n = num_elements(shape);
    if n == 0 {
        return;
    }
    let mut coord = vec![0usize; shape.len()];
    for flat in 0..n {
        f(flat, &coord);
        for axis in (0..shape.len()).rev() {
            coord[axis] += 1;
            if coord[axis] < shape[axis] {
                break;
            }
            coord[axis] = 0;
        }
    }
}

/// A 2D or 3D scalar image with per-axis voxel spacing in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    shape: Vec<usize>,
    spacing: Vec<f64>,
    data: Vec<f32>,
}

impl Volume {
    /// Build a volume, validating rank, element count, spacing and finiteness.
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>, data: Vec<f32>) -> Result<Self> {
        validate_geometry(&shape, &spacing)?;
        if data.len() != num_elements(&shape) {
            return Err(Error::ShapeMismatch(format!(
                "data length {} != shape product {}",
                data.len(),
                num_elements(&shape)
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteVoxel(pos));
        }
        Ok(Self {
            shape,
            spacing,
            data,
        })
    }

    /// Volume filled with a constant value.
    pub fn filled(shape: Vec<usize>, spacing: Vec<f64>, value: f32) -> Result<Self> {
        let n = num_elements(&shape);
        Self::new(shape, spacing, vec![value; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Replace the data buffer, keeping geometry. Length must match.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(self.shape.clone(), self.spacing.clone(), data)
    }

    /// Same buffer under a new spacing (used after resampling).
    pub(crate) fn reshaped(shape: Vec<usize>, spacing: Vec<f64>, data: Vec<f32>) -> Result<Self> {
        Self::new(shape, spacing, data)
    }
}

/// An integer label volume: one class id per voxel, class 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMap {
    shape: Vec<usize>,
    spacing: Vec<f64>,
    data: Vec<u32>,
    n_classes: usize,
}

impl ClassMap {
    pub fn new(
        shape: Vec<usize>,
        spacing: Vec<f64>,
        data: Vec<u32>,
        n_classes: usize,
    ) -> Result<Self> {
        validate_geometry(&shape, &spacing)?;
        if data.len() != num_elements(&shape) {
            return Err(Error::ShapeMismatch(format!(
                "label data length {} != shape product {}",
                data.len(),
                num_elements(&shape)
            )));
        }
        if n_classes < 2 {
            return Err(Error::ShapeMismatch(format!(
                "n_classes must be >= 2, got {n_classes}"
            )));
        }
        if let Some(&bad) = data.iter().find(|&&id| id as usize >= n_classes) {
            return Err(Error::ShapeMismatch(format!(
                "class id {bad} out of range [0, {n_classes})"
            )));
        }
        Ok(Self {
            shape,
            spacing,
            data,
            n_classes,
        })
    }

    pub fn zeros(shape: Vec<usize>, spacing: Vec<f64>, n_classes: usize) -> Result<Self> {
        let n = num_elements(&shape);
        Self::new(shape, spacing, vec![0; n], n_classes)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn with_data(&self, data: Vec<u32>) -> Result<Self> {
        Self::new(
            self.shape.clone(),
            self.spacing.clone(),
            data,
            self.n_classes,
        )
    }
}

/// Per-class score channels over a spatial grid, channel-major:
/// `data[c * voxels + flat_spatial]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVolume {
    shape: Vec<usize>,
    spacing: Vec<f64>,
    n_classes: usize,
    data: Vec<f32>,
}

impl ScoreVolume {
    pub fn new(
        shape: Vec<usize>,
        spacing: Vec<f64>,
        n_classes: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        validate_geometry(&shape, &spacing)?;
        if n_classes < 2 {
            return Err(Error::ShapeMismatch(format!(
                "score volume needs >= 2 channels, got {n_classes}"
            )));
        }
        if data.len() != n_classes * num_elements(&shape) {
            return Err(Error::ShapeMismatch(format!(
                "score data length {} != {} classes x {} voxels",
                data.len(),
                n_classes,
                num_elements(&shape)
            )));
        }
        Ok(Self {
            shape,
            spacing,
            n_classes,
            data,
        })
    }

    pub fn zeros(shape: Vec<usize>, spacing: Vec<f64>, n_classes: usize) -> Result<Self> {
        let n = n_classes * num_elements(&shape);
        Self::new(shape, spacing, n_classes, vec![0.0; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn voxels(&self) -> usize {
        num_elements(&self.shape)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Scores of one class channel.
    pub fn channel(&self, c: usize) -> &[f32] {
        let v = self.voxels();
        &self.data[c * v..(c + 1) * v]
    }
}

fn validate_geometry(shape: &[usize], spacing: &[f64]) -> Result<()> {
    if shape.len() < 2 || shape.len() > 3 {
        return Err(Error::ShapeMismatch(format!(
            "volumes are 2D or 3D, got rank {}",
            shape.len()
        )));
    }
    if shape.iter().any(|&e| e == 0) {
        return Err(Error::ShapeMismatch(format!(
            "zero extent in shape {shape:?}"
        )));
    }
    if spacing.len() != shape.len() {
        return Err(Error::InvalidSpacing(format!(
            "spacing rank {} != shape rank {}",
            spacing.len(),
            shape.len()
        )));
    }
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidSpacing(format!(
            "non-positive spacing {spacing:?}"
        )));
    }
    Ok(())
}
