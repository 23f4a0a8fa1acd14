//! Seeded, reproducible training-time data augmentation.
//!
//! Spatial transforms (mirror, rotation, scaling, elastic deformation,
//! random cropping) are applied jointly to image and labels; intensity
//! transforms (brightness, contrast, gamma, Gaussian noise) touch the image
//! only. The pipeline applies techniques in a fixed order — spatial before
//! intensity — so intensity statistics are computed on the final geometry.
//!
//! Images are sampled with linear interpolation and edge clamping; labels
//! with nearest neighbour, reading background (class 0) outside the volume.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::patching::is_blank;
use crate::preprocess::mean_std;
use crate::volume::{flat_index, num_elements, strides, ClassMap, Volume};

/// Per-technique switches, parameter ranges and application probabilities.
///
/// Ranges are `(lo, hi)` pairs; brightness and noise ranges are in units of
/// the image's standard deviation.
#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub mirror: bool,
    /// Axes eligible for flipping (internal axis indices, 0 = slowest).
    pub mirror_axes: Vec<usize>,
    pub mirror_prob: f64,
    pub rotate: bool,
    pub rotation_degrees: (f64, f64),
    pub rotate_prob: f64,
    pub scale: bool,
    pub scale_range: (f64, f64),
    pub scale_prob: f64,
    pub elastic: bool,
    pub elastic_alpha: (f64, f64),
    pub elastic_sigma: f64,
    pub elastic_prob: f64,
    pub brightness: bool,
    pub brightness_range: (f64, f64),
    pub brightness_prob: f64,
    pub contrast: bool,
    pub contrast_range: (f64, f64),
    pub contrast_prob: f64,
    pub gamma: bool,
    pub gamma_range: (f64, f64),
    pub gamma_prob: f64,
    pub noise: bool,
    pub noise_sigma: (f64, f64),
    pub noise_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            mirror: true,
            mirror_axes: vec![0, 1, 2],
            mirror_prob: 0.15,
            rotate: true,
            rotation_degrees: (-15.0, 15.0),
            rotate_prob: 0.15,
            scale: true,
            scale_range: (0.85, 1.25),
            scale_prob: 0.15,
            elastic: true,
            elastic_alpha: (0.0, 10.0),
            elastic_sigma: 4.0,
            elastic_prob: 0.15,
            brightness: true,
            brightness_range: (-0.1, 0.1),
            brightness_prob: 0.15,
            contrast: true,
            contrast_range: (0.75, 1.25),
            contrast_prob: 0.15,
            gamma: true,
            gamma_range: (0.7, 1.5),
            gamma_prob: 0.15,
            noise: true,
            noise_sigma: (0.0, 0.05),
            noise_prob: 0.15,
        }
    }
}

impl AugmentConfig {
    /// All techniques off; `apply_pipeline` becomes the identity.
    pub fn disabled() -> Self {
        Self {
            mirror: false,
            rotate: false,
            scale: false,
            elastic: false,
            brightness: false,
            contrast: false,
            gamma: false,
            noise: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("rotation_degrees", self.rotation_degrees),
            ("scale_range", self.scale_range),
            ("elastic_alpha", self.elastic_alpha),
            ("brightness_range", self.brightness_range),
            ("contrast_range", self.contrast_range),
            ("gamma_range", self.gamma_range),
            ("noise_sigma", self.noise_sigma),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo <= hi) {
                return Err(Error::ValidationError {
                    field: name.into(),
                    reason: format!("range ({lo}, {hi}) not ordered"),
                });
            }
        }
        if self.gamma_range.0 <= 0.0 {
            return Err(Error::ValidationError {
                field: "gamma_range".into(),
                reason: "gamma must be positive".into(),
            });
        }
        if self.scale_range.0 <= 0.0 {
            return Err(Error::ValidationError {
                field: "scale_range".into(),
                reason: "scale factor must be positive".into(),
            });
        }
        if self.noise_sigma.0 < 0.0 || self.elastic_alpha.0 < 0.0 {
            return Err(Error::ValidationError {
                field: "noise_sigma/elastic_alpha".into(),
                reason: "must be non-negative".into(),
            });
        }
        if self.elastic_sigma <= 0.0 {
            return Err(Error::ValidationError {
                field: "elastic_sigma".into(),
                reason: "smoothing radius must be positive".into(),
            });
        }
        let probs = [
            self.mirror_prob,
            self.rotate_prob,
            self.scale_prob,
            self.elastic_prob,
            self.brightness_prob,
            self.contrast_prob,
            self.gamma_prob,
            self.noise_prob,
        ];
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::ValidationError {
                field: "probability".into(),
                reason: "probabilities must lie in [0, 1]".into(),
            });
        }
        Ok(())
    }
}

// --- sampling helpers --------------------------------------------------------

fn sample_linear_clamped(data: &[f32], shape: &[usize], strides_: &[usize], coord: &[f64]) -> f64 {
    let rank = shape.len();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut frac = [0f64; 3];
    for a in 0..rank {
        let c = coord[a].clamp(0.0, (shape[a] - 1) as f64);
        let base = c.floor();
        lo[a] = base as usize;
        hi[a] = (lo[a] + 1).min(shape[a] - 1);
        frac[a] = c - base;
    }
    let mut acc = 0f64;
    for corner in 0..(1usize << rank) {
        let mut w = 1f64;
        let mut flat = 0usize;
        for a in 0..rank {
            if corner & (1 << a) != 0 {
                w *= frac[a];
                flat += hi[a] * strides_[a];
            } else {
                w *= 1.0 - frac[a];
                flat += lo[a] * strides_[a];
            }
        }
        if w != 0.0 {
            acc += w * data[flat] as f64;
        }
    }
    acc
}

fn sample_nearest_or_background(
    data: &[u32],
    shape: &[usize],
    strides_: &[usize],
    coord: &[f64],
) -> u32 {
    let mut flat = 0usize;
    for a in 0..shape.len() {
        let idx = (coord[a] + 0.5).floor();
        if idx < 0.0 || idx >= shape[a] as f64 {
            return 0;
        }
        flat += idx as usize * strides_[a];
    }
    data[flat]
}

/// Warp image (linear, edge clamp) and labels (nearest, background outside)
/// through the same coordinate map `src_of(dst) -> src`.
fn warp_pair(
    image: &Volume,
    labels: &ClassMap,
    mut src_of: impl FnMut(&[usize], &mut [f64]),
) -> (Volume, ClassMap) {
    let shape = image.shape();
    let rank = shape.len();
    let st = strides(shape);
    let n = num_elements(shape);
    let mut img_out = Vec::with_capacity(n);
    let mut lab_out = Vec::with_capacity(n);
    let mut src = vec![0f64; rank];
    crate::volume::for_each_coord(shape, |_, coord| {
        src_of(coord, &mut src);
        img_out.push(sample_linear_clamped(image.data(), shape, &st, &src) as f32);
        lab_out.push(sample_nearest_or_background(
            labels.data(),
            shape,
            &st,
            &src,
        ));
    });
    let image = Volume::new(shape.to_vec(), image.spacing().to_vec(), img_out)
        .expect("warp preserves geometry");
    let labels = labels.with_data(lab_out).expect("warp preserves geometry");
    (image, labels)
}

fn check_pair(image: &Volume, labels: &ClassMap) -> Result<()> {
    if image.shape() != labels.shape() {
        return Err(Error::ShapeMismatch(format!(
            "image {:?} vs labels {:?}",
            image.shape(),
            labels.shape()
        )));
    }
    Ok(())
}

// --- spatial ops ---------------------------------------------------------------

/// Reverse both arrays along each selected axis.
pub fn mirror(image: &Volume, labels: &ClassMap, axes_mask: &[bool]) -> Result<(Volume, ClassMap)> {
    check_pair(image, labels)?;
    let shape = image.shape().to_vec();
    let rank = shape.len();
    if axes_mask.len() != rank {
        return Err(Error::ShapeMismatch(format!(
            "axes mask length {} != rank {rank}",
            axes_mask.len()
        )));
    }
    let n = num_elements(&shape);
    let mut img_out = vec![0f32; n];
    let mut lab_out = vec![0u32; n];
    let mut src = vec![0usize; rank];
    crate::volume::for_each_coord(&shape, |flat, coord| {
        for a in 0..rank {
            src[a] = if axes_mask[a] {
                shape[a] - 1 - coord[a]
            } else {
                coord[a]
            };
        }
        let s = flat_index(&src, &shape);
        img_out[flat] = image.data()[s];
        lab_out[flat] = labels.data()[s];
    });
    Ok((image.with_data(img_out)?, labels.with_data(lab_out)?))
}

/// Rank x rank rotation matrix for angles (degrees) about each internal
/// axis; 3D composes axis0 * axis1 * axis2 in (z, y, x) components.
fn rotation_matrix(angles_deg: &[f64], rank: usize) -> Vec<Vec<f64>> {
    fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        let mut out = vec![vec![0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                for (k, bk) in b.iter().enumerate() {
                    out[i][j] += a[i][k] * bk[j];
                }
            }
        }
        out
    }
    if rank == 2 {
        let t = angles_deg[0].to_radians();
        return vec![vec![t.cos(), -t.sin()], vec![t.sin(), t.cos()]];
    }
    let mut m = vec![
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ];
    let planes = [(1usize, 2usize), (0, 2), (0, 1)];
    for (axis, &(p, q)) in planes.iter().enumerate() {
        let t = angles_deg[axis].to_radians();
        let mut r = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        r[p][p] = t.cos();
        r[p][q] = -t.sin();
        r[q][p] = t.sin();
        r[q][q] = t.cos();
        m = matmul(&m, &r);
    }
    m
}

/// Rotate both arrays about the volume center. 2D takes one angle, 3D one
/// angle per axis (degrees).
pub fn rotate(image: &Volume, labels: &ClassMap, angles_deg: &[f64]) -> Result<(Volume, ClassMap)> {
    check_pair(image, labels)?;
    let rank = image.rank();
    let expected = if rank == 2 { 1 } else { 3 };
    if angles_deg.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "expected {expected} rotation angles for rank {rank}, got {}",
            angles_deg.len()
        )));
    }
    let m = rotation_matrix(angles_deg, rank);
    let center: Vec<f64> = image
        .shape()
        .iter()
        .map(|&e| (e as f64 - 1.0) / 2.0)
        .collect();
    Ok(warp_pair(image, labels, |dst, src| {
        // inverse map: src = C + R^T (dst - C)
        for (a, s) in src.iter_mut().enumerate() {
            let mut acc = 0f64;
            for b in 0..rank {
                acc += m[b][a] * (dst[b] as f64 - center[b]);
            }
            *s = center[a] + acc;
        }
    }))
}

/// Zoom about the center by `factor`, keeping the output shape (edges are
/// clamped on zoom-out, cropped on zoom-in).
pub fn scale_spatial(image: &Volume, labels: &ClassMap, factor: f64) -> Result<(Volume, ClassMap)> {
    check_pair(image, labels)?;
    if !(factor > 0.0) {
        return Err(Error::ValidationError {
            field: "scale factor".into(),
            reason: format!("must be positive, got {factor}"),
        });
    }
    let center: Vec<f64> = image
        .shape()
        .iter()
        .map(|&e| (e as f64 - 1.0) / 2.0)
        .collect();
    Ok(warp_pair(image, labels, |dst, src| {
        for (a, s) in src.iter_mut().enumerate() {
            *s = center[a] + (dst[a] as f64 - center[a]) / factor;
        }
    }))
}

/// Per-axis displacement fields: uniform noise in [-1, 1] smoothed by a
/// separable truncated Gaussian (radius 3 sigma, renormalized at borders),
/// scaled by alpha.
fn elastic_field(shape: &[usize], alpha: f64, sigma: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = num_elements(shape);
    let rank = shape.len();
    let mut fields = Vec::with_capacity(rank);
    for _ in 0..rank {
        let noise: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let smoothed = gaussian_smooth(&noise, shape, sigma);
        fields.push(smoothed.into_iter().map(|v| v * alpha).collect());
    }
    fields
}

fn gaussian_smooth(field: &[f64], shape: &[usize], sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();

    let st = strides(shape);
    let mut current = field.to_vec();
    for axis in 0..shape.len() {
        let mut next = vec![0f64; current.len()];
        let extent = shape[axis] as isize;
        crate::volume::for_each_coord(shape, |flat, coord| {
            let base = flat as isize - coord[axis] as isize * st[axis] as isize;
            let mut acc = 0f64;
            let mut wsum = 0f64;
            for (k, &w) in kernel.iter().enumerate() {
                let i = coord[axis] as isize + k as isize - radius;
                if i >= 0 && i < extent {
                    acc += w * current[(base + i * st[axis] as isize) as usize];
                    wsum += w;
                }
            }
            next[flat] = acc / wsum;
        });
        current = next;
    }
    current
}

/// Warp both arrays by a shared random displacement field. `alpha` is the
/// displacement magnitude (voxels), `sigma` the smoothing radius (voxels);
/// alpha 0 is the exact identity.
pub fn elastic_deform(
    image: &Volume,
    labels: &ClassMap,
    alpha: f64,
    sigma: f64,
    rng: &mut impl Rng,
) -> Result<(Volume, ClassMap)> {
    check_pair(image, labels)?;
    if alpha < 0.0 || !(sigma > 0.0) {
        return Err(Error::ValidationError {
            field: "elastic".into(),
            reason: format!("alpha {alpha} must be >= 0 and sigma {sigma} > 0"),
        });
    }
    let shape = image.shape().to_vec();
    let fields = elastic_field(&shape, alpha, sigma, rng);
    let st = strides(&shape);
    Ok(warp_pair(image, labels, |dst, src| {
        let mut flat = 0usize;
        for a in 0..shape.len() {
            flat += dst[a] * st[a];
        }
        for (a, s) in src.iter_mut().enumerate() {
            *s = dst[a] as f64 + fields[a][flat];
        }
    }))
}

// --- intensity ops -------------------------------------------------------------

/// Add a constant shift to every voxel.
pub fn brightness(image: &Volume, shift: f64) -> Volume {
    let data = image
        .data()
        .iter()
        .map(|&v| (v as f64 + shift) as f32)
        .collect();
    image.with_data(data).expect("length preserved")
}

/// Scale the deviation from the mean: `v' = mean + factor * (v - mean)`.
pub fn contrast(image: &Volume, factor: f64) -> Volume {
    let (mean, _) = mean_std(image.data());
    let data = image
        .data()
        .iter()
        .map(|&v| (mean + factor * (v as f64 - mean)) as f32)
        .collect();
    image.with_data(data).expect("length preserved")
}

/// Min-max normalize, raise to the power `g`, restore the original range.
/// Min and max survive exactly; a constant image passes through.
pub fn gamma(image: &Volume, g: f64) -> Result<Volume> {
    if !(g > 0.0) {
        return Err(Error::ValidationError {
            field: "gamma".into(),
            reason: format!("must be positive, got {g}"),
        });
    }
    let min = image.data().iter().fold(f32::INFINITY, |a, &b| a.min(b)) as f64;
    let max = image
        .data()
        .iter()
        .fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    let span = max - min;
    if span <= 0.0 {
        return Ok(image.clone());
    }
    let data = image
        .data()
        .iter()
        .map(|&v| {
            let t = ((v as f64) - min) / span;
            (min + span * t.powf(g)) as f32
        })
        .collect();
    image.with_data(data)
}

/// Add zero-mean Gaussian noise with standard deviation `sigma`.
pub fn gaussian_noise(image: &Volume, sigma: f64, rng: &mut impl Rng) -> Volume {
    if sigma <= 0.0 {
        return image.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked positive");
    let data = image
        .data()
        .iter()
        .map(|&v| (v as f64 + normal.sample(rng)) as f32)
        .collect();
    image.with_data(data).expect("length preserved")
}

// --- random cropping -------------------------------------------------------------

/// Zero-pad an image/label pair at the high end so every axis reaches at
/// least `min_shape`.
pub fn pad_to_min_shape(
    image: &Volume,
    labels: &ClassMap,
    min_shape: &[usize],
) -> Result<(Volume, ClassMap)> {
    check_pair(image, labels)?;
    let shape = image.shape();
    if shape.iter().zip(min_shape).all(|(&e, &m)| e >= m) {
        return Ok((image.clone(), labels.clone()));
    }
    let padded: Vec<usize> = shape
        .iter()
        .zip(min_shape)
        .map(|(&e, &m)| e.max(m))
        .collect();
    let n = num_elements(&padded);
    let mut img = vec![0f32; n];
    let mut lab = vec![0u32; n];
    crate::volume::for_each_coord(shape, |flat, coord| {
        let dst = flat_index(coord, &padded);
        img[dst] = image.data()[flat];
        lab[dst] = labels.data()[flat];
    });
    Ok((
        Volume::new(padded.clone(), image.spacing().to_vec(), img)?,
        ClassMap::new(padded, labels.spacing().to_vec(), lab, labels.n_classes())?,
    ))
}

/// Crop a random patch (uniform over valid origins). With
/// `require_foreground`, rejection-sample up to 10 times for a non-blank
/// label patch, then accept whatever was drawn last.
pub fn random_crop(
    image: &Volume,
    labels: &ClassMap,
    patch_shape: &[usize],
    rng: &mut impl Rng,
    require_foreground: bool,
) -> Result<(Volume, ClassMap)> {
    let (image, labels) = pad_to_min_shape(image, labels, patch_shape)?;
    let shape = image.shape();
    let rank = shape.len();
    if patch_shape.len() != rank {
        return Err(Error::InvalidPatchSpec(format!(
            "patch rank {} != volume rank {rank}",
            patch_shape.len()
        )));
    }

    let tries = if require_foreground { 10 } else { 1 };
    let mut result = None;
    for _ in 0..tries {
        let origin: Vec<usize> = (0..rank)
            .map(|a| rng.gen_range(0..=shape[a] - patch_shape[a]))
            .collect();
        let crop = crop_at(&image, &labels, &origin, patch_shape)?;
        let foreground = !is_blank(&crop.1);
        result = Some(crop);
        if !require_foreground || foreground {
            break;
        }
    }
    Ok(result.expect("at least one try"))
}

fn crop_at(
    image: &Volume,
    labels: &ClassMap,
    origin: &[usize],
    patch_shape: &[usize],
) -> Result<(Volume, ClassMap)> {
    let shape = image.shape();
    let n = num_elements(patch_shape);
    let mut img = Vec::with_capacity(n);
    let mut lab = Vec::with_capacity(n);
    let mut src = vec![0usize; shape.len()];
    crate::volume::for_each_coord(patch_shape, |_, coord| {
        for a in 0..shape.len() {
            src[a] = origin[a] + coord[a];
        }
        let flat = flat_index(&src, shape);
        img.push(image.data()[flat]);
        lab.push(labels.data()[flat]);
    });
    Ok((
        Volume::new(patch_shape.to_vec(), image.spacing().to_vec(), img)?,
        ClassMap::new(
            patch_shape.to_vec(),
            labels.spacing().to_vec(),
            lab,
            labels.n_classes(),
        )?,
    ))
}

// --- the pipeline ---------------------------------------------------------------

/// Apply the configured techniques in the fixed order
/// mirror -> rotate -> scale -> elastic -> brightness -> contrast -> gamma ->
/// noise, each firing with its configured probability. A pure function of
/// (inputs, config, rng stream).
pub fn apply_pipeline(
    image: &Volume,
    labels: &ClassMap,
    config: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<(Volume, ClassMap)> {
    check_pair(image, labels)?;
    config.validate()?;
    let rank = image.rank();
    let mut image = image.clone();
    let mut labels = labels.clone();

    if config.mirror && rng.gen::<f64>() < config.mirror_prob {
        let mut mask = vec![false; rank];
        for &axis in &config.mirror_axes {
            if axis < rank {
                mask[axis] = rng.gen::<bool>();
            }
        }
        (image, labels) = mirror(&image, &labels, &mask)?;
    }

    if config.rotate && rng.gen::<f64>() < config.rotate_prob {
        let count = if rank == 2 { 1 } else { 3 };
        let angles: Vec<f64> = (0..count)
            .map(|_| draw_range(rng, config.rotation_degrees))
            .collect();
        (image, labels) = rotate(&image, &labels, &angles)?;
    }

    if config.scale && rng.gen::<f64>() < config.scale_prob {
        let factor = draw_range(rng, config.scale_range);
        (image, labels) = scale_spatial(&image, &labels, factor)?;
    }

    if config.elastic && rng.gen::<f64>() < config.elastic_prob {
        let alpha = draw_range(rng, config.elastic_alpha);
        (image, labels) = elastic_deform(&image, &labels, alpha, config.elastic_sigma, rng)?;
    }

    // brightness and noise ranges are in units of the image's std
    if config.brightness && rng.gen::<f64>() < config.brightness_prob {
        let (_, std) = mean_std(image.data());
        let shift = draw_range(rng, config.brightness_range) * std;
        image = brightness(&image, shift);
    }

    if config.contrast && rng.gen::<f64>() < config.contrast_prob {
        let factor = draw_range(rng, config.contrast_range);
        image = contrast(&image, factor);
    }

    if config.gamma && rng.gen::<f64>() < config.gamma_prob {
        let g = draw_range(rng, config.gamma_range);
        image = gamma(&image, g)?;
    }

    if config.noise && rng.gen::<f64>() < config.noise_prob {
        let (_, std) = mean_std(image.data());
        let sigma = draw_range(rng, config.noise_sigma) * std;
        image = gaussian_noise(&image, sigma, rng);
    }

    Ok((image, labels))
}

fn draw_range(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}
