//! Pipeline configuration: a flat `key = value` text file with `#` comment
//! lines and comma-separated tuples.
//!
//! Unknown keys are a hard error so typos in experiment configs cannot pass
//! silently. Every cross-field constraint is validated at load time.

use std::path::{Path, PathBuf};

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::metrics::LossKind;
use crate::preprocess::{
    clip, resample, resample_labels, scale_range, zscore_normalize, Interpolation,
};
use crate::volume::{ClassMap, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisMode {
    Patch3d,
    Slice2d,
    FullImage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    ZScore,
    Scale(f64, f64),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    Cached,
    OnTheFly,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalSpec {
    KFold(usize),
    LeaveOneOut,
    Split(f64),
    Detailed,
}

/// Per-epoch metrics recorded by the fitting callback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    SoftDice,
    Tversky,
    CrossEntropy,
    Combined,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::SoftDice => "soft_dice",
            Self::Tversky => "tversky_loss",
            Self::CrossEntropy => "crossentropy",
            Self::Combined => "combined_loss",
        }
    }
}

/// Every tunable of the pipeline as one validated record.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub mode: AnalysisMode,
    pub patch_shape: Option<Vec<usize>>,
    pub patch_overlap: Vec<usize>,
    pub prediction_overlap: Vec<usize>,
    pub clip: Option<(f64, f64)>,
    pub normalization: Normalization,
    pub target_spacing: Option<Vec<f64>>,
    pub n_classes: usize,
    pub skip_blank: bool,
    pub augment: bool,
    pub augment_config: AugmentConfig,
    pub batch_size: usize,
    pub batch_mode: BatchMode,
    pub prefetch_depth: usize,
    pub loss: LossKind,
    pub tversky_alpha: f64,
    pub tversky_beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub shuffle: bool,
    pub seed: u64,
    pub workers: usize,
    pub evaluation: EvalSpec,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub train_metrics: Vec<MetricKind>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::new(),
            output_dir: PathBuf::new(),
            cache_dir: None,
            mode: AnalysisMode::Patch3d,
            patch_shape: None,
            patch_overlap: Vec::new(),
            prediction_overlap: Vec::new(),
            clip: None,
            normalization: Normalization::ZScore,
            target_spacing: None,
            n_classes: 2,
            skip_blank: true,
            augment: false,
            augment_config: AugmentConfig::default(),
            batch_size: 1,
            batch_mode: BatchMode::Cached,
            prefetch_depth: 2,
            loss: LossKind::Tversky,
            tversky_alpha: 0.5,
            tversky_beta: 0.5,
            learning_rate: 1e-4,
            epochs: 1,
            shuffle: true,
            seed: 42,
            workers: 0,
            evaluation: EvalSpec::KFold(3),
            train_ids: Vec::new(),
            test_ids: Vec::new(),
            train_metrics: vec![MetricKind::SoftDice],
        }
    }
}

impl PipelineConfig {
    /// Worker thread count, resolving 0 to the available parallelism.
    pub fn effective_workers(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        } else {
            self.workers
        }
    }

    /// Apply the configured clip -> resample -> normalize chain to an image.
    pub fn preprocess_image(&self, image: &Volume) -> Result<Volume> {
        let mut v = image.clone();
        if let Some((lo, hi)) = self.clip {
            v = clip(&v, lo, hi)?;
        }
        if let Some(target) = &self.target_spacing {
            v = resample(&v, target, Interpolation::Linear)?;
        }
        match self.normalization {
            Normalization::ZScore => v = zscore_normalize(&v),
            Normalization::Scale(lo, hi) => v = scale_range(&v, lo, hi)?,
            Normalization::None => {}
        }
        Ok(v)
    }

    /// Resample labels to the configured spacing (nearest neighbour).
    pub fn preprocess_labels(&self, labels: &ClassMap) -> Result<ClassMap> {
        match &self.target_spacing {
            Some(target) => resample_labels(labels, target),
            None => Ok(labels.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn required(field: &str, ok: bool) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::ValidationError {
                    field: field.into(),
                    reason: "required key missing".into(),
                })
            }
        }
        required("data_dir", !self.data_dir.as_os_str().is_empty())?;
        required("output_dir", !self.output_dir.as_os_str().is_empty())?;

        if self.n_classes < 2 {
            return Err(Error::ValidationError {
                field: "n_classes".into(),
                reason: format!("need >= 2 classes, got {}", self.n_classes),
            });
        }
        if self.batch_size < 1 {
            return Err(Error::ValidationError {
                field: "batch_size".into(),
                reason: "must be >= 1".into(),
            });
        }
        if self.epochs < 1 {
            return Err(Error::ValidationError {
                field: "epochs".into(),
                reason: "must be >= 1".into(),
            });
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::ValidationError {
                field: "learning_rate".into(),
                reason: "must be positive".into(),
            });
        }
        if self.prefetch_depth < 1 {
            return Err(Error::ValidationError {
                field: "prefetch_depth".into(),
                reason: "must be >= 1".into(),
            });
        }
        if self.tversky_alpha < 0.0 || self.tversky_beta < 0.0 {
            return Err(Error::ValidationError {
                field: "tversky_alpha/tversky_beta".into(),
                reason: "must be non-negative".into(),
            });
        }

        if let Some((lo, hi)) = self.clip {
            if !(lo < hi) {
                return Err(Error::ValidationError {
                    field: "clip_min/clip_max".into(),
                    reason: format!("need clip_min < clip_max, got {lo} >= {hi}"),
                });
            }
        }
        if let Normalization::Scale(lo, hi) = self.normalization {
            if !(lo < hi) {
                return Err(Error::ValidationError {
                    field: "normalization".into(),
                    reason: format!("scale range ({lo}, {hi}) not ordered"),
                });
            }
        }
        if let Some(spacing) = &self.target_spacing {
            if spacing.is_empty() || spacing.len() > 3 || spacing.iter().any(|&s| !(s > 0.0)) {
                return Err(Error::ValidationError {
                    field: "target_spacing".into(),
                    reason: format!("{spacing:?} must be 1-3 positive values"),
                });
            }
        }

        match self.mode {
            AnalysisMode::Patch3d => {
                let patch = self
                    .patch_shape
                    .as_ref()
                    .ok_or_else(|| Error::ValidationError {
                        field: "patch_shape".into(),
                        reason: "required in 3d_patch mode".into(),
                    })?;
                if patch.len() != 3 || patch.iter().any(|&e| e == 0) {
                    return Err(Error::ValidationError {
                        field: "patch_shape".into(),
                        reason: format!("{patch:?} must be 3 positive extents"),
                    });
                }
                for (name, overlap) in [
                    ("patch_overlap", &self.patch_overlap),
                    ("prediction_overlap", &self.prediction_overlap),
                ] {
                    if overlap.len() != patch.len() {
                        return Err(Error::ValidationError {
                            field: name.into(),
                            reason: format!(
                                "rank {} != patch_shape rank {}",
                                overlap.len(),
                                patch.len()
                            ),
                        });
                    }
                    if overlap.iter().zip(patch).any(|(&o, &p)| o >= p) {
                        return Err(Error::ValidationError {
                            field: name.into(),
                            reason: format!("overlap {overlap:?} must stay below patch {patch:?}"),
                        });
                    }
                }
            }
            AnalysisMode::Slice2d | AnalysisMode::FullImage => {}
        }

        if let EvalSpec::KFold(k) = self.evaluation {
            if k < 2 {
                return Err(Error::ValidationError {
                    field: "evaluation".into(),
                    reason: format!("kfold needs k >= 2, got {k}"),
                });
            }
        }
        if let EvalSpec::Split(f) = self.evaluation {
            if !(0.0 < f && f < 1.0) {
                return Err(Error::ValidationError {
                    field: "evaluation".into(),
                    reason: format!("split fraction {f} must lie in (0, 1)"),
                });
            }
        }
        if self.evaluation == EvalSpec::Detailed
            && (self.train_ids.is_empty() || self.test_ids.is_empty())
        {
            return Err(Error::ValidationError {
                field: "train_ids/test_ids".into(),
                reason: "detailed evaluation needs both id lists".into(),
            });
        }

        self.augment_config.validate()?;
        Ok(())
    }
}

/// Parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Parse and validate configuration text.
pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::default();
    let mut seen = std::collections::HashSet::new();
    // patch_overlap / prediction_overlap default to zeros of patch rank
    let mut patch_overlap: Option<Vec<usize>> = None;
    let mut prediction_overlap: Option<Vec<usize>> = None;
    let mut clip_min: Option<f64> = None;
    let mut clip_max: Option<f64> = None;
    let mut aug_probability: Option<f64> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = lineno + 1;
        let (key, value) = line.split_once('=').ok_or_else(|| Error::ParseError {
            line: lineno,
            reason: format!("expected `key = value`, got {line:?}"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(Error::ParseError {
                line: lineno,
                reason: format!("duplicate key {key:?}"),
            });
        }

        let err = |reason: String| Error::ValidationError {
            field: key.into(),
            reason,
        };

        match key {
            "data_dir" => config.data_dir = PathBuf::from(value),
            "output_dir" => config.output_dir = PathBuf::from(value),
            "cache_dir" => config.cache_dir = Some(PathBuf::from(value)),
            "mode" => {
                config.mode = match value {
                    "3d_patch" => AnalysisMode::Patch3d,
                    "2d_slice" => AnalysisMode::Slice2d,
                    "full_image" => AnalysisMode::FullImage,
                    other => return Err(err(format!("unknown mode {other:?}"))),
                }
            }
            "patch_shape" => config.patch_shape = Some(parse_usizes(value, key)?),
            "patch_overlap" => patch_overlap = Some(parse_usizes(value, key)?),
            "prediction_overlap" => prediction_overlap = Some(parse_usizes(value, key)?),
            "clip_min" => clip_min = Some(parse_f64(value, key)?),
            "clip_max" => clip_max = Some(parse_f64(value, key)?),
            "normalization" => {
                config.normalization = if value == "zscore" {
                    Normalization::ZScore
                } else if value == "none" {
                    Normalization::None
                } else if let Some(args) = value
                    .strip_prefix("scale(")
                    .and_then(|v| v.strip_suffix(')'))
                {
                    let pair = parse_f64s(args, key)?;
                    if pair.len() != 2 {
                        return Err(err("scale needs two arguments".into()));
                    }
                    Normalization::Scale(pair[0], pair[1])
                } else {
                    return Err(err(format!("unknown normalization {value:?}")));
                }
            }
            "target_spacing" => config.target_spacing = Some(parse_f64s(value, key)?),
            "n_classes" => config.n_classes = parse_usize(value, key)?,
            "skip_blank" => config.skip_blank = parse_bool(value, key)?,
            "augment" => config.augment = parse_bool(value, key)?,
            "batch_size" => config.batch_size = parse_usize(value, key)?,
            "batch_mode" => {
                config.batch_mode = match value {
                    "cached" => BatchMode::Cached,
                    "on_the_fly" => BatchMode::OnTheFly,
                    other => return Err(err(format!("unknown batch_mode {other:?}"))),
                }
            }
            "prefetch_depth" => config.prefetch_depth = parse_usize(value, key)?,
            "loss" => {
                config.loss = match value {
                    "tversky" => LossKind::Tversky,
                    "crossentropy" => LossKind::CrossEntropy,
                    "combined" => LossKind::Combined,
                    other => return Err(err(format!("unknown loss {other:?}"))),
                }
            }
            "tversky_alpha" => config.tversky_alpha = parse_f64(value, key)?,
            "tversky_beta" => config.tversky_beta = parse_f64(value, key)?,
            "learning_rate" => config.learning_rate = parse_f64(value, key)?,
            "epochs" => config.epochs = parse_usize(value, key)?,
            "shuffle" => config.shuffle = parse_bool(value, key)?,
            "seed" => {
                config.seed = value
                    .parse::<u64>()
                    .map_err(|_| err(format!("not an unsigned integer: {value:?}")))?
            }
            "workers" => config.workers = parse_usize(value, key)?,
            "evaluation" => {
                config.evaluation = if value == "loo" {
                    EvalSpec::LeaveOneOut
                } else if value == "detailed" {
                    EvalSpec::Detailed
                } else if let Some(arg) = value
                    .strip_prefix("kfold(")
                    .and_then(|v| v.strip_suffix(')'))
                {
                    EvalSpec::KFold(parse_usize(arg, key)?)
                } else if let Some(arg) = value
                    .strip_prefix("split(")
                    .and_then(|v| v.strip_suffix(')'))
                {
                    EvalSpec::Split(parse_f64(arg, key)?)
                } else {
                    return Err(err(format!("unknown evaluation {value:?}")));
                }
            }
            "train_ids" => config.train_ids = parse_strings(value),
            "test_ids" => config.test_ids = parse_strings(value),
            "train_metrics" => {
                config.train_metrics = parse_strings(value)
                    .iter()
                    .map(|name| match name.as_str() {
                        "soft_dice" => Ok(MetricKind::SoftDice),
                        "tversky_loss" => Ok(MetricKind::Tversky),
                        "crossentropy" => Ok(MetricKind::CrossEntropy),
                        "combined_loss" => Ok(MetricKind::Combined),
                        other => Err(err(format!("unknown metric {other:?}"))),
                    })
                    .collect::<Result<_>>()?
            }
            "aug_mirror" => config.augment_config.mirror = parse_bool(value, key)?,
            "aug_mirror_axes" => config.augment_config.mirror_axes = parse_usizes(value, key)?,
            "aug_rotate" => config.augment_config.rotate = parse_bool(value, key)?,
            "aug_rotation_degrees" => {
                config.augment_config.rotation_degrees = parse_range(value, key)?
            }
            "aug_scale" => config.augment_config.scale = parse_bool(value, key)?,
            "aug_scale_range" => config.augment_config.scale_range = parse_range(value, key)?,
            "aug_elastic" => config.augment_config.elastic = parse_bool(value, key)?,
            "aug_elastic_alpha" => config.augment_config.elastic_alpha = parse_range(value, key)?,
            "aug_elastic_sigma" => config.augment_config.elastic_sigma = parse_f64(value, key)?,
            "aug_brightness" => config.augment_config.brightness = parse_bool(value, key)?,
            "aug_brightness_range" => {
                config.augment_config.brightness_range = parse_range(value, key)?
            }
            "aug_contrast" => config.augment_config.contrast = parse_bool(value, key)?,
            "aug_contrast_range" => config.augment_config.contrast_range = parse_range(value, key)?,
            "aug_gamma" => config.augment_config.gamma = parse_bool(value, key)?,
            "aug_gamma_range" => config.augment_config.gamma_range = parse_range(value, key)?,
            "aug_noise" => config.augment_config.noise = parse_bool(value, key)?,
            "aug_noise_sigma" => config.augment_config.noise_sigma = parse_range(value, key)?,
            "aug_probability" => aug_probability = Some(parse_f64(value, key)?),
            other => return Err(Error::UnknownKey(other.to_string())),
        }
    }

    if let Some(p) = aug_probability {
        let a = &mut config.augment_config;
        a.mirror_prob = p;
        a.rotate_prob = p;
        a.scale_prob = p;
        a.elastic_prob = p;
        a.brightness_prob = p;
        a.contrast_prob = p;
        a.gamma_prob = p;
        a.noise_prob = p;
    }

    match (clip_min, clip_max) {
        (Some(lo), Some(hi)) => config.clip = Some((lo, hi)),
        (None, None) => {}
        _ => {
            return Err(Error::ValidationError {
                field: "clip_min/clip_max".into(),
                reason: "both or neither must be given".into(),
            })
        }
    }

    let patch_rank = config.patch_shape.as_ref().map(|p| p.len()).unwrap_or(3);
    config.patch_overlap = patch_overlap.unwrap_or_else(|| vec![0; patch_rank]);
    config.prediction_overlap = prediction_overlap.unwrap_or_else(|| vec![0; patch_rank]);

    config.validate()?;
    Ok(config)
}

fn parse_f64(value: &str, key: &str) -> Result<f64> {
    value.parse::<f64>().map_err(|_| Error::ValidationError {
        field: key.into(),
        reason: format!("not a number: {value:?}"),
    })
}

fn parse_usize(value: &str, key: &str) -> Result<usize> {
    value.parse::<usize>().map_err(|_| Error::ValidationError {
        field: key.into(),
        reason: format!("not an unsigned integer: {value:?}"),
    })
}

fn parse_bool(value: &str, key: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::ValidationError {
            field: key.into(),
            reason: format!("expected true/false, got {other:?}"),
        }),
    }
}

fn parse_f64s(value: &str, key: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse_f64(v.trim(), key)).collect()
}

fn parse_usizes(value: &str, key: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| parse_usize(v.trim(), key))
        .collect()
}

fn parse_strings(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect()
}

fn parse_range(value: &str, key: &str) -> Result<(f64, f64)> {
    let parts = parse_f64s(value, key)?;
    if parts.len() != 2 {
        return Err(Error::ValidationError {
            field: key.into(),
            reason: format!("expected `lo,hi`, got {value:?}"),
        });
    }
    Ok((parts[0], parts[1]))
}
