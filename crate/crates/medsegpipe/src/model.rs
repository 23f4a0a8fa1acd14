//! The open model interface, a trainable per-voxel reference classifier, the
//! training loop with metric logging, and patch-wise prediction with
//! merge-and-decode.
//!
//! The reference model is a linear softmax classifier over five local
//! features per voxel (raw intensity, box means of radius 1 and 2, box std
//! of radius 1, and a bias). It is convex, trains in seconds, has an exact
//! analytic gradient, and exercises every pipeline stage; deep architectures
//! plug in through the [`Model`] trait.

use std::io::Read;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::batching::{
    build_batches, cache_batches, cache_read, plan_batches, shuffle_order, stream_batches, Batch,
    PatchItem,
};
use crate::config::{AnalysisMode, MetricKind, PipelineConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, LossKind, LossSpec};
use crate::patching::{compute_grid, extract_patches, merge_patches, slice_2d};
use crate::preprocess::{one_hot_decode, resample_labels_to_shape};
use crate::sample_io::SampleIo;
use crate::volume::{num_elements, ClassMap, ScoreVolume, Volume};

const MODEL_MAGIC: &[u8; 8] = b"MSCMODEL";
const MODEL_VERSION: u32 = 1;

/// Number of per-voxel features of the reference model.
pub const FEATURE_COUNT: usize = 5;

/// Contract every trainable segmentation model fulfils.
pub trait Model {
    /// Allocate weights for `n_classes` output channels.
    fn initialize(&mut self, n_classes: usize) -> Result<()>;
    /// Class count once initialized.
    fn n_classes(&self) -> Option<usize>;
    /// One gradient step on a batch; returns the pre-update loss.
    fn train_step(&mut self, batch: &Batch, learning_rate: f64, loss: &LossSpec) -> Result<f64>;
    /// Per-voxel class scores in [0, 1], summing to 1 across channels, one
    /// score volume per batch item.
    fn predict_scores(&self, batch: &Batch) -> Result<Vec<ScoreVolume>>;
    /// Persist the model; `load(save(m))` predicts bit-identically.
    fn save(&self, path: &Path) -> Result<()>;
    /// Restore a model persisted with [`Model::save`].
    fn load(path: &Path) -> Result<Self>
    where
        Self: Sized;
}

/// Per-voxel linear softmax classifier over [`FEATURE_COUNT`] local features.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    /// Row-major `[feature][class]`, present once initialized.
    weights: Option<Vec<f64>>,
    n_classes: usize,
}

impl Default for ReferenceModel {
    fn default() -> Self {
        Self::new()
    }
}

impl ReferenceModel {
    pub fn new() -> Self {
        Self {
            weights: None,
            n_classes: 0,
        }
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn set_weights(&mut self, n_classes: usize, weights: Vec<f64>) -> Result<()> {
        if weights.len() != FEATURE_COUNT * n_classes {
            return Err(Error::ShapeMismatch(format!(
                "expected {} weights, got {}",
                FEATURE_COUNT * n_classes,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteLoss("weights".into()));
        }
        self.weights = Some(weights);
        self.n_classes = n_classes;
        Ok(())
    }

    fn weights_checked(&self) -> Result<&[f64]> {
        self.weights.as_deref().ok_or(Error::UntrainedModel)
    }

    /// Softmax class scores for a feature array (`[FEATURE_COUNT][voxels]`).
    pub fn forward_features(
        &self,
        features: &[f64],
        shape: &[usize],
        spacing: &[f64],
    ) -> Result<ScoreVolume> {
        let w = self.weights_checked()?;
        let c = self.n_classes;
        let voxels = num_elements(shape);
        if features.len() != FEATURE_COUNT * voxels {
            return Err(Error::ShapeMismatch(format!(
                "feature array length {} != {} x {voxels}",
                features.len(),
                FEATURE_COUNT
            )));
        }
        let mut data = vec![0f32; c * voxels];
        let mut logits = vec![0f64; c];
        let mut probs = vec![0f64; c];
        for v in 0..voxels {
            softmax_at(w, features, voxels, v, c, &mut logits, &mut probs);
            for (ci, &p) in probs.iter().enumerate() {
                data[ci * voxels + v] = p as f32;
            }
        }
        ScoreVolume::new(shape.to_vec(), spacing.to_vec(), c, data)
    }

    /// Loss of a batch under the current weights, without updating them.
    pub fn batch_loss(&self, batch: &Batch, loss: &LossSpec) -> Result<f64> {
        let (loss, _) = self.loss_and_gradient(batch, loss, false)?;
        Ok(loss)
    }

    /// Loss and (optionally) the analytic weight gradient of a batch.
    fn loss_and_gradient(
        &self,
        batch: &Batch,
        spec: &LossSpec,
        want_gradient: bool,
    ) -> Result<(f64, Vec<f64>)> {
        let w = self.weights_checked()?;
        let c = self.n_classes;
        if batch.n_classes != c {
            return Err(Error::ShapeMismatch(format!(
                "batch has {} classes, model {}",
                batch.n_classes, c
            )));
        }
        if batch.channels != 1 {
            return Err(Error::ShapeMismatch(format!(
                "reference model expects single-channel images, got {}",
                batch.channels
            )));
        }
        let item_voxels = batch.voxels();
        let n_total = batch.batch_len * item_voxels;

        // Forward pass over all items; probabilities voxel-major.
        let mut probs = vec![0f64; n_total * c];
        let mut features = vec![0f64; n_total * FEATURE_COUNT];
        {
            let mut logits = vec![0f64; c];
            let mut out = vec![0f64; c];
            for item in 0..batch.batch_len {
                let feats = compute_features(batch.image_of(item), &batch.spatial_shape);
                for v in 0..item_voxels {
                    let g = item * item_voxels + v;
                    softmax_at(w, &feats, item_voxels, v, c, &mut logits, &mut out);
                    for ci in 0..c {
                        probs[g * c + ci] = out[ci];
                    }
                    for k in 0..FEATURE_COUNT {
                        features[g * FEATURE_COUNT + k] = feats[k * item_voxels + v];
                    }
                }
            }
        }

        // one-hot truth accessor: g(v_global, class)
        let truth = |g: usize, ci: usize| -> f64 {
            let item = g / item_voxels;
            let v = g % item_voxels;
            batch.labels[item * c * item_voxels + ci * item_voxels + v] as f64
        };

        // Per-class reductions shared by the soft losses.
        let mut inter = vec![0f64; c];
        let mut p_not_g = vec![0f64; c];
        let mut g_not_p = vec![0f64; c];
        let mut p_sum = vec![0f64; c];
        let mut g_sum = vec![0f64; c];
        let mut ce_total = 0f64;
        let clamp_lo = metrics::CROSSENTROPY_CLAMP;
        let clamp_hi = 1.0 - metrics::CROSSENTROPY_CLAMP;
        for g in 0..n_total {
            for ci in 0..c {
                let p = probs[g * c + ci];
                let t = truth(g, ci);
                inter[ci] += p * t;
                p_not_g[ci] += p * (1.0 - t);
                g_not_p[ci] += (1.0 - p) * t;
                p_sum[ci] += p;
                g_sum[ci] += t;
                if t != 0.0 {
                    ce_total -= t * p.clamp(clamp_lo, clamp_hi).ln();
                }
            }
        }
        let n_f = n_total as f64;
        let ce = ce_total / n_f;
        let eps = metrics::DEFAULT_EPS;
        let (alpha, beta) = (spec.tversky_alpha, spec.tversky_beta);

        let loss = match spec.kind {
            LossKind::CrossEntropy => ce,
            LossKind::Tversky => {
                let mut ti_sum = 0f64;
                for ci in 0..c {
                    let num = inter[ci] + eps;
                    let den = inter[ci] + alpha * p_not_g[ci] + beta * g_not_p[ci] + eps;
                    ti_sum += num / den;
                }
                1.0 - ti_sum / c as f64
            }
            LossKind::Combined => {
                let mut dice_sum = 0f64;
                for ci in 0..c {
                    dice_sum += (2.0 * inter[ci] + eps) / (p_sum[ci] + g_sum[ci] + eps);
                }
                ce - dice_sum / c as f64
            }
        };

        if !want_gradient {
            return Ok((loss, Vec::new()));
        }

        // d(loss)/d(prob) per class, split into a per-voxel part and
        // class-level constants of the rational terms.
        let mut grad = vec![0f64; FEATURE_COUNT * c];
        let mut dice_const = vec![0f64; c];
        let mut tversky_num = vec![0f64; c];
        let mut tversky_den = vec![0f64; c];
        for ci in 0..c {
            tversky_num[ci] = inter[ci] + eps;
            tversky_den[ci] = inter[ci] + alpha * p_not_g[ci] + beta * g_not_p[ci] + eps;
            dice_const[ci] = p_sum[ci] + g_sum[ci] + eps;
        }

        let c_f = c as f64;
        let mut dp = vec![0f64; c];
        let mut dz = vec![0f64; c];
        for g in 0..n_total {
            for ci in 0..c {
                let p = probs[g * c + ci];
                let t = truth(g, ci);
                dp[ci] = match spec.kind {
                    LossKind::CrossEntropy => ce_grad(p, t, n_f, clamp_lo, clamp_hi),
                    LossKind::Tversky => {
                        // TI = num/den; d num = t, d den = t + alpha(1-t) - beta t
                        let dden = t + alpha * (1.0 - t) - beta * t;
                        let dti = (t * tversky_den[ci] - tversky_num[ci] * dden)
                            / (tversky_den[ci] * tversky_den[ci]);
                        -dti / c_f
                    }
                    LossKind::Combined => {
                        let s = dice_const[ci];
                        let ddice = (2.0 * t * s - (2.0 * inter[ci] + eps)) / (s * s);
                        ce_grad(p, t, n_f, clamp_lo, clamp_hi) - ddice / c_f
                    }
                };
            }
            // softmax backprop: dz_c = p_c (dp_c - sum_j dp_j p_j)
            let mut dot = 0f64;
            for ci in 0..c {
                dot += dp[ci] * probs[g * c + ci];
            }
            for ci in 0..c {
                dz[ci] = probs[g * c + ci] * (dp[ci] - dot);
            }
            for k in 0..FEATURE_COUNT {
                let f = features[g * FEATURE_COUNT + k];
                for ci in 0..c {
                    grad[k * c + ci] += f * dz[ci];
                }
            }
        }

        Ok((loss, grad))
    }
}

fn ce_grad(p: f64, t: f64, n: f64, lo: f64, hi: f64) -> f64 {
    if t == 0.0 || p < lo || p > hi {
        // clamped probabilities contribute a constant to the loss
        0.0
    } else {
        -t / p / n
    }
}

fn softmax_at(
    w: &[f64],
    features: &[f64],
    voxels: usize,
    v: usize,
    c: usize,
    logits: &mut [f64],
    probs: &mut [f64],
) {
    for (ci, logit) in logits.iter_mut().enumerate() {
        let mut z = 0f64;
        for k in 0..FEATURE_COUNT {
            z += w[k * c + ci] * features[k * voxels + v];
        }
        *logit = z;
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0f64;
    for ci in 0..c {
        let e = (logits[ci] - max).exp();
        probs[ci] = e;
        sum += e;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
}

impl Model for ReferenceModel {
    fn initialize(&mut self, n_classes: usize) -> Result<()> {
        if n_classes < 2 {
            return Err(Error::ShapeMismatch(format!(
                "need >= 2 classes, got {n_classes}"
            )));
        }
        // zero weights: deterministic uniform start for a convex model
        self.weights = Some(vec![0f64; FEATURE_COUNT * n_classes]);
        self.n_classes = n_classes;
        Ok(())
    }

    fn n_classes(&self) -> Option<usize> {
        self.weights.as_ref().map(|_| self.n_classes)
    }

    fn train_step(&mut self, batch: &Batch, learning_rate: f64, loss: &LossSpec) -> Result<f64> {
        if learning_rate < 0.0 {
            return Err(Error::ValidationError {
                field: "learning_rate".into(),
                reason: format!("must be >= 0, got {learning_rate}"),
            });
        }
        let (loss_value, grad) = self.loss_and_gradient(batch, loss, true)?;
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss(format!("batch {}", batch.batch_id)));
        }
        let w = self.weights.as_mut().expect("checked by loss_and_gradient");
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= learning_rate * gi;
        }
        Ok(loss_value)
    }

    fn predict_scores(&self, batch: &Batch) -> Result<Vec<ScoreVolume>> {
        let spacing = batch.spacing.clone();
        (0..batch.batch_len)
            .map(|item| {
                let feats = compute_features(batch.image_of(item), &batch.spatial_shape);
                self.forward_features(&feats, &batch.spatial_shape, &spacing)
            })
            .collect()
    }

    fn save(&self, path: &Path) -> Result<()> {
        let w = self.weights_checked()?;
        let mut buf = vec![0u8; 20 + 8 * w.len()];
        buf[..8].copy_from_slice(MODEL_MAGIC);
        LittleEndian::write_u32(&mut buf[8..12], MODEL_VERSION);
        LittleEndian::write_u32(&mut buf[12..16], FEATURE_COUNT as u32);
        LittleEndian::write_u32(&mut buf[16..20], self.n_classes as u32);
        LittleEndian::write_f64_into(w, &mut buf[20..]);
        crate::sample_io::write_atomic(path, &buf)
    }

    fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 20 {
            return Err(Error::CorruptModel(format!(
                "{}: too short",
                path.display()
            )));
        }
        if &buf[..8] != MODEL_MAGIC {
            return Err(Error::CorruptModel(format!(
                "{}: bad magic",
                path.display()
            )));
        }
        let version = LittleEndian::read_u32(&buf[8..12]);
        if version != MODEL_VERSION {
            return Err(Error::CorruptModel(format!(
                "unsupported version {version}"
            )));
        }
        let k = LittleEndian::read_u32(&buf[12..16]) as usize;
        let c = LittleEndian::read_u32(&buf[16..20]) as usize;
        if k != FEATURE_COUNT || c < 2 {
            return Err(Error::CorruptModel(format!("implausible dims {k}x{c}")));
        }
        if buf.len() != 20 + 8 * k * c {
            return Err(Error::CorruptModel(format!(
                "{}: expected {} bytes, got {}",
                path.display(),
                20 + 8 * k * c,
                buf.len()
            )));
        }
        let mut w = vec![0f64; k * c];
        LittleEndian::read_f64_into(&buf[20..], &mut w);
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::CorruptModel("non-finite weights".into()));
        }
        Ok(Self {
            weights: Some(w),
            n_classes: c,
        })
    }
}

/// Per-voxel features `[raw, box-mean r1, box-mean r2, box-std r1, 1]`,
/// laid out `[FEATURE_COUNT][voxels]`. Box windows are edge-clamped
/// (border samples repeat the edge voxel).
pub fn compute_features(image: &[f32], shape: &[usize]) -> Vec<f64> {
    let voxels = num_elements(shape);
    debug_assert_eq!(image.len(), voxels);
    let raw: Vec<f64> = image.iter().map(|&v| v as f64).collect();
    let sq: Vec<f64> = raw.iter().map(|v| v * v).collect();

    let mean1 = box_mean(&raw, shape, 1);
    let mean2 = box_mean(&raw, shape, 2);
    let meansq1 = box_mean(&sq, shape, 1);

    let mut out = vec![0f64; FEATURE_COUNT * voxels];
    for v in 0..voxels {
        out[v] = raw[v];
        out[voxels + v] = mean1[v];
        out[2 * voxels + v] = mean2[v];
        out[3 * voxels + v] = (meansq1[v] - mean1[v] * mean1[v]).max(0.0).sqrt();
        out[4 * voxels + v] = 1.0;
    }
    out
}

/// Separable box mean with edge-clamped sampling.
fn box_mean(data: &[f64], shape: &[usize], radius: usize) -> Vec<f64> {
    let st = crate::volume::strides(shape);
    let mut current = data.to_vec();
    let r = radius as isize;
    let window = (2 * radius + 1) as f64;
    for axis in 0..shape.len() {
        let extent = shape[axis] as isize;
        let stride = st[axis] as isize;
        let mut next = vec![0f64; current.len()];
        crate::volume::for_each_coord(shape, |flat, coord| {
            let base = flat as isize - coord[axis] as isize * stride;
            let mut acc = 0f64;
            for d in -r..=r {
                let i = (coord[axis] as isize + d).clamp(0, extent - 1);
                acc += current[(base + i * stride) as usize];
            }
            next[flat] = acc / window;
        });
        current = next;
    }
    current
}

// --- training loop ----------------------------------------------------------------

/// Epoch count, learning rate, loss, shuffling and the logged metrics.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub loss: LossSpec,
    pub shuffle: bool,
    pub seed: u64,
    pub metrics: Vec<MetricKind>,
}

impl TrainConfig {
    pub fn from_pipeline(config: &PipelineConfig) -> Self {
        Self {
            epochs: config.epochs,
            learning_rate: config.learning_rate,
            loss: LossSpec::new(config.loss, config.tversky_alpha, config.tversky_beta),
            shuffle: config.shuffle,
            seed: config.seed,
            metrics: config.train_metrics.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
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
        Ok(())
    }
}

/// Per-epoch means recorded during fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct FitHistory {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FitHistory {
    pub fn to_tsv(&self) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    if i == 0 {
                        format!("{}", *v as u64)
                    } else {
                        format!("{v:.6}")
                    }
                })
                .collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        crate::sample_io::write_atomic(path, self.to_tsv().as_bytes())
    }
}

/// Where fit finds its batches and logs its history.
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Batch cache directory (cached mode); falls back to
    /// `<output_dir>/batch_cache`.
    pub cache_dir: Option<std::path::PathBuf>,
    /// Fitting-callback TSV path; omitted when `None`.
    pub history_path: Option<std::path::PathBuf>,
}

fn metric_value(
    kind: MetricKind,
    pred: &ScoreVolume,
    truth: &ScoreVolume,
    spec: &LossSpec,
) -> Result<f64> {
    match kind {
        MetricKind::SoftDice => metrics::dice_soft(pred, truth, metrics::DEFAULT_EPS),
        MetricKind::Tversky => metrics::tversky_loss(
            pred,
            truth,
            spec.tversky_alpha,
            spec.tversky_beta,
            metrics::DEFAULT_EPS,
        ),
        MetricKind::CrossEntropy => metrics::categorical_crossentropy(pred, truth),
        MetricKind::Combined => metrics::combined_loss(pred, truth),
    }
}

fn truth_scores(batch: &Batch, item: usize) -> Result<ScoreVolume> {
    ScoreVolume::new(
        batch.spatial_shape.clone(),
        batch.spacing.clone(),
        batch.n_classes,
        batch.labels_of(item).to_vec(),
    )
}

/// Train a model on the given sample ids: `epochs` passes over the batch
/// plan, shuffling the batch order each epoch, logging per-epoch mean loss
/// and metrics to the history (and its TSV fitting callback when requested).
pub fn fit<M: Model>(
    model: &mut M,
    io: &(dyn SampleIo + Sync),
    train_ids: &[String],
    config: &PipelineConfig,
    train: &TrainConfig,
    options: &FitOptions,
) -> Result<FitHistory> {
    train.validate()?;
    if train_ids.is_empty() {
        return Err(Error::EmptyInput("no training samples".into()));
    }
    if model.n_classes().is_none() {
        model.initialize(config.n_classes)?;
    }

    let plan = plan_batches(io, train_ids, config)?;
    let n_batches = plan.n_batches();
    if n_batches == 0 {
        return Err(Error::EmptyInput(
            "batch plan is empty (all patches blank?)".into(),
        ));
    }

    let cached_paths = match config.batch_mode {
        crate::config::BatchMode::Cached => {
            let default_dir = config.output_dir.join("batch_cache");
            let dir = options.cache_dir.clone().unwrap_or(default_dir);
            Some(cache_batches(&plan, io, config, &dir)?)
        }
        crate::config::BatchMode::OnTheFly => None,
    };

    let mut columns = vec!["epoch".to_string(), "mean_loss".to_string()];
    columns.extend(train.metrics.iter().map(|m| m.name().to_string()));
    let mut history = FitHistory {
        columns,
        rows: Vec::new(),
    };

    for epoch in 0..train.epochs {
        let order = if train.shuffle {
            shuffle_order(n_batches, epoch as u64, train.seed)
        } else {
            (0..n_batches).collect()
        };

        let mut loss_sum = 0f64;
        let mut metric_sums = vec![0f64; train.metrics.len()];
        let mut item_count = 0usize;

        let mut step = |model: &mut M, batch: &Batch| -> Result<()> {
            // metrics are evaluated on the pre-update weights, like the loss
            if !train.metrics.is_empty() {
                let scores = model.predict_scores(batch)?;
                for (item, pred) in scores.iter().enumerate() {
                    let truth = truth_scores(batch, item)?;
                    for (mi, &kind) in train.metrics.iter().enumerate() {
                        metric_sums[mi] += metric_value(kind, pred, &truth, &train.loss)?;
                    }
                }
            }
            let loss = model
                .train_step(batch, train.learning_rate, &train.loss)
                .map_err(|e| match e {
                    Error::NonFiniteLoss(at) => {
                        Error::NonFiniteLoss(format!("epoch {epoch}, {at}"))
                    }
                    other => other,
                })?;
            loss_sum += loss * batch.batch_len as f64;
            item_count += batch.batch_len;
            Ok(())
        };

        match &cached_paths {
            Some(paths) => {
                for &k in &order {
                    let batch = cache_read(&paths[k])?;
                    step(model, &batch)?;
                }
            }
            None => {
                // the consumer closure needs &mut model, so collect into it
                // through stream_batches' in-order delivery
                let model_cell = std::cell::RefCell::new(&mut *model);
                let step_cell = std::cell::RefCell::new(&mut step);
                stream_batches(
                    &plan,
                    io,
                    config,
                    &order,
                    config.effective_workers(),
                    config.prefetch_depth,
                    |_, batch| {
                        let mut m = model_cell.borrow_mut();
                        (step_cell.borrow_mut())(&mut m, &batch)
                    },
                )?;
            }
        }

        let items = item_count.max(1) as f64;
        let mut row = vec![epoch as f64, loss_sum / items];
        row.extend(metric_sums.iter().map(|s| s / items));
        history.rows.push(row);
    }

    if let Some(path) = &options.history_path {
        history.write_tsv(path)?;
    }
    Ok(history)
}

// --- prediction -------------------------------------------------------------------

fn predict_patch_scores<M: Model>(
    model: &M,
    patches: Vec<Volume>,
    n_classes: usize,
    batch_size: usize,
) -> Result<Vec<ScoreVolume>> {
    let items: Vec<PatchItem> = patches
        .into_iter()
        .map(|image| {
            let labels =
                ClassMap::zeros(image.shape().to_vec(), image.spacing().to_vec(), n_classes)
                    .expect("patch geometry is valid");
            PatchItem {
                sample_id: "predict".into(),
                image,
                labels,
            }
        })
        .collect();
    let mut scores = Vec::with_capacity(items.len());
    for batch in build_batches(&items, batch_size)? {
        scores.extend(model.predict_scores(&batch)?);
    }
    Ok(scores)
}

/// Segment a raw image: preprocess, decompose per the analysis mode, predict
/// per patch, mean-merge overlapping scores, argmax-decode (ties to the
/// lowest class id) and restore the original geometry.
pub fn predict<M: Model>(model: &M, image: &Volume, config: &PipelineConfig) -> Result<ClassMap> {
    let n_classes = model.n_classes().ok_or(Error::UntrainedModel)?;
    if n_classes != config.n_classes {
        return Err(Error::ShapeMismatch(format!(
            "model has {n_classes} classes, config says {}",
            config.n_classes
        )));
    }

    let prepared = config.preprocess_image(image)?;
    let scores = match config.mode {
        AnalysisMode::FullImage => {
            let patches = vec![prepared.clone()];
            predict_patch_scores(model, patches, n_classes, config.batch_size)?
                .pop()
                .expect("one patch in, one score out")
        }
        AnalysisMode::Patch3d => {
            let patch = config.patch_shape.as_ref().expect("validated");
            let grid = compute_grid(prepared.shape(), patch, &config.prediction_overlap)?;
            let patches = extract_patches(&prepared, &grid)?;
            let patch_scores = predict_patch_scores(model, patches, n_classes, config.batch_size)?;
            merge_patches(&patch_scores, &grid)?
        }
        AnalysisMode::Slice2d => {
            let slices = slice_2d(&prepared)?;
            let slice_scores = predict_patch_scores(model, slices, n_classes, config.batch_size)?;
            stack_slice_scores(&slice_scores, prepared.shape(), prepared.spacing())?
        }
    };

    let decoded = one_hot_decode(&scores);
    if decoded.shape() == image.shape() {
        // keep original spacing even when no resampling happened
        ClassMap::new(
            decoded.shape().to_vec(),
            image.spacing().to_vec(),
            decoded.data().to_vec(),
            decoded.n_classes(),
        )
    } else {
        resample_labels_to_shape(&decoded, image.shape(), image.spacing())
    }
}

fn stack_slice_scores(
    slices: &[ScoreVolume],
    shape3d: &[usize],
    spacing3d: &[f64],
) -> Result<ScoreVolume> {
    let (nz, ny, nx) = (shape3d[0], shape3d[1], shape3d[2]);
    if slices.len() != nz {
        return Err(Error::ShapeMismatch(format!(
            "{} slice scores for {nz} slices",
            slices.len()
        )));
    }
    let c = slices[0].n_classes();
    let voxels = nz * ny * nx;
    let mut data = vec![0f32; c * voxels];
    for (z, s) in slices.iter().enumerate() {
        if s.shape() != [ny, nx] || s.n_classes() != c {
            return Err(Error::ShapeMismatch("slice score shapes differ".into()));
        }
        for ci in 0..c {
            let src = s.channel(ci);
            let dst = &mut data[ci * voxels + z * ny * nx..ci * voxels + (z + 1) * ny * nx];
            dst.copy_from_slice(src);
        }
    }
    ScoreVolume::new(shape3d.to_vec(), spacing3d.to_vec(), c, data)
}
