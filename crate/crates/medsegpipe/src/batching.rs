//! Batch assembly, the on-disk batch cache and epoch shuffling.
//!
//! Training inputs are described by a [`BatchPlan`]: an ordered list of item
//! specs (grid patch, random crop, slice or full image) per batch. Batch
//! content is a pure function of (plan, config, seed), so the disk-cached and
//! on-the-fly paths — and any worker count — produce identical batches.
//!
//! [`stream_batches`] runs a bounded producer/consumer: preparation workers
//! build batches in parallel while the consumer receives them in order, with
//! at most `prefetch_depth` batches alive at once.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Condvar, Mutex};

use byteorder::{ByteOrder, LittleEndian};
use rand::seq::SliceRandom;

use crate::augment::{apply_pipeline, pad_to_min_shape, random_crop};
use crate::config::{AnalysisMode, PipelineConfig};
use crate::error::{Error, Result};
use crate::patching::{
    compute_grid, extract_label_patches, extract_patches, is_blank, slice_2d, slice_labels_2d,
};
use crate::preprocess::one_hot_encode;
use crate::rng::{stream, tag};
use crate::sample_io::SampleIo;
use crate::volume::{num_elements, ClassMap, Volume};

const CACHE_MAGIC: &[u8; 8] = b"MSCBATCH";
const CACHE_VERSION: u32 = 1;

/// One training item: an image patch with its label patch.
#[derive(Debug, Clone)]
pub struct PatchItem {
    pub sample_id: String,
    pub image: Volume,
    pub labels: ClassMap,
}

/// A fixed-size group of image patches with matching one-hot label patches.
///
/// `images` is laid out `[batch, channels, spatial...]` and `labels`
/// `[batch, classes, spatial...]`, both row-major. The cache file persists
/// dims and data; identity (source ids, spacing) is re-derived from the plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub batch_id: usize,
    pub source_ids: Vec<String>,
    pub batch_len: usize,
    pub channels: usize,
    pub n_classes: usize,
    pub spatial_shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub images: Vec<f32>,
    pub labels: Vec<f32>,
}

impl Batch {
    pub fn voxels(&self) -> usize {
        num_elements(&self.spatial_shape)
    }

    /// Image data of one batch item (all channels).
    pub fn image_of(&self, item: usize) -> &[f32] {
        let n = self.channels * self.voxels();
        &self.images[item * n..(item + 1) * n]
    }

    /// One-hot labels of one batch item (all classes).
    pub fn labels_of(&self, item: usize) -> &[f32] {
        let n = self.n_classes * self.voxels();
        &self.labels[item * n..(item + 1) * n]
    }

    /// True when dims and raw data agree (identity fields ignored).
    pub fn content_eq(&self, other: &Batch) -> bool {
        self.batch_len == other.batch_len
            && self.channels == other.channels
            && self.n_classes == other.n_classes
            && self.spatial_shape == other.spatial_shape
            && self.images == other.images
            && self.labels == other.labels
    }
}

/// Bundle items into batches of `batch_size`, preserving item order; the
/// final batch may be smaller.
pub fn build_batches(items: &[PatchItem], batch_size: usize) -> Result<Vec<Batch>> {
    if items.is_empty() {
        return Err(Error::EmptyInput("no items to batch".into()));
    }
    if batch_size < 1 {
        return Err(Error::ValidationError {
            field: "batch_size".into(),
            reason: "must be >= 1".into(),
        });
    }
    items
        .chunks(batch_size)
        .enumerate()
        .map(|(batch_id, chunk)| batch_from_items(batch_id, chunk))
        .collect()
}

fn batch_from_items(batch_id: usize, items: &[PatchItem]) -> Result<Batch> {
    let first = &items[0];
    let shape = first.image.shape().to_vec();
    let n_classes = first.labels.n_classes();
    let voxels = num_elements(&shape);
    let mut images = Vec::with_capacity(items.len() * voxels);
    let mut labels = Vec::with_capacity(items.len() * n_classes * voxels);
    let mut source_ids = Vec::with_capacity(items.len());
    for item in items {
        if item.image.shape() != shape || item.labels.shape() != shape {
            return Err(Error::ShapeMismatch(format!(
                "batch {batch_id}: item shapes differ ({:?} vs {shape:?}); \
                 use batch_size = 1 or uniform sample shapes",
                item.image.shape()
            )));
        }
        if item.labels.n_classes() != n_classes {
            return Err(Error::ShapeMismatch(
                "class counts differ within batch".into(),
            ));
        }
        images.extend_from_slice(item.image.data());
        labels.extend_from_slice(one_hot_encode(&item.labels).data());
        source_ids.push(item.sample_id.clone());
    }
    Ok(Batch {
        batch_id,
        source_ids,
        batch_len: items.len(),
        channels: 1,
        n_classes,
        spatial_shape: shape,
        spacing: first.image.spacing().to_vec(),
        images,
        labels,
    })
}

// --- batch cache ------------------------------------------------------------

/// Write a batch to `dir/batch_<id>.mscb` atomically; returns the path.
///
/// Layout: magic `MSCBATCH`, version u32, rank u32, dims (u32 each,
/// `[batch, channels, spatial...]`), class count u32, then raw little-endian
/// f32 image data followed by label data.
pub fn cache_write(batch: &Batch, dir: &Path) -> Result<PathBuf> {
    let mut dims = vec![batch.batch_len as u32, batch.channels as u32];
    dims.extend(batch.spatial_shape.iter().map(|&e| e as u32));
    let header = 8 + 4 + 4 + 4 * dims.len() + 4;
    let mut buf = vec![0u8; header + 4 * (batch.images.len() + batch.labels.len())];

    buf[..8].copy_from_slice(CACHE_MAGIC);
    LittleEndian::write_u32(&mut buf[8..12], CACHE_VERSION);
    LittleEndian::write_u32(&mut buf[12..16], dims.len() as u32);
    for (i, &d) in dims.iter().enumerate() {
        LittleEndian::write_u32(&mut buf[16 + 4 * i..20 + 4 * i], d);
    }
    let class_off = 16 + 4 * dims.len();
    LittleEndian::write_u32(&mut buf[class_off..class_off + 4], batch.n_classes as u32);
    LittleEndian::write_f32_into(
        &batch.images,
        &mut buf[header..header + 4 * batch.images.len()],
    );
    LittleEndian::write_f32_into(&batch.labels, &mut buf[header + 4 * batch.images.len()..]);

    let path = dir.join(format!("batch_{}.mscb", batch.batch_id));
    crate::sample_io::write_atomic(&path, &buf)?;
    Ok(path)
}

/// Read a cached batch back; the batch id comes from the file name, source
/// ids are not persisted and spacing reads as unit.
pub fn cache_read(path: &Path) -> Result<Batch> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 16 {
        return Err(Error::CorruptCache(format!(
            "{}: shorter than the header",
            path.display()
        )));
    }
    if &buf[..8] != CACHE_MAGIC {
        return Err(Error::CorruptCache(format!(
            "{}: bad magic",
            path.display()
        )));
    }
    let version = LittleEndian::read_u32(&buf[8..12]);
    if version != CACHE_VERSION {
        return Err(Error::CorruptCache(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let rank = LittleEndian::read_u32(&buf[12..16]) as usize;
    if rank < 3 || buf.len() < 16 + 4 * rank + 4 {
        return Err(Error::CorruptCache(format!(
            "{}: truncated dims",
            path.display()
        )));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| LittleEndian::read_u32(&buf[16 + 4 * i..20 + 4 * i]) as usize)
        .collect();
    let class_off = 16 + 4 * rank;
    let n_classes = LittleEndian::read_u32(&buf[class_off..class_off + 4]) as usize;

    let (batch_len, channels) = (dims[0], dims[1]);
    let spatial_shape = dims[2..].to_vec();
    let voxels = num_elements(&spatial_shape);
    let n_img = batch_len * channels * voxels;
    let n_lab = batch_len * n_classes * voxels;
    let header = class_off + 4;
    let expected = header + 4 * (n_img + n_lab);
    if buf.len() != expected {
        return Err(Error::CorruptCache(format!(
            "{}: expected {expected} bytes, got {}",
            path.display(),
            buf.len()
        )));
    }

    let mut images = vec![0f32; n_img];
    LittleEndian::read_f32_into(&buf[header..header + 4 * n_img], &mut images);
    let mut labels = vec![0f32; n_lab];
    LittleEndian::read_f32_into(&buf[header + 4 * n_img..], &mut labels);

    let batch_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("batch_"))
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(0);

    Ok(Batch {
        batch_id,
        source_ids: Vec::new(),
        batch_len,
        channels,
        n_classes,
        spatial_shape: spatial_shape.clone(),
        spacing: vec![1.0; spatial_shape.len()],
        images,
        labels,
    })
}

// --- epoch shuffling ----------------------------------------------------------

/// Fisher-Yates permutation of batch indices, seeded by (seed, epoch). Only
/// the processing sequence changes; batch contents are never resampled.
pub fn shuffle_order(n_batches: usize, epoch: u64, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_batches).collect();
    let mut rng = stream(seed, &[tag::SHUFFLE, epoch]);
    order.shuffle(&mut rng);
    order
}

// --- batch plan -----------------------------------------------------------------

/// How one training item is produced from its (preprocessed) sample.
#[derive(Debug, Clone, PartialEq)]
pub enum ItemKind {
    GridPatch { origin: Vec<usize> },
    RandomCrop,
    Slice { index: usize },
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemSpec {
    pub sample_idx: usize,
    /// Per-sample running index; selects the item's rng sub-streams.
    pub item_idx: u64,
    pub kind: ItemKind,
}

/// The deterministic description of one training run's batches.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    pub sample_ids: Vec<String>,
    pub batches: Vec<Vec<ItemSpec>>,
}

impl BatchPlan {
    pub fn n_batches(&self) -> usize {
        self.batches.len()
    }
}

/// Lay out the item specs and batch boundaries for a training set.
///
/// Patch mode uses random crops when augmentation is on (one per grid patch
/// of the preprocessed volume) and grid patches when off; blank patches and
/// slices are dropped when `skip_blank` is set. Item order is sample-major
/// in the order the ids are given.
pub fn plan_batches(
    io: &dyn SampleIo,
    ids: &[String],
    config: &PipelineConfig,
) -> Result<BatchPlan> {
    let mut specs = Vec::new();
    for (sample_idx, id) in ids.iter().enumerate() {
        let sample = io.load_sample(id)?;
        let labels = sample.labels.ok_or_else(|| {
            Error::SampleNotFound(format!("{id}: training requires segmentation labels"))
        })?;
        let image = config.preprocess_image(&sample.image)?;
        let labels = config.preprocess_labels(&labels)?;
        if image.shape() != labels.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{id}: image {:?} vs labels {:?} after preprocessing",
                image.shape(),
                labels.shape()
            )));
        }

        let mut item_idx = 0u64;
        let mut push = |kind: ItemKind, item_idx: &mut u64| {
            specs.push(ItemSpec {
                sample_idx,
                item_idx: *item_idx,
                kind,
            });
            *item_idx += 1;
        };

        match config.mode {
            AnalysisMode::Patch3d => {
                let patch = config.patch_shape.as_ref().expect("validated");
                let grid = compute_grid(image.shape(), patch, &config.patch_overlap)?;
                if config.augment {
                    for _ in 0..grid.n_patches() {
                        push(ItemKind::RandomCrop, &mut item_idx);
                    }
                } else {
                    let label_patches = extract_label_patches(&labels, &grid)?;
                    for (origin, patch_labels) in grid.origins.iter().zip(&label_patches) {
                        if config.skip_blank && is_blank(patch_labels) {
                            continue;
                        }
                        push(
                            ItemKind::GridPatch {
                                origin: origin.clone(),
                            },
                            &mut item_idx,
                        );
                    }
                }
            }
            AnalysisMode::Slice2d => {
                let label_slices = slice_labels_2d(&labels)?;
                for (index, slice) in label_slices.iter().enumerate() {
                    if config.skip_blank && is_blank(slice) {
                        continue;
                    }
                    push(ItemKind::Slice { index }, &mut item_idx);
                }
            }
            AnalysisMode::FullImage => push(ItemKind::Full, &mut item_idx),
        }
    }

    let batches = specs
        .chunks(config.batch_size)
        .map(<[ItemSpec]>::to_vec)
        .collect();
    Ok(BatchPlan {
        sample_ids: ids.to_vec(),
        batches,
    })
}

/// Memo of the most recently preprocessed sample, so consecutive items of
/// one sample do not reload it.
#[derive(Default)]
pub struct SampleMemo {
    entry: Option<(usize, Volume, ClassMap)>,
}

impl SampleMemo {
    fn get(
        &mut self,
        io: &dyn SampleIo,
        plan: &BatchPlan,
        config: &PipelineConfig,
        sample_idx: usize,
    ) -> Result<(Volume, ClassMap)> {
        if let Some((cached_idx, image, labels)) = &self.entry {
            if *cached_idx == sample_idx {
                return Ok((image.clone(), labels.clone()));
            }
        }
        let id = &plan.sample_ids[sample_idx];
        let sample = io.load_sample(id)?;
        let labels = sample
            .labels
            .ok_or_else(|| Error::SampleNotFound(format!("{id}: labels vanished")))?;
        let image = config.preprocess_image(&sample.image)?;
        let labels = config.preprocess_labels(&labels)?;
        self.entry = Some((sample_idx, image.clone(), labels.clone()));
        Ok((image, labels))
    }
}

fn realize_item(
    spec: &ItemSpec,
    io: &dyn SampleIo,
    plan: &BatchPlan,
    config: &PipelineConfig,
    memo: &mut SampleMemo,
) -> Result<PatchItem> {
    let (image, labels) = memo.get(io, plan, config, spec.sample_idx)?;
    let sample_tag = spec.sample_idx as u64;

    let (image, labels) = match &spec.kind {
        ItemKind::GridPatch { origin } => {
            let patch = config.patch_shape.as_ref().expect("validated");
            let (image, labels) = pad_to_min_shape(&image, &labels, patch)?;
            let grid_one = crate::patching::PatchGrid {
                patch_shape: patch.clone(),
                overlap: vec![0; patch.len()],
                origins: vec![origin.clone()],
                padded_shape: image.shape().to_vec(),
                original_shape: image.shape().to_vec(),
            };
            let img = extract_patches(&image, &grid_one)?.remove(0);
            let lab = extract_label_patches(&labels, &grid_one)?.remove(0);
            (img, lab)
        }
        ItemKind::RandomCrop => {
            let patch = config.patch_shape.as_ref().expect("validated");
            let mut crop_rng = stream(config.seed, &[tag::CROP, sample_tag, spec.item_idx]);
            let (img, lab) = random_crop(&image, &labels, patch, &mut crop_rng, config.skip_blank)?;
            let mut aug_rng = stream(config.seed, &[tag::AUGMENT, sample_tag, spec.item_idx]);
            apply_pipeline(&img, &lab, &config.augment_config, &mut aug_rng)?
        }
        ItemKind::Slice { index } => {
            let img = slice_2d(&image)?.swap_remove(*index);
            let lab = slice_labels_2d(&labels)?.swap_remove(*index);
            if config.augment {
                let mut aug_rng = stream(config.seed, &[tag::AUGMENT, sample_tag, spec.item_idx]);
                apply_pipeline(&img, &lab, &config.augment_config, &mut aug_rng)?
            } else {
                (img, lab)
            }
        }
        ItemKind::Full => {
            if config.augment {
                let mut aug_rng = stream(config.seed, &[tag::AUGMENT, sample_tag, spec.item_idx]);
                apply_pipeline(&image, &labels, &config.augment_config, &mut aug_rng)?
            } else {
                (image, labels)
            }
        }
    };

    Ok(PatchItem {
        sample_id: plan.sample_ids[spec.sample_idx].clone(),
        image,
        labels,
    })
}

/// Build one batch of the plan. Deterministic: depends only on
/// (plan, config, seed), never on who calls it or when.
pub fn build_batch(
    plan: &BatchPlan,
    batch_idx: usize,
    io: &dyn SampleIo,
    config: &PipelineConfig,
    memo: &mut SampleMemo,
) -> Result<Batch> {
    let specs = &plan.batches[batch_idx];
    let items: Vec<PatchItem> = specs
        .iter()
        .map(|spec| realize_item(spec, io, plan, config, memo))
        .collect::<Result<_>>()?;
    batch_from_items(batch_idx, &items)
}

/// Build every batch of the plan and write it to the cache directory;
/// returns the file paths in batch order.
pub fn cache_batches(
    plan: &BatchPlan,
    io: &dyn SampleIo,
    config: &PipelineConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut memo = SampleMemo::default();
    let mut paths = Vec::with_capacity(plan.n_batches());
    for batch_idx in 0..plan.n_batches() {
        let batch = build_batch(plan, batch_idx, io, config, &mut memo)?;
        paths.push(cache_write(&batch, dir)?);
    }
    Ok(paths)
}

struct StreamGate {
    state: Mutex<GateState>,
    cond: Condvar,
}

struct GateState {
    next_job: usize,
    yielded: usize,
    cancelled: bool,
}

/// Produce the plan's batches in the given order, on the fly.
///
/// `workers` preparation threads fill a bounded pipeline; `on_batch` receives
/// `(position_in_order, batch)` strictly in order, with at most
/// `prefetch_depth` batches alive at any moment. The consumed sequence is
/// independent of the worker count.
pub fn stream_batches<F>(
    plan: &BatchPlan,
    io: &(dyn SampleIo + Sync),
    config: &PipelineConfig,
    order: &[usize],
    workers: usize,
    prefetch_depth: usize,
    mut on_batch: F,
) -> Result<()>
where
    F: FnMut(usize, Batch) -> Result<()>,
{
    let total = order.len();
    if total == 0 {
        return Ok(());
    }
    let workers = workers.max(1).min(total);
    let depth = prefetch_depth.max(1);

    if workers == 1 {
        let mut memo = SampleMemo::default();
        for (pos, &batch_idx) in order.iter().enumerate() {
            let batch = build_batch(plan, batch_idx, io, config, &mut memo)?;
            on_batch(pos, batch)?;
        }
        return Ok(());
    }

    let gate = StreamGate {
        state: Mutex::new(GateState {
            next_job: 0,
            yielded: 0,
            cancelled: false,
        }),
        cond: Condvar::new(),
    };
    let (tx, rx) = mpsc::channel::<(usize, Result<Batch>)>();

    let result: Result<()> = std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let gate = &gate;
            scope.spawn(move || {
                let mut memo = SampleMemo::default();
                loop {
                    let pos = {
                        let mut st = gate.state.lock().expect("gate poisoned");
                        loop {
                            if st.cancelled || st.next_job >= total {
                                return;
                            }
                            if st.next_job < st.yielded + depth {
                                break;
                            }
                            st = gate.cond.wait(st).expect("gate poisoned");
                        }
                        let pos = st.next_job;
                        st.next_job += 1;
                        pos
                    };
                    let built = build_batch(plan, order[pos], io, config, &mut memo);
                    let failed = built.is_err();
                    if tx.send((pos, built)).is_err() || failed {
                        return;
                    }
                }
            });
        }
        drop(tx);

        let cancel = || {
            let mut st = gate.state.lock().expect("gate poisoned");
            st.cancelled = true;
            gate.cond.notify_all();
        };

        let mut pending: BTreeMap<usize, Batch> = BTreeMap::new();
        let mut next_pos = 0usize;
        while next_pos < total {
            let batch = if let Some(batch) = pending.remove(&next_pos) {
                batch
            } else {
                match rx.recv() {
                    Ok((pos, Ok(batch))) => {
                        if pos != next_pos {
                            pending.insert(pos, batch);
                            continue;
                        }
                        batch
                    }
                    Ok((_, Err(e))) => {
                        cancel();
                        return Err(e);
                    }
                    Err(_) => {
                        cancel();
                        return Err(Error::EmptyInput("batch workers exited early".into()));
                    }
                }
            };
            if let Err(e) = on_batch(next_pos, batch) {
                cancel();
                return Err(e);
            }
            next_pos += 1;
            let mut st = gate.state.lock().expect("gate poisoned");
            st.yielded += 1;
            gate.cond.notify_all();
        }
        cancel();
        Ok(())
    });
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample_io::DirectoryIo;
    use rand::Rng;
    use tempfile::TempDir;

    fn item(id: &str, shape: &[usize], seed: u64) -> PatchItem {
        let mut rng = stream(seed, &[tag::SYNTH]);
        let n = num_elements(shape);
        let img: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lab: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        PatchItem {
            sample_id: id.to_string(),
            image: Volume::new(shape.to_vec(), vec![1.0; shape.len()], img).unwrap(),
            labels: ClassMap::new(shape.to_vec(), vec![1.0; shape.len()], lab, 2).unwrap(),
        }
    }

    #[test]
    fn five_items_batch_as_two_two_one() {
        let items: Vec<PatchItem> = (0..5)
            .map(|i| item(&format!("s{i}"), &[2, 2], i as u64))
            .collect();
        let batches = build_batches(&items, 2).unwrap();
        assert_eq!(batches.len(), 3);
        assert_eq!(
            batches.iter().map(|b| b.batch_len).collect::<Vec<_>>(),
            vec![2, 2, 1]
        );
    }

    #[test]
    fn concatenated_batches_reproduce_item_sequence() {
        let items: Vec<PatchItem> = (0..7)
            .map(|i| item(&format!("s{i}"), &[3, 3], i as u64))
            .collect();
        let batches = build_batches(&items, 3).unwrap();
        let mut rebuilt_images = Vec::new();
        let mut rebuilt_ids = Vec::new();
        for b in &batches {
            rebuilt_images.extend_from_slice(&b.images);
            rebuilt_ids.extend(b.source_ids.clone());
        }
        let expect_images: Vec<f32> = items.iter().flat_map(|i| i.image.data().to_vec()).collect();
        let expect_ids: Vec<String> = items.iter().map(|i| i.sample_id.clone()).collect();
        assert_eq!(rebuilt_images, expect_images);
        assert_eq!(rebuilt_ids, expect_ids);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(build_batches(&[], 2), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn one_hot_labels_sum_to_one() {
        let items = vec![item("a", &[2, 3], 1)];
        let batch = &build_batches(&items, 1).unwrap()[0];
        let v = batch.voxels();
        for i in 0..v {
            let sum: f32 = (0..batch.n_classes).map(|c| batch.labels[c * v + i]).sum();
            assert_eq!(sum, 1.0);
        }
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let tmp = TempDir::new().unwrap();
        let items = vec![item("a", &[2, 3, 2], 3), item("b", &[2, 3, 2], 4)];
        let batch = &build_batches(&items, 2).unwrap()[0];
        let path = cache_write(batch, tmp.path()).unwrap();
        let back = cache_read(&path).unwrap();
        assert!(back.content_eq(batch));
        assert_eq!(back.batch_id, batch.batch_id);
    }

    #[test]
    fn cache_file_size_matches_layout() {
        let tmp = TempDir::new().unwrap();
        let items = vec![item("a", &[2, 2, 2], 5)];
        let batch = &build_batches(&items, 1).unwrap()[0];
        let path = cache_write(batch, tmp.path()).unwrap();
        let rank = 2 + 3; // batch, channels + 3 spatial
        let header = 8 + 4 + 4 + 4 * rank + 4;
        let expected = header + 4 * (batch.images.len() + batch.labels.len());
        assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, expected);
    }

    #[test]
    fn truncated_cache_is_rejected() {
        let tmp = TempDir::new().unwrap();
        let items = vec![item("a", &[2, 2], 6)];
        let batch = &build_batches(&items, 1).unwrap()[0];
        let path = cache_write(batch, tmp.path()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(cache_read(&path), Err(Error::CorruptCache(_))));
    }

    #[test]
    fn bad_magic_cache_is_rejected() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("batch_0.mscb");
        std::fs::write(&path, b"NOTABTCHxxxxxxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(cache_read(&path), Err(Error::CorruptCache(_))));
    }

    #[test]
    fn shuffle_of_one_is_identity() {
        assert_eq!(shuffle_order(1, 3, 42), vec![0]);
    }

    #[test]
    fn shuffle_is_a_valid_permutation() {
        let mut order = shuffle_order(100, 5, 7);
        order.sort_unstable();
        assert_eq!(order, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn shuffle_is_reproducible_and_epoch_dependent() {
        assert_eq!(shuffle_order(100, 2, 9), shuffle_order(100, 2, 9));
        assert_ne!(shuffle_order(100, 2, 9), shuffle_order(100, 3, 9));
    }

    // --- plan / stream tests over a small on-disk dataset ---

    fn write_dataset(dir: &Path, n: usize) {
        let mut rng = stream(31, &[tag::SYNTH, 9]);
        for i in 0..n {
            let sample_dir = dir.join(format!("case_{i:02}"));
            std::fs::create_dir_all(&sample_dir).unwrap();
            let data: Vec<f32> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
            let img = Volume::new(vec![4, 4, 4], vec![1.0; 3], data).unwrap();
            let lab_data: Vec<u32> = (0..64).map(|_| rng.gen_range(0..2)).collect();
            let lab = ClassMap::new(vec![4, 4, 4], vec![1.0; 3], lab_data, 2).unwrap();
            crate::nifti::write_volume_file(&sample_dir.join("imaging.nii"), &img).unwrap();
            crate::nifti::write_labels_file(&sample_dir.join("segmentation.nii"), &lab).unwrap();
        }
    }

    fn test_config(data: &Path, out: &Path) -> PipelineConfig {
        PipelineConfig {
            data_dir: data.to_path_buf(),
            output_dir: out.to_path_buf(),
            patch_shape: Some(vec![2, 2, 2]),
            patch_overlap: vec![0, 0, 0],
            prediction_overlap: vec![0, 0, 0],
            batch_size: 3,
            seed: 1234,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn cached_and_streamed_batches_are_identical() {
        let tmp = TempDir::new().unwrap();
        write_dataset(tmp.path(), 3);
        let config = test_config(tmp.path(), tmp.path());
        let io = DirectoryIo::new(tmp.path(), tmp.path().join("out"), 2);
        let ids: Vec<String> = (0..3).map(|i| format!("case_{i:02}")).collect();

        let plan = plan_batches(&io, &ids, &config).unwrap();
        assert!(plan.n_batches() > 0);

        let cache_dir = tmp.path().join("cache");
        let paths = cache_batches(&plan, &io, &config, &cache_dir).unwrap();
        let cached: Vec<Batch> = paths.iter().map(|p| cache_read(p).unwrap()).collect();

        let order: Vec<usize> = (0..plan.n_batches()).collect();
        let mut streamed = Vec::new();
        stream_batches(&plan, &io, &config, &order, 4, 2, |_, b| {
            streamed.push(b);
            Ok(())
        })
        .unwrap();

        assert_eq!(cached.len(), streamed.len());
        for (c, s) in cached.iter().zip(&streamed) {
            assert!(c.content_eq(s));
        }
    }

    #[test]
    fn stream_is_worker_count_invariant() {
        let tmp = TempDir::new().unwrap();
        write_dataset(tmp.path(), 4);
        let config = PipelineConfig {
            augment: true,
            ..test_config(tmp.path(), tmp.path())
        };
        let io = DirectoryIo::new(tmp.path(), tmp.path().join("out"), 2);
        let ids: Vec<String> = (0..4).map(|i| format!("case_{i:02}")).collect();
        let plan = plan_batches(&io, &ids, &config).unwrap();
        let order = shuffle_order(plan.n_batches(), 0, config.seed);

        let run = |workers| {
            let mut seen = Vec::new();
            stream_batches(&plan, &io, &config, &order, workers, 2, |pos, b| {
                seen.push((pos, b));
                Ok(())
            })
            .unwrap();
            seen
        };
        let single = run(1);
        let multi = run(4);
        assert_eq!(single.len(), multi.len());
        for ((p1, b1), (p2, b2)) in single.iter().zip(&multi) {
            assert_eq!(p1, p2);
            assert!(b1.content_eq(b2));
        }
    }

    #[test]
    fn empty_plan_streams_nothing() {
        let tmp = TempDir::new().unwrap();
        let config = test_config(tmp.path(), tmp.path());
        let io = DirectoryIo::new(tmp.path(), tmp.path().join("out"), 2);
        let plan = plan_batches(&io, &[], &config).unwrap();
        assert_eq!(plan.n_batches(), 0);
        let mut count = 0;
        stream_batches(&plan, &io, &config, &[], 4, 2, |_, _| {
            count += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(count, 0);
    }

    #[test]
    fn blank_grid_patches_are_skipped() {
        let tmp = TempDir::new().unwrap();
        // one sample whose labels live entirely in one octant
        let sample_dir = tmp.path().join("case_00");
        std::fs::create_dir_all(&sample_dir).unwrap();
        let img = Volume::filled(vec![4, 4, 4], vec![1.0; 3], 1.0).unwrap();
        let mut lab_data = vec![0u32; 64];
        lab_data[0] = 1; // inside the (0,0,0) patch only
        let lab = ClassMap::new(vec![4, 4, 4], vec![1.0; 3], lab_data, 2).unwrap();
        crate::nifti::write_volume_file(&sample_dir.join("imaging.nii"), &img).unwrap();
        crate::nifti::write_labels_file(&sample_dir.join("segmentation.nii"), &lab).unwrap();

        let mut config = test_config(tmp.path(), tmp.path());
        config.normalization = crate::config::Normalization::None;
        let io = DirectoryIo::new(tmp.path(), tmp.path().join("out"), 2);
        let plan = plan_batches(&io, &["case_00".to_string()], &config).unwrap();
        let total: usize = plan.batches.iter().map(Vec::len).sum();
        assert_eq!(total, 1); // 7 of 8 grid patches are blank

        config.skip_blank = false;
        let plan = plan_batches(&io, &["case_00".to_string()], &config).unwrap();
        let total: usize = plan.batches.iter().map(Vec::len).sum();
        assert_eq!(total, 8);
    }
}
