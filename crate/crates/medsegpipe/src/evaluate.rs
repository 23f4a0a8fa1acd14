//! Automatic evaluation: fold splitters, cross-validation orchestration,
//! metric reporting, class-frequency analysis and overlay image export.
//!
//! Reported metrics are computed on hard predictions at the original
//! resolution. The report TSV carries one row per fold of per-sample means
//! (columns prefixed `mean_`), closed by a cross-fold `mean` row.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::config::{EvalSpec, PipelineConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, LossSpec};
use crate::model::{fit, predict, FitOptions, Model, TrainConfig};
use crate::preprocess::one_hot_encode;
use crate::rng::{stream, tag};
use crate::sample_io::SampleIo;
use crate::volume::{ClassMap, Volume};

// --- splitters -----------------------------------------------------------------

/// Shuffle ids by seed, then partition into k folds whose sizes differ by at
/// most one. Fold i is the test set of run i.
pub fn kfold_split(ids: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 || k > ids.len() {
        return Err(Error::InvalidK { k, n: ids.len() });
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut stream(seed, &[tag::SPLIT]));
    let base = shuffled.len() / k;
    let extra = shuffled.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        folds.push(shuffled[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// One singleton test fold per id.
pub fn loo_split(ids: &[String]) -> Result<Vec<Vec<String>>> {
    if ids.len() < 2 {
        return Err(Error::TooFewSamples(ids.len()));
    }
    Ok(ids.iter().map(|id| vec![id.clone()]).collect())
}

/// Random (train, test) split with `round(fraction * n)` test samples,
/// clamped into [1, n-1].
pub fn percentage_split(
    ids: &[String],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::InvalidFraction(test_fraction));
    }
    if ids.len() < 2 {
        return Err(Error::TooFewSamples(ids.len()));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut stream(seed, &[tag::SPLIT]));
    let n_test = ((test_fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
    let test = shuffled[..n_test].to_vec();
    let train = shuffled[n_test..].to_vec();
    Ok((train, test))
}

/// Validate explicit train/test lists: nonempty, disjoint, all ids known.
pub fn detailed_split(
    train_ids: &[String],
    test_ids: &[String],
    known_ids: &[String],
) -> Result<(Vec<String>, Vec<String>)> {
    if train_ids.is_empty() || test_ids.is_empty() {
        return Err(Error::EmptyInput(
            "detailed split needs both id lists".into(),
        ));
    }
    let known: std::collections::HashSet<&String> = known_ids.iter().collect();
    for id in train_ids.iter().chain(test_ids) {
        if !known.contains(id) {
            return Err(Error::UnknownId(id.clone()));
        }
    }
    let train_set: std::collections::HashSet<&String> = train_ids.iter().collect();
    if let Some(shared) = test_ids.iter().find(|id| train_set.contains(id)) {
        return Err(Error::OverlappingSets(shared.clone()));
    }
    Ok((train_ids.to_vec(), test_ids.to_vec()))
}

// --- per-sample metrics -----------------------------------------------------------

/// Metric column names for a class count, in report order.
pub fn metric_columns(n_classes: usize) -> Vec<String> {
    let mut cols: Vec<String> = (0..n_classes).map(|c| format!("dice_c{c}")).collect();
    cols.extend((0..n_classes).map(|c| format!("jaccard_c{c}")));
    cols.extend([
        "tversky_loss".into(),
        "crossentropy".into(),
        "combined_loss".into(),
    ]);
    cols
}

/// All report metrics between one hard prediction and its ground truth, in
/// [`metric_columns`] order.
pub fn sample_metrics(pred: &ClassMap, truth: &ClassMap, loss: &LossSpec) -> Result<Vec<f64>> {
    let mut values = metrics::dice_classwise(pred, truth)?;
    for c in 0..truth.n_classes() as u32 {
        values.push(metrics::jaccard(pred, truth, c)?);
    }
    let pred_scores = one_hot_encode(pred);
    let truth_scores = one_hot_encode(truth);
    values.push(metrics::tversky_loss(
        &pred_scores,
        &truth_scores,
        loss.tversky_alpha,
        loss.tversky_beta,
        metrics::DEFAULT_EPS,
    )?);
    values.push(metrics::categorical_crossentropy(
        &pred_scores,
        &truth_scores,
    )?);
    values.push(metrics::combined_loss(&pred_scores, &truth_scores)?);
    Ok(values)
}

/// Predict and score every id with a fitted model; returns per-sample metric
/// rows in [`metric_columns`] order, saving each prediction through the
/// sample I/O interface.
pub fn evaluate_samples<M: Model>(
    model: &M,
    io: &dyn SampleIo,
    ids: &[String],
    config: &PipelineConfig,
) -> Result<Vec<Vec<f64>>> {
    let loss = LossSpec::new(config.loss, config.tversky_alpha, config.tversky_beta);
    let mut rows = Vec::with_capacity(ids.len());
    for id in ids {
        let sample = io.load_sample(id)?;
        let truth = sample.labels.ok_or_else(|| {
            Error::SampleNotFound(format!("{id}: evaluation requires segmentation labels"))
        })?;
        let pred = predict(model, &sample.image, config)?;
        io.save_prediction(id, &pred)?;
        rows.push(sample_metrics(&pred, &truth, &loss)?);
    }
    Ok(rows)
}

// --- cross-validation ---------------------------------------------------------------

/// The evaluation report: one row of per-sample means per fold plus the
/// cross-fold mean row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    /// `fold`, `sample_count`, then `mean_<metric>` columns.
    pub columns: Vec<String>,
    pub fold_rows: Vec<Vec<f64>>,
    pub mean_row: Vec<f64>,
}

impl EvaluationReport {
    fn new(n_classes: usize) -> Self {
        let mut columns = vec!["fold".to_string(), "sample_count".to_string()];
        columns.extend(
            metric_columns(n_classes)
                .iter()
                .map(|c| format!("mean_{c}")),
        );
        Self {
            columns,
            fold_rows: Vec::new(),
            mean_row: Vec::new(),
        }
    }

    fn push_fold(&mut self, fold: usize, sample_rows: &[Vec<f64>]) {
        let n = sample_rows.len() as f64;
        let metric_count = self.columns.len() - 2;
        let mut row = vec![fold as f64, sample_rows.len() as f64];
        for m in 0..metric_count {
            row.push(sample_rows.iter().map(|r| r[m]).sum::<f64>() / n);
        }
        self.fold_rows.push(row);
    }

    fn finalize(&mut self) {
        let n = self.fold_rows.len() as f64;
        let width = self.columns.len();
        let mut mean = Vec::with_capacity(width);
        for col in 0..width {
            mean.push(self.fold_rows.iter().map(|r| r[col]).sum::<f64>() / n);
        }
        self.mean_row = mean;
    }

    /// Values are printed in shortest round-trip form, so parsing the TSV
    /// recovers each f64 bit-exactly.
    pub fn to_tsv(&self) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in &self.fold_rows {
            out.push_str(&format!("{}", row[0] as u64));
            out.push('\t');
            out.push_str(&format!("{}", row[1] as u64));
            for v in &row[2..] {
                out.push_str(&format!("\t{v}"));
            }
            out.push('\n');
        }
        out.push_str("mean");
        for v in &self.mean_row[1..] {
            out.push_str(&format!("\t{v}"));
        }
        out.push('\n');
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        crate::sample_io::write_atomic(path, self.to_tsv().as_bytes())
    }

    /// Column index of a metric (without the `mean_` prefix).
    pub fn column(&self, metric: &str) -> Option<usize> {
        let want = format!("mean_{metric}");
        self.columns.iter().position(|c| c == &want)
    }
}

/// Resolve the configured split into (train, test) pairs per fold.
pub fn resolve_folds(
    ids: &[String],
    config: &PipelineConfig,
) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    match &config.evaluation {
        EvalSpec::KFold(k) => {
            let folds = kfold_split(ids, *k, config.seed)?;
            Ok(split_against_rest(&folds))
        }
        EvalSpec::LeaveOneOut => {
            let folds = loo_split(ids)?;
            Ok(split_against_rest(&folds))
        }
        EvalSpec::Split(f) => {
            let (train, test) = percentage_split(ids, *f, config.seed)?;
            Ok(vec![(train, test)])
        }
        EvalSpec::Detailed => {
            let (train, test) = detailed_split(&config.train_ids, &config.test_ids, ids)?;
            Ok(vec![(train, test)])
        }
    }
}

fn split_against_rest(folds: &[Vec<String>]) -> Vec<(Vec<String>, Vec<String>)> {
    folds
        .iter()
        .enumerate()
        .map(|(i, test)| {
            let train: Vec<String> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, f)| f.iter().cloned())
                .collect();
            (train, test.clone())
        })
        .collect()
}

/// Run the configured evaluation end to end: per fold, fit a fresh model on
/// the training ids, predict and score every test id, then emit
/// `evaluation.tsv`, per-fold fitting TSVs and the predictions.
pub fn run_cross_validation<M: Model>(
    io: &(dyn SampleIo + Sync),
    config: &PipelineConfig,
    make_model: impl Fn() -> M,
) -> Result<EvaluationReport> {
    let ids = io.list_samples()?;
    if ids.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no samples under {}",
            config.data_dir.display()
        )));
    }
    let folds = resolve_folds(&ids, config)?;
    let train_config = TrainConfig::from_pipeline(config);

    let mut report = EvaluationReport::new(config.n_classes);
    for (fold, (train_ids, test_ids)) in folds.iter().enumerate() {
        let run = || -> Result<Vec<Vec<f64>>> {
            let mut model = make_model();
            let options = FitOptions {
                cache_dir: Some(config.output_dir.join(format!("batch_cache/fold_{fold}"))),
                history_path: Some(config.output_dir.join(format!("fold_{fold}_fitting.tsv"))),
            };
            fit(&mut model, io, train_ids, config, &train_config, &options)?;
            evaluate_samples(&model, io, test_ids, config)
        };
        let sample_rows = run().map_err(|e| Error::FoldFailed {
            index: fold,
            source: Box::new(e),
        })?;
        report.push_fold(fold, &sample_rows);
    }
    report.finalize();
    report.write_tsv(&config.output_dir.join("evaluation.tsv"))?;
    Ok(report)
}

// --- dataset analysis ----------------------------------------------------------------

/// Intensity and class-frequency statistics of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub id: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    /// Per-class voxel counts; zeros when the sample has no labels.
    pub class_counts: Vec<u64>,
    pub class_fractions: Vec<f64>,
}

/// Scan every sample: intensity range/mean/std plus per-class voxel counts
/// and fractions. Emits `analysis.tsv` when `out` is given.
pub fn analyze_dataset(
    io: &dyn SampleIo,
    ids: &[String],
    n_classes: usize,
    out: Option<&Path>,
) -> Result<Vec<SampleStats>> {
    let mut stats = Vec::with_capacity(ids.len());
    for id in ids {
        let sample = io.load_sample(id)?;
        let data = sample.image.data();
        let (mean, std) = crate::preprocess::mean_std(data);
        let min = data.iter().fold(f32::INFINITY, |a, &b| a.min(b)) as f64;
        let max = data.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;

        let mut class_counts = vec![0u64; n_classes];
        if let Some(labels) = &sample.labels {
            for &idx in labels.data() {
                class_counts[idx as usize] += 1;
            }
        }
        let total: u64 = class_counts.iter().sum();
        let class_fractions = class_counts
            .iter()
            .map(|&c| {
                if total == 0 {
                    0.0
                } else {
                    c as f64 / total as f64
                }
            })
            .collect();
        stats.push(SampleStats {
            id: id.clone(),
            min,
            max,
            mean,
            std,
            class_counts,
            class_fractions,
        });
    }

    if let Some(path) = out {
        let mut tsv = String::from("sample\tmin\tmax\tmean\tstd");
        for c in 0..n_classes {
            tsv.push_str(&format!("\tcount_c{c}"));
        }
        for c in 0..n_classes {
            tsv.push_str(&format!("\tfraction_c{c}"));
        }
        tsv.push('\n');
        for s in &stats {
            tsv.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}",
                s.id, s.min, s.max, s.mean, s.std
            ));
            for &c in &s.class_counts {
                tsv.push_str(&format!("\t{c}"));
            }
            for &f in &s.class_fractions {
                tsv.push_str(&format!("\t{f}"));
            }
            tsv.push('\n');
        }
        crate::sample_io::write_atomic(path, tsv.as_bytes())?;
    }
    Ok(stats)
}

// --- overlay export --------------------------------------------------------------------

const TINTS: [[f64; 3]; 6] = [
    [255.0, 0.0, 0.0], // class 1: red
    [0.0, 0.0, 255.0], // class 2: blue
    [0.0, 255.0, 0.0],
    [255.0, 255.0, 0.0],
    [255.0, 0.0, 255.0],
    [0.0, 255.0, 255.0],
];
const BASE_WEIGHT: f64 = 0.6;
const TINT_WEIGHT: f64 = 0.4;

fn blend(gray: f64, class_id: u32) -> [u8; 3] {
    if class_id == 0 {
        let g = gray.round() as u8;
        return [g, g, g];
    }
    let tint = TINTS[(class_id as usize - 1) % TINTS.len()];
    let mut px = [0u8; 3];
    for (i, p) in px.iter_mut().enumerate() {
        *p = (BASE_WEIGHT * gray + TINT_WEIGHT * tint[i])
            .round()
            .clamp(0.0, 255.0) as u8;
    }
    px
}

/// Export one PPM (P6, 8-bit RGB) per axial slice: min-max windowed
/// grayscale with class tints; ground truth and prediction side by side
/// when a prediction is given. Files are `<id>_slice_<k>.ppm` under `dir`.
pub fn export_overlay(
    image: &Volume,
    labels: &ClassMap,
    pred: Option<&ClassMap>,
    dir: &Path,
    id: &str,
) -> Result<Vec<PathBuf>> {
    if labels.shape() != image.shape() {
        return Err(Error::ShapeMismatch(format!(
            "labels {:?} vs image {:?}",
            labels.shape(),
            image.shape()
        )));
    }
    if let Some(p) = pred {
        if p.shape() != image.shape() {
            return Err(Error::ShapeMismatch(format!(
                "prediction {:?} vs image {:?}",
                p.shape(),
                image.shape()
            )));
        }
    }

    let (slices, ny, nx) = match image.shape() {
        [nz, ny, nx] => (*nz, *ny, *nx),
        [ny, nx] => (1, *ny, *nx),
        other => return Err(Error::ShapeMismatch(format!("rank {} image", other.len()))),
    };
    let min = image.data().iter().fold(f32::INFINITY, |a, &b| a.min(b)) as f64;
    let max = image
        .data()
        .iter()
        .fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    let span = if max > min { max - min } else { 1.0 };

    let panels = 1 + usize::from(pred.is_some());
    let gap = if panels == 2 { 2 } else { 0 };
    let width = panels * nx + gap;

    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(slices);
    for z in 0..slices {
        let mut rgb = vec![0u8; width * ny * 3];
        for y in 0..ny {
            for x in 0..nx {
                let flat = z * ny * nx + y * nx + x;
                let gray = 255.0 * ((image.data()[flat] as f64) - min) / span;
                let gt_px = blend(gray, labels.data()[flat]);
                let row = &mut rgb[y * width * 3..(y + 1) * width * 3];
                row[x * 3..x * 3 + 3].copy_from_slice(&gt_px);
                if let Some(p) = pred {
                    let px = blend(gray, p.data()[flat]);
                    let x2 = nx + gap + x;
                    row[x2 * 3..x2 * 3 + 3].copy_from_slice(&px);
                }
            }
        }
        let mut out = format!("P6\n{width} {ny}\n255\n").into_bytes();
        out.extend_from_slice(&rgb);
        let path = dir.join(format!("{id}_slice_{z}.ppm"));
        crate::sample_io::write_atomic(&path, &out)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("case_{i:02}")).collect()
    }

    #[test]
    fn kfold_partitions_evenly() {
        let folds = kfold_split(&ids(6), 3, 1).unwrap();
        assert_eq!(
            folds.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![2, 2, 2]
        );
        let mut all: Vec<String> = folds.concat();
        all.sort();
        assert_eq!(all, ids(6));
    }

    #[test]
    fn kfold_pigeonholes_the_remainder() {
        let folds = kfold_split(&ids(7), 3, 1).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3]);
    }

    #[test]
    fn kfold_is_seeded() {
        assert_eq!(
            kfold_split(&ids(9), 3, 5).unwrap(),
            kfold_split(&ids(9), 3, 5).unwrap()
        );
        assert_ne!(
            kfold_split(&ids(9), 3, 5).unwrap(),
            kfold_split(&ids(9), 3, 6).unwrap()
        );
    }

    #[test]
    fn kfold_rejects_bad_k() {
        assert!(matches!(
            kfold_split(&ids(3), 1, 0),
            Err(Error::InvalidK { .. })
        ));
        assert!(matches!(
            kfold_split(&ids(3), 4, 0),
            Err(Error::InvalidK { .. })
        ));
    }

    #[test]
    fn loo_gives_singletons() {
        let folds = loo_split(&ids(3)).unwrap();
        assert_eq!(folds.len(), 3);
        assert!(folds.iter().all(|f| f.len() == 1));
        let mut all: Vec<String> = folds.concat();
        all.sort();
        assert_eq!(all, ids(3));
    }

    #[test]
    fn loo_needs_two_samples() {
        assert!(matches!(loo_split(&ids(1)), Err(Error::TooFewSamples(1))));
    }

    #[test]
    fn percentage_split_sizes() {
        let (train, test) = percentage_split(&ids(10), 0.2, 3).unwrap();
        assert_eq!(test.len(), 2);
        assert_eq!(train.len(), 8);

        let (train, test) = percentage_split(&ids(120), 1.0 / 3.0, 3).unwrap();
        assert_eq!(test.len(), 40);
        assert_eq!(train.len(), 80);
    }

    #[test]
    fn percentage_split_is_disjoint_union() {
        for f in [0.11, 0.5, 0.87] {
            let (train, test) = percentage_split(&ids(13), f, 9).unwrap();
            let mut all = train.clone();
            all.extend(test.clone());
            all.sort();
            assert_eq!(all, ids(13));
            assert!(train.iter().all(|t| !test.contains(t)));
        }
    }

    #[test]
    fn percentage_split_rejects_bad_fraction() {
        assert!(matches!(
            percentage_split(&ids(5), 0.0, 0),
            Err(Error::InvalidFraction(_))
        ));
        assert!(matches!(
            percentage_split(&ids(5), 1.0, 0),
            Err(Error::InvalidFraction(_))
        ));
    }

    #[test]
    fn detailed_split_passthrough_and_errors() {
        let known = ids(4);
        let train = vec!["case_00".to_string(), "case_01".to_string()];
        let test = vec!["case_02".to_string()];
        let (tr, te) = detailed_split(&train, &test, &known).unwrap();
        assert_eq!(tr, train);
        assert_eq!(te, test);

        let overlapping = vec!["case_00".to_string()];
        assert!(matches!(
            detailed_split(&train, &overlapping, &known),
            Err(Error::OverlappingSets(_))
        ));
        let unknown = vec!["ghost".to_string()];
        assert!(matches!(
            detailed_split(&train, &unknown, &known),
            Err(Error::UnknownId(_))
        ));
    }

    #[test]
    fn perfect_prediction_metrics_row() {
        let truth = ClassMap::new(vec![2, 2], vec![1.0; 2], vec![0, 1, 1, 0], 2).unwrap();
        let row = sample_metrics(&truth, &truth, &LossSpec::default()).unwrap();
        let cols = metric_columns(2);
        assert_eq!(row.len(), cols.len());
        assert_eq!(&row[..4], &[1.0, 1.0, 1.0, 1.0]); // dice + jaccard per class
        assert!(row[4].abs() < 1e-4); // tversky loss
        assert!(row[5] < 1e-5); // crossentropy
        assert!((row[6] + 1.0).abs() < 1e-3); // combined
    }

    #[test]
    fn report_mean_row_is_columnwise_mean() {
        let mut report = EvaluationReport::new(2);
        report.push_fold(0, &[vec![1.0; 7], vec![0.0; 7]]);
        report.push_fold(1, &[vec![1.0; 7]]);
        report.finalize();
        assert_eq!(report.fold_rows[0][2], 0.5);
        assert_eq!(report.mean_row[2], 0.75);
        // TSV parses back to the same numbers exactly
        let tsv = report.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 1 + 2 + 1);
        let mean_cells: Vec<&str> = lines[3].split('\t').collect();
        assert_eq!(mean_cells[0], "mean");
        assert_eq!(mean_cells[2].parse::<f64>().unwrap(), 0.75);
    }

    #[test]
    fn overlay_export_writes_one_file_per_slice() {
        let tmp = tempfile::TempDir::new().unwrap();
        let image = Volume::new(
            vec![2, 2, 2],
            vec![1.0; 3],
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
        )
        .unwrap();
        let labels =
            ClassMap::new(vec![2, 2, 2], vec![1.0; 3], vec![0, 1, 0, 2, 0, 0, 1, 0], 3).unwrap();
        let paths = export_overlay(&image, &labels, None, tmp.path(), "case").unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths[0].ends_with("case_slice_0.ppm"));

        let bytes = std::fs::read(&paths[0]).unwrap();
        assert!(bytes.starts_with(b"P6\n2 2\n255\n"));
        // voxel (0,0,1) is class 1: red channel dominates
        let header_len = b"P6\n2 2\n255\n".len();
        let px = &bytes[header_len + 3..header_len + 6];
        assert!(px[0] > px[1] && px[0] > px[2], "{px:?}");
    }

    #[test]
    fn all_background_overlay_is_pure_grayscale() {
        let tmp = tempfile::TempDir::new().unwrap();
        let image = Volume::new(vec![1, 2, 2], vec![1.0; 3], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let labels = ClassMap::zeros(vec![1, 2, 2], vec![1.0; 3], 2).unwrap();
        let paths = export_overlay(&image, &labels, None, tmp.path(), "bg").unwrap();
        let bytes = std::fs::read(&paths[0]).unwrap();
        let header_len = b"P6\n2 2\n255\n".len();
        for px in bytes[header_len..].chunks(3) {
            assert_eq!(px[0], px[1]);
            assert_eq!(px[1], px[2]);
        }
    }

    #[test]
    fn side_by_side_panel_doubles_width() {
        let tmp = tempfile::TempDir::new().unwrap();
        let image = Volume::new(vec![1, 2, 2], vec![1.0; 3], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let labels = ClassMap::zeros(vec![1, 2, 2], vec![1.0; 3], 2).unwrap();
        let pred = ClassMap::new(vec![1, 2, 2], vec![1.0; 3], vec![1, 1, 0, 0], 2).unwrap();
        let paths = export_overlay(&image, &labels, Some(&pred), tmp.path(), "pair").unwrap();
        let bytes = std::fs::read(&paths[0]).unwrap();
        assert!(bytes.starts_with(b"P6\n6 2\n255\n")); // 2*2 + 2 gap
    }

    #[test]
    fn overlay_shape_mismatch_is_rejected() {
        let tmp = tempfile::TempDir::new().unwrap();
        let image = Volume::filled(vec![2, 2], vec![1.0; 2], 0.0).unwrap();
        let labels = ClassMap::zeros(vec![3, 3], vec![1.0; 2], 2).unwrap();
        assert!(matches!(
            export_overlay(&image, &labels, None, tmp.path(), "x"),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
