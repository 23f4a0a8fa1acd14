//! Pluggable sample I/O.
//!
//! The pipeline never touches the filesystem layout directly; it loads and
//! saves through the [`SampleIo`] trait so alternative data sources plug in
//! without changes elsewhere. [`DirectoryIo`] is the shipped implementation:
//! `<data_dir>/<id>/imaging.nii` plus optional `segmentation.nii`, with
//! predictions written to `<output_dir>/<id>.nii`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nifti;
use crate::volume::{ClassMap, Volume};

/// One loaded sample: the image and, when present, its ground-truth labels.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Volume,
    pub labels: Option<ClassMap>,
}

/// Abstract contract between the dataset on disk and the pipeline.
pub trait SampleIo {
    /// All sample ids this source can resolve, sorted.
    fn list_samples(&self) -> Result<Vec<String>>;
    /// Load image and optional labels for one id.
    fn load_sample(&self, id: &str) -> Result<Sample>;
    /// Persist a predicted segmentation for one id.
    fn save_prediction(&self, id: &str, labels: &ClassMap) -> Result<()>;
}

/// Directory-per-sample layout used by the shipped datasets.
#[derive(Debug, Clone)]
pub struct DirectoryIo {
    data_dir: PathBuf,
    output_dir: PathBuf,
    n_classes: usize,
}

impl DirectoryIo {
    pub fn new(
        data_dir: impl Into<PathBuf>,
        output_dir: impl Into<PathBuf>,
        n_classes: usize,
    ) -> Self {
        Self {
            data_dir: data_dir.into(),
            output_dir: output_dir.into(),
            n_classes,
        }
    }

    fn existing(&self, id: &str, name: &str) -> Option<PathBuf> {
        // Prefer the uncompressed file, fall back to .nii.gz.
        let plain = self.data_dir.join(id).join(name);
        if plain.is_file() {
            return Some(plain);
        }
        let gz = self.data_dir.join(id).join(format!("{name}.gz"));
        gz.is_file().then_some(gz)
    }
}

impl SampleIo for DirectoryIo {
    fn list_samples(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        let entries = fs::read_dir(&self.data_dir)
            .map_err(|_| Error::SampleNotFound(self.data_dir.display().to_string()))?;
        for entry in entries {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                if let Some(name) = entry.file_name().to_str() {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    fn load_sample(&self, id: &str) -> Result<Sample> {
        let image_path = self
            .existing(id, "imaging.nii")
            .ok_or_else(|| Error::SampleNotFound(id.to_string()))?;
        let (_, image) = nifti::read_volume_file(&image_path)?;

        let labels = match self.existing(id, "segmentation.nii") {
            Some(path) => {
                let (_, labels) = nifti::read_labels_file(&path, self.n_classes)?;
                if labels.shape() != image.shape() {
                    return Err(Error::ShapeMismatch(format!(
                        "sample {id}: image {:?} vs segmentation {:?}",
                        image.shape(),
                        labels.shape()
                    )));
                }
                Some(labels)
            }
            None => None,
        };

        Ok(Sample {
            id: id.to_string(),
            image,
            labels,
        })
    }

    fn save_prediction(&self, id: &str, labels: &ClassMap) -> Result<()> {
        fs::create_dir_all(&self.output_dir)?;
        let path = self.output_dir.join(format!("{id}.nii"));
        nifti::write_labels_file(&path, labels)
    }
}

/// Write a file atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
