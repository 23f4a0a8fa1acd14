//! Black-box tests of the command-line interface: exit codes, stdout/stderr
//! contracts and the files each subcommand leaves behind.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use medsegpipe::nifti;
use medsegpipe::volume::Volume;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_medsegpipe"))
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

/// Small, fast config for the CLI round trips: 6 two-class phantoms,
/// full-image analysis, a handful of epochs.
fn write_cli_config(dir: &Path, data: &Path, out: &Path) -> std::path::PathBuf {
    let text = format!(
        "data_dir = {}\n\
         output_dir = {}\n\
         mode = 3d_patch\n\
         patch_shape = 16,16,16\n\
         prediction_overlap = 8,8,8\n\
         normalization = zscore\n\
         n_classes = 2\n\
         batch_size = 2\n\
         loss = combined\n\
         learning_rate = 1.0\n\
         epochs = 5\n\
         seed = 7\n\
         evaluation = kfold(3)\n",
        data.display(),
        out.display(),
    );
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join("pipeline.conf");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn info_dumps_the_fixture_header() {
    let tmp = TempDir::new().unwrap();
    let v = Volume::new(
        vec![2, 2, 2],
        vec![1.0; 3],
        (0..8).map(|i| i as f32).collect(),
    )
    .unwrap();
    let file = tmp.path().join("fixture.nii");
    nifti::write_volume_file(&file, &v).unwrap();

    let output = bin().arg("info").arg(&file).output().unwrap();
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("dims: 2 2 2"), "{text}");
    assert!(text.contains("datatype: float32"), "{text}");
    assert!(text.contains("spacing: 1 1 1"), "{text}");
    assert!(text.contains("min: 0 max: 7"), "{text}");
}

#[test]
fn info_reads_gzip_files() {
    let tmp = TempDir::new().unwrap();
    let v = Volume::filled(vec![3, 3], vec![0.5, 0.5], 2.0).unwrap();
    let file = tmp.path().join("image.nii.gz");
    nifti::write_volume_file(&file, &v).unwrap();
    let output = bin().arg("info").arg(&file).output().unwrap();
    assert!(output.status.success());
    assert!(stdout(&output).contains("dims: 3 3"));
}

#[test]
fn unknown_subcommand_exits_one_with_usage() {
    let output = bin().arg("segmentate").output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err = stderr(&output);
    assert!(err.contains("Usage") || err.contains("usage"), "{err}");
}

#[test]
fn missing_config_file_exits_two() {
    let output = bin()
        .args(["crossval", "--config", "/nonexistent/pipeline.conf"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("no such file"));
}

#[test]
fn invalid_config_exits_two_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.conf");
    std::fs::write(
        &path,
        "data_dir = x\noutput_dir = y\nn_classes = 2\npatch_shpae = 1,1,1\n",
    )
    .unwrap();
    let output = bin()
        .args(["crossval", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(
        stderr(&output).contains("patch_shpae"),
        "{}",
        stderr(&output)
    );
}

#[test]
fn bad_nifti_exits_two() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("broken.nii");
    std::fs::write(&file, vec![0u8; 400]).unwrap();
    let output = bin().arg("info").arg(&file).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn crossval_writes_reports_and_is_byte_deterministic() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    common::write_phantom_dataset(&data, 6, false);

    let run = |label: &str| -> Vec<u8> {
        let out = tmp.path().join(label);
        let config = write_cli_config(&tmp.path().join(label.to_string() + "_cfg"), &data, &out);
        let output = bin()
            .args(["crossval", "--config"])
            .arg(&config)
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
        // machine-readable output lands in files, not stdout
        assert!(stdout(&output).is_empty(), "stdout: {}", stdout(&output));
        assert!(out.join("evaluation.tsv").is_file());
        for fold in 0..3 {
            assert!(out.join(format!("fold_{fold}_fitting.tsv")).is_file());
        }
        std::fs::read(out.join("evaluation.tsv")).unwrap()
    };
    let a = run("run_a");
    let b = run("run_b");
    assert_eq!(
        a, b,
        "evaluation.tsv must be byte-identical for equal config and seed"
    );
}

#[test]
fn train_predict_evaluate_round_trip() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    common::write_phantom_dataset(&data, 4, false);
    let config = write_cli_config(tmp.path(), &data, &out);

    let model = out.join("model.mscm");
    let output = bin()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--ids", "phantom_00,phantom_01,phantom_02"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    assert!(model.is_file());
    let fitting = std::fs::read_to_string(out.join("fitting.tsv")).unwrap();
    assert_eq!(fitting.lines().count(), 1 + 5);

    let output = bin()
        .args(["predict", "--config"])
        .arg(&config)
        .arg("--model")
        .arg(&model)
        .args(["--ids", "phantom_03"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    let pred_path = out.join("predictions/phantom_03.nii");
    assert!(pred_path.is_file());
    let (_, pred) = nifti::read_labels_file(&pred_path, 2).unwrap();
    assert_eq!(pred.shape(), &[32, 32, 32]);

    let output = bin()
        .args(["evaluate", "--config"])
        .arg(&config)
        .arg("--model")
        .arg(&model)
        .args(["--ids", "phantom_03"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    let metrics = std::fs::read_to_string(out.join("metrics.tsv")).unwrap();
    assert!(metrics.starts_with("sample\tdice_c0\tdice_c1"));
    assert_eq!(metrics.lines().count(), 1 + 1 + 1); // header + sample + mean
    assert!(out.join("analysis.tsv").is_file());
    // one overlay per axial slice
    let overlays = std::fs::read_dir(out.join("overlays")).unwrap().count();
    assert_eq!(overlays, 32);
}

#[test]
fn preprocess_writes_processed_volumes() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    common::write_phantom_dataset(&data, 2, false);
    let config = write_cli_config(tmp.path(), &data, &out);

    let output = bin()
        .args(["preprocess", "--config"])
        .arg(&config)
        .args(["--ids", "phantom_00"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    let processed = out.join("preprocessed/phantom_00/imaging.nii");
    let (_, v) = nifti::read_volume_file(&processed).unwrap();
    // z-scored output has zero mean
    let mean: f64 = v.data().iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
    assert!(mean.abs() < 1e-5, "mean {mean}");
    assert!(out
        .join("preprocessed/phantom_00/segmentation.nii")
        .is_file());
}

#[test]
fn cache_env_var_overrides_cache_dir() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    let cache = tmp.path().join("env_cache");
    common::write_phantom_dataset(&data, 2, false);
    let config = write_cli_config(tmp.path(), &data, &out);

    let output = bin()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--ids", "phantom_00,phantom_01"])
        .env("MEDSEGPIPE_CACHE", &cache)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    let cached = std::fs::read_dir(&cache).unwrap().count();
    assert!(cached > 0, "no batch files under MEDSEGPIPE_CACHE");
}
