//! Command-line front end: inspect, preprocess, train, predict, evaluate
//! and cross-validate from a single configuration file.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 runtime failure. Progress goes to standard error; machine-readable
//! results go to files only (`info` prints its inspection dump to stdout).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use medsegpipe::config::{load_config, PipelineConfig};
use medsegpipe::error::Error;
use medsegpipe::evaluate::{
    analyze_dataset, evaluate_samples, export_overlay, metric_columns, run_cross_validation,
};
use medsegpipe::model::{fit, FitOptions, Model, ReferenceModel, TrainConfig};
use medsegpipe::nifti;
use medsegpipe::preprocess::mean_std;
use medsegpipe::sample_io::{DirectoryIo, SampleIo};

#[derive(Parser)]
#[command(
    name = "medsegpipe",
    version,
    about = "Medical image segmentation pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print header fields and intensity statistics of a NIfTI file
    Info {
        /// Path to a .nii or .nii.gz file
        file: PathBuf,
    },
    /// Apply the preprocessing chain and write the processed volumes
    Preprocess {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated sample ids (default: all samples)
        #[arg(long)]
        ids: Option<String>,
    },
    /// Fit the reference model and save it
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output model path (default: <output_dir>/model.mscm)
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        ids: Option<String>,
    },
    /// Segment samples with a fitted model
    Predict {
        #[arg(long)]
        config: PathBuf,
        /// Fitted model file
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        ids: Option<String>,
    },
    /// Score a fitted model on labeled samples
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        ids: Option<String>,
    },
    /// Fully automatic cross-validation
    Crossval {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap usage/help text; --help and --version exit cleanly
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::IoFailure(_) | Error::NonFiniteLoss(_) | Error::UntrainedModel => 3,
        Error::FoldFailed { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn load(config_path: &Path) -> Result<PipelineConfig, Error> {
    if !config_path.is_file() {
        return Err(Error::ValidationError {
            field: "config".into(),
            reason: format!("no such file: {}", config_path.display()),
        });
    }
    let mut config = load_config(config_path)?;
    if let Ok(dir) = std::env::var("MEDSEGPIPE_CACHE") {
        config.cache_dir = Some(PathBuf::from(dir));
    }
    Ok(config)
}

fn data_io(config: &PipelineConfig) -> DirectoryIo {
    DirectoryIo::new(
        &config.data_dir,
        config.output_dir.join("predictions"),
        config.n_classes,
    )
}

fn resolve_ids(
    io: &DirectoryIo,
    explicit: &Option<String>,
    fallback: &[String],
) -> Result<Vec<String>, Error> {
    if let Some(list) = explicit {
        let ids: Vec<String> = list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if ids.is_empty() {
            return Err(Error::EmptyInput("--ids is empty".into()));
        }
        return Ok(ids);
    }
    if !fallback.is_empty() {
        return Ok(fallback.to_vec());
    }
    let ids = io.list_samples()?;
    if ids.is_empty() {
        return Err(Error::EmptyInput("no samples in data_dir".into()));
    }
    Ok(ids)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Info { file } => info(&file),
        Command::Preprocess { config, ids } => {
            let config = load(&config)?;
            let io = data_io(&config);
            let ids = resolve_ids(&io, &ids, &[])?;
            for id in &ids {
                eprintln!("preprocessing {id}");
                let sample = io.load_sample(id)?;
                let image = config.preprocess_image(&sample.image)?;
                let dir = config.output_dir.join("preprocessed").join(id);
                nifti::write_volume_file(&dir.join("imaging.nii"), &image)?;
                if let Some(labels) = &sample.labels {
                    let labels = config.preprocess_labels(labels)?;
                    nifti::write_labels_file(&dir.join("segmentation.nii"), &labels)?;
                }
            }
            eprintln!("wrote {} preprocessed samples", ids.len());
            Ok(())
        }
        Command::Train { config, model, ids } => {
            let config = load(&config)?;
            let io = data_io(&config);
            let ids = resolve_ids(&io, &ids, &config.train_ids)?;
            eprintln!("training on {} samples", ids.len());
            let mut m = ReferenceModel::new();
            let options = FitOptions {
                cache_dir: config.cache_dir.clone(),
                history_path: Some(config.output_dir.join("fitting.tsv")),
            };
            let train = TrainConfig::from_pipeline(&config);
            fit(&mut m, &io, &ids, &config, &train, &options)?;
            let model_path = model.unwrap_or_else(|| config.output_dir.join("model.mscm"));
            m.save(&model_path)?;
            eprintln!("saved model to {}", model_path.display());
            Ok(())
        }
        Command::Predict { config, model, ids } => {
            let config = load(&config)?;
            let io = data_io(&config);
            let ids = resolve_ids(&io, &ids, &config.test_ids)?;
            let m = ReferenceModel::load(&model)?;
            for id in &ids {
                eprintln!("predicting {id}");
                let sample = io.load_sample(id)?;
                let pred = medsegpipe::model::predict(&m, &sample.image, &config)?;
                io.save_prediction(id, &pred)?;
            }
            eprintln!("wrote {} predictions", ids.len());
            Ok(())
        }
        Command::Evaluate { config, model, ids } => {
            let config = load(&config)?;
            let io = data_io(&config);
            let ids = resolve_ids(&io, &ids, &config.test_ids)?;
            let m = ReferenceModel::load(&model)?;

            analyze_dataset(
                &io,
                &ids,
                config.n_classes,
                Some(&config.output_dir.join("analysis.tsv")),
            )?;
            let rows = evaluate_samples(&m, &io, &ids, &config)?;

            let columns = metric_columns(config.n_classes);
            let mut tsv = String::from("sample");
            for c in &columns {
                tsv.push_str(&format!("\t{c}"));
            }
            tsv.push('\n');
            for (id, row) in ids.iter().zip(&rows) {
                tsv.push_str(id);
                for v in row {
                    tsv.push_str(&format!("\t{v}"));
                }
                tsv.push('\n');
            }
            tsv.push_str("mean");
            for col in 0..columns.len() {
                let mean = rows.iter().map(|r| r[col]).sum::<f64>() / rows.len() as f64;
                tsv.push_str(&format!("\t{mean}"));
            }
            tsv.push('\n');
            medsegpipe::sample_io::write_atomic(
                &config.output_dir.join("metrics.tsv"),
                tsv.as_bytes(),
            )?;

            // overlays: ground truth next to the prediction, per slice
            let overlay_dir = config.output_dir.join("overlays");
            for id in &ids {
                let sample = io.load_sample(id)?;
                if let Some(labels) = &sample.labels {
                    let pred = medsegpipe::model::predict(&m, &sample.image, &config)?;
                    export_overlay(&sample.image, labels, Some(&pred), &overlay_dir, id)?;
                }
            }
            eprintln!("evaluated {} samples", ids.len());
            Ok(())
        }
        Command::Crossval { config } => {
            let config = load(&config)?;
            let io = data_io(&config);
            eprintln!("running cross-validation");
            let report = run_cross_validation(&io, &config, ReferenceModel::new)?;
            eprintln!(
                "wrote {} with {} fold rows",
                config.output_dir.join("evaluation.tsv").display(),
                report.fold_rows.len()
            );
            Ok(())
        }
    }
}

fn info(file: &Path) -> Result<(), Error> {
    let (header, volume) = nifti::read_volume_file(file)?;
    let dims: Vec<String> = header
        .spatial_shape()
        .iter()
        .rev()
        .map(|d| d.to_string())
        .collect();
    let spacing: Vec<String> = header
        .spatial_spacing()
        .iter()
        .rev()
        .map(|s| format!("{s}"))
        .collect();
    let (mean, std) = mean_std(volume.data());
    let min = volume.data().iter().fold(f32::INFINITY, |a, &b| a.min(b));
    let max = volume
        .data()
        .iter()
        .fold(f32::NEG_INFINITY, |a, &b| a.max(b));

    println!("file: {}", file.display());
    println!("dims: {}", dims.join(" "));
    println!("datatype: {}", header.datatype.name());
    println!("spacing: {}", spacing.join(" "));
    println!(
        "endianness: {}",
        if header.little_endian {
            "little"
        } else {
            "big"
        }
    );
    println!("vox_offset: {}", header.vox_offset);
    println!(
        "scl_slope: {} scl_inter: {}",
        header.scl_slope, header.scl_inter
    );
    println!("voxels: {}", volume.len());
    println!("min: {min} max: {max}");
    println!("mean: {mean:.6} std: {std:.6}");
    Ok(())
}
