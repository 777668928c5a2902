//! The five subcommands. Each computes everything it needs before writing, so
//! a failure leaves no partial artifact set from that command.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use insideout::dataset::{
    class_histogram, parse_fer_csv, validate_dataset, ClassHistogram, EmotionLabel,
    LabeledDataset, NUM_CLASSES,
};
use insideout::loss::{compute_class_weights, ClassWeights};
use insideout::metrics::{confusion_from_predictions, report_from_confusion, ClassificationReport};
use insideout::model::{build_model, load_checkpoint, Classifier};
use insideout::split::{split_dataset, DatasetSplit, SplitFile};
use insideout::trainer::{evaluate_pass, run_training, EpochRecord, TrainOptions};
use insideout::transforms::{preprocess_eval, preprocess_train};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self as art, ensure_dir, guard, read_json, write_json, write_text};
use crate::config::RunConfig;
use crate::inference::{self, InferInput, InferenceEntry};
use crate::plot;

#[derive(Debug, Clone, Default)]
pub struct CommonOptions {
    pub overwrite: bool,
    pub deterministic: bool,
}

pub const MANIFEST_FORMAT: &str = "insideout-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: RunConfig,
    pub dataset_digest: String,
    pub split_digest: String,
    pub partition_sizes: BTreeMap<String, usize>,
    pub train_histogram: ClassHistogram,
    pub class_weights: [f64; NUM_CLASSES],
    pub deterministic: bool,
    pub threads: usize,
    pub resumed_from: Option<PathBuf>,
    pub epochs: Vec<EpochRecord>,
    pub epochs_completed: usize,
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub checkpoint: String,
    pub wall_time: f64,
}

fn load_dataset(cfg: &RunConfig) -> anyhow::Result<LabeledDataset> {
    parse_fer_csv(&cfg.data.path).map_err(|e| match e {
        insideout::Error::Io { .. } => anyhow::Error::new(e),
        _ => anyhow::Error::new(e).context(format!("loading dataset {}", cfg.data.path.display())),
    })
}

/// Loads the dataset and the split written by `prepare`, checking that they
/// belong together.
fn load_prepared(cfg: &RunConfig) -> anyhow::Result<(LabeledDataset, SplitFile)> {
    let split_path = cfg.output_dir.join(art::SPLIT);
    if !split_path.is_file() {
        bail!(
            "{} not found; run `insideout prepare` with this config first",
            split_path.display()
        );
    }
    let split = SplitFile::load(&split_path)?;
    let ds = load_dataset(cfg)?;
    if split.dataset_digest != ds.source_digest() {
        bail!(
            "{} was produced from a different dataset file; rerun prepare",
            split_path.display()
        );
    }
    if !split.split.is_partition_of(ds.len()) {
        bail!("{} does not partition the dataset", split_path.display());
    }
    Ok((ds, split))
}

fn labels_display() -> Vec<&'static str> {
    EmotionLabel::DISPLAY_ORDER.iter().map(|l| l.name()).collect()
}

fn histogram_csv(ds: &LabeledDataset, split: &DatasetSplit) -> anyhow::Result<String> {
    let total = class_histogram(ds)?;
    let parts: Vec<ClassHistogram> = split
        .partitions()
        .iter()
        .map(|idx| ClassHistogram::from_labels(idx.iter().map(|&i| ds.samples()[i].label)))
        .collect::<Result<_, _>>()?;
    let mut out = String::from("label,total,train,val,test\n");
    for l in EmotionLabel::DISPLAY_ORDER {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            l.name(),
            total.count(l),
            parts[0].count(l),
            parts[1].count(l),
            parts[2].count(l)
        ));
    }
    Ok(out)
}

fn histogram_png(csv: &str) -> anyhow::Result<image::RgbImage> {
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for line in csv.lines().skip(1).filter(|l| !l.is_empty()) {
        let mut cols = line.split(',');
        let (Some(label), Some(total)) = (cols.next(), cols.next()) else {
            bail!("malformed histogram row {line:?}");
        };
        labels.push(label.to_string());
        values.push(total.parse::<f64>()?);
    }
    let names: Vec<&str> = labels.iter().map(String::as_str).collect();
    let total: f64 = values.iter().sum();
    Ok(plot::bar_chart(
        &format!("Class distribution ({total} images)"),
        &names,
        &values,
    ))
}

/// Rows of one original training image followed by augmented draws for
/// successive epochs, one row per class where available.
fn augmentation_grid(cfg: &RunConfig, ds: &LabeledDataset, split: &DatasetSplit) -> image::RgbImage {
    const DRAWS: u64 = 4;
    let mut tiles = Vec::new();
    for label in EmotionLabel::DISPLAY_ORDER {
        let Some(&i) = split.train.iter().find(|&&i| ds.samples()[i].label == label) else {
            continue;
        };
        let img = &ds.samples()[i].image;
        tiles.push(plot::Tile {
            image: preprocess_eval_rgb(img),
            caption: format!("{label}"),
            color: plot::BLACK,
        });
        for epoch in 0..DRAWS {
            let t = preprocess_train(img, &cfg.augment, i as u64, epoch);
            tiles.push(plot::Tile {
                image: tensor_rgb(&t),
                caption: format!("epoch {epoch}"),
                color: plot::DARK_GRAY,
            });
        }
    }
    plot::tile_grid("Augmented training samples", &tiles, 1 + DRAWS as usize, 1)
}

fn preprocess_eval_rgb(img: &insideout::GrayImage) -> image::RgbImage {
    tensor_rgb(&preprocess_eval(img))
}

/// Denormalized tensor as a 112x112 RGB preview.
fn tensor_rgb(t: &insideout::ImageTensor) -> image::RgbImage {
    let [_, h, w] = t.shape();
    let full = image::RgbImage::from_raw(w as u32, h as u32, t.to_rgb8()).expect("3 x h x w bytes");
    image::imageops::resize(&full, 112, 112, image::imageops::FilterType::Triangle)
}

pub fn cmd_prepare(
    cfg: &RunConfig,
    opts: &CommonOptions,
    emit_samples: usize,
) -> anyhow::Result<Vec<PathBuf>> {
    let out = &cfg.output_dir;
    guard(out, art::PREPARE, opts.overwrite)?;
    if emit_samples > 0 {
        guard(out, &[art::SAMPLES_DIR], opts.overwrite)?;
    }
    let ds = load_dataset(cfg)?;
    let report = validate_dataset(&ds);
    if report.has_findings() {
        eprintln!(
            "warning: dataset has {} duplicate(s), {} range and {} shape violation(s); see {}",
            report.duplicate_count(),
            report.range_violations.len(),
            report.shape_violations.len(),
            art::VALIDATION
        );
    }
    let split = split_dataset(&ds, &cfg.split)?;
    let split_file = SplitFile::new(cfg.split.clone(), ds.source_digest(), split);
    let hist_csv = histogram_csv(&ds, &split_file.split)?;
    let hist_png = histogram_png(&hist_csv)?;
    let grid = augmentation_grid(cfg, &ds, &split_file.split);
    let samples: Vec<image::RgbImage> = split_file
        .split
        .train
        .iter()
        .take(emit_samples)
        .map(|&i| {
            let t = preprocess_train(&ds.samples()[i].image, &cfg.augment, i as u64, 0);
            let [_, h, w] = t.shape();
            image::RgbImage::from_raw(w as u32, h as u32, t.to_rgb8()).expect("tensor bytes")
        })
        .collect();

    ensure_dir(out)?;
    let mut written = Vec::new();
    let split_path = out.join(art::SPLIT);
    split_file.save(&split_path)?;
    written.push(split_path);
    written.push(write_json(&out.join(art::VALIDATION), &report)?);
    written.push(write_text(&out.join(art::HISTOGRAM_CSV), &hist_csv)?);
    plot::save_png(&hist_png, &out.join(art::HISTOGRAM_PNG))?;
    written.push(out.join(art::HISTOGRAM_PNG));
    plot::save_png(&grid, &out.join(art::AUGMENTED_PNG))?;
    written.push(out.join(art::AUGMENTED_PNG));
    if !samples.is_empty() {
        let dir = out.join(art::SAMPLES_DIR);
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        ensure_dir(&dir)?;
        for (k, img) in samples.iter().enumerate() {
            let p = dir.join(format!("augmented_{k:04}.png"));
            plot::save_png(img, &p)?;
            written.push(p);
        }
    }
    Ok(written)
}

fn curves_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,train_acc,val_acc,lr,wall_time\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch, r.train_loss, r.val_loss, r.train_acc, r.val_acc, r.lr, r.wall_time
        ));
    }
    out
}

fn parse_curves(csv: &str) -> anyhow::Result<Vec<EpochRecord>> {
    let mut rows = Vec::new();
    for (n, line) in csv.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let v: Vec<&str> = line.split(',').collect();
        if v.len() != 7 {
            bail!("curves row {n}: expected 7 columns, got {}", v.len());
        }
        let f = |i: usize| v[i].parse::<f64>().with_context(|| format!("curves row {n}"));
        rows.push(EpochRecord {
            epoch: v[0].parse().with_context(|| format!("curves row {n}"))?,
            train_loss: f(1)?,
            val_loss: f(2)?,
            train_acc: f(3)?,
            val_acc: f(4)?,
            lr: f(5)?,
            wall_time: f(6)?,
        });
    }
    Ok(rows)
}

fn curve_plots(history: &[EpochRecord]) -> (image::RgbImage, image::RgbImage) {
    let col = |f: fn(&EpochRecord) -> f64| history.iter().map(f).collect::<Vec<_>>();
    let (ta, va) = (col(|r| r.train_acc), col(|r| r.val_acc));
    let (tl, vl) = (col(|r| r.train_loss), col(|r| r.val_loss));
    let acc = plot::line_chart(
        "Training and validation accuracy",
        "accuracy",
        &[("train", plot::BLUE, &ta), ("val", plot::ORANGE, &va)],
    );
    let loss = plot::line_chart(
        "Training and validation loss",
        "loss",
        &[("train", plot::BLUE, &tl), ("val", plot::ORANGE, &vl)],
    );
    (acc, loss)
}

pub fn cmd_train(
    cfg: &RunConfig,
    opts: &CommonOptions,
    resume: Option<&Path>,
) -> anyhow::Result<Vec<PathBuf>> {
    let out = &cfg.output_dir;
    if resume.is_none() {
        guard(out, art::TRAIN, opts.overwrite)?;
    }
    let (ds, split_file) = load_prepared(cfg)?;
    let split = &split_file.split;
    let train_hist =
        ClassHistogram::from_labels(split.train.iter().map(|&i| ds.samples()[i].label))?;
    let weights: ClassWeights = if cfg.training.class_weighted {
        compute_class_weights(&train_hist)?
    } else {
        ClassWeights::uniform(train_hist)
    };
    let model = build_model(&cfg.model)?;

    if resume.is_none() {
        for dir in [art::CHECKPOINT, art::CHECKPOINT_LAST] {
            let p = out.join(dir);
            if p.exists() {
                std::fs::remove_dir_all(&p).with_context(|| format!("removing {}", p.display()))?;
            }
        }
    }
    ensure_dir(out)?;
    let started = std::time::Instant::now();
    let max_epochs = cfg.training.max_epochs;
    let outcome = run_training(
        &ds,
        split,
        model,
        &cfg.augment,
        &weights,
        &cfg.training,
        TrainOptions {
            output_dir: Some(out.clone()),
            resume_from: resume.map(Path::to_path_buf),
            on_epoch: Some(Box::new(move |r: &EpochRecord| {
                eprintln!(
                    "epoch {}/{max_epochs}  lr {:.2e}  train loss {:.4} acc {:.3}  val loss {:.4} acc {:.3}",
                    r.epoch + 1,
                    r.lr,
                    r.train_loss,
                    r.train_acc,
                    r.val_loss,
                    r.val_acc
                );
            })),
        },
    )?;
    let state = outcome.state;

    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        config: cfg.clone(),
        dataset_digest: split_file.dataset_digest.clone(),
        split_digest: split_file.split_digest.clone(),
        partition_sizes: insideout::split::PARTITIONS
            .iter()
            .zip(split.partitions())
            .map(|(n, p)| (n.to_string(), p.len()))
            .collect(),
        train_histogram: train_hist,
        class_weights: weights.w,
        deterministic: opts.deterministic,
        threads: rayon::current_num_threads(),
        resumed_from: resume.map(Path::to_path_buf),
        epochs: state.history.clone(),
        epochs_completed: state.epochs_completed,
        best_epoch: state.best_epoch,
        best_val_loss: state.best_val_loss,
        stopped_early: state.stopped_early,
        checkpoint: art::CHECKPOINT.into(),
        wall_time: started.elapsed().as_secs_f64(),
    };
    let csv = curves_csv(&state.history);
    let (acc_png, loss_png) = curve_plots(&state.history);

    let mut written = vec![out.join(art::CHECKPOINT), out.join(art::CHECKPOINT_LAST)];
    written.push(write_json(&out.join(art::MANIFEST), &manifest)?);
    written.push(write_text(&out.join(art::CURVES_CSV), &csv)?);
    plot::save_png(&acc_png, &out.join(art::CURVES_ACC_PNG))?;
    written.push(out.join(art::CURVES_ACC_PNG));
    plot::save_png(&loss_png, &out.join(art::CURVES_LOSS_PNG))?;
    written.push(out.join(art::CURVES_LOSS_PNG));
    Ok(written)
}

/// Runs the eval pass and builds the report; writes nothing.
pub fn evaluate_report<C: Classifier + ?Sized>(
    model: &C,
    ds: &LabeledDataset,
    indices: &[usize],
    partition: &str,
) -> anyhow::Result<ClassificationReport> {
    if indices.is_empty() {
        bail!("{partition} partition is empty; nothing to evaluate");
    }
    let outcome = evaluate_pass(model, ds, indices)?;
    let cm = confusion_from_predictions(&outcome.truths(), &outcome.labels())?;
    Ok(report_from_confusion(&cm)?.with_partition(partition))
}

fn confusion_png(report: &ClassificationReport) -> image::RgbImage {
    let rows: Vec<Vec<u64>> = EmotionLabel::DISPLAY_ORDER
        .iter()
        .map(|t| {
            EmotionLabel::DISPLAY_ORDER
                .iter()
                .map(|p| report.confusion.m[t.index()][p.index()])
                .collect()
        })
        .collect();
    let title = match &report.partition {
        Some(p) => format!("Confusion matrix ({p})"),
        None => "Confusion matrix".into(),
    };
    plot::heatmap(&title, &labels_display(), &rows)
}

/// Writes the text table, JSON, CSV and heatmap, all from `report`.
pub fn write_report(out: &Path, report: &ClassificationReport) -> anyhow::Result<Vec<PathBuf>> {
    let table = report.render_table();
    let heat = confusion_png(report);
    ensure_dir(out)?;
    let mut written = vec![
        write_text(&out.join(art::REPORT_TXT), &table)?,
        write_json(&out.join(art::REPORT_JSON), report)?,
        write_text(&out.join(art::CONFUSION_CSV), &report.confusion.to_csv())?,
    ];
    plot::save_png(&heat, &out.join(art::CONFUSION_PNG))?;
    written.push(out.join(art::CONFUSION_PNG));
    Ok(written)
}

fn checkpoint_dir(cfg: &RunConfig, checkpoint: Option<&Path>) -> PathBuf {
    checkpoint.map_or_else(|| cfg.output_dir.join(art::CHECKPOINT), Path::to_path_buf)
}

pub fn cmd_evaluate(
    cfg: &RunConfig,
    opts: &CommonOptions,
    checkpoint: Option<&Path>,
    partition: &str,
) -> anyhow::Result<Vec<PathBuf>> {
    guard(&cfg.output_dir, art::EVALUATE, opts.overwrite)?;
    let (ds, split_file) = load_prepared(cfg)?;
    let Some(indices) = split_file.split.partition(partition) else {
        bail!("unknown partition {partition:?}; expected train, val or test");
    };
    let ckpt = checkpoint_dir(cfg, checkpoint);
    let model = load_checkpoint(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let report = evaluate_report(&model, &ds, indices, partition)?;
    print!("{}", report.render_table());
    write_report(&cfg.output_dir, &report)
}

/// What `infer` runs on: explicit image files, or the first `n` samples of
/// a split partition (with known labels).
pub enum InferSource<'a> {
    Files(&'a [PathBuf]),
    Partition { name: &'a str, count: usize },
}

pub fn cmd_infer(
    cfg: &RunConfig,
    opts: &CommonOptions,
    checkpoint: Option<&Path>,
    source: InferSource<'_>,
    top_k: usize,
) -> anyhow::Result<Vec<PathBuf>> {
    guard(&cfg.output_dir, art::INFER, opts.overwrite)?;
    let inputs: Vec<InferInput> = match source {
        InferSource::Files(paths) => {
            if paths.is_empty() {
                bail!("no images given");
            }
            paths
                .iter()
                .map(|p| InferInput {
                    reference: p.display().to_string(),
                    image: inference::load_image(p),
                    truth: None,
                })
                .collect()
        }
        InferSource::Partition { name, count } => {
            let (ds, split_file) = load_prepared(cfg)?;
            let Some(indices) = split_file.split.partition(name) else {
                bail!("unknown partition {name:?}; expected train, val or test");
            };
            indices
                .iter()
                .take(count)
                .map(|&i| InferInput {
                    reference: format!("{name}[{i}]"),
                    image: Ok(ds.samples()[i].image.clone()),
                    truth: Some(ds.samples()[i].label),
                })
                .collect()
        }
    };
    let ckpt = checkpoint_dir(cfg, checkpoint);
    let model = load_checkpoint(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let entries = inference::infer(&model, &inputs, top_k);
    for e in &entries {
        match e {
            InferenceEntry::Ok(r) => println!("{}\t{}\t{:.4}", r.reference, r.label, r.confidence),
            InferenceEntry::Failed { reference, error } => {
                eprintln!("error: {reference}: {error}")
            }
        }
    }
    let grid = inference::inference_grid(&inputs, &entries);
    ensure_dir(&cfg.output_dir)?;
    let mut written = vec![write_json(&cfg.output_dir.join(art::INFERENCE_JSON), &entries)?];
    plot::save_png(&grid, &cfg.output_dir.join(art::INFERENCE_PNG))?;
    written.push(cfg.output_dir.join(art::INFERENCE_PNG));
    Ok(written)
}

/// Re-renders every figure and the text report from the data artifacts
/// already in the output directory, without touching the model or dataset.
pub fn cmd_report(cfg: &RunConfig) -> anyhow::Result<Vec<PathBuf>> {
    let out = &cfg.output_dir;
    let mut written = Vec::new();
    let hist = out.join(art::HISTOGRAM_CSV);
    if hist.is_file() {
        let png = histogram_png(&std::fs::read_to_string(&hist)?)?;
        plot::save_png(&png, &out.join(art::HISTOGRAM_PNG))?;
        written.push(out.join(art::HISTOGRAM_PNG));
    }
    let curves = out.join(art::CURVES_CSV);
    if curves.is_file() {
        let history = parse_curves(&std::fs::read_to_string(&curves)?)?;
        let (acc, loss) = curve_plots(&history);
        plot::save_png(&acc, &out.join(art::CURVES_ACC_PNG))?;
        plot::save_png(&loss, &out.join(art::CURVES_LOSS_PNG))?;
        written.push(out.join(art::CURVES_ACC_PNG));
        written.push(out.join(art::CURVES_LOSS_PNG));
    }
    let report = out.join(art::REPORT_JSON);
    if report.is_file() {
        let report: ClassificationReport = read_json(&report)?;
        written.extend(write_report(out, &report)?);
    }
    if written.is_empty() {
        bail!(
            "{} holds no {}, {} or {} to render",
            out.display(),
            art::HISTOGRAM_CSV,
            art::CURVES_CSV,
            art::REPORT_JSON
        );
    }
    Ok(written)
}
