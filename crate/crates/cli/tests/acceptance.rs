//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use insideout::dataset::{
    ClassHistogram, EmotionLabel, GrayImage, LabeledDataset, Sample, Usage, NUM_CLASSES,
};
use insideout::loss::{
    compute_class_weights, softmax, weighted_cross_entropy, weighted_cross_entropy_with_logits,
    ClassWeights, Reduction,
};
use insideout::metrics::{confusion_from_predictions, f1_score, macro_average, report_from_confusion};
use insideout::model::{build_model, ModelConfig};
use insideout::split::{split_stratified, DatasetSplit, SplitSpec};
use insideout::synthetic::{synthetic_dataset, SyntheticSpec};
use insideout::trainer::{
    cosine_lr, evaluate_pass, run_training, TrainOptions, TrainingConfig, TrainingState,
};
use insideout::transforms::{
    preprocess_eval, preprocess_train, AugmentConfig, IMAGENET_MEAN, IMAGENET_STD, MODEL_SIDE,
};
use insideout_cli::artifacts as art;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// Printed per-class (precision, recall, F1) and macro F1 of the reference run.
const TABLE1: [(&str, f64, f64, f64); 7] = [
    ("Anger", 0.567, 0.537, 0.552),
    ("Disgust", 0.361, 0.729, 0.483),
    ("Fear", 0.541, 0.340, 0.418),
    ("Happy", 0.884, 0.786, 0.832),
    ("Neutral", 0.519, 0.751, 0.614),
    ("Sadness", 0.546, 0.421, 0.474),
    ("Surprise", 0.669, 0.866, 0.755),
];
const TABLE1_MACRO_F1: f64 = 0.590;

fn table1_consistency() -> Outcome {
    let mut off = Vec::new();
    for (name, p, r, printed) in TABLE1 {
        let f1 = f1_score(p, r);
        if (f1 - printed).abs() > 0.0005 {
            off.push(format!("{name}: computed {f1:.4} vs printed {printed:.3}"));
        }
    }
    let printed: Vec<f64> = TABLE1.iter().map(|row| row.3).collect();
    let macro_f1 = macro_average(&printed);
    if (macro_f1 - TABLE1_MACRO_F1).abs() > 0.001 {
        off.push(format!("macro F1 {macro_f1:.4} vs {TABLE1_MACRO_F1}"));
    }
    if off.is_empty() {
        Ok(format!("7/7 rows within 0.0005, macro F1 {macro_f1:.4}"))
    } else {
        Err(format!(
            "{}/7 rows within 0.0005; {}",
            7 - off.iter().filter(|s| !s.starts_with("macro")).count(),
            off.join("; ")
        ))
    }
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let mut worst = 0.0f64;
    for set in 0..1000 {
        let n = rng.gen_range(1..=200);
        // Skew some sets so classes go missing and zero-division paths run.
        let used = rng.gen_range(1..=NUM_CLASSES);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..used)).collect();
        let pred: Vec<usize> = (0..n)
            .map(|i| {
                if rng.gen_bool(0.4) {
                    truth[i]
                } else {
                    rng.gen_range(0..NUM_CLASSES)
                }
            })
            .collect();
        let cm = confusion_from_predictions(&truth, &pred).map_err(|e| e.to_string())?;
        let report = report_from_confusion(&cm).map_err(|e| e.to_string())?;

        let mut macro_sum = [0.0; 3];
        let mut weighted_sum = [0.0; 3];
        let mut correct = 0usize;
        for c in 0..NUM_CLASSES {
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for (&t, &p) in truth.iter().zip(&pred) {
                match (t == c, p == c) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    _ => {}
                }
            }
            let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
            let m = &report.per_class[c];
            for (got, want) in [(m.precision, precision), (m.recall, recall), (m.f1, f1)] {
                worst = worst.max((got - want).abs());
            }
            check(m.support == (tp + fn_) as u64, || format!("set {set}: support of class {c}"))?;
            correct += tp;
            let support = (tp + fn_) as f64;
            for (k, v) in [precision, recall, f1].into_iter().enumerate() {
                macro_sum[k] += v / NUM_CLASSES as f64;
                weighted_sum[k] += v * support / n as f64;
            }
        }
        let accuracy = correct as f64 / n as f64;
        let got_macro = [report.macro_avg.precision, report.macro_avg.recall, report.macro_avg.f1];
        let got_weighted = [
            report.weighted_avg.precision,
            report.weighted_avg.recall,
            report.weighted_avg.f1,
        ];
        for k in 0..3 {
            worst = worst.max((got_macro[k] - macro_sum[k]).abs());
            worst = worst.max((got_weighted[k] - weighted_sum[k]).abs());
        }
        worst = worst.max((report.accuracy - accuracy).abs());
        check(report.weighted_avg.recall == report.accuracy, || {
            format!(
                "set {set}: weighted recall {} != accuracy {}",
                report.weighted_avg.recall, report.accuracy
            )
        })?;
        check(worst <= 1e-12, || format!("set {set}: deviation {worst:e} > 1e-12"))?;
    }
    Ok(format!("1000 sets, max deviation {worst:.1e}, weighted recall == accuracy"))
}

fn class_weight_identities() -> Outcome {
    for k in [1usize, 5, 5000] {
        let w = compute_class_weights(&histogram([k; NUM_CLASSES])).map_err(|e| e.to_string())?;
        check(w.w.iter().all(|&x| x == 1.0), || format!("balanced {k}: {:?}", w.w))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let counts: [usize; NUM_CLASSES] = std::array::from_fn(|_| rng.gen_range(1..=9000));
        let w = compute_class_weights(&histogram(counts)).map_err(|e| e.to_string())?;
        let n: usize = counts.iter().sum();
        let s: f64 = (0..NUM_CLASSES).map(|c| counts[c] as f64 / n as f64 * w.w[c]).sum();
        worst = worst.max((s - 1.0).abs());
    }
    check(worst <= 1e-9, || format!("sum (n_c/N) w_c deviates by {worst:e}"))?;
    let mut zero = [4usize; NUM_CLASSES];
    zero[1] = 0;
    check(compute_class_weights(&histogram(zero)).is_err(), || {
        "zero-count class accepted".into()
    })?;
    Ok(format!("balanced -> 1, 1000 histograms within {worst:.1e}, zero count rejected"))
}

fn histogram(counts: [usize; NUM_CLASSES]) -> ClassHistogram {
    ClassHistogram {
        counts,
        total: counts.iter().sum(),
    }
}

fn loss_correctness() -> Outcome {
    let unit = ClassWeights::uniform(histogram([1; NUM_CLASSES]));
    let uniform = vec![[1.0 / 7.0; NUM_CLASSES]; 5];
    let loss = weighted_cross_entropy(&uniform, &[0, 1, 2, 3, 6], &unit, Reduction::WeightedMean)
        .map_err(|e| e.to_string())?;
    let ln7 = 7f64.ln();
    check((loss - ln7).abs() <= 1e-9, || format!("uniform loss {loss} vs ln 7 {ln7}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let logits: Vec<[f64; NUM_CLASSES]> = (0..8)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-3.0..3.0)))
            .collect();
        let targets: Vec<usize> = (0..8).map(|_| rng.gen_range(0..NUM_CLASSES)).collect();
        let mut weights = unit.clone();
        weights.w = std::array::from_fn(|_| rng.gen_range(0.2..5.0));
        let reduction = if rng.gen_bool(0.5) { Reduction::WeightedMean } else { Reduction::Sum };
        let (_, grads) = weighted_cross_entropy_with_logits(&logits, &targets, &weights, reduction)
            .map_err(|e| e.to_string())?;
        // Independent forward: probabilities via softmax, loss from them.
        let f = |z: &[[f64; NUM_CLASSES]]| {
            let p: Vec<[f64; NUM_CLASSES]> = z.iter().map(softmax).collect();
            weighted_cross_entropy(&p, &targets, &weights, reduction).unwrap()
        };
        let h = 1e-5;
        for i in 0..8 {
            for j in 0..NUM_CLASSES {
                let mut plus = logits.clone();
                let mut minus = logits.clone();
                plus[i][j] += h;
                minus[i][j] -= h;
                let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
                let analytic = grads[i][j];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-12);
                worst = worst.max(rel);
            }
        }
    }
    check(worst <= 1e-4, || format!("finite-difference relative error {worst:e}"))?;
    Ok(format!("uniform = ln 7, 200 batches 8x7 max rel err {worst:.1e}"))
}

fn schedule_and_stopping() -> Outcome {
    for max_epochs in [1usize, 2, 7, 30, 100] {
        let cfg = TrainingConfig {
            max_epochs,
            patience: 1,
            ..TrainingConfig::default()
        };
        let lrs: Vec<f64> = (0..max_epochs)
            .map(|e| cosine_lr(e, &cfg).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        check(lrs[0] == 1e-3, || format!("lr(0) = {} for {max_epochs} epochs", lrs[0]))?;
        if max_epochs > 1 {
            check(lrs[max_epochs - 1] == cfg.min_lr, || {
                format!("lr(last) = {} for {max_epochs} epochs", lrs[max_epochs - 1])
            })?;
        }
        check(lrs.windows(2).all(|w| w[1] <= w[0]), || {
            format!("schedule increases for {max_epochs} epochs")
        })?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut scripted = 0;
    for _ in 0..500 {
        let patience = rng.gen_range(1..=6);
        let len = rng.gen_range(patience + 1..=40);
        let cfg = TrainingConfig {
            max_epochs: len,
            patience,
            ..TrainingConfig::default()
        };
        let losses: Vec<f64> = (0..len)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    rng.gen_range(0.5..2.0)
                } else {
                    // Changes smaller than min_delta never count.
                    1.0 + rng.gen_range(-5e-5..5e-5)
                }
            })
            .collect();
        let mut state = TrainingState::default();
        let mut stopped_at = None;
        for (epoch, &l) in losses.iter().enumerate() {
            state.update(l, &cfg);
            if state.stopped_early {
                stopped_at = Some(epoch);
                break;
            }
        }
        // Oracle: walk the sequence tracking the best loss.
        let mut best = f64::INFINITY;
        let mut best_epoch = 0;
        let mut expected = None;
        for (epoch, &l) in losses.iter().enumerate() {
            if l < best - cfg.min_delta {
                best = l;
                best_epoch = epoch;
            } else if epoch - best_epoch >= patience {
                expected = Some(epoch);
                break;
            }
        }
        check(stopped_at == expected, || {
            format!("losses {losses:?} patience {patience}: stopped {stopped_at:?}, expected {expected:?}")
        })?;
        if let Some(e) = expected {
            check(e == best_epoch + patience && state.best_epoch == Some(best_epoch), || {
                "stop epoch is not best_epoch + patience".into()
            })?;
            scripted += 1;
        }
    }
    Ok(format!("exact endpoints for 5 budgets; {scripted}/500 scripted runs stopped at best+patience"))
}

fn tiny_dataset(labels: &[usize]) -> LabeledDataset {
    let samples = labels
        .iter()
        .enumerate()
        .map(|(i, &c)| Sample {
            image: GrayImage::filled(1, 1, (i % 256) as u16),
            label: EmotionLabel::from_index(c).unwrap(),
            usage: Usage::Training,
        })
        .collect();
    LabeledDataset::from_samples(samples).unwrap()
}

fn split_stratification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut runs = 0;
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let skew = rng.gen_range(1.0..=50.0);
        let base: [f64; NUM_CLASSES] = std::array::from_fn(|c| {
            if c == 0 {
                skew
            } else if c == 1 {
                1.0
            } else {
                rng.gen_range(1.0..=skew)
            }
        });
        let total: f64 = base.iter().sum();
        let n = rng.gen_range(200..=10_000usize);
        let mut counts: Vec<usize> = base.iter().map(|b| ((b / total) * n as f64).max(3.0) as usize).collect();
        counts[1] = counts[1].max(3);
        let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &k)| vec![c; k]).collect();
        // Interleave so class members are not contiguous.
        for i in (1..labels.len()).rev() {
            labels.swap(i, rng.gen_range(0..=i));
        }
        let ds = tiny_dataset(&labels);
        let n = ds.len();
        let r_val = rng.gen_range(0.05..0.3);
        let r_test = rng.gen_range(0.05..0.3);
        let spec = SplitSpec::stratified([1.0 - r_val - r_test, r_val, r_test], rng.gen());
        let split = split_stratified(&ds, &spec).map_err(|e| e.to_string())?;
        check(split.is_partition_of(n), || "partitions overlap or miss samples".into())?;
        let again = split_stratified(&ds, &spec).map_err(|e| e.to_string())?;
        check(again == split, || "same seed gave a different split".into())?;
        for part in split.partitions() {
            let mut per_class = [0usize; NUM_CLASSES];
            for &i in part {
                per_class[labels[i]] += 1;
            }
            for c in 0..NUM_CLASSES {
                let exact = counts[c] as f64 * part.len() as f64 / n as f64;
                let dev = (per_class[c] as f64 - exact).abs();
                worst = worst.max(dev);
                check(dev <= 1.0 + 1e-9, || {
                    format!("class {c} off by {dev:.3} samples (n={n}, |p|={})", part.len())
                })?;
            }
        }
        runs += 1;
    }
    Ok(format!("{runs} datasets up to 50:1 skew, max deviation {worst:.3} samples"))
}

fn transform_contracts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for k in 0..20 {
        let pixels: Vec<u16> = (0..48 * 48).map(|_| rng.gen_range(0..256)).collect();
        let img = GrayImage::new(48, 48, pixels).unwrap();
        let eval = preprocess_eval(&img);
        let ident = preprocess_train(&img, &AugmentConfig::identity(rng.gen()), k, rng.gen_range(0..100));
        check(eval.shape() == [3, MODEL_SIDE, MODEL_SIDE], || format!("eval shape {:?}", eval.shape()))?;
        let same = eval.data().iter().zip(ident.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        check(same, || format!("identity augmentation differs from eval on image {k}"))?;
        let aug = AugmentConfig {
            crop_scale: (rng.gen_range(0.3..0.9), 1.0),
            rotation_degrees: rng.gen_range(0.0..30.0),
            seed: rng.gen(),
            ..AugmentConfig::default()
        };
        let t = preprocess_train(&img, &aug, k, 0);
        check(t.shape() == [3, MODEL_SIDE, MODEL_SIDE], || format!("train shape {:?}", t.shape()))?;
    }
    let zero = preprocess_eval(&GrayImage::filled(48, 48, 0));
    let mut worst = 0.0f64;
    for c in 0..3 {
        let want = (0.0 - IMAGENET_MEAN[c] as f64) / IMAGENET_STD[c] as f64;
        for &v in zero.channel(c) {
            worst = worst.max((v as f64 - want).abs());
        }
    }
    check(worst <= 1e-6, || format!("all-zero image off by {worst:e}"))?;
    Ok(format!("20 images bitwise identical, shapes 3x224x224, zero image within {worst:.1e}"))
}

fn train_config(max_epochs: usize, class_weighted: bool) -> TrainingConfig {
    TrainingConfig {
        initial_lr: 3e-3,
        min_lr: 1e-4,
        batch_size: 8,
        max_epochs,
        patience: max_epochs,
        augment: false,
        class_weighted,
        seed: 5,
        ..TrainingConfig::default()
    }
}

fn tiny_model() -> insideout::Model {
    build_model(&ModelConfig {
        dropout_rate: 0.0,
        seed: 1,
        ..ModelConfig::default()
    })
    .unwrap()
}

/// Concatenates datasets and returns the index ranges of each part.
fn concat(parts: &[LabeledDataset]) -> (LabeledDataset, Vec<Vec<usize>>) {
    let mut samples = Vec::new();
    let mut ranges = Vec::new();
    for p in parts {
        let start = samples.len();
        samples.extend_from_slice(p.samples());
        ranges.push((start..samples.len()).collect());
    }
    (LabeledDataset::from_samples(samples).unwrap(), ranges)
}

fn tiny_overfit_and_weighting() -> Outcome {
    let ds = synthetic_dataset(&SyntheticSpec {
        counts: [10, 9, 9, 9, 9, 9, 9],
        ..SyntheticSpec::balanced(0, 11)
    })
    .map_err(|e| e.to_string())?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let split = DatasetSplit {
        train: all.clone(),
        val: all.iter().copied().step_by(4).collect(),
        test: all.iter().copied().skip(1).step_by(4).collect(),
    };
    let weights = compute_class_weights(&insideout::class_histogram(&ds).unwrap()).unwrap();
    let out = run_training(
        &ds,
        &split,
        tiny_model(),
        &AugmentConfig::identity(0),
        &weights,
        &train_config(30, true),
        TrainOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let acc = evaluate_pass(&out.model, &ds, &split.train).map_err(|e| e.to_string())?.accuracy;
    check(acc >= 0.95, || format!("64-sample train accuracy {acc:.3} < 0.95"))?;

    // 10:1 imbalance with Disgust as the minority class; noisier textures so
    // the task is not solved outright by both runs.
    let noisy = |counts, seed| {
        synthetic_dataset(&SyntheticSpec {
            counts,
            seed,
            contrast: 35.0,
            noise: 70.0,
        })
        .unwrap()
    };
    let (ds, parts) = concat(&[
        noisy([40, 4, 40, 40, 40, 40, 40], 101),
        noisy([4; NUM_CLASSES], 202),
        noisy([20; NUM_CLASSES], 303),
    ]);
    let split = DatasetSplit {
        train: parts[0].clone(),
        val: parts[1].clone(),
        test: parts[2].clone(),
    };
    let train_hist =
        ClassHistogram::from_labels(split.train.iter().map(|&i| ds.samples()[i].label)).unwrap();
    let weights = compute_class_weights(&train_hist).unwrap();
    let minority_recall = |class_weighted: bool| -> Result<f64, String> {
        let out = run_training(
            &ds,
            &split,
            tiny_model(),
            &AugmentConfig::identity(0),
            &weights,
            &train_config(6, class_weighted),
            TrainOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let eval = evaluate_pass(&out.model, &ds, &split.test).map_err(|e| e.to_string())?;
        let cm = confusion_from_predictions(&eval.truths(), &eval.labels()).map_err(|e| e.to_string())?;
        let report = report_from_confusion(&cm).map_err(|e| e.to_string())?;
        Ok(report.class(EmotionLabel::Disgust).recall)
    };
    let weighted = minority_recall(true)?;
    let unweighted = minority_recall(false)?;
    check(weighted >= unweighted, || {
        format!("minority recall weighted {weighted:.3} < unweighted {unweighted:.3}")
    })?;
    Ok(format!(
        "train acc {acc:.3}; minority recall weighted {weighted:.3} >= unweighted {unweighted:.3}"
    ))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_insideout"))
        .args(args)
        .env_remove(insideout_cli::config::DATA_ROOT_ENV)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`insideout {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn end_to_end_smoke() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let ds = synthetic_dataset(&SyntheticSpec {
        counts: [29, 28, 29, 28, 29, 28, 29],
        ..SyntheticSpec::balanced(0, 8)
    })
    .map_err(|e| e.to_string())?;
    ds.write_csv(root.join("fer_subset.csv")).map_err(|e| e.to_string())?;
    let config = root.join("smoke.toml");
    std::fs::write(
        &config,
        "seed = 42\noutput_dir = \"out\"\n[data]\npath = \"fer_subset.csv\"\n\
         [training]\nmax_epochs = 3\npatience = 3\nbatch_size = 16\n",
    )
    .map_err(|e| e.to_string())?;
    let png = root.join("probe.png");
    image::GrayImage::from_fn(48, 48, |x, _| image::Luma([(x * 5) as u8]))
        .save(&png)
        .map_err(|e| e.to_string())?;
    let cfg = config.to_str().unwrap();
    cli(&["prepare", "--config", cfg, "--deterministic"])?;
    cli(&["train", "--config", cfg, "--deterministic"])?;
    cli(&["evaluate", "--config", cfg, "--deterministic"])?;
    cli(&["infer", "--config", cfg, "--deterministic", png.to_str().unwrap()])?;
    let out = root.join("out");
    let missing: Vec<&str> = [art::PREPARE, art::TRAIN, art::EVALUATE, art::INFER]
        .concat()
        .into_iter()
        .filter(|name| !Path::new(&out.join(name)).exists())
        .collect();
    check(missing.is_empty(), || format!("missing artifacts: {}", missing.join(", ")))?;
    let count = [art::PREPARE, art::TRAIN, art::EVALUATE, art::INFER].concat().len();
    Ok(format!("{} samples, exit 0 for all 4 commands, {count} artifacts present", ds.len()))
}

fn main() {
    let criteria = [
        Criterion {
            name: "table1_consistency",
            budget: Duration::from_secs(1),
            run: table1_consistency,
        },
        Criterion {
            name: "metrics_oracle",
            budget: Duration::from_secs(60),
            run: metrics_oracle,
        },
        Criterion {
            name: "class_weight_identities",
            budget: Duration::from_secs(1),
            run: class_weight_identities,
        },
        Criterion {
            name: "loss_correctness",
            budget: Duration::from_secs(60),
            run: loss_correctness,
        },
        Criterion {
            name: "schedule_and_stopping",
            budget: Duration::from_secs(1),
            run: schedule_and_stopping,
        },
        Criterion {
            name: "split_stratification",
            budget: Duration::from_secs(60),
            run: split_stratification,
        },
        Criterion {
            name: "transform_contracts",
            budget: Duration::from_secs(60),
            run: transform_contracts,
        },
        Criterion {
            name: "tiny_overfit_and_weighting",
            budget: Duration::from_secs(120),
            run: tiny_overfit_and_weighting,
        },
        Criterion {
            name: "end_to_end_smoke",
            budget: Duration::from_secs(180),
            run: end_to_end_smoke,
        },
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let mut result = (c.run)();
        let elapsed = start.elapsed();
        if result.is_ok() && elapsed > c.budget {
            result = Err(format!("took {elapsed:.2?}, budget {:?}", c.budget));
        }
        match result {
            Ok(detail) => println!("PASS {:<28} {detail} ({elapsed:.2?})", c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL {:<28} {why} ({elapsed:.2?})", c.name);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
