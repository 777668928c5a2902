use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Mutex;

use insideout::dataset::{EmotionLabel, LabeledDataset, NUM_CLASSES};
use insideout::metrics::ClassificationReport;
use insideout::split::{DatasetSplit, SplitFile, SplitSpec};
use insideout::synthetic::{synthetic_dataset, SyntheticSpec};
use insideout::{ImageTensor, Result};
use insideout_cli::artifacts as art;
use insideout_cli::commands::{evaluate_report, write_report};
use insideout_cli::{InferenceEntry, Manifest};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_insideout"));
    c.env_remove(insideout_cli::config::DATA_ROOT_ENV);
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn insideout")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Run {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Run {
    fn out(&self, name: &str) -> PathBuf {
        self.root.join("run").join(name)
    }

    fn cfg(&self) -> &str {
        self.config.to_str().unwrap()
    }
}

fn setup(ds: &LabeledDataset, extra: &str) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    ds.write_csv(root.join("faces.csv")).unwrap();
    let config = root.join("run.toml");
    std::fs::write(
        &config,
        format!(
            "seed = 3\noutput_dir = \"run\"\n[data]\npath = \"faces.csv\"\n\
             [training]\nmax_epochs = 2\npatience = 2\nbatch_size = 16\n{extra}"
        ),
    )
    .unwrap();
    Run {
        _dir: dir,
        root,
        config,
    }
}

fn small_set() -> LabeledDataset {
    synthetic_dataset(&SyntheticSpec::balanced(10, 21)).unwrap()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status, stderr(o));
}

fn manifest_without_times(path: &Path) -> serde_json::Value {
    fn strip(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(m) => {
                m.remove("wall_time");
                m.values_mut().for_each(strip);
            }
            serde_json::Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    strip(&mut v);
    v
}

#[test]
fn prepare_train_evaluate_infer() {
    let r = setup(&small_set(), "");
    assert_ok(&run(&["prepare", "--config", r.cfg(), "--emit-samples", "3"]));
    for name in art::PREPARE {
        assert!(r.out(name).is_file(), "{name} missing");
    }
    assert_eq!(std::fs::read_dir(r.out(art::SAMPLES_DIR)).unwrap().count(), 3);

    assert_ok(&run(&["train", "--config", r.cfg(), "--deterministic"]));
    for name in art::TRAIN {
        assert!(r.out(name).exists(), "{name} missing");
    }
    let curves = std::fs::read_to_string(r.out(art::CURVES_CSV)).unwrap();
    assert_eq!(curves.lines().count(), 1 + 2);
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(r.out(art::MANIFEST)).unwrap()).unwrap();
    assert_eq!(manifest.epochs.len(), 2);
    assert_eq!(manifest.threads, 1);

    let eval = run(&["evaluate", "--config", r.cfg()]);
    assert_ok(&eval);
    for name in art::EVALUATE {
        assert!(r.out(name).is_file(), "{name} missing");
    }
    let table = std::fs::read_to_string(r.out(art::REPORT_TXT)).unwrap();
    assert!(table.contains("Precision") && table.contains("Macro avg"));
    assert_eq!(String::from_utf8_lossy(&eval.stdout), table);
    let report: ClassificationReport =
        serde_json::from_str(&std::fs::read_to_string(r.out(art::REPORT_JSON)).unwrap()).unwrap();
    assert_eq!(report.render_table(), table);

    let png = r.root.join("face.png");
    image::GrayImage::from_pixel(48, 48, image::Luma([90])).save(&png).unwrap();
    let missing = r.root.join("absent.png");
    let infer = run(&[
        "infer",
        "--config",
        r.cfg(),
        png.to_str().unwrap(),
        missing.to_str().unwrap(),
        png.to_str().unwrap(),
    ]);
    assert_ok(&infer);
    assert!(stderr(&infer).contains("absent.png"));
    let entries: Vec<InferenceEntry> =
        serde_json::from_str(&std::fs::read_to_string(r.out(art::INFERENCE_JSON)).unwrap()).unwrap();
    assert_eq!(entries.len(), 3);
    assert!(entries[0].result().is_some() && entries[2].result().is_some());
    assert!(matches!(entries[1], InferenceEntry::Failed { .. }));
    assert!(r.out(art::INFERENCE_PNG).is_file());

    assert_ok(&run(&[
        "infer", "--config", r.cfg(), "--samples", "5", "--overwrite",
    ]));
    let entries: Vec<InferenceEntry> =
        serde_json::from_str(&std::fs::read_to_string(r.out(art::INFERENCE_JSON)).unwrap()).unwrap();
    assert_eq!(entries.len(), 5);
    assert!(entries.iter().all(|e| e.result().unwrap().truth.is_some()));

    std::fs::remove_file(r.out(art::CURVES_ACC_PNG)).unwrap();
    assert_ok(&run(&["report", "--config", r.cfg()]));
    assert!(r.out(art::CURVES_ACC_PNG).is_file());
}

#[test]
fn rerun_needs_overwrite_and_is_reproducible() {
    let r = setup(&small_set(), "");
    assert_ok(&run(&["prepare", "--config", r.cfg()]));
    let split_before = std::fs::read(r.out(art::SPLIT)).unwrap();
    let again = run(&["prepare", "--config", r.cfg()]);
    assert!(!again.status.success());
    assert!(stderr(&again).contains("--overwrite"));
    assert_ok(&run(&["prepare", "--config", r.cfg(), "--overwrite"]));
    assert_eq!(split_before, std::fs::read(r.out(art::SPLIT)).unwrap());

    assert_ok(&run(&["train", "--config", r.cfg(), "--deterministic"]));
    let first = manifest_without_times(&r.out(art::MANIFEST));
    let before: Vec<_> = std::fs::read_dir(r.root.join("run"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_ok(&run(&["train", "--config", r.cfg(), "--deterministic", "--overwrite"]));
    assert_eq!(first, manifest_without_times(&r.out(art::MANIFEST)));
    let mut after: Vec<_> = std::fs::read_dir(r.root.join("run"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    let mut before = before;
    before.sort();
    after.sort();
    assert_eq!(before, after);
}

#[test]
fn early_stop_is_recorded() {
    let r = setup(
        &small_set(),
        "min_delta = 100.0\n",
    );
    let text = std::fs::read_to_string(&r.config)
        .unwrap()
        .replace("max_epochs = 2\npatience = 2", "max_epochs = 6\npatience = 1");
    std::fs::write(&r.config, text).unwrap();
    assert_ok(&run(&["prepare", "--config", r.cfg()]));
    assert_ok(&run(&["train", "--config", r.cfg()]));
    let m: Manifest =
        serde_json::from_str(&std::fs::read_to_string(r.out(art::MANIFEST)).unwrap()).unwrap();
    assert!(m.stopped_early);
    assert_eq!(m.best_epoch, Some(0));
    assert_eq!(m.epochs.len(), 2);
}

#[test]
fn missing_dataset_fails() {
    let r = setup(&small_set(), "");
    std::fs::remove_file(r.root.join("faces.csv")).unwrap();
    let o = run(&["prepare", "--config", r.cfg()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("faces.csv"));
    assert!(!r.out(art::SPLIT).exists());
}

#[test]
fn train_requires_prepare() {
    let r = setup(&small_set(), "");
    let o = run(&["train", "--config", r.cfg()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("prepare"));
}

#[test]
fn data_root_env_relocates_dataset() {
    let r = setup(&small_set(), "");
    let elsewhere = tempfile::tempdir().unwrap();
    std::fs::rename(r.root.join("faces.csv"), elsewhere.path().join("faces.csv")).unwrap();
    let o = bin()
        .args(["prepare", "--config", r.cfg()])
        .env(insideout_cli::config::DATA_ROOT_ENV, elsewhere.path())
        .output()
        .unwrap();
    assert_ok(&o);
}

#[test]
fn seven_sample_histogram() {
    let mut csv = String::from("emotion,pixels,Usage\n");
    let usages = ["Training", "Training", "Training", "Training", "Training", "PublicTest", "PrivateTest"];
    for (c, usage) in usages.iter().enumerate() {
        let pixels: Vec<String> = (0..2304).map(|i| ((i * (c + 1)) % 256).to_string()).collect();
        csv.push_str(&format!("{c},{},{usage}\n", pixels.join(" ")));
    }
    let r = setup(&small_set(), "[split]\nmode = \"usage_column\"\n");
    std::fs::write(r.root.join("faces.csv"), csv).unwrap();
    assert_ok(&run(&["prepare", "--config", r.cfg()]));
    let hist = std::fs::read_to_string(r.out(art::HISTOGRAM_CSV)).unwrap();
    let totals: Vec<&str> = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(totals, vec!["1"; 7]);
}

#[test]
fn empty_partition_writes_nothing() {
    let ds = small_set();
    let r = setup(&ds, "");
    assert_ok(&run(&["prepare", "--config", r.cfg()]));
    assert_ok(&run(&["train", "--config", r.cfg()]));
    let n = ds.len();
    let split = DatasetSplit {
        train: (0..n - 10).collect(),
        val: (n - 10..n).collect(),
        test: vec![],
    };
    let digest = insideout::dataset::sha256_hex(&std::fs::read(r.root.join("faces.csv")).unwrap());
    SplitFile::new(SplitSpec::default(), &digest, split)
        .save(r.out(art::SPLIT))
        .unwrap();
    let o = run(&["evaluate", "--config", r.cfg()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("empty"));
    for name in art::EVALUATE {
        assert!(!r.out(name).exists(), "{name} written");
    }
}

#[test]
fn label_map_mismatch_is_rejected() {
    let r = setup(&small_set(), "");
    assert_ok(&run(&["prepare", "--config", r.cfg()]));
    assert_ok(&run(&["train", "--config", r.cfg()]));
    let meta = r.out(art::CHECKPOINT).join("model.json");
    let text = std::fs::read_to_string(&meta).unwrap().replacen("Anger", "Angry", 1);
    std::fs::write(&meta, text).unwrap();
    let o = run(&["evaluate", "--config", r.cfg()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("label map"), "{}", stderr(&o));
}

/// Returns the true label of each sample in evaluation order.
struct Oracle<'a>(&'a LabeledDataset, &'a [usize], Mutex<usize>);

impl insideout::Classifier for Oracle<'_> {
    fn logits(&self, batch: &[ImageTensor]) -> Result<Vec<[f64; NUM_CLASSES]>> {
        let mut next = self.2.lock().unwrap();
        let out = self.1[*next..*next + batch.len()]
            .iter()
            .map(|&i| {
                let mut z = [0.0; NUM_CLASSES];
                z[self.0.samples()[i].label.index()] = 30.0;
                z
            })
            .collect();
        *next += batch.len();
        Ok(out)
    }
}

#[test]
fn perfect_stub_report() {
    let ds = small_set();
    let idx: Vec<usize> = (0..ds.len()).collect();
    let report = evaluate_report(&Oracle(&ds, &idx, Mutex::new(0)), &ds, &idx, "test").unwrap();
    for l in EmotionLabel::ALL {
        let m = report.class(l);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }
    assert_eq!(report.accuracy, 1.0);
    assert_eq!(report.macro_avg.f1, 1.0);
    let dir = tempfile::tempdir().unwrap();
    let written = write_report(dir.path(), &report).unwrap();
    assert_eq!(written.len(), art::EVALUATE.len());
    assert!(evaluate_report(&Oracle(&ds, &idx, Mutex::new(0)), &ds, &[], "test").is_err());
}
