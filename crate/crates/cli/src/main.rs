use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use insideout_cli::{
    cmd_evaluate, cmd_infer, cmd_prepare, cmd_report, cmd_train, CommonOptions, InferSource,
    Overrides, RunConfig,
};

#[derive(Parser)]
#[command(name = "insideout", version, about = "Facial emotion recognition on FER2013")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides the dataset path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run on a single worker thread.
    #[arg(long)]
    deterministic: bool,
    /// Replace artifacts left by an earlier run.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the dataset, split it, and plot class and augmentation samples.
    Prepare {
        #[command(flatten)]
        common: Common,
        /// Also write this many augmented training images under samples/.
        #[arg(long, default_value_t = 0)]
        emit_samples: usize,
    },
    /// Fine-tune the classifier; writes checkpoints, manifest and curves.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint_last/ directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on one partition.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Defaults to <output_dir>/checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        partition: String,
    },
    /// Predict labels for image files or for samples of a partition.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Use the first N samples of --partition instead of image files.
        #[arg(long, conflicts_with = "images")]
        samples: Option<usize>,
        #[arg(long, default_value = "test")]
        partition: String,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
        images: Vec<PathBuf>,
    },
    /// Re-render figures and the text report from saved data artifacts.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn load(&self) -> anyhow::Result<(RunConfig, CommonOptions)> {
        let cfg = RunConfig::load(
            &self.config,
            &Overrides {
                seed: self.seed,
                output_dir: self.output_dir.clone(),
                data_path: self.data.clone(),
            },
        )?;
        let opts = CommonOptions {
            overwrite: self.overwrite,
            deterministic: self.deterministic,
        };
        Ok((cfg, opts))
    }
}

fn run(cli: Cli) -> anyhow::Result<Vec<PathBuf>> {
    let common = match &cli.command {
        Command::Prepare { common, .. }
        | Command::Train { common, .. }
        | Command::Evaluate { common, .. }
        | Command::Infer { common, .. }
        | Command::Report { common } => common,
    };
    let (cfg, opts) = common.load()?;
    let threads = if opts.deterministic { 1 } else { 0 };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    pool.install(|| match &cli.command {
        Command::Prepare { emit_samples, .. } => cmd_prepare(&cfg, &opts, *emit_samples),
        Command::Train { resume, .. } => cmd_train(&cfg, &opts, resume.as_deref()),
        Command::Evaluate {
            checkpoint,
            partition,
            ..
        } => cmd_evaluate(&cfg, &opts, checkpoint.as_deref(), partition),
        Command::Infer {
            checkpoint,
            samples,
            partition,
            top_k,
            images,
            ..
        } => {
            let source = match samples {
                Some(count) => InferSource::Partition {
                    name: partition,
                    count: *count,
                },
                None => InferSource::Files(images),
            };
            cmd_infer(&cfg, &opts, checkpoint.as_deref(), source, *top_k)
        }
        Command::Report { .. } => cmd_report(&cfg),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(written) => {
            for p in written {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
