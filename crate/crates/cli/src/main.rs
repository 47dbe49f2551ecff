mod commands;
mod config;
mod error;
mod manifest;

use clap::{Args, Parser, Subcommand, ValueEnum};
use commands::{SynthMode, TrainFlags, TrainJob};
use config::Config;
use error::Result;
use std::path::PathBuf;
use std::process::ExitCode;
use tiptail::slitcnn::Variant;
use tiptail::synth::DatasetConfig;

#[derive(Parser)]
#[command(name = "tiptail", version, about = "Tip-tail air-signature pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Exact generator trajectories in tip-tail CSV form.
    Tiptail,
    /// Rendered and detected ball observations in raw CSV form.
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    TipOnly,
    Tiptail,
    TwoStream,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::TipOnly => Variant::TipOnly,
            VariantArg::Tiptail => Variant::TipTailSingle,
            VariantArg::TwoStream => Variant::TwoStream,
        }
    }
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    signers: Option<u32>,
    /// Genuine samples per signer.
    #[arg(long)]
    samples: Option<usize>,
    /// Skilled forgeries per signer.
    #[arg(long)]
    forgeries: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic signer population and its manifest.
    SynthGenerate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dataset: DatasetArgs,
        #[arg(long, value_enum, default_value = "tiptail")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the stereo frames of one generated sample.
    RenderStereo {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dataset: DatasetArgs,
        #[arg(long)]
        signer: usize,
        #[arg(long)]
        sample: usize,
        /// Render the forgery of `--signer` instead of a genuine draw.
        #[arg(long)]
        forgery: bool,
        #[arg(long)]
        noise: Option<u8>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect both balls in a frame directory and write a raw CSV.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Triangulate raw CSVs into tip-tail CSVs.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the 2D trace raster (PGM).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Resample tip-tail CSVs to a fixed length.
    Interpolate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        tip_only: bool,
    },
    /// Expand interpolated CSVs by the rotation and scaling grid.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only expand the training samples of this split.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Partition a manifest into train/validation/test.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier.
    Train {
        #[command(flatten)]
        common: Common,
        /// Interpolated dataset directory with a manifest.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Augmented training directory, used instead of the plain samples.
        #[arg(long)]
        augmented: Option<PathBuf>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy, ROC and EER of a trained model on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-plot the ROC curves of a saved report.
    Roc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every layer and the tiny model.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
}

fn dataset_config(cfg: &Config, d: &DatasetArgs, seed: u64) -> Result<DatasetConfig> {
    let def = DatasetConfig::default();
    Ok(DatasetConfig {
        signers: cfg.pick(d.signers, "signers", def.signers)?,
        genuine_per_signer: cfg.pick(d.samples, "samples", def.genuine_per_signer)?,
        forgeries_per_signer: cfg.pick(d.forgeries, "forgeries", def.forgeries_per_signer)?,
        seed,
        params: commands::synth_params(cfg)?,
    })
}

fn load(common: &Common) -> Result<(Config, u64)> {
    let cfg = Config::load(common.config.as_deref())?;
    let seed = cfg.pick(common.seed, "seed", 0)?;
    Ok((cfg, seed))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthGenerate {
            common,
            dataset,
            mode,
            out,
        } => {
            let (cfg, seed) = load(&common)?;
            let ds = dataset_config(&cfg, &dataset, seed)?;
            let mode = match mode {
                Mode::Tiptail => SynthMode::TipTail,
                Mode::Raw => SynthMode::Raw,
            };
            let n = commands::synth_generate(&cfg, &ds, mode, &out)?;
            println!("wrote {n} samples to {}", out.display());
        }
        Command::RenderStereo {
            common,
            dataset,
            signer,
            sample,
            forgery,
            noise,
            out,
        } => {
            let (cfg, seed) = load(&common)?;
            let ds = dataset_config(&cfg, &dataset, seed)?;
            let n = commands::render_stereo(&cfg, &ds, signer, sample, forgery, noise, &out)?;
            println!("wrote {n} frame pairs to {}", out.display());
        }
        Command::Detect { common, frames, out } => {
            let (cfg, _) = load(&common)?;
            let n = commands::detect(&cfg, &frames, &out)?;
            println!("detected {n} frames into {}", out.display());
        }
        Command::Reconstruct {
            common,
            input,
            out,
            trace,
        } => {
            let (cfg, _) = load(&common)?;
            let n = commands::reconstruct(&cfg, &input, &out, trace.as_deref())?;
            println!("reconstructed {n} sequences");
        }
        Command::Interpolate {
            common,
            input,
            out,
            t,
            tip_only,
        } => {
            let (cfg, _) = load(&common)?;
            let t = commands::default_t(&cfg, t)?;
            let n = commands::interpolate(&input, &out, t, tip_only)?;
            println!("interpolated {n} trajectories to t = {t}");
        }
        Command::Augment {
            common,
            input,
            out,
            split,
        } => {
            let (cfg, _) = load(&common)?;
            let n = commands::augment(&cfg, &input, &out, split.as_deref())?;
            println!("wrote {n} augmented trajectories");
        }
        Command::Split {
            common,
            manifest,
            out,
        } => {
            let (_, seed) = load(&common)?;
            let s = commands::split(&manifest, &out, seed)?;
            println!("split {} signers into {}", s.signers.len(), out.display());
        }
        Command::Train {
            common,
            data,
            split,
            augmented,
            variant,
            t,
            learning_rate,
            batch_size,
            epochs,
            patience,
            out,
        } => {
            let (cfg, seed) = load(&common)?;
            let variant = match variant {
                Some(v) => v.into(),
                None => cfg
                    .get::<String>("variant")?
                    .map_or(Ok(Variant::TwoStream), |s| {
                        s.parse()
                            .map_err(|e: tiptail::nn::NnError| error::CliError::Config(e.to_string()))
                    })?,
            };
            let flags = TrainFlags {
                learning_rate,
                batch_size,
                max_epochs: epochs,
                patience,
            };
            let tc = commands::train_config(&cfg, &flags, seed)?;
            let job = TrainJob {
                data: &data,
                split: &split,
                augmented: augmented.as_deref(),
                variant,
                t: commands::default_t(&cfg, t)?,
                out: &out,
            };
            let m = commands::train(&job, &tc)?;
            println!(
                "best epoch {} of {}; model written to {}",
                m.best_epoch.unwrap_or(0),
                m.history.len(),
                out.join("model.ckpt").display()
            );
        }
        Command::Evaluate {
            common,
            model,
            data,
            split,
            out,
        } => {
            load(&common)?;
            let r = commands::evaluate(&model, &data, &split, &out)?;
            println!("recognition_accuracy={}", r.recognition_accuracy);
            println!("eer_random={}", r.roc_random.eer);
            if let Some(s) = &r.roc_skilled {
                println!("eer_skilled={}", s.eer);
            }
        }
        Command::Roc { common, report, out } => {
            load(&common)?;
            commands::roc(&report, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Gradcheck { common } => {
            let (_, seed) = load(&common)?;
            commands::run_gradcheck(seed)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
