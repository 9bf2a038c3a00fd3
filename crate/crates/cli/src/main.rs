//! `rgt`: command-line front end for the dual-branch pipeline.
//!
//! Subcommands cover the whole workflow: `gen-data` writes a synthetic
//! corpus, `train` fits and evaluates a model, `byoa` turns saliency maps
//! into boxes, `extract` computes handcrafted features of a region,
//! `eval-loc`/`eval-cls` render report tables from prediction files, and
//! `gradcheck` audits every gradient by finite differences.
//!
//! Every error is a single line on stderr; exit codes are 0 on success,
//! 2 for configuration problems, 3 for data problems, 4 for numeric
//! failures.

mod commands;
mod config;
mod formats;
mod pngio;
mod train_cmd;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use rgt_core::byoa::BoxMode;

use crate::config::Overrides;

#[derive(Parser)]
#[command(name = "rgt", version, about = "Radiomics-guided transformer pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// One prior-sized box per map, around the strongest center of mass.
    Train,
    /// A tight box around every surviving component.
    Test,
}

impl From<ModeArg> for BoxMode {
    fn from(m: ModeArg) -> BoxMode {
        match m {
            ModeArg::Train => BoxMode::Train,
            ModeArg::Test => BoxMode::Test,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute the 107 handcrafted features of one image region.
    Extract {
        /// 8- or 16-bit grayscale PNG.
        #[arg(long)]
        image: PathBuf,
        /// Region as x,y,width,height; whole image when omitted.
        #[arg(long = "box", value_name = "X,Y,W,H")]
        region: Option<String>,
        /// Gray-level bin width on the [0, 1] intensity scale.
        #[arg(long, default_value_t = 0.05)]
        bin_width: f64,
        /// Output file; .json or .csv by extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic corpus: images, manifests, boxes, box priors.
    GenData {
        /// Run configuration (.toml or .json); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on the synthetic corpus and evaluate the held-out test split.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Mixing weight of the classification term in the combined loss.
        #[arg(long)]
        lambda: Option<f64>,
        /// Saliency keep-fraction threshold T of the box generator.
        #[arg(long = "byoa-t")]
        byoa_t: Option<f64>,
        /// Seed for model initialization and the training schedule.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate boxes from a saliency-map PNG and class box priors.
    Byoa {
        /// Saliency map as a grayscale PNG.
        #[arg(long)]
        map: PathBuf,
        /// Priors file written by gen-data.
        #[arg(long)]
        priors: PathBuf,
        /// Class id selecting the box prior.
        #[arg(long)]
        class: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Train)]
        mode: ModeArg,
        /// Optional run configuration for the remaining generator knobs.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for boxes.json and overlay.png.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Localization accuracy table from predicted and true box files.
    EvalLoc {
        /// Predicted boxes (JSON array of {image_id, class_id, boxes}).
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth boxes in the same format.
        #[arg(long)]
        gt: PathBuf,
        /// Comma-separated IoU thresholds.
        #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7")]
        thresholds: String,
        /// Count a hit only when the overlap strictly exceeds the threshold.
        #[arg(long)]
        strict: bool,
        /// Comma-separated class names; ids are used when omitted.
        #[arg(long)]
        class_names: Option<String>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class AUC table, aggregated across seeds with --seeds-dir.
    EvalCls {
        /// Scores (JSON array of {image_id, scores}) for a single run.
        #[arg(long, conflicts_with = "seeds_dir")]
        pred: Option<PathBuf>,
        /// Labels (JSON array of {image_id, labels}).
        #[arg(long)]
        labels: PathBuf,
        /// Directory of per-seed score files to aggregate.
        #[arg(long)]
        seeds_dir: Option<PathBuf>,
        /// Row label in the report.
        #[arg(long, default_value = "RGT")]
        method: String,
        #[arg(long)]
        class_names: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference audit of every model gradient, by module.
    Gradcheck {
        /// Run configuration naming the model to audit; a small audit
        /// profile is used when omitted. The audit visits every scalar
        /// parameter twice, so large models take a long time.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> rgt_core::Result<()> {
    match cli.command {
        Command::Extract {
            image,
            region,
            bin_width,
            out,
        } => commands::extract(&image, region.as_deref(), bin_width, &out),
        Command::GenData { config, out } => commands::gen_data(config.as_deref(), out),
        Command::Train {
            config,
            lambda,
            byoa_t,
            seed,
            out,
        } => train_cmd::train(
            config.as_deref(),
            &Overrides {
                lambda,
                byoa_t,
                seed,
                output_dir: out,
            },
        ),
        Command::Byoa {
            map,
            priors,
            class,
            mode,
            config,
            out,
        } => commands::byoa_cmd(&map, &priors, class, mode.into(), config.as_deref(), &out),
        Command::EvalLoc {
            pred,
            gt,
            thresholds,
            strict,
            class_names,
            out,
        } => commands::eval_loc(
            &pred,
            &gt,
            &thresholds,
            strict,
            class_names.as_deref(),
            out.as_deref(),
        ),
        Command::EvalCls {
            pred,
            labels,
            seeds_dir,
            method,
            class_names,
            out,
        } => commands::eval_cls(
            pred.as_deref(),
            &labels,
            seeds_dir.as_deref(),
            &method,
            class_names.as_deref(),
            out.as_deref(),
        ),
        Command::Gradcheck { config } => commands::gradcheck(config.as_deref()),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
