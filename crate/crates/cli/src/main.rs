//! `saladbench`: transform datasets into word salad, measure how a
//! classifier reacts, and train detectors that reject such inputs.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error,
//! 3 provider or contract error.

mod commands;
mod config;
mod context;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use saladbench::corpus::{DataFormat, TaskKind};
use saladbench::mitigate::Strategy;
use saladbench::providers::ProviderKind;
use saladbench::toyclf::LossKind;
use saladbench::xform::TransformKind;
use saladbench::{Error, ErrorClass};

use crate::config::RunConfig;
use crate::context::Context;

#[derive(Parser, Debug)]
#[command(name = "saladbench", version, about = "Word-salad robustness diagnostics for text classifiers")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random choice in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "saladbench-out")]
    out: PathBuf,

    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// A bundled corpus: `sentiment` or `pair`.
    #[arg(long)]
    bundled: Option<String>,
    /// Training split (TSV or JSONL).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Evaluation split (TSV or JSONL).
    #[arg(long)]
    eval: Option<PathBuf>,
    /// tsv or jsonl; guessed from the file extension when absent.
    #[arg(long)]
    format: Option<DataFormat>,
    /// single or pair.
    #[arg(long)]
    task: Option<String>,
    /// Comma-separated label names, in index order.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    /// Label that copy transforms are scored against.
    #[arg(long)]
    default_label: Option<String>,
}

#[derive(Args, Debug, Default)]
struct ProviderArgs {
    /// embedded, replay or http.
    #[arg(long)]
    provider: Option<String>,
    /// Model file (embedded), predictions directory (replay) or base URL (http).
    #[arg(long)]
    model: Option<String>,
    /// Saliency records for the evaluation set (replay).
    #[arg(long)]
    saliency: Option<PathBuf>,
    /// The HTTP endpoint answers saliency requests.
    #[arg(long)]
    http_saliency: bool,
}

#[derive(Args, Debug, Default)]
struct TransformArgs {
    /// Comma-separated kinds, or `all`.
    #[arg(long)]
    transforms: Option<String>,
    /// Seeds for Shuffle variants.
    #[arg(long, value_delimiter = ',')]
    shuffle_seeds: Vec<u64>,
    /// Share of tokens treated as important by saliency-guided edits.
    #[arg(long)]
    r: Option<f64>,
    /// Directory of trained PBSMT generators.
    #[arg(long)]
    generators: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    /// cross-entropy, label-smoothing, focal or entropic.
    #[arg(long)]
    loss: Option<String>,
    /// Training epochs for the toy classifier.
    #[arg(long)]
    epochs: Option<usize>,
    /// Step size of minibatch gradient descent.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Examples per training minibatch.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Embedding width of the toy classifier.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write transformed copies of the evaluation set.
    Transform {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        provider: ProviderArgs,
        #[command(flatten)]
        xform: TransformArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Predict on original and transformed sets and write agreement reports.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        provider: ProviderArgs,
        #[command(flatten)]
        xform: TransformArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Read transformed sets from this directory instead of producing them.
        #[arg(long)]
        transformed: Option<PathBuf>,
    },
    /// Train the embedded toy classifier.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Fit a softmax temperature on the evaluation set.
    Calibrate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        provider: ProviderArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train and score a detector for invalid inputs.
    Mitigate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        provider: ProviderArgs,
        #[command(flatten)]
        xform: TransformArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// threshold, entropic-threshold or invalid-class.
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Weight of the entropy term.
        #[arg(long)]
        entropy_weight: Option<f64>,
        /// Fixed confidence threshold instead of a search.
        #[arg(long)]
        theta: Option<f64>,
        /// Share of training examples given invalid copies.
        #[arg(long)]
        augment_fraction: Option<f64>,
        /// Training epochs for the mitigation stage.
        #[arg(long)]
        mitigation_epochs: Option<usize>,
        /// Also compute the transfer matrix.
        #[arg(long)]
        matrix: bool,
    },
    /// Train or apply per-label phrase-based generators.
    Pbsmt {
        #[command(subcommand)]
        action: PbsmtAction,
    },
    /// Re-render a saved metrics report.
    Report {
        /// A report.json written by `evaluate`.
        input: PathBuf,
        /// md, csv or json.
        #[arg(long, default_value = "md")]
        format: String,
    },
}

#[derive(Subcommand, Debug)]
enum PbsmtAction {
    /// Train generators on the training set.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Train only this label (name or index).
        #[arg(long)]
        label: Option<String>,
    },
    /// Write the PBSMT-transformed evaluation set.
    Generate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        generators: Option<PathBuf>,
    },
}

fn usage(msg: String) -> Error {
    Error::Config(msg)
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), Error> {
        let d = &mut cfg.data;
        if self.bundled.is_some() {
            d.bundled = self.bundled.clone();
        }
        if self.train.is_some() {
            d.train = self.train.clone();
        }
        if self.eval.is_some() {
            d.eval = self.eval.clone();
        }
        if self.format.is_some() {
            d.format = self.format;
        }
        if let Some(t) = &self.task {
            d.task = Some(match t.as_str() {
                "single" => TaskKind::Single,
                "pair" => TaskKind::Pair,
                other => return Err(usage(format!("unknown task `{other}`"))),
            });
        }
        if !self.labels.is_empty() {
            d.labels = self.labels.clone();
        }
        if self.default_label.is_some() {
            d.default_label = self.default_label.clone();
        }
        Ok(())
    }
}

impl ProviderArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), Error> {
        let p = &mut cfg.provider;
        if let Some(kind) = &self.provider {
            p.kind = match kind.as_str() {
                "embedded" => ProviderKind::Embedded,
                "replay" => ProviderKind::Replay,
                "http" => ProviderKind::Http,
                other => return Err(usage(format!("unknown provider `{other}`"))),
            };
        }
        if self.model.is_some() {
            p.location = self.model.clone();
        }
        if self.saliency.is_some() {
            p.saliency = self.saliency.clone();
        }
        p.http_saliency |= self.http_saliency;
        Ok(())
    }
}

impl TransformArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), Error> {
        if let Some(t) = &self.transforms {
            cfg.transforms = TransformKind::parse_list(t)?;
        }
        if !self.shuffle_seeds.is_empty() {
            cfg.shuffle_seeds = self.shuffle_seeds.clone();
        }
        if let Some(r) = self.r {
            cfg.r = r;
        }
        if self.generators.is_some() {
            cfg.generators = self.generators.clone();
        }
        Ok(())
    }
}

impl TrainArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), Error> {
        if let Some(l) = &self.loss {
            cfg.loss.kind = match l.replace('_', "-").as_str() {
                "cross-entropy" | "ce" => LossKind::CrossEntropy,
                "label-smoothing" => LossKind::LabelSmoothing,
                "focal" => LossKind::Focal,
                "entropic" => LossKind::Entropic,
                other => return Err(usage(format!("unknown loss `{other}`"))),
            };
        }
        let t = &mut cfg.train;
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.learning_rate = self.learning_rate.unwrap_or(t.learning_rate);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.dim = self.dim.unwrap_or(t.dim);
        Ok(())
    }
}

fn base_config(cli: &Cli, command: &str) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.command = command.to_string();
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.train.seed = cfg.seed;
    cfg.mitigation.seed = cfg.seed;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String, Error> {
    let out = cli.out.clone();
    match &cli.command {
        Command::Transform {
            data,
            provider,
            xform,
            train,
        } => {
            let mut cfg = base_config(&cli, "transform")?;
            data.apply(&mut cfg)?;
            provider.apply(&mut cfg)?;
            xform.apply(&mut cfg)?;
            train.apply(&mut cfg)?;
            commands::transform(&Context::new(cfg, out)?)
        }
        Command::Evaluate {
            data,
            provider,
            xform,
            train,
            transformed,
        } => {
            let mut cfg = base_config(&cli, "evaluate")?;
            data.apply(&mut cfg)?;
            provider.apply(&mut cfg)?;
            xform.apply(&mut cfg)?;
            train.apply(&mut cfg)?;
            commands::evaluate(&Context::new(cfg, out)?, transformed.as_deref())
        }
        Command::Train { data, train } => {
            let mut cfg = base_config(&cli, "train")?;
            data.apply(&mut cfg)?;
            train.apply(&mut cfg)?;
            commands::train(&Context::new(cfg, out)?)
        }
        Command::Calibrate {
            data,
            provider,
            train,
        } => {
            let mut cfg = base_config(&cli, "calibrate")?;
            data.apply(&mut cfg)?;
            provider.apply(&mut cfg)?;
            train.apply(&mut cfg)?;
            commands::calibrate(&Context::new(cfg, out)?)
        }
        Command::Mitigate {
            data,
            provider,
            xform,
            train,
            strategy,
            entropy_weight,
            theta,
            augment_fraction,
            mitigation_epochs,
            matrix,
        } => {
            let mut cfg = base_config(&cli, "mitigate")?;
            data.apply(&mut cfg)?;
            provider.apply(&mut cfg)?;
            xform.apply(&mut cfg)?;
            train.apply(&mut cfg)?;
            if xform.transforms.is_some() {
                cfg.mitigation.transforms = cfg.transforms.clone();
            }
            let m = &mut cfg.mitigation;
            m.strategy = strategy.unwrap_or(m.strategy);
            m.entropy_weight = entropy_weight.unwrap_or(m.entropy_weight);
            m.theta = theta.or(m.theta);
            m.augment_fraction = augment_fraction.unwrap_or(m.augment_fraction);
            m.epochs = mitigation_epochs.unwrap_or(m.epochs);
            cfg.transfer_matrix |= *matrix;
            commands::mitigate(&Context::new(cfg, out)?)
        }
        Command::Pbsmt { action } => match action {
            PbsmtAction::Train { data, label } => {
                let mut cfg = base_config(&cli, "pbsmt-train")?;
                data.apply(&mut cfg)?;
                commands::pbsmt_train(&Context::new(cfg, out)?, label.as_deref())
            }
            PbsmtAction::Generate { data, generators } => {
                let mut cfg = base_config(&cli, "pbsmt-generate")?;
                data.apply(&mut cfg)?;
                if generators.is_some() {
                    cfg.generators = generators.clone();
                }
                commands::pbsmt_generate(&Context::new(cfg, out)?)
            }
        },
        Command::Report { input, format } => commands::report(input, format),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Provider => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
