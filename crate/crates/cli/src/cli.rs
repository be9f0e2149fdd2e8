//! Command-line surface: subcommands, flag-to-config resolution, dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use prae_core::arch::EncoderKind;
use prae_core::data::{FileFormat, Split};
use prae_core::metrics::EmdMode;

use crate::config::{DatasetSource, ExperimentConfig};
use crate::evalcmd::{run_eval, EvalArgsResolved, Scales};
use crate::runrecord::RunRecord;
use crate::{audit, compare, generate, sweep, train, CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "prae",
    version,
    about = "Point-cloud autoencoders with single- or multi-head decoders: train, evaluate, compare, audit, sweep"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic point-cloud dataset (packed binary + manifest)
    Generate(GenerateArgs),
    /// Train one model configuration
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset
    Eval(EvalArgs),
    /// Compare single-head and multi-head run records
    Compare(CompareArgs),
    /// Run a depth x head-count grid and emit CSV, plots, and a comparison
    Sweep(SweepArgs),
    /// Audit decoder parameter counts against the reference budgets
    AuditParams(AuditArgs),
    /// Convert point-cloud files between xyz, ply, and packed formats
    Convert(ConvertArgs),
}

/// Flags that override the config file (CLI > file > default).
#[derive(Args, Clone, Default)]
pub struct ConfigArgs {
    /// JSON config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Encoder backbone: light-ae or deep-ae
    #[arg(long)]
    pub encoder: Option<String>,
    /// Decoder depth (1-5)
    #[arg(long)]
    pub depth: Option<usize>,
    /// Decoder head count
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for weights, splits, and batch order
    #[arg(long)]
    pub seed: Option<u64>,
    /// Points per cloud (K)
    #[arg(long)]
    pub points: Option<usize>,
    /// Synthetic dataset: instances per category
    #[arg(long)]
    pub synthetic_instances: Option<usize>,
    /// Synthetic dataset: generation seed
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Dataset files (switches the source to files)
    #[arg(long, num_args = 1..)]
    pub data: Option<Vec<PathBuf>>,
    /// File format for --data: xyz, ply, or packed
    #[arg(long)]
    pub data_format: Option<String>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
    #[arg(long)]
    pub test_frac: Option<f64>,
    /// Assignment-metric mode during evaluation: exact, approx, or skip
    #[arg(long)]
    pub emd_mode: Option<String>,
    /// Metric for best-epoch selection: cd, emd, hd, or f1
    #[arg(long)]
    pub select_metric: Option<String>,
    /// Split for best-epoch selection: test or val
    #[arg(long)]
    pub select_split: Option<String>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_encoder(s: &str) -> CliResult<EncoderKind> {
    match s.to_ascii_lowercase().as_str() {
        "light" | "light-ae" => Ok(EncoderKind::LightAe),
        "deep" | "deep-ae" => Ok(EncoderKind::DeepAe),
        other => Err(CliError::Config(format!(
            "unknown encoder {other:?}; expected light-ae or deep-ae"
        ))),
    }
}

pub fn parse_emd_mode(s: &str) -> CliResult<EmdMode> {
    match s.to_ascii_lowercase().as_str() {
        "exact" => Ok(EmdMode::Exact),
        "approx" => Ok(EmdMode::Approx),
        "skip" => Ok(EmdMode::Skip),
        other => Err(CliError::Config(format!(
            "unknown emd mode {other:?}; expected exact, approx, or skip"
        ))),
    }
}

pub fn parse_split(s: &str) -> CliResult<Split> {
    match s.to_ascii_lowercase().as_str() {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(CliError::Config(format!("unknown split {other:?}"))),
    }
}

fn parse_format(s: &str) -> CliResult<FileFormat> {
    s.parse().map_err(CliError::from)
}

impl ConfigArgs {
    pub fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.encoder {
            cfg.encoder = parse_encoder(v)?;
        }
        if let Some(v) = self.depth {
            cfg.depth = v;
        }
        if let Some(v) = self.heads {
            cfg.heads = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.points {
            cfg.points = v;
        }
        if let Some(paths) = &self.data {
            let format = match &self.data_format {
                Some(f) => parse_format(f)?,
                None => FileFormat::PackedBinary,
            };
            cfg.dataset = DatasetSource::Files {
                paths: paths.clone(),
                format,
            };
        } else if self.synthetic_instances.is_some() || self.data_seed.is_some() {
            let (mut instances, mut dseed) = match &cfg.dataset {
                DatasetSource::Synthetic {
                    instances_per_category,
                    seed,
                } => (*instances_per_category, *seed),
                _ => (50, 7),
            };
            if let Some(v) = self.synthetic_instances {
                instances = v;
            }
            if let Some(v) = self.data_seed {
                dseed = v;
            }
            cfg.dataset = DatasetSource::Synthetic {
                instances_per_category: instances,
                seed: dseed,
            };
        }
        if let Some(v) = self.train_frac {
            cfg.train_frac = v;
        }
        if let Some(v) = self.val_frac {
            cfg.val_frac = v;
        }
        if let Some(v) = self.test_frac {
            cfg.test_frac = v;
        }
        if let Some(v) = &self.emd_mode {
            cfg.emd_mode = parse_emd_mode(v)?;
        }
        if let Some(v) = &self.select_metric {
            cfg.select_metric = v.parse()?;
        }
        if let Some(v) = &self.select_split {
            cfg.select_split = parse_split(v)?;
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Comma-separated shape categories (sphere, box, plate, cylinder,
    /// rod, cone, torus, composite)
    #[arg(long, value_delimiter = ',')]
    pub shapes: Vec<String>,
    /// Instances per category
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Points per cloud
    #[arg(long, default_value_t = 2048)]
    pub points: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output file (packed binary)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Continue training from a checkpoint written by a shorter run
    #[arg(long)]
    pub resume_from: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset files (defaults to the stock synthetic corpus)
    #[arg(long, num_args = 1..)]
    pub data: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub data_format: Option<String>,
    #[arg(long)]
    pub synthetic_instances: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Evaluate only this split (train/val/test); whole dataset when absent
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0.0)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test_frac: f64,
    /// Seed for the split shuffle (match the training seed)
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// exact, approx, or skip; default picks exact for n <= 512
    #[arg(long)]
    pub emd: Option<String>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Display scale for the Chamfer column
    #[arg(long, default_value_t = 1.0)]
    pub cd_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub emd_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hd_scale: f64,
    /// Use the reference presentation scales (1e3 CD, 1e2 HD)
    #[arg(long, default_value_t = false)]
    pub reference_scales: bool,
    /// Directory for metrics.csv / metrics.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Single-head run records (JSON)
    #[arg(long, num_args = 1..)]
    pub single: Vec<PathBuf>,
    /// Multi-head run records (JSON)
    #[arg(long, num_args = 1..)]
    pub multi: Vec<PathBuf>,
    /// Directory for comparison.csv / comparison.txt
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = true)]
    pub reference_scales: bool,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Depths to sweep, e.g. 1,2,3,4,5
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 3, 4, 5])]
    pub depths: Vec<usize>,
    /// Head counts to sweep, e.g. 1,2
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2])]
    pub head_counts: Vec<usize>,
    /// Run up to this many cells concurrently
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Skip cells whose run record already matches
    #[arg(long, default_value_t = false)]
    pub resume: bool,
}

#[derive(Args)]
pub struct AuditArgs {
    /// Also write the table as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct ConvertArgs {
    /// Input files
    #[arg(num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Input format: xyz, ply, or packed
    #[arg(long)]
    pub from: String,
    /// Output format: xyz, ply, or packed
    #[arg(long)]
    pub to: String,
    /// Output file (packed) or file/directory (ascii)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(args) => generate::run_generate(&args.shapes, args.count, args.points, args.seed, &args.out),
        Command::Train(args) => {
            let cfg = args.config.resolve()?;
            let outcome = train::run_training(&cfg, args.resume_from.as_deref())?;
            println!(
                "trained {} epochs; best epoch {} ({} {:.6}); record {}",
                cfg.epochs,
                outcome.record.best_epoch,
                cfg.select_metric.name(),
                metric_of(&outcome.record),
                outcome.record_path.display()
            );
            Ok(())
        }
        Command::Eval(args) => {
            let dataset = if let Some(paths) = &args.data {
                let format = match &args.data_format {
                    Some(f) => parse_format(f)?,
                    None => FileFormat::PackedBinary,
                };
                DatasetSource::Files {
                    paths: paths.clone(),
                    format,
                }
            } else {
                DatasetSource::Synthetic {
                    instances_per_category: args.synthetic_instances.unwrap_or(50),
                    seed: args.data_seed.unwrap_or(7),
                }
            };
            let scales = if args.reference_scales {
                Scales::reference_tables()
            } else {
                Scales {
                    cd: args.cd_scale,
                    emd: args.emd_scale,
                    hd: args.hd_scale,
                }
            };
            let split = args.split.as_deref().map(parse_split).transpose()?;
            let emd_mode = args.emd.as_deref().map(parse_emd_mode).transpose()?;
            run_eval(EvalArgsResolved {
                checkpoint: args.checkpoint,
                dataset,
                split,
                fractions: (args.train_frac, args.val_frac, args.test_frac),
                split_seed: args.split_seed,
                emd_mode,
                batch_size: args.batch_size,
                scales,
                out: args.out,
            })
            .map(|_| ())
        }
        Command::Compare(args) => {
            let load = |paths: &[PathBuf]| -> CliResult<Vec<RunRecord>> {
                paths.iter().map(|p| RunRecord::load(p)).collect()
            };
            let singles = load(&args.single)?;
            let multis = load(&args.multi)?;
            let table = compare::build_comparison(&singles, &multis)?;
            let scales = if args.reference_scales {
                Scales::reference_tables()
            } else {
                Scales::default()
            };
            let text = compare::render_table(&table, &scales);
            print!("{text}");
            if let Some(out) = &args.out {
                std::fs::create_dir_all(out)?;
                std::fs::write(out.join("comparison.txt"), &text)?;
                compare::write_csv(&table, &out.join("comparison.csv"))?;
            }
            Ok(())
        }
        Command::Sweep(args) => {
            let template = args.config.resolve()?;
            let outcome = sweep::run_sweep(&template, &args.depths, &args.head_counts, args.parallel, args.resume)?;
            println!(
                "sweep complete: {} cells ({} skipped), csv {}",
                outcome.records.len(),
                outcome.skipped,
                outcome.csv_path.display()
            );
            if !outcome.failures.is_empty() {
                return Err(CliError::Other(format!(
                    "{} sweep cell(s) failed; completed cells were persisted",
                    outcome.failures.len()
                )));
            }
            Ok(())
        }
        Command::AuditParams(args) => {
            audit::run_audit(args.csv.as_deref()).map(|_| ())
        }
        Command::Convert(args) => {
            let from = parse_format(&args.from)?;
            let to = parse_format(&args.to)?;
            generate::run_convert(&args.inputs, from, to, &args.out)
        }
    }
}

fn metric_of(record: &RunRecord) -> f64 {
    match record.config.select_metric {
        crate::config::SelectMetric::Cd => record.best.cd,
        crate::config::SelectMetric::Emd => record.best.emd.unwrap_or(f64::NAN),
        crate::config::SelectMetric::Hd => record.best.hd,
        crate::config::SelectMetric::F1 => record.best.f1,
    }
}
