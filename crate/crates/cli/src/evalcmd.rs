//! Model evaluation over dataset splits, with presentation scaling.

use std::path::PathBuf;

use prae_core::arch::Model;
use prae_core::checkpoint::load_checkpoint;
use prae_core::data::{self, Dataset, Split};
use prae_core::metrics::{average_reports, evaluate_pairs, EmdMode, EvalOptions, MetricsReport, PointCloud};
use prae_core::tensor::Tensor;

use crate::config::DatasetSource;
use crate::{CliError, CliResult};

/// Multipliers applied for display only; stored values stay raw.
#[derive(Clone, Copy, Debug)]
pub struct Scales {
    pub cd: f64,
    pub emd: f64,
    pub hd: f64,
}

impl Default for Scales {
    fn default() -> Self {
        Scales {
            cd: 1.0,
            emd: 1.0,
            hd: 1.0,
        }
    }
}

impl Scales {
    /// The presentation convention of the reference tables:
    /// 10³×CD and 10²×HD, raw assignment metric.
    pub fn reference_tables() -> Self {
        Scales {
            cd: 1e3,
            emd: 1.0,
            hd: 1e2,
        }
    }
}

/// Reconstructs every cloud of `split` in dataset order (batched, eval
/// mode) and returns (predictions, ground truths).
pub fn reconstruct_split(
    model: &Model,
    ds: &Dataset,
    split: Option<Split>,
    batch_size: usize,
) -> CliResult<(Vec<PointCloud>, Vec<PointCloud>)> {
    let indices: Vec<usize> = match split {
        Some(split) => ds.split_indices(split),
        None => (0..ds.len()).collect(),
    };
    if indices.is_empty() {
        return Err(CliError::Config(format!("split {split:?} holds no clouds")));
    }
    let k = ds.k;
    let mut preds = Vec::with_capacity(indices.len());
    let mut gts = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let mut x = Tensor::zeros(&[chunk.len(), 3, k]);
        for (bi, &idx) in chunk.iter().enumerate() {
            for (n, p) in ds.clouds[idx].points().iter().enumerate() {
                for c in 0..3 {
                    x.set3(bi, c, n, p[c]);
                }
            }
        }
        let recon = model.reconstruct(&x)?;
        preds.extend(data::tensor_rows_to_clouds(&recon)?);
        gts.extend(chunk.iter().map(|&idx| ds.clouds[idx].clone()));
    }
    Ok((preds, gts))
}

/// Mean metrics of the model over one split (or the whole dataset).
pub fn evaluate_model(
    model: &Model,
    ds: &Dataset,
    split: Option<Split>,
    opts: &EvalOptions,
    batch_size: usize,
) -> CliResult<MetricsReport> {
    let (preds, gts) = reconstruct_split(model, ds, split, batch_size)?;
    let reports = evaluate_pairs(&preds, &gts, opts)?;
    average_reports(&reports).map_err(CliError::from)
}

pub fn format_report(r: &MetricsReport, scales: &Scales) -> String {
    let emd = match r.emd {
        Some(v) => format!("{:.2}", v * scales.emd),
        None => "n/a".to_string(),
    };
    format!(
        "cd {:.2}  emd {}  hd {:.2}  f1 {:.2}  (precision {:.2}, recall {:.2})",
        r.cd * scales.cd,
        emd,
        r.hd * scales.hd,
        r.f1 * 100.0,
        r.precision * 100.0,
        r.recall * 100.0
    )
}

pub fn report_csv_header() -> &'static str {
    "cd,emd,hd,f1,precision,recall"
}

pub fn report_csv_row(r: &MetricsReport) -> String {
    let emd = r.emd.map(|v| format!("{v}")).unwrap_or_default();
    format!("{},{emd},{},{},{},{}", r.cd, r.hd, r.f1, r.precision, r.recall)
}

pub struct EvalArgsResolved {
    pub checkpoint: PathBuf,
    pub dataset: DatasetSource,
    pub split: Option<Split>,
    pub fractions: (f64, f64, f64),
    pub split_seed: u64,
    pub emd_mode: Option<EmdMode>,
    pub batch_size: usize,
    pub scales: Scales,
    pub out: Option<PathBuf>,
}

pub fn load_dataset_from_source(source: &DatasetSource, points: usize) -> CliResult<Dataset> {
    match source {
        DatasetSource::Synthetic {
            instances_per_category,
            seed,
        } => data::synthetic_dataset(*instances_per_category, points, *seed).map_err(CliError::from),
        DatasetSource::Files { paths, format } => {
            data::load_clouds(paths, *format, Some(points)).map_err(CliError::from)
        }
    }
}

pub fn run_eval(args: EvalArgsResolved) -> CliResult<MetricsReport> {
    let loaded = load_checkpoint(&args.checkpoint)?;
    let model = loaded.model;
    let k = model.spec.decoder.output_points;
    let mut ds = load_dataset_from_source(&args.dataset, k)?;
    if ds.k != k {
        return Err(CliError::Config(format!(
            "dataset clouds have {} points but the model reconstructs {k}",
            ds.k
        )));
    }
    if args.split.is_some() {
        let (train, val, test) = args.fractions;
        let fractions = prae_core::data::SplitFractions::new(train, val, test)?;
        prae_core::data::split_dataset(&mut ds, fractions, args.split_seed)?;
    }
    // Exact assignment is reserved for sizes where O(n^3) is practical.
    let emd = args.emd_mode.unwrap_or(if k <= 512 { EmdMode::Exact } else { EmdMode::Approx });
    let opts = EvalOptions {
        backend: prae_core::metrics::BackendKind::SpatialIndex,
        emd,
    };
    let report = evaluate_model(&model, &ds, args.split, &opts, args.batch_size)?;
    println!("raw:    {}", format_report(&report, &Scales::default()));
    let scales = args.scales;
    if scales.cd != 1.0 || scales.emd != 1.0 || scales.hd != 1.0 {
        println!("scaled: {}", format_report(&report, &scales));
    }
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        let csv = format!("{}\n{}\n", report_csv_header(), report_csv_row(&report));
        std::fs::write(out.join("metrics.csv"), csv)?;
        let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(out.join("metrics.json"), json)?;
    }
    Ok(report)
}
