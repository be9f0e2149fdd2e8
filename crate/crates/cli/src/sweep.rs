//! Depth × head-count sweeps: runs the grid, collects best-epoch metrics
//! into a CSV, renders metric-vs-depth and metric-vs-parameter plots, and
//! emits a single- vs multi-head comparison when both are present.

use std::path::{Path, PathBuf};

use prae_core::arch::decoder_param_count;

use crate::compare::{build_comparison, render_table, write_csv as write_comparison_csv};
use crate::config::ExperimentConfig;
use crate::evalcmd::Scales;
use crate::plot::{render_grid, Panel, Series};
use crate::runrecord::RunRecord;
use crate::train::run_training;
use crate::{CliError, CliResult};

pub struct SweepOutcome {
    pub records: Vec<RunRecord>,
    pub skipped: usize,
    pub failures: Vec<(String, CliError)>,
    pub csv_path: PathBuf,
}

fn cell_name(cfg: &ExperimentConfig) -> String {
    format!("{}_d{}_m{}", cfg.backbone().name(), cfg.depth, cfg.heads)
}

fn cell_config(template: &ExperimentConfig, base: &Path, depth: usize, heads: usize) -> ExperimentConfig {
    let mut cfg = template.clone();
    cfg.depth = depth;
    cfg.heads = heads;
    cfg.out_dir = base.join(format!("{}_d{depth}_m{heads}", template.backbone().name()));
    cfg
}

fn run_cell(cfg: &ExperimentConfig, resume: bool) -> CliResult<(RunRecord, bool)> {
    let record_path = cfg.out_dir.join("runrecord.json");
    if resume && record_path.exists() {
        let record = RunRecord::load(&record_path)?;
        if record.config_hash == cfg.identity_hash() {
            return Ok((record, true));
        }
    }
    run_training(cfg, None).map(|out| (out.record, false))
}

/// Runs the full grid. Cells run sequentially unless `parallel > 1`, in
/// which case up to that many run concurrently (independent models and
/// output directories). Completed cells persist even when others fail.
pub fn run_sweep(
    template: &ExperimentConfig,
    depths: &[usize],
    head_counts: &[usize],
    parallel: usize,
    resume: bool,
) -> CliResult<SweepOutcome> {
    if depths.is_empty() || head_counts.is_empty() {
        return Err(CliError::Config("sweep needs at least one depth and one head count".into()));
    }
    let base = template.out_dir.clone();
    std::fs::create_dir_all(&base)?;
    let cells: Vec<ExperimentConfig> = depths
        .iter()
        .flat_map(|&d| head_counts.iter().map(move |&m| (d, m)))
        .map(|(d, m)| cell_config(template, &base, d, m))
        .collect();

    let mut results: Vec<(String, CliResult<(RunRecord, bool)>)> = Vec::new();
    if parallel <= 1 {
        for cfg in &cells {
            results.push((cell_name(cfg), run_cell(cfg, resume)));
        }
    } else {
        for chunk in cells.chunks(parallel) {
            let chunk_results: Vec<(String, CliResult<(RunRecord, bool)>)> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|cfg| scope.spawn(move || (cell_name(cfg), run_cell(cfg, resume))))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("sweep cell thread")).collect()
            });
            results.extend(chunk_results);
        }
    }

    let mut records = Vec::new();
    let mut skipped = 0usize;
    let mut failures = Vec::new();
    for (name, result) in results {
        match result {
            Ok((record, was_skipped)) => {
                if was_skipped {
                    skipped += 1;
                    println!("cell {name}: already complete, skipped");
                } else {
                    println!("cell {name}: done (best epoch {})", record.best_epoch);
                }
                records.push(record);
            }
            Err(e) => {
                eprintln!("cell {name} failed: {e}");
                failures.push((name, e));
            }
        }
    }

    let csv_path = base.join("sweep.csv");
    write_sweep_csv(&records, &csv_path)?;
    write_sweep_plots(&records, &base)?;

    // Single- vs multi-head comparison when the grid includes both.
    let singles: Vec<RunRecord> = records.iter().filter(|r| r.config.heads == 1).cloned().collect();
    let multis: Vec<RunRecord> = records.iter().filter(|r| r.config.heads > 1).cloned().collect();
    if !singles.is_empty() && !multis.is_empty() && failures.is_empty() {
        let table = build_comparison(&singles, &multis)?;
        let text = render_table(&table, &Scales::reference_tables());
        print!("{text}");
        std::fs::write(base.join("comparison.txt"), &text)?;
        write_comparison_csv(&table, &base.join("comparison.csv"))?;
    }

    Ok(SweepOutcome {
        records,
        skipped,
        failures,
        csv_path,
    })
}

pub fn write_sweep_csv(records: &[RunRecord], path: &Path) -> CliResult<()> {
    let mut csv = String::from("backbone,depth,heads,params,cd,emd,hd,f1\n");
    let mut rows: Vec<&RunRecord> = records.iter().collect();
    rows.sort_by_key(|r| (r.config.backbone().name(), r.config.depth, r.config.heads));
    for r in rows {
        let emd = r.best.emd.map(|v| v.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{emd},{},{}\n",
            r.config.backbone().name(),
            r.config.depth,
            r.config.heads,
            r.decoder_param_count,
            r.best.cd,
            r.best.hd,
            r.best.f1
        ));
    }
    std::fs::write(path, csv).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn metric_panels(records: &[RunRecord], x_of: impl Fn(&RunRecord) -> f64, x_label: &str) -> Vec<Panel> {
    let metrics: [(&str, fn(&RunRecord) -> Option<f64>); 4] = [
        ("chamfer", |r| Some(r.best.cd)),
        ("assignment", |r| r.best.emd),
        ("worst-case", |r| Some(r.best.hd)),
        ("f1", |r| Some(r.best.f1)),
    ];
    metrics
        .iter()
        .map(|(name, value)| {
            let mut head_counts: Vec<usize> = records.iter().map(|r| r.config.heads).collect();
            head_counts.sort_unstable();
            head_counts.dedup();
            let series = head_counts
                .into_iter()
                .map(|m| Series {
                    name: format!("{m}-head"),
                    points: records
                        .iter()
                        .filter(|r| r.config.heads == m)
                        .filter_map(|r| value(r).map(|v| (x_of(r), v)))
                        .collect(),
                })
                .collect();
            Panel {
                title: name.to_string(),
                x_label: x_label.to_string(),
                y_label: name.to_string(),
                series,
            }
        })
        .collect()
}

pub fn write_sweep_plots(records: &[RunRecord], base: &Path) -> CliResult<()> {
    if records.is_empty() {
        return Ok(());
    }
    let by_depth = metric_panels(records, |r| r.config.depth as f64, "decoder depth");
    std::fs::write(base.join("metrics_vs_depth.svg"), render_grid(&by_depth, 2))?;
    let by_params = metric_panels(records, |r| r.decoder_param_count as f64 / 1e6, "decoder parameters (M)");
    std::fs::write(base.join("metrics_vs_params.svg"), render_grid(&by_params, 2))?;
    Ok(())
}

/// The arithmetic the CSV `params` column must agree with.
pub fn expected_params(cfg: &ExperimentConfig) -> CliResult<u64> {
    decoder_param_count(cfg.backbone(), cfg.depth, cfg.points, cfg.heads).map_err(CliError::from)
}
