//! The training loop: per-epoch shuffled batches, multi-head Chamfer loss,
//! per-epoch evaluation on the selection split, best-epoch checkpointing,
//! and exact resume.

use std::path::{Path, PathBuf};
use std::time::Instant;

use prae_core::arch::build_model;
use prae_core::checkpoint::{load_checkpoint, save_checkpoint, BestRecord, RngState, TrainMeta};
use prae_core::data::{batches, split_dataset, Dataset, Split};
use prae_core::loss::train_step;
use prae_core::metrics::MetricsReport;
use prae_core::optim::{AdamParams, ModelOptimizer};

use crate::config::{DatasetSource, ExperimentConfig, SelectMetric};
use crate::evalcmd::{evaluate_model, load_dataset_from_source};
use crate::runrecord::{EpochRecord, RunRecord};
use crate::{CliError, CliResult};

pub struct TrainOutcome {
    pub record: RunRecord,
    pub record_path: PathBuf,
    pub best_path: PathBuf,
    pub final_path: PathBuf,
}

fn metric_value(report: &MetricsReport, metric: SelectMetric) -> CliResult<f64> {
    Ok(match metric {
        SelectMetric::Cd => report.cd,
        SelectMetric::Hd => report.hd,
        SelectMetric::F1 => report.f1,
        SelectMetric::Emd => report
            .emd
            .ok_or_else(|| CliError::Config("selection metric emd was not evaluated".into()))?,
    })
}

fn is_better(candidate: f64, incumbent: f64, metric: SelectMetric) -> bool {
    if metric.higher_is_better() {
        candidate > incumbent
    } else {
        candidate < incumbent
    }
}

pub fn load_and_split_dataset(cfg: &ExperimentConfig) -> CliResult<Dataset> {
    let mut ds = load_dataset_from_source(&cfg.dataset, cfg.points)?;
    if ds.k != cfg.points {
        return Err(CliError::Config(format!(
            "dataset clouds have {} points, config says {}",
            ds.k, cfg.points
        )));
    }
    split_dataset(&mut ds, cfg.split_fractions()?, cfg.seed)?;
    Ok(ds)
}

/// Trains per the config, optionally resuming from a checkpoint written by
/// an earlier (shorter) run of the same config. Returns the run record and
/// artifact paths.
pub fn run_training(cfg: &ExperimentConfig, resume_from: Option<&Path>) -> CliResult<TrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let started = Instant::now();
    let dataset = load_and_split_dataset(cfg)?;

    let (mut model, mut optimizer, start_epoch, mut best) = match resume_from {
        None => {
            let model = build_model(cfg.encoder_spec(), cfg.decoder_spec()?, cfg.seed)?;
            let optimizer = ModelOptimizer::new(&model, AdamParams::with_lr(cfg.learning_rate));
            (model, optimizer, 0u32, None::<BestRecord>)
        }
        Some(path) => {
            let loaded = load_checkpoint(path)?;
            if loaded.model.spec.encoder != cfg.encoder_spec() || loaded.model.spec.decoder != cfg.decoder_spec()? {
                return Err(CliError::Config(format!(
                    "checkpoint {} was trained with a different architecture",
                    path.display()
                )));
            }
            let optimizer = loaded
                .optimizer
                .ok_or_else(|| CliError::Config(format!("checkpoint {} has no optimizer state", path.display())))?;
            (loaded.model, optimizer, loaded.meta.epoch, loaded.meta.best)
        }
    };
    if start_epoch as usize >= cfg.epochs {
        return Err(CliError::Config(format!(
            "checkpoint is already at epoch {start_epoch}, config stops at {}",
            cfg.epochs
        )));
    }

    let best_path = cfg.out_dir.join("best.prae");
    if resume_from.is_some() && best.is_some() && !best_path.exists() {
        // The resumed segment can only honor the earlier best epoch if its
        // checkpoint is still in place.
        return Err(CliError::Config(format!(
            "resume expects the original output directory; {} is missing",
            best_path.display()
        )));
    }
    let final_path = cfg.out_dir.join("final.prae");
    let record_path = cfg.out_dir.join("runrecord.json");
    let eval_opts = cfg.eval_options();
    let select_split = Some(cfg.select_split);

    let mut epoch_log: Vec<EpochRecord> = Vec::new();
    let mut best_report: Option<MetricsReport> = None;

    for epoch in start_epoch..cfg.epochs as u32 {
        let mut loss_weighted = 0.0f64;
        let mut elements = 0usize;
        for (batch_idx, batch) in batches(&dataset, Split::Train, cfg.batch_size, cfg.seed, epoch as u64).enumerate() {
            let b = batch.clouds.len();
            let loss = train_step(&mut model, &mut optimizer, &batch.x, &batch.clouds).map_err(|e| {
                CliError::Numeric(format!(
                    "epoch {epoch}, batch {batch_idx}, lr {}: {e}",
                    cfg.learning_rate
                ))
            })?;
            loss_weighted += loss * b as f64;
            elements += b;
        }
        let train_loss = loss_weighted / elements.max(1) as f64;

        let report = evaluate_model(&model, &dataset, select_split, &eval_opts, cfg.batch_size)?;
        epoch_log.push(EpochRecord {
            epoch,
            train_loss,
            eval: report,
        });

        let value = metric_value(&report, cfg.select_metric)?;
        let improved = match &best {
            None => true,
            Some(b) => is_better(value, b.value, cfg.select_metric),
        };
        if improved {
            best = Some(BestRecord {
                epoch,
                metric: cfg.select_metric.name().to_string(),
                value,
            });
            best_report = Some(report);
            save_checkpoint(
                &best_path,
                &model,
                Some(&optimizer),
                &TrainMeta {
                    epoch: epoch + 1,
                    best: best.clone(),
                    rng: RngState::fresh(cfg.seed),
                },
            )?;
        }
    }

    let best = best.expect("at least one epoch ran");
    save_checkpoint(
        &final_path,
        &model,
        Some(&optimizer),
        &TrainMeta {
            epoch: cfg.epochs as u32,
            best: Some(best.clone()),
            rng: RngState::fresh(cfg.seed),
        },
    )?;

    // On resume the best epoch may predate this segment; re-evaluating the
    // best checkpoint reproduces its report bit for bit.
    let best_report = match best_report {
        Some(r) => r,
        None => {
            let loaded = load_checkpoint(&best_path)?;
            evaluate_model(&loaded.model, &dataset, select_split, &eval_opts, cfg.batch_size)?
        }
    };

    let record = RunRecord {
        config: cfg.clone(),
        config_hash: cfg.identity_hash(),
        param_count: model.count_parameters(),
        decoder_param_count: model.count_decoder_parameters(),
        epochs: epoch_log,
        best_epoch: best.epoch,
        best: best_report,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    record.save(&record_path)?;
    Ok(TrainOutcome {
        record,
        record_path,
        best_path,
        final_path,
    })
}

/// Synthetic-dataset shorthand used by tests and the sweep driver.
pub fn synthetic_source(instances: usize, data_seed: u64) -> DatasetSource {
    DatasetSource::Synthetic {
        instances_per_category: instances,
        seed: data_seed,
    }
}
