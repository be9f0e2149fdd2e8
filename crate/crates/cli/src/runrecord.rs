//! Persistent record of one training run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use prae_core::metrics::MetricsReport;

use crate::config::ExperimentConfig;
use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    /// Element-weighted mean training loss over the epoch's batches.
    pub train_loss: f64,
    /// Metrics on the selection split, averaged over its clouds.
    pub eval: MetricsReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub param_count: u64,
    pub decoder_param_count: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: u32,
    pub best: MetricsReport,
    /// Informational only; excluded from any determinism comparison.
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn save(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
