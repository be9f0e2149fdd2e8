//! Experiment configuration: JSON file, CLI-flag overrides, validation.
//!
//! Precedence is CLI flag > config file > default. Defaults echo the
//! reference training setup (learning rate 5e-4, batch size 32, 100
//! epochs, 2048 points).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use prae_core::arch::{Backbone, DecoderSpec, EncoderKind, EncoderSpec};
use prae_core::data::{FileFormat, Split, SplitFractions};
use prae_core::metrics::{BackendKind, EmdMode, EvalOptions};

use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectMetric {
    Cd,
    Emd,
    Hd,
    F1,
}

impl SelectMetric {
    /// True when larger values are better.
    pub fn higher_is_better(self) -> bool {
        matches!(self, SelectMetric::F1)
    }

    pub fn name(self) -> &'static str {
        match self {
            SelectMetric::Cd => "cd",
            SelectMetric::Emd => "emd",
            SelectMetric::Hd => "hd",
            SelectMetric::F1 => "f1",
        }
    }
}

impl std::str::FromStr for SelectMetric {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cd" => Ok(SelectMetric::Cd),
            "emd" => Ok(SelectMetric::Emd),
            "hd" => Ok(SelectMetric::Hd),
            "f1" => Ok(SelectMetric::F1),
            other => Err(CliError::Config(format!("unknown selection metric {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DatasetSource {
    /// Stock synthetic corpus: 8 shape categories × `instances_per_category`.
    Synthetic { instances_per_category: usize, seed: u64 },
    Files { paths: Vec<PathBuf>, format: FileFormat },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub encoder: EncoderKind,
    pub depth: usize,
    pub heads: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub points: usize,
    pub dataset: DatasetSource,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    /// Metrics evaluated per epoch; the assignment metric is governed by
    /// `emd_mode`.
    pub emd_mode: EmdMode,
    pub select_metric: SelectMetric,
    pub select_split: Split,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            encoder: EncoderKind::LightAe,
            depth: 3,
            heads: 1,
            epochs: 100,
            batch_size: 32,
            learning_rate: 5e-4,
            seed: 0,
            points: 2048,
            dataset: DatasetSource::Synthetic {
                instances_per_category: 50,
                seed: 7,
            },
            train_frac: 0.8,
            val_frac: 0.0,
            test_frac: 0.2,
            emd_mode: EmdMode::Approx,
            select_metric: SelectMetric::Cd,
            select_split: Split::Test,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn backbone(&self) -> Backbone {
        self.encoder.backbone()
    }

    pub fn encoder_spec(&self) -> EncoderSpec {
        EncoderSpec::new(self.encoder)
    }

    pub fn decoder_spec(&self) -> CliResult<DecoderSpec> {
        DecoderSpec::table(self.backbone(), self.depth, self.heads, self.points).map_err(CliError::from)
    }

    pub fn split_fractions(&self) -> CliResult<SplitFractions> {
        SplitFractions::new(self.train_frac, self.val_frac, self.test_frac).map_err(CliError::from)
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            backend: BackendKind::SpatialIndex,
            emd: self.emd_mode,
        }
    }

    /// Full validation up front: every inconsistency surfaces here, before
    /// any dataset generation or training starts.
    pub fn validate(&self) -> CliResult<()> {
        if self.learning_rate <= 0.0 {
            return Err(CliError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs < 1 {
            return Err(CliError::Config("at least one epoch is required".into()));
        }
        if self.batch_size < 1 {
            return Err(CliError::Config("batch size must be at least 1".into()));
        }
        self.decoder_spec()?;
        let fractions = self.split_fractions()?;
        let selected_frac = match self.select_split {
            Split::Train => fractions.train,
            Split::Val => fractions.val,
            Split::Test => fractions.test,
        };
        if selected_frac <= 0.0 {
            return Err(CliError::Config(format!(
                "selection split {:?} has a zero fraction",
                self.select_split
            )));
        }
        if self.select_metric == SelectMetric::Emd && self.emd_mode == EmdMode::Skip {
            return Err(CliError::Config(
                "cannot select on the assignment metric while emd-mode is skip".into(),
            ));
        }
        if let DatasetSource::Synthetic {
            instances_per_category, ..
        } = &self.dataset
        {
            if *instances_per_category == 0 {
                return Err(CliError::Config("synthetic dataset needs at least one instance".into()));
            }
        }
        if self.select_split == Split::Test {
            eprintln!(
                "warning: selecting the best epoch on the test split mirrors the reference \
                 methodology but leaks test data into model selection; use --select-split val \
                 with a nonzero val fraction for a clean protocol"
            );
        }
        Ok(())
    }

    /// Hash of the run identity (everything except the output directory),
    /// used for resume checks and record comparison.
    pub fn identity_hash(&self) -> String {
        let mut id = self.clone();
        id.out_dir = PathBuf::new();
        let json = serde_json::to_string(&id).expect("config serializes");
        format!("{:08x}", crc32fast::hash(json.as_bytes()))
    }
}
