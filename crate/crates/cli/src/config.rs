use std::path::{Path, PathBuf};

use molbbo::bbo::BboConfig;
use molbbo::objective::ObjectiveSpec;
use molbbo::runlog::Clock;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One JSON document describing a run: the optimizer, the objective, the
/// clock and where outputs go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub bbo: BboConfig,
    #[serde(default)]
    pub clock: Clock,
    /// Directory for run outputs; `--out` takes precedence.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.objective.validate().map_err(CliError::Input)?;
        self.bbo.validate().map_err(CliError::Input)
    }
}
