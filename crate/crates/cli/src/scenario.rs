use std::path::Path;

use fiscalprey::{ControlParams, Params, State};
use serde::Deserialize;

use crate::CliError;

pub const ARTIFACTS: [&str; 7] = [
    "trajectory.csv",
    "trajectory.svg",
    "boundedness.json",
    "equilibria.json",
    "control.csv",
    "control_summary.json",
    "control.svg",
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub params: Params,
    #[serde(default)]
    pub control: Option<ControlParams>,
    pub initial_state: State,
    pub t_end: f64,
    /// Artifact file names to write; all of a command's artifacts when absent.
    #[serde(default)]
    pub outputs: Option<Vec<String>>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read scenario {}: {e}", path.display())))?;
        let scenario: Scenario =
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("invalid scenario: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(CliError::input(format!("t_end must be finite and > 0, got {}", self.t_end)));
        }
        if !self.initial_state.is_finite() || self.initial_state.min_component() < 0.0 {
            return Err(CliError::input("initial_state must be finite and nonnegative"));
        }
        if let Some(list) = &self.outputs {
            if let Some(bad) = list.iter().find(|a| !ARTIFACTS.contains(&a.as_str())) {
                return Err(CliError::input(format!("unknown output `{bad}`")));
            }
        }
        Ok(())
    }

    pub fn wants(&self, artifact: &str) -> bool {
        self.outputs.as_ref().is_none_or(|list| list.iter().any(|a| a == artifact))
    }
}
