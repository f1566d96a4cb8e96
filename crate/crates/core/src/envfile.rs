//! JSON environment files.
//!
//! ```json
//! {"x_points": [[1,1],[1,-1],[-1,1],[-1,-1]],
//!  "y_points": [-1, 1],
//!  "environments": [{"label": "(0.25,0.1)", "pmf": [[0.0125,0.3375], ...]}]}
//! ```
//!
//! `pmf` rows follow `x_points`, columns follow `y_points`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{shared_space, Environment, OutcomeSpace};
use crate::error::{Error, Result};

/// Total-mass tolerance applied to file inputs.
pub const FILE_MASS_TOL: f64 = 1e-9;

#[derive(Debug, Serialize, Deserialize)]
struct EnvFile {
    x_points: Vec<Vec<i32>>,
    y_points: Vec<f64>,
    environments: Vec<EnvEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EnvEntry {
    label: String,
    pmf: Vec<Vec<f64>>,
}

pub fn parse_environments(text: &str) -> Result<Vec<Environment>> {
    let file: EnvFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let space = Arc::new(OutcomeSpace::new(file.x_points, file.y_points)?);
    if file.environments.is_empty() {
        return Err(Error::Parse("no environments listed".into()));
    }
    file.environments
        .into_iter()
        .enumerate()
        .map(|(k, entry)| {
            let name = format!("environments[{k}] ({})", entry.label);
            if entry.pmf.len() != space.len_x() {
                return Err(Error::Validation {
                    entry: name,
                    reason: format!(
                        "pmf has {} rows but there are {} x_points",
                        entry.pmf.len(),
                        space.len_x()
                    ),
                });
            }
            if let Some((i, row)) = entry
                .pmf
                .iter()
                .enumerate()
                .find(|(_, r)| r.len() != space.len_y())
            {
                return Err(Error::Validation {
                    entry: format!("{name} row {i}"),
                    reason: format!(
                        "row has {} columns but there are {} y_points",
                        row.len(),
                        space.len_y()
                    ),
                });
            }
            let flat = entry.pmf.into_iter().flatten().collect();
            Environment::new(space.clone(), flat, entry.label, FILE_MASS_TOL).map_err(|e| match e {
                Error::Validation { entry, reason } => Error::Validation {
                    entry: format!("environments[{k}]: {entry}"),
                    reason,
                },
                other => other,
            })
        })
        .collect()
}

pub fn load_environments(path: impl AsRef<Path>) -> Result<Vec<Environment>> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_environments(&text)
}

/// Serializes environments sharing one outcome space.
pub fn environments_to_json(envs: &[Environment]) -> Result<String> {
    let space = shared_space(envs)?;
    let file = EnvFile {
        x_points: space.x_points().to_vec(),
        y_points: space.y_points().to_vec(),
        environments: envs
            .iter()
            .map(|e| EnvEntry {
                label: e.label().to_string(),
                pmf: (0..space.len_x()).map(|i| e.row(i).to_vec()).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))
}

pub fn save_environments(path: impl AsRef<Path>, envs: &[Environment]) -> Result<()> {
    let text = environments_to_json(envs)?;
    std::fs::write(path, text)?;
    Ok(())
}
