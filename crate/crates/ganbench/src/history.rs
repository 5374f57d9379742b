//! Training history as CSV: one row per critic or generator update.

use std::path::Path;

use ganbench_core::trainer::{Role, StepRecord};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    step: u64,
    role: Role,
    loss: f64,
    accuracy: Option<f64>,
    wall_ms: u64,
}

pub fn write_history(path: &Path, records: &[StepRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::format(path, e))?;
    for r in records {
        w.serialize(Row {
            step: r.step,
            role: r.role,
            loss: r.loss,
            accuracy: r.accuracy,
            wall_ms: r.wall_ms,
        })
        .map_err(|e| CliError::format(path, e))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_history(path: &Path) -> CliResult<Vec<StepRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path)(io),
        other => CliError::format(path, format!("{other:?}")),
    })?;
    r.deserialize::<Row>()
        .map(|row| {
            let row = row.map_err(|e| CliError::format(path, e))?;
            Ok(StepRecord {
                step: row.step,
                role: row.role,
                loss: row.loss,
                accuracy: row.accuracy,
                wall_ms: row.wall_ms,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let records = vec![
            StepRecord {
                step: 1,
                role: Role::Critic,
                loss: 1.25,
                accuracy: Some(0.5),
                wall_ms: 3,
            },
            StepRecord {
                step: 1,
                role: Role::Generator,
                loss: -0.1,
                accuracy: None,
                wall_ms: 4,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,role,loss,accuracy,wall_ms\n1,critic,1.25,0.5,3\n1,generator,-0.1,,4"));
        assert_eq!(read_history(&path).unwrap(), records);
    }
}
