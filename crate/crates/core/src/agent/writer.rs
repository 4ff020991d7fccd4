use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRAIN_LOG: &str = "train_log.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarRecord {
    pub update_step: u64,
    pub key: String,
    pub value: f64,
}

/// Append-only scalar log of training progress, keyed by update step.
#[derive(Debug, Default)]
pub struct TrainWriter {
    records: Vec<ScalarRecord>,
    last_step: HashMap<String, u64>,
    path: Option<PathBuf>,
    file: Option<File>,
}

impl TrainWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Also append every record to `<dir>/train_log.jsonl`.
    pub fn set_dir(&mut self, dir: impl AsRef<Path>) {
        self.path = Some(dir.as_ref().join(TRAIN_LOG));
        self.file = None;
    }

    pub fn add_scalar(&mut self, key: &str, value: f64, update_step: u64) -> Result<()> {
        if let Some(&last) = self.last_step.get(key) {
            if update_step < last {
                return Err(Error::Usage(format!(
                    "scalar `{key}` logged at step {update_step} after step {last}"
                )));
            }
        }
        let record = ScalarRecord { update_step, key: key.to_string(), value };
        if let Some(path) = &self.path {
            if self.file.is_none() {
                self.file = Some(OpenOptions::new().create(true).append(true).open(path)?);
            }
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            self.file.as_mut().unwrap().write_all(line.as_bytes())?;
        }
        self.last_step.insert(key.to_string(), update_step);
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[ScalarRecord] {
        &self.records
    }

    pub fn scalars(&self, key: &str) -> impl Iterator<Item = (u64, f64)> + '_ {
        let key = key.to_string();
        self.records.iter().filter(move |r| r.key == key).map(|r| (r.update_step, r.value))
    }
}

pub fn read_train_log(path: impl AsRef<Path>) -> Result<Vec<ScalarRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_are_monotone_per_key() {
        let mut w = TrainWriter::new();
        w.add_scalar("loss", 1.0, 5).unwrap();
        w.add_scalar("return", 0.0, 1).unwrap();
        w.add_scalar("loss", 0.5, 5).unwrap();
        assert!(w.add_scalar("loss", 0.1, 4).is_err());
        assert_eq!(w.scalars("loss").collect::<Vec<_>>(), vec![(5, 1.0), (5, 0.5)]);
    }

    #[test]
    fn records_reach_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = TrainWriter::new();
        w.set_dir(dir.path());
        w.add_scalar("loss", 2.0, 1).unwrap();
        w.add_scalar("loss", 1.0, 2).unwrap();
        let back = read_train_log(dir.path().join(TRAIN_LOG)).unwrap();
        assert_eq!(back, w.records());
    }
}
