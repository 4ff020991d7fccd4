//! Per-component JSON-lines loggers and image dumps.
//!
//! A logger starts as a dummy that accepts everything and touches nothing on
//! disk. [`Logger::set_log_dir`] turns it into a file logger writing under
//! `<log_dir>/<component>/`, so an agent and an arena sharing a log directory
//! never share a file.

mod visual;

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{Error, Result};
use crate::json::{self, TensorPolicy};
use crate::value::{Tensor, Tree};

pub use visual::{save_depth, save_image, save_mask};

/// Tensors below this element count are inlined into log lines.
pub const INLINE_ELEMENTS: usize = 64;

pub const STEPS_FILE: &str = "steps.jsonl";

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub eid: u64,
    pub step: u64,
    pub payload: Tree,
}

impl StepRecord {
    pub fn new(eid: u64, step: u64, payload: Tree) -> Self {
        StepRecord { eid, step, payload }
    }

    pub fn to_json_line(&self) -> Result<String> {
        let payload = json::tree_to_json(&self.payload, "payload", TensorPolicy::SummarizeFrom(INLINE_ELEMENTS))?;
        Ok(serde_json::to_string(&json!({ "eid": self.eid, "step": self.step, "payload": payload }))?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(line)?;
        let bad = || Error::Serialization { path: "record".into(), reason: "missing eid/step".into() };
        Ok(StepRecord {
            eid: v["eid"].as_u64().ok_or_else(bad)?,
            step: v["step"].as_u64().ok_or_else(bad)?,
            payload: json::tree_from_json(&v["payload"])?,
        })
    }
}

#[derive(Debug)]
struct FileSink {
    root: PathBuf,
    dir: PathBuf,
    steps: Option<File>,
}

#[derive(Debug)]
pub struct Logger {
    component: String,
    sink: Option<FileSink>,
}

impl Clone for Logger {
    // Clones share the directory but open their own handle on first write.
    fn clone(&self) -> Self {
        Logger {
            component: self.component.clone(),
            sink: self.sink.as_ref().map(|s| FileSink { root: s.root.clone(), dir: s.dir.clone(), steps: None }),
        }
    }
}

impl Logger {
    pub fn dummy(component: &str) -> Self {
        Logger { component: component.to_string(), sink: None }
    }

    pub fn component(&self) -> &str {
        &self.component
    }

    pub fn is_dummy(&self) -> bool {
        self.sink.is_none()
    }

    pub fn set_log_dir(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let root = path.as_ref().to_path_buf();
        let dir = root.join(&self.component);
        fs::create_dir_all(&dir)?;
        // Dropping the previous sink closes its file.
        self.sink = Some(FileSink { root, dir, steps: None });
        Ok(())
    }

    /// The shared log directory this logger was pointed at.
    pub fn root(&self) -> Option<&Path> {
        self.sink.as_ref().map(|s| s.root.as_path())
    }

    /// The component's own subdirectory.
    pub fn dir(&self) -> Option<&Path> {
        self.sink.as_ref().map(|s| s.dir.as_path())
    }

    pub fn log_step(&mut self, record: &StepRecord) -> Result<()> {
        let Some(sink) = self.sink.as_mut() else { return Ok(()) };
        let mut line = record.to_json_line()?;
        line.push('\n');
        if sink.steps.is_none() {
            sink.steps = Some(OpenOptions::new().create(true).append(true).open(sink.dir.join(STEPS_FILE))?);
        }
        // One write per line keeps appends from concurrent handles whole.
        sink.steps.as_mut().unwrap().write_all(line.as_bytes())?;
        Ok(())
    }

    /// Writes `<dir>/frames/ep<eid>/<step>.png`.
    pub fn save_frame(&self, eid: u64, step: u64, frame: &Tensor) -> Result<()> {
        let Some(sink) = &self.sink else { return Ok(()) };
        let dir = sink.dir.join("frames").join(format!("ep{eid}"));
        fs::create_dir_all(&dir)?;
        save_image(dir.join(format!("{step}.png")), frame)
    }
}

pub fn read_steps(path: impl AsRef<Path>) -> Result<Vec<StepRecord>> {
    let file = File::open(path)?;
    BufReader::new(file)
        .lines()
        .map(|line| StepRecord::from_json_line(&line?))
        .collect()
}
