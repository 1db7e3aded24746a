//! Append-only case log, one JSON record per line.
//!
//! Revision 0 is always `created`. Every later record is one mutation, and
//! `amplitudes` is the state after it. Floats round-trip exactly, so a replay
//! can be checked bit for bit.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use qabd::casebook::{CaseDoc, ObservationDoc};
use qabd::dynamics::StepTrace;
use qabd::model::{CollapseOutcome, InterferenceOverride};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub revision: u64,
    pub amplitudes: Vec<f64>,
    pub event: LogEvent,
}

/// Where a forked case came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForkMarker {
    pub parent: String,
    pub parent_revision: u64,
    #[serde(default)]
    pub drop_observation_ids: Vec<String>,
    #[serde(default)]
    pub extra_overrides: Vec<InterferenceOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LogEvent {
    /// Case definition without observations. For a fork, `case` already
    /// carries the extra overrides.
    Created {
        id: String,
        case: CaseDoc,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        forked_from: Option<ForkMarker>,
    },
    Observation {
        observation: ObservationDoc,
        sequence: u64,
        trace: StepTrace,
        outcome: CollapseOutcome,
    },
    InterferenceOverride {
        i: usize,
        j: usize,
        value: f64,
    },
    Collapse {
        outcome: CollapseOutcome,
        forced: bool,
    },
}

impl LogEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Created { .. } => "created",
            Self::Observation { .. } => "observation",
            Self::InterferenceOverride { .. } => "interference-override",
            Self::Collapse { .. } => "collapse",
        }
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn to_line(record: &LogRecord) -> String {
    let mut line = serde_json::to_string(record).expect("log records serialize");
    line.push('\n');
    line
}

pub fn to_jsonl(records: &[LogRecord]) -> String {
    records.iter().map(to_line).collect()
}

/// Parses JSON lines, skipping blank lines.
pub fn parse_jsonl(source: &str) -> Result<Vec<LogRecord>, LogError> {
    let mut out = Vec::new();
    for (k, line) in source.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| LogError::Parse {
            line: k + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    if out.is_empty() {
        return Err(LogError::Empty);
    }
    Ok(out)
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogRecord>, LogError> {
    let file = File::open(path)?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    parse_jsonl(&text)
}

/// Appends records to a file, flushing each one to disk before returning.
#[derive(Debug)]
pub struct LogWriter {
    file: File,
}

impl LogWriter {
    /// Creates or truncates `path`.
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().write(true).create(true).truncate(true).open(path)?;
        Ok(Self { file })
    }

    /// Opens `path` for appending after its existing content.
    pub fn append(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self { file })
    }

    pub fn write(&mut self, record: &LogRecord) -> io::Result<()> {
        self.file.write_all(to_line(record).as_bytes())?;
        self.file.sync_data()
    }
}
