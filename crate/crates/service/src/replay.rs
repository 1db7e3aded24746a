//! Rebuild a session from its log and check every record bit for bit.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use qabd::{CaseFile, EmbeddingProvider};
use thiserror::Error;

use crate::log::{read_log, LogError, LogEvent, LogRecord};
use crate::session::{fork_events, Session, SessionError};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("first record is not a revision-0 `created` event")]
    MissingCreated,
    #[error("created record holds an invalid case: {0}")]
    BadCase(String),
    #[error("revision gap: expected {expected}, found {found}")]
    RevisionGap { expected: u64, found: u64 },
    #[error("revision {revision}: engine rejected the event: {source}")]
    Engine { revision: u64, source: SessionError },
    #[error("revision {revision}: {detail}")]
    Mismatch { revision: u64, detail: String },
    #[error("fork lineage of `{case}`: {detail}")]
    Lineage { case: String, detail: String },
    #[error("parent log `{}` for fork not found", .0.display())]
    ParentMissing(PathBuf),
    #[error(transparent)]
    Log(#[from] LogError),
}

impl ReplayError {
    /// Revision at which the log stopped matching, when that is the failure.
    pub fn divergent_revision(&self) -> Option<u64> {
        match self {
            Self::Mismatch { revision, .. } | Self::Engine { revision, .. } => Some(*revision),
            Self::RevisionGap { expected, .. } => Some(*expected),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub case_id: String,
    pub final_revision: u64,
    /// Ancestors checked, nearest first.
    pub lineage: Vec<String>,
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn check(produced: &LogRecord, recorded: &LogRecord) -> Result<(), ReplayError> {
    let revision = recorded.revision;
    if !same_bits(&produced.amplitudes, &recorded.amplitudes) {
        return Err(ReplayError::Mismatch {
            revision,
            detail: format!(
                "amplitudes {:?} recomputed as {:?}",
                recorded.amplitudes, produced.amplitudes
            ),
        });
    }
    if produced.event != recorded.event {
        return Err(ReplayError::Mismatch {
            revision,
            detail: format!(
                "recorded {} event differs from its recomputation",
                recorded.event.kind()
            ),
        });
    }
    Ok(())
}

/// Re-executes `records` and returns the rebuilt session.
pub fn replay_records(
    records: &[LogRecord],
    provider_for: impl Fn(&CaseFile) -> Arc<dyn EmbeddingProvider>,
) -> Result<Session, ReplayError> {
    let first = records.first().ok_or(ReplayError::Log(LogError::Empty))?;
    if first.revision != 0 {
        return Err(ReplayError::MissingCreated);
    }
    let mut session = Session::from_created(first, provider_for)?;
    check(&session.records()[0], first)?;
    for (k, recorded) in records.iter().enumerate().skip(1) {
        let expected = k as u64;
        if recorded.revision != expected {
            return Err(ReplayError::RevisionGap {
                expected,
                found: recorded.revision,
            });
        }
        if matches!(recorded.event, LogEvent::Created { .. }) {
            return Err(ReplayError::Mismatch {
                revision: expected,
                detail: "second created event".into(),
            });
        }
        let produced = session
            .apply_event(&recorded.event)
            .map_err(|source| ReplayError::Engine {
                revision: expected,
                source,
            })?;
        check(&produced, recorded)?;
    }
    Ok(session)
}

/// Replays a log file. A fork is checked against its parent's log, looked
/// up as `<parent id>.jsonl` in `log_dir`, recursively.
pub fn replay_file(
    path: impl AsRef<Path>,
    log_dir: impl AsRef<Path>,
    provider_for: &dyn Fn(&CaseFile) -> Arc<dyn EmbeddingProvider>,
) -> Result<(Session, ReplayReport), ReplayError> {
    let records = read_log(path.as_ref())?;
    let session = replay_records(&records, provider_for)?;
    let mut lineage = Vec::new();
    if let Some(marker) = session.forked_from().cloned() {
        let parent_path = log_dir.as_ref().join(format!("{}.jsonl", marker.parent));
        if !parent_path.exists() {
            return Err(ReplayError::ParentMissing(parent_path));
        }
        let (parent, report) = replay_file(&parent_path, log_dir.as_ref(), provider_for)?;
        verify_lineage(&session, &parent, marker.parent_revision)?;
        lineage.push(parent.id().to_string());
        lineage.extend(report.lineage);
    }
    let report = ReplayReport {
        case_id: session.id().to_string(),
        final_revision: session.revision(),
        lineage,
    };
    Ok((session, report))
}

fn verify_lineage(fork: &Session, parent: &Session, at: u64) -> Result<(), ReplayError> {
    let fail = |detail: String| ReplayError::Lineage {
        case: fork.id().to_string(),
        detail,
    };
    let marker = fork.forked_from().expect("fork marker present");
    if at > parent.revision() {
        return Err(fail(format!(
            "parent revision {at} beyond parent log end {}",
            parent.revision()
        )));
    }
    let (LogEvent::Created { case: fork_case, .. }, LogEvent::Created { case: parent_case, .. }) =
        (&fork.records()[0].event, &parent.records()[0].event)
    else {
        return Err(fail("missing created record".into()));
    };
    let mut expected = parent_case.clone().into_case().map_err(|e| fail(e.to_string()))?;
    for ov in &marker.extra_overrides {
        expected.set_interference_override(*ov);
    }
    if qabd::casebook::CaseDoc::from(&expected) != *fork_case {
        return Err(fail("case definition differs from parent plus extra overrides".into()));
    }
    let inherited: Vec<&LogEvent> =
        fork_events(&parent.records()[1..=at as usize], &marker.drop_observation_ids).collect();
    let own: Vec<&LogEvent> = fork.records()[1..].iter().map(|r| &r.event).collect();
    if own.len() < inherited.len() {
        return Err(fail(format!(
            "{} inherited events, log has {}",
            inherited.len(),
            own.len()
        )));
    }
    for (k, (mine, theirs)) in own.iter().zip(&inherited).enumerate() {
        let same = match (mine, theirs) {
            (LogEvent::Observation { observation: a, .. }, LogEvent::Observation { observation: b, .. }) => a == b,
            (a @ LogEvent::InterferenceOverride { .. }, b @ LogEvent::InterferenceOverride { .. }) => a == b,
            _ => false,
        };
        if !same {
            return Err(fail(format!("revision {} does not match the parent's event", k + 1)));
        }
    }
    Ok(())
}
