//! Live cases, one writer at a time per case, with push notification.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use qabd::casebook::ObservationDoc;
use qabd::dynamics::coherence;
use qabd::model::{AbductiveState, CollapseOutcome};
use qabd::{CaseFile, EmbeddingProvider};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::log::{LogEvent, LogRecord};
use crate::replay::{replay_records, ReplayError};
use crate::session::{default_provider, ForkRequest, Session, SessionError};

const CHANNEL_CAPACITY: usize = 256;

/// One line of `GET /cases/{id}/events`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushEvent {
    pub case_id: String,
    pub revision: u64,
    pub event: String,
    pub state: AbductiveState,
    pub coherence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<CollapseOutcome>,
}

impl PushEvent {
    pub fn from_record(case_id: &str, step: usize, record: &LogRecord) -> Self {
        let state = AbductiveState::new(record.amplitudes.clone(), step).expect("logged states are normalized");
        let outcome = match &record.event {
            LogEvent::Observation { outcome, .. } | LogEvent::Collapse { outcome, .. } => Some(outcome.clone()),
            _ => None,
        };
        Self {
            case_id: case_id.to_string(),
            revision: record.revision,
            event: record.event.kind().to_string(),
            coherence: coherence(&state),
            state,
            outcome,
        }
    }
}

/// Push events for every record of `records`, with the step counter each
/// state had at that point.
fn history(case_id: &str, records: &[LogRecord], from: u64) -> Vec<PushEvent> {
    let mut step = 0;
    let mut out = Vec::new();
    for r in records {
        if matches!(r.event, LogEvent::Observation { .. }) {
            step += 1;
        }
        if r.revision >= from {
            out.push(PushEvent::from_record(case_id, step, r));
        }
    }
    out
}

pub struct CaseSlot {
    session: Mutex<Session>,
    events: broadcast::Sender<PushEvent>,
}

impl CaseSlot {
    fn new(session: Session) -> Self {
        let (events, _) = broadcast::channel(CHANNEL_CAPACITY);
        Self {
            session: Mutex::new(session),
            events,
        }
    }

    /// Exclusive access. Poisoning is ignored: every mutation leaves the
    /// session consistent before it can panic.
    pub fn lock(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs a mutation and publishes the record it produced while still
    /// holding the lock, so subscribers see revisions in order.
    fn mutate<T>(
        &self,
        f: impl FnOnce(&mut Session) -> Result<(T, LogRecord), SessionError>,
    ) -> Result<T, SessionError> {
        let mut session = self.lock();
        let (value, record) = f(&mut session)?;
        let event = PushEvent::from_record(session.id(), session.state().step(), &record);
        // no subscribers is not an error
        let _ = self.events.send(event);
        Ok(value)
    }

    /// Records from revision `from` on, plus a receiver for everything after.
    pub fn subscribe(&self, from: u64) -> (Vec<PushEvent>, broadcast::Receiver<PushEvent>) {
        let session = self.lock();
        let backlog = history(session.id(), session.records(), from);
        (backlog, self.events.subscribe())
    }

    fn backlog_after(&self, revision: u64) -> Vec<PushEvent> {
        let session = self.lock();
        history(session.id(), session.records(), revision + 1)
    }
}

/// Ordered, gap-free stream of push events for one case. Falls back to the
/// log when the live channel lags, so a slow reader loses nothing.
pub struct Subscription {
    slot: Arc<CaseSlot>,
    pending: VecDeque<PushEvent>,
    receiver: broadcast::Receiver<PushEvent>,
    last: Option<u64>,
}

impl Subscription {
    pub async fn next(&mut self) -> Option<PushEvent> {
        loop {
            if let Some(e) = self.pending.pop_front() {
                if self.last.is_some_and(|r| e.revision <= r) {
                    continue;
                }
                self.last = Some(e.revision);
                return Some(e);
            }
            match self.receiver.recv().await {
                Ok(e) => self.pending.push_back(e),
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    let after = self.last.unwrap_or(0);
                    self.pending.extend(self.slot.backlog_after(after));
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub id: String,
    pub name: String,
    pub revision: u64,
}

type ProviderFn = dyn Fn(&CaseFile) -> Arc<dyn EmbeddingProvider> + Send + Sync;

/// All live cases. Distinct cases mutate in parallel; one case mutates
/// under its own lock.
pub struct SessionStore {
    cases: RwLock<BTreeMap<String, Arc<CaseSlot>>>,
    counter: AtomicU64,
    log_dir: Option<PathBuf>,
    provider_for: Box<ProviderFn>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("cannot restore `{}`: {source}", path.display())]
    Restore { path: PathBuf, source: ReplayError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SessionStore {
    /// In-memory store with hashed embeddings.
    pub fn in_memory() -> Self {
        Self::with_provider(None, Box::new(default_provider))
    }

    /// Persists each case to `<dir>/<id>.jsonl` and restores any logs found
    /// there by replaying them.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let store = Self::with_provider(Some(dir.as_ref().to_path_buf()), Box::new(default_provider));
        store.restore()?;
        Ok(store)
    }

    pub fn with_provider(log_dir: Option<PathBuf>, provider_for: Box<ProviderFn>) -> Self {
        Self {
            cases: RwLock::new(BTreeMap::new()),
            counter: AtomicU64::new(1),
            log_dir,
            provider_for,
        }
    }

    fn restore(&self) -> Result<(), StoreError> {
        let Some(dir) = &self.log_dir else { return Ok(()) };
        std::fs::create_dir_all(dir)?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let fail = |source| StoreError::Restore {
                path: path.clone(),
                source,
            };
            let records = crate::log::read_log(&path).map_err(|e| fail(e.into()))?;
            let mut session = replay_records(&records, &*self.provider_for).map_err(fail)?;
            session.resume_log(&path)?;
            if let Some(n) = session.id().strip_prefix("case-").and_then(|n| n.parse::<u64>().ok()) {
                self.counter.fetch_max(n + 1, Ordering::SeqCst);
            }
            let id = session.id().to_string();
            self.write().insert(id, Arc::new(CaseSlot::new(session)));
        }
        Ok(())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, BTreeMap<String, Arc<CaseSlot>>> {
        self.cases.write().unwrap_or_else(|e| e.into_inner())
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, BTreeMap<String, Arc<CaseSlot>>> {
        self.cases.read().unwrap_or_else(|e| e.into_inner())
    }

    fn next_id(&self) -> String {
        format!("case-{}", self.counter.fetch_add(1, Ordering::SeqCst))
    }

    fn register(&self, mut session: Session) -> Result<String, SessionError> {
        if let Some(dir) = &self.log_dir {
            std::fs::create_dir_all(dir)?;
            session.persist_to(dir.join(format!("{}.jsonl", session.id())))?;
        }
        let id = session.id().to_string();
        self.write().insert(id.clone(), Arc::new(CaseSlot::new(session)));
        Ok(id)
    }

    pub fn create(&self, case: CaseFile) -> Result<String, SessionError> {
        let provider = (self.provider_for)(&case);
        let session = Session::create(self.next_id(), case, provider)?;
        self.register(session)
    }

    pub fn slot(&self, id: &str) -> Result<Arc<CaseSlot>, SessionError> {
        self.read()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownCase(id.to_string()))
    }

    pub fn list(&self) -> Vec<CaseSummary> {
        self.read()
            .values()
            .map(|slot| {
                let s = slot.lock();
                CaseSummary {
                    id: s.id().to_string(),
                    name: s.case().name.clone(),
                    revision: s.revision(),
                }
            })
            .collect()
    }

    /// Runs `f` against a consistent snapshot of the case.
    pub fn read_case<T>(&self, id: &str, f: impl FnOnce(&Session) -> T) -> Result<T, SessionError> {
        let slot = self.slot(id)?;
        let session = slot.lock();
        Ok(f(&session))
    }

    pub fn apply_observation(&self, id: &str, doc: ObservationDoc) -> Result<LogRecord, SessionError> {
        self.slot(id)?
            .mutate(|s| s.apply_observation(doc).map(|r| (r.clone(), r)))
    }

    pub fn override_interference(&self, id: &str, i: usize, j: usize, value: f64) -> Result<LogRecord, SessionError> {
        self.slot(id)?
            .mutate(|s| s.override_interference(i, j, value).map(|r| (r.clone(), r)))
    }

    pub fn force_collapse(&self, id: &str) -> Result<(CollapseOutcome, LogRecord), SessionError> {
        self.slot(id)?
            .mutate(|s| s.force_collapse().map(|(o, r)| ((o, r.clone()), r)))
    }

    pub fn fork(&self, id: &str, request: &ForkRequest) -> Result<String, SessionError> {
        let slot = self.slot(id)?;
        let fork = {
            let parent = slot.lock();
            parent.fork(self.next_id(), request)?
        };
        self.register(fork)
    }

    pub fn subscribe(&self, id: &str, from: u64) -> Result<Subscription, SessionError> {
        let slot = self.slot(id)?;
        let (backlog, receiver) = slot.subscribe(from);
        Ok(Subscription {
            slot,
            pending: backlog.into(),
            receiver,
            last: None,
        })
    }
}
