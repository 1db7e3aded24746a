//! One live case: the engine state plus the log that produced it.

use std::path::Path;
use std::sync::Arc;

use qabd::casebook::{CaseDoc, ObservationDoc};
use qabd::classical::{self, ClassicalError, ComparisonReport};
use qabd::dynamics::{
    self, build_interference, coherence, evidence_activation, projection_column, synthesize, try_collapse,
    DynamicsError, InterferenceMap, StepTrace,
};
use qabd::model::{
    validate, AbductiveState, CaseFile, CollapseKind, CollapseOutcome, InterferenceMatrix, InterferenceOverride,
    ProjectionMatrix, Violation,
};
use qabd::{EmbeddingProvider, HashingEmbedder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{ForkMarker, LogEvent, LogRecord, LogWriter};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("validation failed: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    ValidationFailed(Vec<Violation>),
    #[error("interference override on the diagonal ({0}, {0})")]
    DiagonalOverride(usize),
    #[error("interference value {0} is outside [-1, 1]")]
    BadValue(f64),
    #[error("hypothesis index ({i}, {j}) outside 1..={n}")]
    BadIndex { i: usize, j: usize, n: usize },
    #[error("revision {requested} is beyond the current revision {current}")]
    BadRevision { requested: u64, current: u64 },
    #[error("observation `{0}` is not in the log")]
    UnknownObservation(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Classical(#[from] ClassicalError),
    #[error("log write failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Read-only view served by `GET /cases/{id}/state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub case_id: String,
    pub revision: u64,
    pub hypotheses: Vec<String>,
    pub amplitudes: Vec<f64>,
    pub coherence: f64,
    pub step: usize,
    pub outcome: CollapseOutcome,
}

/// Body of `POST /cases/{id}/fork`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForkRequest {
    #[serde(default)]
    pub drop_observation_ids: Vec<String>,
    #[serde(default)]
    pub extra_overrides: Vec<InterferenceOverride>,
    /// Parent revision to fork from; the current one when absent.
    #[serde(default)]
    pub at_revision: Option<u64>,
}

pub struct Session {
    id: String,
    case: CaseFile,
    interference: InterferenceMatrix,
    projections: ProjectionMatrix,
    state: AbductiveState,
    traces: Vec<StepTrace>,
    outcome: CollapseOutcome,
    revision: u64,
    records: Vec<LogRecord>,
    sink: Option<LogWriter>,
    provider: Arc<dyn EmbeddingProvider>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("revision", &self.revision)
            .field("amplitudes", &self.state.amplitudes())
            .finish_non_exhaustive()
    }
}

/// The default provider for a case: feature hashing at the configured width.
pub fn default_provider(case: &CaseFile) -> Arc<dyn EmbeddingProvider> {
    Arc::new(HashingEmbedder::new(case.config.embed_dim))
}

fn check_override(n: usize, i: usize, j: usize, value: f64) -> Result<(), SessionError> {
    if i == j {
        return Err(SessionError::DiagonalOverride(i));
    }
    if i == 0 || j == 0 || i > n || j > n {
        return Err(SessionError::BadIndex { i, j, n });
    }
    if !(-1.0..=1.0).contains(&value) {
        return Err(SessionError::BadValue(value));
    }
    Ok(())
}

impl Session {
    /// Opens a case and applies its observations one at a time, so the log
    /// holds one record per observation.
    pub fn create(
        id: impl Into<String>,
        case: CaseFile,
        provider: Arc<dyn EmbeddingProvider>,
    ) -> Result<Self, SessionError> {
        Self::create_with_marker(id.into(), case, None, provider)
    }

    fn create_with_marker(
        id: String,
        mut case: CaseFile,
        forked_from: Option<ForkMarker>,
        provider: Arc<dyn EmbeddingProvider>,
    ) -> Result<Self, SessionError> {
        let violations = validate(&case);
        if !violations.is_empty() {
            return Err(SessionError::ValidationFailed(violations));
        }
        let mut observations = std::mem::take(&mut case.observations);
        observations.sort_by_key(|o| o.sequence);
        let interference =
            build_interference(&case.hypotheses, &case.config, &case.interference_overrides, &*provider)?;
        let state = case.initial_state();
        let created = LogRecord {
            revision: 0,
            amplitudes: state.amplitudes().to_vec(),
            event: LogEvent::Created {
                id: id.clone(),
                case: CaseDoc::from(&case),
                forked_from,
            },
        };
        let outcome = initial_outcome(&case);
        let mut session = Self {
            projections: ProjectionMatrix::new(case.hypothesis_ids()),
            id,
            case,
            interference,
            state,
            traces: Vec::new(),
            outcome,
            revision: 0,
            records: vec![created],
            sink: None,
            provider,
        };
        for o in observations {
            session.apply_observation(ObservationDoc::from(&o))?;
        }
        Ok(session)
    }

    /// Rebuilds from the `created` record alone, without later events.
    pub(crate) fn from_created(
        record: &LogRecord,
        provider_for: impl Fn(&CaseFile) -> Arc<dyn EmbeddingProvider>,
    ) -> Result<Self, crate::replay::ReplayError> {
        use crate::replay::ReplayError;
        let LogEvent::Created { id, case, forked_from } = &record.event else {
            return Err(ReplayError::MissingCreated);
        };
        let case = case
            .clone()
            .into_case()
            .map_err(|e| ReplayError::BadCase(e.to_string()))?;
        let provider = provider_for(&case);
        Self::create_with_marker(id.clone(), case, forked_from.clone(), provider)
            .map_err(|source| ReplayError::Engine { revision: 0, source })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Case with every applied observation, in arrival order.
    pub fn case(&self) -> &CaseFile {
        &self.case
    }

    pub fn state(&self) -> &AbductiveState {
        &self.state
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn traces(&self) -> &[StepTrace] {
        &self.traces
    }

    pub fn interference(&self) -> &InterferenceMatrix {
        &self.interference
    }

    /// Outcome of the collapse check after the latest observation.
    pub fn outcome(&self) -> &CollapseOutcome {
        &self.outcome
    }

    pub fn forked_from(&self) -> Option<&ForkMarker> {
        match &self.records[0].event {
            LogEvent::Created { forked_from, .. } => forked_from.as_ref(),
            _ => None,
        }
    }

    pub fn view(&self) -> StateView {
        StateView {
            case_id: self.id.clone(),
            revision: self.revision,
            hypotheses: self.case.hypothesis_ids(),
            amplitudes: self.state.amplitudes().to_vec(),
            coherence: coherence(&self.state),
            step: self.state.step(),
            outcome: self.outcome.clone(),
        }
    }

    /// Writes every record so far to `path` and appends later ones.
    pub fn persist_to(&mut self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut writer = LogWriter::create(path)?;
        for r in &self.records {
            writer.write(r)?;
        }
        self.sink = Some(writer);
        Ok(())
    }

    /// Continues appending to an existing log whose content equals `records`.
    pub(crate) fn resume_log(&mut self, path: impl AsRef<Path>) -> std::io::Result<()> {
        self.sink = Some(LogWriter::append(path)?);
        Ok(())
    }

    fn commit(&mut self, event: LogEvent, amplitudes: Vec<f64>) -> Result<LogRecord, SessionError> {
        let record = LogRecord {
            revision: self.revision + 1,
            amplitudes,
            event,
        };
        if let Some(sink) = &mut self.sink {
            sink.write(&record)?;
        }
        self.revision += 1;
        self.records.push(record.clone());
        Ok(record)
    }

    /// Runs one engine step. On any error the session and its log are left
    /// as they were.
    pub fn apply_observation(&mut self, doc: ObservationDoc) -> Result<LogRecord, SessionError> {
        let sequence = self.case.next_sequence();
        let observation = doc.clone().into_observation(sequence);
        let mut candidate = self.case.clone();
        candidate.observations.push(observation.clone());
        let violations = validate(&candidate);
        if !violations.is_empty() {
            return Err(SessionError::ValidationFailed(violations));
        }

        let (column, source) = projection_column(&self.case.hypotheses, &observation, &*self.provider)?;
        let mut projections = self.projections.clone();
        projections.push_column(observation.id.clone(), column, source);
        let evidence = evidence_activation(&projections, observation.weight, self.case.config.aggregation);
        let (state, trace) = dynamics::step(
            &self.state,
            &evidence,
            &self.interference,
            self.case.config.eta,
            &observation.id,
        )?;
        let mut outcome = try_collapse(&state, &self.interference, &self.case.config, &self.case.hypotheses);
        synthesize(&mut outcome, &state, &self.case.hypotheses, &*self.provider)?;

        let event = LogEvent::Observation {
            observation: doc,
            sequence,
            trace: trace.clone(),
            outcome: outcome.clone(),
        };
        let record = self.commit(event, state.amplitudes().to_vec())?;
        self.case = candidate;
        self.projections = projections;
        self.state = state;
        self.traces.push(trace);
        self.outcome = outcome;
        Ok(record)
    }

    /// Stores a symmetric override (1-based indices) for future steps. The
    /// current amplitudes are not touched.
    pub fn override_interference(&mut self, i: usize, j: usize, value: f64) -> Result<LogRecord, SessionError> {
        check_override(self.case.hypotheses.len(), i, j, value)?;
        let mut case = self.case.clone();
        case.set_interference_override(InterferenceOverride { i, j, value });
        let interference = build_interference(
            &case.hypotheses,
            &case.config,
            &case.interference_overrides,
            &*self.provider,
        )?;
        let record = self.commit(
            LogEvent::InterferenceOverride { i, j, value },
            self.state.amplitudes().to_vec(),
        )?;
        self.case = case;
        self.interference = interference;
        Ok(record)
    }

    /// Decision under pressure: an outcome is always produced and logged,
    /// the amplitudes stay as they are.
    pub fn force_collapse(&mut self) -> Result<(CollapseOutcome, LogRecord), SessionError> {
        let outcome = dynamics::force_collapse(
            &self.state,
            &self.interference,
            &self.case.config,
            &self.case.hypotheses,
        );
        let record = self.commit(
            LogEvent::Collapse {
                outcome: outcome.clone(),
                forced: true,
            },
            self.state.amplitudes().to_vec(),
        )?;
        Ok((outcome, record))
    }

    pub fn compare(&self) -> Result<ComparisonReport, SessionError> {
        Ok(classical::compare(&self.case, &*self.provider)?)
    }

    pub fn map(&self) -> InterferenceMap {
        dynamics::interference_map(&self.case.hypotheses, &self.interference, Some(&self.state))
    }

    pub fn map_dot(&self) -> String {
        dynamics::interference_dot(&self.case.hypotheses, &self.interference, Some(&self.state))
    }

    /// Replays this log up to `at_revision` into a new case, skipping the
    /// dropped observations, with the extra overrides in force from the start.
    pub fn fork(&self, new_id: impl Into<String>, request: &ForkRequest) -> Result<Session, SessionError> {
        let at = request.at_revision.unwrap_or(self.revision);
        if at > self.revision {
            return Err(SessionError::BadRevision {
                requested: at,
                current: self.revision,
            });
        }
        let history = &self.records[1..=at as usize];
        for id in &request.drop_observation_ids {
            let present = history
                .iter()
                .any(|r| matches!(&r.event, LogEvent::Observation { observation, .. } if &observation.id == id));
            if !present {
                return Err(SessionError::UnknownObservation(id.clone()));
            }
        }
        let LogEvent::Created { case, .. } = &self.records[0].event else {
            unreachable!("revision 0 is always created");
        };
        let mut base = case.clone().into_case().expect("created record holds a valid case");
        for ov in &request.extra_overrides {
            check_override(base.hypotheses.len(), ov.i, ov.j, ov.value)?;
            base.set_interference_override(*ov);
        }
        let marker = ForkMarker {
            parent: self.id.clone(),
            parent_revision: at,
            drop_observation_ids: request.drop_observation_ids.clone(),
            extra_overrides: request.extra_overrides.clone(),
        };
        let mut fork = Session::create_with_marker(new_id.into(), base, Some(marker), self.provider.clone())?;
        for event in fork_events(history, &request.drop_observation_ids) {
            fork.apply_event(event)?;
        }
        Ok(fork)
    }

    /// Applies a logged mutation and returns the record it produces.
    pub(crate) fn apply_event(&mut self, event: &LogEvent) -> Result<LogRecord, SessionError> {
        match event {
            LogEvent::Observation { observation, .. } => self.apply_observation(observation.clone()),
            LogEvent::InterferenceOverride { i, j, value } => self.override_interference(*i, *j, *value),
            LogEvent::Collapse { .. } => self.force_collapse().map(|(_, r)| r),
            LogEvent::Created { .. } => unreachable!("created only appears at revision 0"),
        }
    }
}

/// Parent events a fork re-applies: observations not dropped, and overrides.
/// Forced collapses leave the state alone and are not carried over.
pub(crate) fn fork_events<'a>(history: &'a [LogRecord], drop: &'a [String]) -> impl Iterator<Item = &'a LogEvent> {
    history.iter().map(|r| &r.event).filter(move |e| match e {
        LogEvent::Observation { observation, .. } => !drop.contains(&observation.id),
        LogEvent::InterferenceOverride { .. } => true,
        _ => false,
    })
}

fn initial_outcome(case: &CaseFile) -> CollapseOutcome {
    let n = case.hypotheses.len();
    CollapseOutcome {
        kind: CollapseKind::Deferred,
        members: case.hypothesis_ids(),
        confidence: 1.0 / n as f64,
        synthesized: None,
        tied: Vec::new(),
        forced: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qabd::casebook::fixture;
    use qabd::dynamics::run_all;

    fn session(id: &str) -> Session {
        let mut case = fixture(id).unwrap().case;
        case.observations.clear();
        let provider = default_provider(&case);
        Session::create(format!("{id}-1"), case, provider).unwrap()
    }

    fn docs(id: &str) -> Vec<ObservationDoc> {
        fixture(id)
            .unwrap()
            .case
            .observations
            .iter()
            .map(ObservationDoc::from)
            .collect()
    }

    #[test]
    fn first_observation_moves_off_uniform() {
        let mut s = session("bossetti");
        let r = s.apply_observation(docs("bossetti").remove(0)).unwrap();
        assert_eq!(r.revision, 1);
        assert!(r.amplitudes.windows(2).any(|w| w[0] != w[1]));
        assert!((r.amplitudes.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matches_the_batch_engine_bit_for_bit() {
        let mut s = session("bossetti");
        for d in docs("bossetti") {
            s.apply_observation(d).unwrap();
        }
        let case = fixture("bossetti").unwrap().case;
        let batch = run_all(&case, &*default_provider(&case)).unwrap();
        assert_eq!(s.state(), &batch.state);
        assert_eq!(s.traces(), &batch.traces[..]);
        assert_eq!(s.revision(), 7);
    }

    #[test]
    fn invalid_observation_leaves_no_trace() {
        let mut s = session("medical");
        let mut bad = docs("medical").remove(0);
        bad.weight = 1.5;
        assert!(matches!(
            s.apply_observation(bad),
            Err(SessionError::ValidationFailed(_))
        ));
        let mut dup = docs("medical");
        s.apply_observation(dup.remove(0)).unwrap();
        let again = docs("medical").remove(0);
        assert!(matches!(
            s.apply_observation(again),
            Err(SessionError::ValidationFailed(_))
        ));
        assert_eq!(s.revision(), 1);
        assert_eq!(s.records().len(), 2);
    }

    #[test]
    fn degenerate_step_is_rejected() {
        use qabd::model::{new_case, DynamicsConfig, Hypothesis};
        let hyps = vec![Hypothesis::new("H1", "a", "alpha"), Hypothesis::new("H2", "b", "beta")];
        let cfg = DynamicsConfig {
            eta: 1.0,
            ..DynamicsConfig::default()
        };
        let mut case = new_case("cancel", hyps, cfg).unwrap();
        case.set_interference_override(InterferenceOverride { i: 1, j: 2, value: 0.0 });
        let provider = default_provider(&case);
        let mut s = Session::create("c", case, provider).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut doc = ObservationDoc {
            id: "O1".into(),
            statement: "cancels".into(),
            weight: 1.0,
            overrides: Default::default(),
        };
        doc.overrides
            .insert("H1".into(), qabd::casebook::OverrideValue::Number(-h));
        doc.overrides
            .insert("H2".into(), qabd::casebook::OverrideValue::Number(-h));
        assert!(matches!(
            s.apply_observation(doc),
            Err(SessionError::Dynamics(DynamicsError::DegenerateState { .. }))
        ));
        assert_eq!(s.revision(), 0);
    }

    #[test]
    fn overrides_are_prospective_and_symmetric() {
        let mut s = session("drift");
        s.apply_observation(docs("drift").remove(0)).unwrap();
        let before = s.state().clone();
        let r = s.override_interference(1, 2, -0.9).unwrap();
        assert_eq!(r.revision, 2);
        assert_eq!(s.state(), &before);
        assert_eq!(s.interference().get(0, 1), -0.9);
        assert_eq!(s.interference().get(1, 0), -0.9);
        assert!(matches!(
            s.override_interference(1, 1, 0.2),
            Err(SessionError::DiagonalOverride(1))
        ));
        assert!(matches!(
            s.override_interference(1, 2, 1.2),
            Err(SessionError::BadValue(_))
        ));
        assert!(matches!(
            s.override_interference(1, 3, 0.2),
            Err(SessionError::BadIndex { .. })
        ));
        assert_eq!(s.revision(), 2);
    }

    #[test]
    fn forced_collapse_is_logged_and_pure() {
        let mut s = session("medical");
        let (a, ra) = s.force_collapse().unwrap();
        let (b, rb) = s.force_collapse().unwrap();
        assert_eq!(a, b);
        assert!(a.forced);
        assert_eq!(a.kind, CollapseKind::Dominant);
        assert_eq!(a.members, vec!["H1"]);
        assert_eq!((ra.revision, rb.revision), (1, 2));
        assert_eq!(s.state(), &AbductiveState::uniform(2));
    }

    #[test]
    fn fork_drops_and_overrides() {
        let mut s = session("bossetti");
        for d in docs("bossetti") {
            s.apply_observation(d).unwrap();
        }
        s.force_collapse().unwrap();
        let request = ForkRequest {
            drop_observation_ids: vec!["O7".into()],
            ..ForkRequest::default()
        };
        let fork = s.fork("f", &request).unwrap();
        assert_eq!(fork.revision(), 6);
        assert!(fork.state().weights()[0] < s.state().weights()[0]);
        assert_eq!(fork.forked_from().unwrap().parent, s.id());

        let what_if = ForkRequest {
            extra_overrides: vec![InterferenceOverride { i: 1, j: 2, value: 0.8 }],
            at_revision: Some(3),
            ..ForkRequest::default()
        };
        let w = s.fork("w", &what_if).unwrap();
        assert_eq!(w.revision(), 3);
        assert_eq!(w.interference().get(0, 1), 0.8);

        let missing = ForkRequest {
            drop_observation_ids: vec!["O9".into()],
            ..ForkRequest::default()
        };
        assert!(matches!(
            s.fork("x", &missing),
            Err(SessionError::UnknownObservation(_))
        ));
    }
}
