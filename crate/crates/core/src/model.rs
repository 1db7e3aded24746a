//! Domain types shared by every other module.
//!
//! All types here are plain values. Nothing is mutated in place once a case
//! is running; updates construct new states.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingVector;

/// Tolerance on `Σ α_i² = 1` and on unit-norm embeddings.
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: String,
    pub label: String,
    pub statement: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
}

impl Hypothesis {
    pub fn new(id: impl Into<String>, label: impl Into<String>, statement: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
            statement: statement.into(),
            embedding: None,
        }
    }

    pub fn with_embedding(mut self, embedding: EmbeddingVector) -> Self {
        self.embedding = Some(embedding);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub id: String,
    pub statement: String,
    /// Salience in `(0, 1]`.
    pub weight: f64,
    /// Fixture-mode projections: hypothesis id → value in `[-1, +1]`.
    pub polarity_overrides: BTreeMap<String, f64>,
    /// Arrival index; strictly increasing within a case.
    pub sequence: u64,
}

impl Observation {
    pub fn new(id: impl Into<String>, statement: impl Into<String>, weight: f64, sequence: u64) -> Self {
        Self {
            id: id.into(),
            statement: statement.into(),
            weight,
            polarity_overrides: BTreeMap::new(),
            sequence,
        }
    }

    pub fn with_override(mut self, hypothesis: impl Into<String>, value: f64) -> Self {
        self.polarity_overrides.insert(hypothesis.into(), value);
        self
    }
}

/// Signed real amplitudes over the hypotheses of a case, L2-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbductiveState {
    amplitudes: Vec<f64>,
    step: usize,
}

impl AbductiveState {
    /// Maximum-entropy start: `α_i = 1/√n`.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "state over zero hypotheses");
        let a = 1.0 / (n as f64).sqrt();
        Self {
            amplitudes: vec![a; n],
            step: 0,
        }
    }

    pub fn new(amplitudes: Vec<f64>, step: usize) -> Result<Self, ModelError> {
        if amplitudes.is_empty() {
            return Err(ModelError::InvalidState("empty amplitude vector".into()));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(ModelError::InvalidState("non-finite amplitude".into()));
        }
        let total: f64 = amplitudes.iter().map(|a| a * a).sum();
        if (total - 1.0).abs() >= NORM_TOLERANCE {
            return Err(ModelError::InvalidState(format!("squared amplitudes sum to {total}")));
        }
        Ok(Self { amplitudes, step })
    }

    /// Builds a state without the normalization check. The caller guarantees
    /// the invariant.
    pub(crate) fn from_normalized(amplitudes: Vec<f64>, step: usize) -> Self {
        Self { amplitudes, step }
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Number of observations applied so far.
    pub fn step(&self) -> usize {
        self.step
    }

    /// `α_i²` per hypothesis.
    pub fn weights(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a * a).collect()
    }

    pub fn norm_error(&self) -> f64 {
        let total: f64 = self.amplitudes.iter().map(|a| a * a).sum();
        (total - 1.0).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Derived,
    ExpertOverride,
}

/// Symmetric hypothesis coupling, zero diagonal, entries in `[-1, +1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceMatrix {
    n: usize,
    entries: Vec<f64>,
    provenance: Vec<Provenance>,
}

impl InterferenceMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
            provenance: vec![Provenance::Derived; n * n],
        }
    }

    /// Builds a matrix from a full row-major grid. The grid must already be
    /// symmetric with zero diagonal; entries are clamped to `[-1, +1]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::InvalidInterference(format!(
                    "row {} has length {}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if i == j {
                    if v != 0.0 {
                        return Err(ModelError::InvalidInterference(format!(
                            "diagonal entry {} is non-zero",
                            i + 1
                        )));
                    }
                    continue;
                }
                if v != rows[j][i] {
                    return Err(ModelError::InvalidInterference(format!(
                        "entry ({}, {}) is not symmetric",
                        i + 1,
                        j + 1
                    )));
                }
                m.entries[i * n + j] = v.clamp(-1.0, 1.0);
            }
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Zero-based access.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn provenance(&self, i: usize, j: usize) -> Provenance {
        self.provenance[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`. Diagonal writes are ignored.
    pub(crate) fn set_symmetric(&mut self, i: usize, j: usize, value: f64, provenance: Provenance) {
        if i == j {
            return;
        }
        let v = value.clamp(-1.0, 1.0);
        self.entries[i * self.n + j] = v;
        self.entries[j * self.n + i] = v;
        self.provenance[i * self.n + j] = provenance;
        self.provenance[j * self.n + i] = provenance;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// Same matrix with hypotheses reordered: entry `(a, b)` of the result is
    /// entry `(perm[a], perm[b])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for a in 0..n {
            for b in 0..n {
                out.entries[a * n + b] = self.get(perm[a], perm[b]);
                out.provenance[a * n + b] = self.provenance(perm[a], perm[b]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionSource {
    /// Every entry came from cosine similarity.
    Cosine,
    /// Every entry came from a fixture override.
    Fixture,
    /// Some entries overridden, the rest cosine-derived.
    Mixed,
}

/// `⟨H_i | O_j⟩` for every hypothesis and every applied observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMatrix {
    pub hypothesis_ids: Vec<String>,
    pub observation_ids: Vec<String>,
    /// One column per observation, each of length `hypothesis_ids.len()`.
    pub columns: Vec<Vec<f64>>,
    pub sources: Vec<ProjectionSource>,
}

impl ProjectionMatrix {
    pub fn new(hypothesis_ids: Vec<String>) -> Self {
        Self {
            hypothesis_ids,
            observation_ids: Vec::new(),
            columns: Vec::new(),
            sources: Vec::new(),
        }
    }

    pub fn push_column(&mut self, observation_id: impl Into<String>, column: Vec<f64>, source: ProjectionSource) {
        assert_eq!(column.len(), self.hypothesis_ids.len(), "projection column length");
        self.observation_ids.push(observation_id.into());
        self.columns.push(column);
        self.sources.push(source);
    }

    pub fn rows(&self) -> usize {
        self.hypothesis_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, hypothesis: usize, observation: usize) -> f64 {
        self.columns[observation][hypothesis]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// One observation per step; evidence is the new column scaled by weight.
    #[default]
    Sum,
    /// Batch reading: evidence is the per-hypothesis maximum over every
    /// applied column, scaled by the current observation's weight.
    Max,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Self::Sum),
            "max" => Ok(Self::Max),
            other => Err(format!("unknown aggregation mode `{other}` (expected sum or max)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    /// Learning rate, `> 0`.
    pub eta: f64,
    pub aggregation: Aggregation,
    /// Coherence needed for a dominant collapse, in `(0, 1]`.
    pub collapse_threshold: f64,
    /// Fraction of the top weight a hypothesis needs to join a hybrid, in `(0, 1]`.
    pub hybrid_ratio: f64,
    /// Similarity pivot mapping cosine to signed coupling, in `[0, 1]`.
    pub interference_offset: f64,
    pub embed_dim: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            aggregation: Aggregation::Sum,
            collapse_threshold: 0.6,
            hybrid_ratio: 0.8,
            interference_offset: 0.5,
            embed_dim: 256,
        }
    }
}

impl DynamicsConfig {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.eta.is_finite() && self.eta > 0.0) {
            out.push(Violation::ConfigOutOfRange("eta"));
        }
        if !(self.collapse_threshold > 0.0 && self.collapse_threshold <= 1.0) {
            out.push(Violation::ConfigOutOfRange("collapse_threshold"));
        }
        if !(self.hybrid_ratio > 0.0 && self.hybrid_ratio <= 1.0) {
            out.push(Violation::ConfigOutOfRange("hybrid_ratio"));
        }
        if !(0.0..=1.0).contains(&self.interference_offset) {
            out.push(Violation::ConfigOutOfRange("interference_offset"));
        }
        if self.embed_dim == 0 {
            out.push(Violation::ConfigOutOfRange("embed_dim"));
        }
        out
    }
}

/// Expert coupling for one hypothesis pair, 1-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceOverride {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

impl InterferenceOverride {
    pub fn same_pair(&self, i: usize, j: usize) -> bool {
        (self.i == i && self.j == j) || (self.i == j && self.j == i)
    }
}

/// The unit of persistence and replay.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseFile {
    pub name: String,
    pub hypotheses: Vec<Hypothesis>,
    pub observations: Vec<Observation>,
    pub config: DynamicsConfig,
    pub interference_overrides: Vec<InterferenceOverride>,
}

impl CaseFile {
    pub fn initial_state(&self) -> AbductiveState {
        AbductiveState::uniform(self.hypotheses.len())
    }

    pub fn hypothesis_index(&self, id: &str) -> Option<usize> {
        self.hypotheses.iter().position(|h| h.id == id)
    }

    pub fn hypothesis_ids(&self) -> Vec<String> {
        self.hypotheses.iter().map(|h| h.id.clone()).collect()
    }

    /// Next free arrival index.
    pub fn next_sequence(&self) -> u64 {
        self.observations.iter().map(|o| o.sequence).max().map_or(1, |s| s + 1)
    }

    /// Replaces any override on the same unordered pair, then appends.
    pub fn set_interference_override(&mut self, ov: InterferenceOverride) {
        self.interference_overrides.retain(|o| !o.same_pair(ov.i, ov.j));
        self.interference_overrides.push(ov);
    }
}

/// Starts a case with an empty observation log.
pub fn new_case(
    name: impl Into<String>,
    hypotheses: Vec<Hypothesis>,
    config: DynamicsConfig,
) -> Result<CaseFile, ModelError> {
    if hypotheses.len() < 2 {
        return Err(ModelError::TooFewHypotheses(hypotheses.len()));
    }
    let mut seen = HashSet::new();
    for h in &hypotheses {
        if !seen.insert(h.id.as_str()) {
            return Err(ModelError::DuplicateId(h.id.clone()));
        }
    }
    Ok(CaseFile {
        name: name.into(),
        hypotheses,
        observations: Vec::new(),
        config,
        interference_overrides: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollapseKind {
    Dominant,
    Hybrid,
    Deferred,
}

impl fmt::Display for CollapseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Dominant => "dominant",
            Self::Hybrid => "hybrid",
            Self::Deferred => "deferred",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseOutcome {
    pub kind: CollapseKind,
    /// Hypothesis ids, in hypothesis order.
    pub members: Vec<String>,
    /// `max_i α_i²` when the decision was taken.
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesized: Option<Hypothesis>,
    /// Set when several hypotheses shared the top weight and the lowest index won.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tied: Vec<String>,
    #[serde(default)]
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("a case needs at least 2 hypotheses, got {0}")]
    TooFewHypotheses(usize),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid interference matrix: {0}")]
    InvalidInterference(String),
}

/// One broken invariant, naming the field and the rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    TooFewHypotheses(usize),
    DuplicateId(String),
    EmptyStatement(String),
    EmbeddingNotUnit(String),
    WeightOutOfRange(String),
    OverrideOutOfRange {
        observation: String,
        hypothesis: String,
    },
    UnknownHypothesis {
        observation: String,
        hypothesis: String,
    },
    SequenceNotIncreasing(String),
    /// 1-based pair whose two overrides disagree.
    AsymmetricInterference(usize, usize),
    DiagonalInterference(usize),
    InterferenceOutOfRange(usize, usize),
    InterferenceIndex(usize, usize),
    ConfigOutOfRange(&'static str),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooFewHypotheses(n) => write!(f, "hypotheses: need at least 2, found {n}"),
            Self::DuplicateId(id) => write!(f, "id `{id}`: must be unique within the case"),
            Self::EmptyStatement(id) => write!(f, "{id}.statement: must not be empty"),
            Self::EmbeddingNotUnit(id) => write!(f, "{id}.embedding: must have unit L2 norm"),
            Self::WeightOutOfRange(id) => write!(f, "{id}.weight: must lie in (0, 1]"),
            Self::OverrideOutOfRange {
                observation,
                hypothesis,
            } => {
                write!(f, "{observation}.overrides.{hypothesis}: must lie in [-1, 1]")
            }
            Self::UnknownHypothesis {
                observation,
                hypothesis,
            } => {
                write!(f, "{observation}.overrides.{hypothesis}: unknown hypothesis")
            }
            Self::SequenceNotIncreasing(id) => write!(f, "{id}.sequence: must be strictly increasing"),
            Self::AsymmetricInterference(i, j) => {
                write!(
                    f,
                    "interference_overrides ({i}, {j}): conflicting values for the same pair"
                )
            }
            Self::DiagonalInterference(i) => write!(f, "interference_overrides ({i}, {i}): diagonal must stay 0"),
            Self::InterferenceOutOfRange(i, j) => {
                write!(f, "interference_overrides ({i}, {j}): value must lie in [-1, 1]")
            }
            Self::InterferenceIndex(i, j) => write!(f, "interference_overrides ({i}, {j}): index out of range"),
            Self::ConfigOutOfRange(field) => write!(f, "config.{field}: out of range"),
        }
    }
}

/// Checks every invariant of the case. Empty iff the case is well formed.
pub fn validate(case: &CaseFile) -> Vec<Violation> {
    let mut out = case.config.violations();
    let n = case.hypotheses.len();
    if n < 2 {
        out.push(Violation::TooFewHypotheses(n));
    }

    let mut ids = HashSet::new();
    for h in &case.hypotheses {
        if !ids.insert(h.id.as_str()) {
            out.push(Violation::DuplicateId(h.id.clone()));
        }
        if h.statement.trim().is_empty() {
            out.push(Violation::EmptyStatement(h.id.clone()));
        }
        if let Some(e) = &h.embedding {
            if (e.norm() - 1.0).abs() >= NORM_TOLERANCE {
                out.push(Violation::EmbeddingNotUnit(h.id.clone()));
            }
        }
    }
    let hypothesis_ids: HashSet<&str> = case.hypotheses.iter().map(|h| h.id.as_str()).collect();

    let mut observation_ids = HashSet::new();
    let mut last_sequence: Option<u64> = None;
    for o in &case.observations {
        if !observation_ids.insert(o.id.as_str()) {
            out.push(Violation::DuplicateId(o.id.clone()));
        }
        if o.statement.trim().is_empty() {
            out.push(Violation::EmptyStatement(o.id.clone()));
        }
        if !(o.weight > 0.0 && o.weight <= 1.0) {
            out.push(Violation::WeightOutOfRange(o.id.clone()));
        }
        for (h, &v) in &o.polarity_overrides {
            if !hypothesis_ids.contains(h.as_str()) {
                out.push(Violation::UnknownHypothesis {
                    observation: o.id.clone(),
                    hypothesis: h.clone(),
                });
            }
            if !(-1.0..=1.0).contains(&v) {
                out.push(Violation::OverrideOutOfRange {
                    observation: o.id.clone(),
                    hypothesis: h.clone(),
                });
            }
        }
        if let Some(prev) = last_sequence {
            if o.sequence <= prev {
                out.push(Violation::SequenceNotIncreasing(o.id.clone()));
            }
        }
        last_sequence = Some(o.sequence);
    }

    let mut seen_pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for ov in &case.interference_overrides {
        let (i, j) = (ov.i, ov.j);
        if i == 0 || j == 0 || i > n || j > n {
            out.push(Violation::InterferenceIndex(i, j));
            continue;
        }
        if i == j {
            out.push(Violation::DiagonalInterference(i));
            continue;
        }
        if !(-1.0..=1.0).contains(&ov.value) {
            out.push(Violation::InterferenceOutOfRange(i, j));
        }
        let key = (i.min(j), i.max(j));
        match seen_pairs.get(&key) {
            Some(&prev) if prev != ov.value => out.push(Violation::AsymmetricInterference(key.0, key.1)),
            _ => {
                seen_pairs.insert(key, ov.value);
            }
        }
    }
    out
}
