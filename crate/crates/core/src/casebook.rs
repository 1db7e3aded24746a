//! Canonical case-file JSON and the bundled fixtures.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "name": "...",
//!   "config": {"eta": 0.1, "aggregation": "sum", "collapse_threshold": 0.6,
//!              "hybrid_ratio": 0.8, "interference_offset": 0.5, "embed_dim": 256},
//!   "hypotheses": [{"id": "H1", "label": "...", "statement": "..."}],
//!   "observations": [{"id": "O1", "statement": "...", "weight": 1.0,
//!                     "overrides": {"H1": "check", "H2": -0.5}}],
//!   "interference_overrides": [{"i": 1, "j": 2, "value": -0.9}]
//! }
//! ```
//!
//! Override values are numbers in `[-1, 1]` or the marks `"check"` (+1),
//! `"cross"` (-1) and `"ambiguous"` (0). Interference pairs are 1-based
//! hypothesis indices. Unknown fields are rejected. Observation sequence
//! numbers are the 1-based array positions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate, CaseFile, DynamicsConfig, Hypothesis, InterferenceOverride, Observation, Violation};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignMark {
    Check,
    Cross,
    Ambiguous,
}

pub fn sign_to_projection(mark: SignMark) -> f64 {
    match mark {
        SignMark::Check => 1.0,
        SignMark::Cross => -1.0,
        SignMark::Ambiguous => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OverrideValue {
    Mark(SignMark),
    Number(f64),
}

impl OverrideValue {
    pub fn value(self) -> f64 {
        match self {
            Self::Mark(m) => sign_to_projection(m),
            Self::Number(v) => v,
        }
    }

    /// Exact ±1 and 0 are written as marks, everything else as a number.
    pub fn canonical(v: f64) -> Self {
        if v == 1.0 {
            Self::Mark(SignMark::Check)
        } else if v == -1.0 {
            Self::Mark(SignMark::Cross)
        } else if v == 0.0 {
            Self::Mark(SignMark::Ambiguous)
        } else {
            Self::Number(v)
        }
    }
}

#[derive(Debug, Error)]
pub enum CasebookError {
    #[error("malformed JSON: {0}")]
    Parse(serde_json::Error),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("case failed validation: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    ValidationFailed(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for CasebookError {
    fn from(e: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => Self::SchemaViolation(e.to_string()),
            Category::Io => Self::Io(e.into()),
            Category::Syntax | Category::Eof => Self::Parse(e),
        }
    }
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub eta: f64,
    pub aggregation: crate::model::Aggregation,
    pub collapse_threshold: f64,
    pub hybrid_ratio: f64,
    pub interference_offset: f64,
    pub embed_dim: usize,
}

impl Default for ConfigDoc {
    fn default() -> Self {
        DynamicsConfig::default().into()
    }
}

impl From<DynamicsConfig> for ConfigDoc {
    fn from(c: DynamicsConfig) -> Self {
        Self {
            eta: c.eta,
            aggregation: c.aggregation,
            collapse_threshold: c.collapse_threshold,
            hybrid_ratio: c.hybrid_ratio,
            interference_offset: c.interference_offset,
            embed_dim: c.embed_dim,
        }
    }
}

impl From<ConfigDoc> for DynamicsConfig {
    fn from(c: ConfigDoc) -> Self {
        Self {
            eta: c.eta,
            aggregation: c.aggregation,
            collapse_threshold: c.collapse_threshold,
            hybrid_ratio: c.hybrid_ratio,
            interference_offset: c.interference_offset,
            embed_dim: c.embed_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisDoc {
    pub id: String,
    pub label: String,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationDoc {
    pub id: String,
    pub statement: String,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, OverrideValue>,
}

impl ObservationDoc {
    pub fn into_observation(self, sequence: u64) -> Observation {
        Observation {
            id: self.id,
            statement: self.statement,
            weight: self.weight,
            polarity_overrides: self.overrides.into_iter().map(|(k, v)| (k, v.value())).collect(),
            sequence,
        }
    }
}

impl From<&Observation> for ObservationDoc {
    fn from(o: &Observation) -> Self {
        Self {
            id: o.id.clone(),
            statement: o.statement.clone(),
            weight: o.weight,
            overrides: o
                .polarity_overrides
                .iter()
                .map(|(k, &v)| (k.clone(), OverrideValue::canonical(v)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDoc {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub config: ConfigDoc,
    pub hypotheses: Vec<HypothesisDoc>,
    #[serde(default)]
    pub observations: Vec<ObservationDoc>,
    #[serde(default)]
    pub interference_overrides: Vec<InterferenceOverride>,
}

impl CaseDoc {
    /// Converts without validating. Record embeddings are not part of the
    /// format and come back as `None`.
    pub fn into_case(self) -> Result<CaseFile, CasebookError> {
        if self.schema != SCHEMA_VERSION {
            return Err(CasebookError::SchemaViolation(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        Ok(CaseFile {
            name: self.name,
            hypotheses: self
                .hypotheses
                .into_iter()
                .map(|h| Hypothesis::new(h.id, h.label, h.statement))
                .collect(),
            observations: self
                .observations
                .into_iter()
                .enumerate()
                .map(|(i, o)| o.into_observation(i as u64 + 1))
                .collect(),
            config: self.config.into(),
            interference_overrides: self.interference_overrides,
        })
    }
}

impl From<&CaseFile> for CaseDoc {
    fn from(case: &CaseFile) -> Self {
        let mut observations: Vec<&Observation> = case.observations.iter().collect();
        observations.sort_by_key(|o| o.sequence);
        Self {
            schema: SCHEMA_VERSION,
            name: case.name.clone(),
            config: case.config.clone().into(),
            hypotheses: case
                .hypotheses
                .iter()
                .map(|h| HypothesisDoc {
                    id: h.id.clone(),
                    label: h.label.clone(),
                    statement: h.statement.clone(),
                })
                .collect(),
            observations: observations.into_iter().map(ObservationDoc::from).collect(),
            interference_overrides: case.interference_overrides.clone(),
        }
    }
}

/// Parses and validates a case file.
pub fn load_case(source: &str) -> Result<CaseFile, CasebookError> {
    let doc: CaseDoc = serde_json::from_str(source)?;
    let case = doc.into_case()?;
    let violations = validate(&case);
    if !violations.is_empty() {
        return Err(CasebookError::ValidationFailed(violations));
    }
    Ok(case)
}

pub fn load_case_file(path: impl AsRef<Path>) -> Result<CaseFile, CasebookError> {
    load_case(&std::fs::read_to_string(path)?)
}

/// Canonical pretty-printed JSON with a trailing newline.
pub fn serialize_case(case: &CaseFile) -> String {
    let mut s = serde_json::to_string_pretty(&CaseDoc::from(case)).expect("case serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureManifest {
    pub id: &'static str,
    pub description: &'static str,
    pub source: &'static str,
    pub case: CaseFile,
}

const FIXTURES: &[(&str, &str, &str, &str)] = &[
    (
        "ludwig",
        "Death of Ludwig II and Dr. Gudden: five hypotheses against seven historical observations",
        "hypothesis projection matrix, Ludwig II case",
        include_str!("../fixtures/ludwig.json"),
    ),
    (
        "bossetti",
        "Bossetti-Gambirasio forensic DNA case, observations weighted by link strength",
        "hypothesis projection matrix and interference map, Bossetti-Gambirasio case",
        include_str!("../fixtures/bossetti.json"),
    ),
    (
        "medical",
        "Botulism versus GBS/MFS under contradictory early findings",
        "clinical diagnosis case with parallel treatment",
        include_str!("../fixtures/medical.json"),
    ),
    (
        "drift",
        "Continental drift versus fixism",
        "geology case, drift to plate tectonics",
        include_str!("../fixtures/drift.json"),
    ),
];

/// Every bundled fixture, parsed and validated.
pub fn list_fixtures() -> Vec<FixtureManifest> {
    FIXTURES
        .iter()
        .map(|&(id, description, source, json)| FixtureManifest {
            id,
            description,
            source,
            case: load_case(json).unwrap_or_else(|e| panic!("bundled fixture {id} is invalid: {e}")),
        })
        .collect()
}

pub fn fixture(id: &str) -> Option<FixtureManifest> {
    list_fixtures().into_iter().find(|f| f.id == id)
}

/// Raw JSON of a bundled fixture.
pub fn fixture_source(id: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|f| f.0 == id).map(|f| f.3)
}
