//! Eliminative baseline: strike every hypothesis that some observation
//! contradicts, keep the rest. Compared side by side with the amplitude run.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, DynamicsError};
use crate::embed::EmbeddingProvider;
use crate::model::{CaseFile, CollapseKind, CollapseOutcome, ProjectionMatrix};

#[derive(Debug, Error)]
pub enum ClassicalError {
    #[error(
        "projection ({hypothesis}, {observation}) = {value} is not a qualitative mark (-1, 0 or +1) from the case file"
    )]
    NonQualitativeMatrix {
        hypothesis: String,
        observation: String,
        value: f64,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EliminationResult {
    /// Surviving hypothesis ids, in hypothesis order.
    pub survivors: Vec<String>,
    /// Eliminated hypothesis id → first contradicting observation id.
    pub eliminated: BTreeMap<String, String>,
}

/// A hypothesis is eliminated iff some observation projects `-1` onto it.
/// An ambiguous mark (`0`) counts as compatible.
pub fn eliminate(projections: &ProjectionMatrix) -> Result<EliminationResult, ClassicalError> {
    for (j, column) in projections.columns.iter().enumerate() {
        for (i, &value) in column.iter().enumerate() {
            if value != 1.0 && value != -1.0 && value != 0.0 {
                return Err(ClassicalError::NonQualitativeMatrix {
                    hypothesis: projections.hypothesis_ids[i].clone(),
                    observation: projections.observation_ids[j].clone(),
                    value,
                });
            }
        }
    }
    let mut survivors = Vec::new();
    let mut eliminated = BTreeMap::new();
    for (i, id) in projections.hypothesis_ids.iter().enumerate() {
        match projections.columns.iter().position(|c| c[i] == -1.0) {
            Some(j) => {
                eliminated.insert(id.clone(), projections.observation_ids[j].clone());
            }
            None => survivors.push(id.clone()),
        }
    }
    Ok(EliminationResult { survivors, eliminated })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceFlag {
    /// Elimination left no survivor.
    Deadlock,
    /// Elimination closed on a single survivor while the amplitudes did not
    /// reach a dominant outcome.
    PrematureClosure,
    /// The dominant hypothesis survived elimination.
    Agreement,
    /// The dominant hypothesis was eliminated while others survived.
    Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumSummary {
    pub outcome: CollapseOutcome,
    pub amplitudes: Vec<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub case: String,
    pub hypotheses: Vec<String>,
    pub classical: EliminationResult,
    pub quantum: QuantumSummary,
    pub flags: Vec<DivergenceFlag>,
}

fn flags_for(classical: &EliminationResult, outcome: &CollapseOutcome) -> Vec<DivergenceFlag> {
    let mut flags = Vec::new();
    if classical.survivors.is_empty() {
        flags.push(DivergenceFlag::Deadlock);
    }
    if classical.survivors.len() == 1 && outcome.kind != CollapseKind::Dominant {
        flags.push(DivergenceFlag::PrematureClosure);
    }
    if outcome.kind == CollapseKind::Dominant {
        let winner = &outcome.members[0];
        if classical.survivors.contains(winner) {
            flags.push(DivergenceFlag::Agreement);
        } else if !classical.survivors.is_empty() {
            flags.push(DivergenceFlag::Divergence);
        }
    }
    flags
}

/// Runs elimination and the amplitude dynamics on the same case.
///
/// Requires every projection to be a qualitative mark, so embedding-only
/// cases fail with [`ClassicalError::NonQualitativeMatrix`].
pub fn compare(case: &CaseFile, provider: &dyn EmbeddingProvider) -> Result<ComparisonReport, ClassicalError> {
    let projections = dynamics::projection_matrix(case, provider)?;
    // a cosine that happens to land on 0 or ±1 is still not a mark
    for (j, o) in case.observations.iter().enumerate() {
        if let Some(h) = case
            .hypotheses
            .iter()
            .position(|h| !o.polarity_overrides.contains_key(&h.id))
        {
            return Err(ClassicalError::NonQualitativeMatrix {
                hypothesis: case.hypotheses[h].id.clone(),
                observation: o.id.clone(),
                value: projections.columns[j][h],
            });
        }
    }
    let classical = eliminate(&projections)?;
    let run = dynamics::run(case, provider)?;
    let flags = flags_for(&classical, &run.outcome);
    Ok(ComparisonReport {
        case: case.name.clone(),
        hypotheses: case.hypothesis_ids(),
        classical,
        quantum: QuantumSummary {
            amplitudes: run.state.amplitudes().to_vec(),
            steps: run.state.step(),
            outcome: run.outcome,
        },
        flags,
    })
}

impl ComparisonReport {
    /// Fixed-width text table, one row per hypothesis.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "case: {}", self.case);
        let _ = writeln!(
            out,
            "{:<10} {:<22} {:>10} {:>8}",
            "hypothesis", "classical", "amplitude", "weight"
        );
        for (i, id) in self.hypotheses.iter().enumerate() {
            let status = match self.classical.eliminated.get(id) {
                Some(o) => format!("eliminated by {o}"),
                None => "survives".to_string(),
            };
            let a = self.quantum.amplitudes[i];
            let _ = writeln!(out, "{id:<10} {status:<22} {a:>10.5} {:>8.5}", a * a);
        }
        let o = &self.quantum.outcome;
        let _ = writeln!(
            out,
            "quantum: {} {{{}}} confidence {:.5} after {} step(s)",
            o.kind,
            o.members.join(", "),
            o.confidence,
            self.quantum.steps
        );
        let flags: Vec<String> = self
            .flags
            .iter()
            .map(|f| {
                serde_json::to_value(f)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default()
            })
            .collect();
        let _ = writeln!(
            out,
            "flags: {}",
            if flags.is_empty() {
                "none".into()
            } else {
                flags.join(", ")
            }
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProjectionSource;

    fn matrix(rows: &[&[f64]]) -> ProjectionMatrix {
        let n = rows.len();
        let m = rows[0].len();
        let mut pm = ProjectionMatrix::new((1..=n).map(|i| format!("H{i}")).collect());
        for j in 0..m {
            pm.push_column(
                format!("O{}", j + 1),
                rows.iter().map(|r| r[j]).collect(),
                ProjectionSource::Fixture,
            );
        }
        pm
    }

    #[test]
    fn all_check_matrix_keeps_everyone() {
        let r = eliminate(&matrix(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert_eq!(r.survivors, vec!["H1", "H2"]);
        assert!(r.eliminated.is_empty());
    }

    #[test]
    fn records_first_contradiction_and_treats_zero_as_compatible() {
        let r = eliminate(&matrix(&[&[1.0, -1.0, -1.0], &[0.0, 0.0, 1.0]])).unwrap();
        assert_eq!(r.survivors, vec!["H2"]);
        assert_eq!(r.eliminated.get("H1").map(String::as_str), Some("O2"));
    }

    #[test]
    fn rejects_cosine_values() {
        let err = eliminate(&matrix(&[&[0.42], &[1.0]])).unwrap_err();
        assert!(matches!(err, ClassicalError::NonQualitativeMatrix { value, .. } if value == 0.42));
    }

    #[test]
    fn flag_rules() {
        let dominant = |id: &str| CollapseOutcome {
            kind: CollapseKind::Dominant,
            members: vec![id.into()],
            confidence: 0.9,
            synthesized: None,
            tied: vec![],
            forced: false,
        };
        let deferred = CollapseOutcome {
            kind: CollapseKind::Deferred,
            members: vec![],
            ..dominant("H1")
        };
        let none = EliminationResult {
            survivors: vec![],
            eliminated: BTreeMap::new(),
        };
        let one = EliminationResult {
            survivors: vec!["H2".into()],
            eliminated: BTreeMap::new(),
        };
        assert_eq!(flags_for(&none, &dominant("H1")), vec![DivergenceFlag::Deadlock]);
        assert_eq!(flags_for(&one, &dominant("H2")), vec![DivergenceFlag::Agreement]);
        assert_eq!(flags_for(&one, &dominant("H1")), vec![DivergenceFlag::Divergence]);
        assert_eq!(flags_for(&one, &deferred), vec![DivergenceFlag::PrematureClosure]);
    }
}
