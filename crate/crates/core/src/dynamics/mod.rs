//! The amplitude engine.
//!
//! One step of the update, for hypothesis `i` with evidence `e_i`:
//!
//! ```text
//! α̃_i = α_i + η (e_i + Σ_{k≠i} I_ik α_k)
//! α'  = α̃ / ‖α̃‖
//! ```
//!
//! Projections come from cosine similarity between hypothesis and observation
//! embeddings, unless the observation carries a fixture override for that
//! hypothesis. After each step the state is tested for collapse: dominant when
//! `max α_i²` reaches the threshold, hybrid when several hypotheses stay close
//! to the top and are pairwise constructively coupled, deferred otherwise.

mod export;
mod narrative;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine, EmbedError, EmbeddingProvider, EmbeddingVector, ZERO_NORM};
use crate::model::{
    validate, AbductiveState, Aggregation, CaseFile, CollapseKind, CollapseOutcome, DynamicsConfig, Hypothesis,
    InterferenceMatrix, InterferenceOverride, Observation, ProjectionMatrix, ProjectionSource, Provenance, Violation,
};
use crate::order_free_sum;

pub use export::{
    interference_dot, interference_map, traces_to_jsonl, EdgeStrength, EdgeStyle, InterferenceMap, MapEdge, MapNode,
};
pub use narrative::{HookError, NarrativeHook};

/// Absolute slack on the `α_i² = 1/n` boundary when listing deferred members.
pub const UNIFORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("degenerate state: pre-normalization norm {norm:e} is below 1e-12")]
    DegenerateState { norm: f64 },
    #[error("degenerate mix: weighted embedding norm {norm:e} is below 1e-12")]
    DegenerateMix { norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("learning rate must be finite and positive, got {0}")]
    BadEta(f64),
    #[error("mix needs at least 2 distinct members")]
    MixTooSmall,
    #[error("invalid case: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidCase(Vec<Violation>),
}

/// Per-hypothesis evidence `e_i ∈ [-1, 1]` for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvidenceVector(Vec<f64>);

impl EvidenceVector {
    /// Clamps every entry into `[-1, 1]`.
    pub fn new(values: Vec<f64>) -> Self {
        Self(values.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Audit record of one update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub observation_id: String,
    pub evidence: EvidenceVector,
    /// `Σ_{k≠i} I_ik α_k` per hypothesis, before scaling by η.
    pub interference_term: Vec<f64>,
    /// `α̃` before normalization.
    pub pre_norm: Vec<f64>,
    pub post: AbductiveState,
}

fn embedding_of(h: &Hypothesis, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector, EmbedError> {
    match &h.embedding {
        Some(e) => Ok(e.clone()),
        None => provider.embed(&h.statement),
    }
}

/// `⟨H | O⟩`: the fixture override when present, otherwise cosine similarity.
pub fn project(
    hypothesis: &Hypothesis,
    observation: &Observation,
    provider: &dyn EmbeddingProvider,
) -> Result<f64, DynamicsError> {
    if let Some(&v) = observation.polarity_overrides.get(&hypothesis.id) {
        return Ok(v.clamp(-1.0, 1.0));
    }
    let h = embedding_of(hypothesis, provider)?;
    let o = provider.embed(&observation.statement)?;
    Ok(cosine(&h, &o)?)
}

/// Lazily embedded hypotheses for a case; each statement is embedded at most once.
struct HypothesisEmbeddings<'a> {
    hypotheses: &'a [Hypothesis],
    cache: Vec<Option<EmbeddingVector>>,
}

impl<'a> HypothesisEmbeddings<'a> {
    fn new(hypotheses: &'a [Hypothesis]) -> Self {
        Self {
            hypotheses,
            cache: vec![None; hypotheses.len()],
        }
    }

    fn get(&mut self, i: usize, provider: &dyn EmbeddingProvider) -> Result<&EmbeddingVector, EmbedError> {
        if self.cache[i].is_none() {
            self.cache[i] = Some(embedding_of(&self.hypotheses[i], provider)?);
        }
        Ok(self.cache[i].as_ref().expect("filled above"))
    }
}

fn project_column(
    embeddings: &mut HypothesisEmbeddings<'_>,
    observation: &Observation,
    provider: &dyn EmbeddingProvider,
) -> Result<(Vec<f64>, ProjectionSource), DynamicsError> {
    let mut observation_embedding: Option<EmbeddingVector> = None;
    let mut column = Vec::with_capacity(embeddings.hypotheses.len());
    let mut overridden = 0;
    for i in 0..embeddings.hypotheses.len() {
        let h = &embeddings.hypotheses[i];
        if let Some(&v) = observation.polarity_overrides.get(&h.id) {
            column.push(v.clamp(-1.0, 1.0));
            overridden += 1;
            continue;
        }
        if observation_embedding.is_none() {
            observation_embedding = Some(provider.embed(&observation.statement)?);
        }
        let o = observation_embedding.as_ref().expect("filled above");
        column.push(cosine(embeddings.get(i, provider)?, o)?);
    }
    let source = match overridden {
        0 => ProjectionSource::Cosine,
        k if k == column.len() => ProjectionSource::Fixture,
        _ => ProjectionSource::Mixed,
    };
    Ok((column, source))
}

/// Projection column of one observation against every hypothesis.
pub fn projection_column(
    hypotheses: &[Hypothesis],
    observation: &Observation,
    provider: &dyn EmbeddingProvider,
) -> Result<(Vec<f64>, ProjectionSource), DynamicsError> {
    project_column(&mut HypothesisEmbeddings::new(hypotheses), observation, provider)
}

/// Full `n × m` projection matrix for every observation of the case.
pub fn projection_matrix(case: &CaseFile, provider: &dyn EmbeddingProvider) -> Result<ProjectionMatrix, DynamicsError> {
    let mut embeddings = HypothesisEmbeddings::new(&case.hypotheses);
    let mut pm = ProjectionMatrix::new(case.hypothesis_ids());
    for o in &case.observations {
        let (column, source) = project_column(&mut embeddings, o, provider)?;
        pm.push_column(o.id.clone(), column, source);
    }
    Ok(pm)
}

/// `I_ij = clamp(cos(h_i, h_j) − θ, −1, 1)` off the diagonal, then expert
/// overrides (1-based pairs) on top. Hypotheses are embedded only when some
/// pair is left to derive.
pub fn build_interference(
    hypotheses: &[Hypothesis],
    config: &DynamicsConfig,
    overrides: &[InterferenceOverride],
    provider: &dyn EmbeddingProvider,
) -> Result<InterferenceMatrix, DynamicsError> {
    let n = hypotheses.len();
    let overridden = |i: usize, j: usize| overrides.iter().any(|o| o.same_pair(i + 1, j + 1));
    let mut matrix = InterferenceMatrix::zeros(n);
    let mut embeddings = HypothesisEmbeddings::new(hypotheses);
    for i in 0..n {
        for j in i + 1..n {
            if overridden(i, j) {
                continue;
            }
            let hi = embeddings.get(i, provider)?.clone();
            let c = cosine(&hi, embeddings.get(j, provider)?)?;
            matrix.set_symmetric(i, j, c - config.interference_offset, Provenance::Derived);
        }
    }
    for o in overrides {
        if o.i == o.j || o.i == 0 || o.j == 0 || o.i > n || o.j > n {
            continue;
        }
        matrix.set_symmetric(o.i - 1, o.j - 1, o.value, Provenance::ExpertOverride);
    }
    Ok(matrix)
}

/// Evidence for the step that applies the last column of `applied`.
///
/// `Sum` uses only that column; `Max` takes, per hypothesis, the maximum over
/// every applied column. Both scale by `weight`.
pub fn evidence_activation(applied: &ProjectionMatrix, weight: f64, mode: Aggregation) -> EvidenceVector {
    let n = applied.rows();
    let Some(last) = applied.columns.last() else {
        return EvidenceVector::zeros(n);
    };
    let values = match mode {
        Aggregation::Sum => last.iter().map(|p| weight * p).collect(),
        Aggregation::Max => (0..n)
            .map(|i| {
                let best = applied.columns.iter().map(|c| c[i]).fold(f64::NEG_INFINITY, f64::max);
                weight * best
            })
            .collect(),
    };
    EvidenceVector::new(values)
}

/// Applies one update and normalizes.
///
/// The interference sum and the norm are accumulated order-independently, so
/// relabeling hypotheses permutes the result exactly. When the increment is
/// zero for every hypothesis the input state is returned unchanged.
pub fn step(
    state: &AbductiveState,
    evidence: &EvidenceVector,
    interference: &InterferenceMatrix,
    eta: f64,
    observation_id: &str,
) -> Result<(AbductiveState, StepTrace), DynamicsError> {
    let n = state.len();
    if evidence.len() != n {
        return Err(DynamicsError::DimensionMismatch {
            expected: n,
            found: evidence.len(),
        });
    }
    if interference.len() != n {
        return Err(DynamicsError::DimensionMismatch {
            expected: n,
            found: interference.len(),
        });
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(DynamicsError::BadEta(eta));
    }
    let alpha = state.amplitudes();

    let interference_term: Vec<f64> = (0..n)
        .map(|i| {
            let row = interference.row(i);
            order_free_sum((0..n).filter(|&k| k != i).map(|k| row[k] * alpha[k]))
        })
        .collect();

    let pre_norm: Vec<f64> = (0..n)
        .map(|i| alpha[i] + eta * (evidence.values()[i] + interference_term[i]))
        .collect();

    let post = if pre_norm.iter().zip(alpha).all(|(a, b)| a == b) {
        alpha.to_vec()
    } else {
        let norm = order_free_sum(pre_norm.iter().map(|v| v * v)).sqrt();
        if norm.is_nan() || norm < ZERO_NORM {
            return Err(DynamicsError::DegenerateState { norm });
        }
        pre_norm.iter().map(|v| v / norm).collect()
    };
    let post = AbductiveState::from_normalized(post, state.step() + 1);

    let trace = StepTrace {
        observation_id: observation_id.to_string(),
        evidence: evidence.clone(),
        interference_term,
        pre_norm,
        post: post.clone(),
    };
    Ok((post, trace))
}

/// `max_i α_i²`.
pub fn coherence(state: &AbductiveState) -> f64 {
    state.amplitudes().iter().map(|a| a * a).fold(0.0, f64::max)
}

fn deferred(state: &AbductiveState, hypotheses: &[Hypothesis], confidence: f64) -> CollapseOutcome {
    let uniform = 1.0 / state.len() as f64;
    let members = state
        .amplitudes()
        .iter()
        .zip(hypotheses)
        .filter(|(a, _)| {
            let w = *a * *a;
            w > uniform || (uniform - w).abs() <= UNIFORM_TOLERANCE
        })
        .map(|(_, h)| h.id.clone())
        .collect();
    CollapseOutcome {
        kind: CollapseKind::Deferred,
        members,
        confidence,
        synthesized: None,
        tied: Vec::new(),
        forced: false,
    }
}

/// Decides dominant, hybrid or deferred for the current state.
///
/// Pure in its inputs. A hybrid outcome lists its members but carries no
/// synthesized hypothesis; see [`synthesize`].
pub fn try_collapse(
    state: &AbductiveState,
    interference: &InterferenceMatrix,
    config: &DynamicsConfig,
    hypotheses: &[Hypothesis],
) -> CollapseOutcome {
    let weights = state.weights();
    let top = coherence(state);

    if top >= config.collapse_threshold {
        let tied: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] == top).collect();
        let winner = tied[0];
        return CollapseOutcome {
            kind: CollapseKind::Dominant,
            members: vec![hypotheses[winner].id.clone()],
            confidence: top,
            synthesized: None,
            tied: if tied.len() > 1 {
                tied.iter().map(|&i| hypotheses[i].id.clone()).collect()
            } else {
                Vec::new()
            },
            forced: false,
        };
    }

    let close: Vec<usize> = (0..weights.len())
        .filter(|&i| weights[i] >= config.hybrid_ratio * top)
        .collect();
    let entangled = close
        .iter()
        .all(|&a| close.iter().all(|&b| a == b || interference.get(a, b) > 0.0));
    if close.len() >= 2 && entangled {
        return CollapseOutcome {
            kind: CollapseKind::Hybrid,
            members: close.iter().map(|&i| hypotheses[i].id.clone()).collect(),
            confidence: top,
            synthesized: None,
            tied: Vec::new(),
            forced: false,
        };
    }

    deferred(state, hypotheses, top)
}

/// Collapse used when a decision must be made now: the threshold drops to
/// the current coherence, so the top hypothesis always wins.
pub fn force_collapse(
    state: &AbductiveState,
    interference: &InterferenceMatrix,
    config: &DynamicsConfig,
    hypotheses: &[Hypothesis],
) -> CollapseOutcome {
    let lowered = DynamicsConfig {
        collapse_threshold: coherence(state),
        ..config.clone()
    };
    let mut outcome = try_collapse(state, interference, &lowered, hypotheses);
    outcome.forced = true;
    outcome
}

/// Composite hypothesis from the `|α_i|`-weighted sum of member embeddings.
///
/// `subset` holds zero-based hypothesis indices.
pub fn mix(
    state: &AbductiveState,
    subset: &[usize],
    hypotheses: &[Hypothesis],
    provider: &dyn EmbeddingProvider,
) -> Result<Hypothesis, DynamicsError> {
    let mut members: Vec<usize> = subset.to_vec();
    members.sort_unstable();
    members.dedup();
    if members.len() < 2 {
        return Err(DynamicsError::MixTooSmall);
    }
    let mut acc: Option<Vec<f64>> = None;
    for &i in &members {
        let e = embedding_of(&hypotheses[i], provider)?;
        let weight = state.amplitudes()[i].abs();
        let sum = acc.get_or_insert_with(|| vec![0.0; e.dim()]);
        if sum.len() != e.dim() {
            return Err(DynamicsError::DimensionMismatch {
                expected: sum.len(),
                found: e.dim(),
            });
        }
        for (s, v) in sum.iter_mut().zip(e.values()) {
            *s += weight * v;
        }
    }
    let sum = acc.expect("at least two members");
    let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm.is_nan() || norm < ZERO_NORM {
        return Err(DynamicsError::DegenerateMix { norm });
    }
    let embedding = EmbeddingVector::normalize(sum).map_err(|_| DynamicsError::DegenerateMix { norm })?;

    let id = members
        .iter()
        .map(|&i| hypotheses[i].id.as_str())
        .collect::<Vec<_>>()
        .join("+");
    let labels = members
        .iter()
        .map(|&i| hypotheses[i].label.as_str())
        .collect::<Vec<_>>()
        .join(" + ");
    let label = format!("Synthesis of {labels}");
    let statements = members
        .iter()
        .map(|&i| hypotheses[i].statement.as_str())
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Hypothesis {
        id,
        statement: format!("{label}: {statements}"),
        label,
        embedding: Some(embedding),
    })
}

/// Fills `synthesized` on a hybrid outcome. Other outcomes pass through.
pub fn synthesize(
    outcome: &mut CollapseOutcome,
    state: &AbductiveState,
    hypotheses: &[Hypothesis],
    provider: &dyn EmbeddingProvider,
) -> Result<(), DynamicsError> {
    if outcome.kind != CollapseKind::Hybrid {
        return Ok(());
    }
    let subset: Vec<usize> = outcome
        .members
        .iter()
        .filter_map(|id| hypotheses.iter().position(|h| &h.id == id))
        .collect();
    outcome.synthesized = Some(mix(state, &subset, hypotheses, provider)?);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub state: AbductiveState,
    pub traces: Vec<StepTrace>,
    pub outcome: CollapseOutcome,
    pub interference: InterferenceMatrix,
    pub projections: ProjectionMatrix,
}

/// Folds the observation log in arrival order, testing for collapse after
/// every step. Stops at the first dominant or hybrid outcome; otherwise the
/// final outcome is deferred.
pub fn run(case: &CaseFile, provider: &dyn EmbeddingProvider) -> Result<RunReport, DynamicsError> {
    fold(case, provider, true)
}

/// Applies every observation regardless of intermediate collapse and reports
/// the outcome of the final state.
pub fn run_all(case: &CaseFile, provider: &dyn EmbeddingProvider) -> Result<RunReport, DynamicsError> {
    fold(case, provider, false)
}

fn fold(case: &CaseFile, provider: &dyn EmbeddingProvider, stop_on_collapse: bool) -> Result<RunReport, DynamicsError> {
    let violations = validate(case);
    if !violations.is_empty() {
        return Err(DynamicsError::InvalidCase(violations));
    }
    let interference = build_interference(&case.hypotheses, &case.config, &case.interference_overrides, provider)?;
    let mut state = case.initial_state();
    let mut projections = ProjectionMatrix::new(case.hypothesis_ids());
    let mut traces = Vec::new();
    let mut embeddings = HypothesisEmbeddings::new(&case.hypotheses);

    let mut observations: Vec<&Observation> = case.observations.iter().collect();
    observations.sort_by_key(|o| o.sequence);

    let mut outcome = deferred(&state, &case.hypotheses, coherence(&state));
    for o in observations {
        let (column, source) = project_column(&mut embeddings, o, provider)?;
        projections.push_column(o.id.clone(), column, source);
        let evidence = evidence_activation(&projections, o.weight, case.config.aggregation);
        let (next, trace) = step(&state, &evidence, &interference, case.config.eta, &o.id)?;
        state = next;
        traces.push(trace);
        outcome = try_collapse(&state, &interference, &case.config, &case.hypotheses);
        if stop_on_collapse && outcome.kind != CollapseKind::Deferred {
            break;
        }
    }
    if outcome.kind == CollapseKind::Hybrid {
        synthesize(&mut outcome, &state, &case.hypotheses, provider)?;
    }
    Ok(RunReport {
        state,
        traces,
        outcome,
        interference,
        projections,
    })
}
