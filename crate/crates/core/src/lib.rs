//! Amplitude-based abductive reasoning.
//!
//! Competing hypotheses are held as a signed, L2-normalized amplitude vector.
//! Each arriving observation projects onto the hypotheses (cosine similarity in
//! a shared embedding space, or a qualitative ✓/✗ mark), hypotheses couple to
//! each other through a symmetric interference matrix, and the state resolves
//! to a dominant explanation, a hybrid synthesis, or a deliberately deferred
//! decision.
//!
//! Modules:
//!
//! - [`model`]: domain types, validation and case construction.
//! - [`embed`]: embedding providers and the cosine projection kernel.
//! - [`dynamics`]: projection, interference, amplitude update and collapse.
//! - [`classical`]: eliminative baseline and paradigm comparison.
//! - [`casebook`]: canonical case-file JSON and the bundled fixtures.
//!
//! ```
//! use qabd::{casebook, dynamics, embed::HashingEmbedder};
//!
//! let case = casebook::fixture("medical").unwrap().case;
//! let provider = HashingEmbedder::new(case.config.embed_dim);
//! let report = dynamics::run(&case, &provider).unwrap();
//! assert_eq!(report.outcome.kind, qabd::model::CollapseKind::Deferred);
//! ```

pub mod casebook;
pub mod classical;
pub mod dynamics;
pub mod embed;
pub mod model;

pub use casebook::{fixture, list_fixtures, load_case, serialize_case};
pub use classical::{compare, eliminate, ComparisonReport, EliminationResult};
pub use dynamics::{run, RunReport};
pub use embed::{EmbeddingProvider, EmbeddingVector, HashingEmbedder};
pub use model::{AbductiveState, CaseFile, CollapseKind, CollapseOutcome, DynamicsConfig};

/// Floating-point sum whose result does not depend on the order of `values`.
///
/// Terms are sorted by total order before accumulation, so any permutation
/// of the same multiset produces the same bits.
pub(crate) fn order_free_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut terms: Vec<f64> = values.into_iter().collect();
    terms.sort_by(f64::total_cmp);
    terms.into_iter().fold(0.0, |acc, v| acc + v)
}
