//! Typed knowledge graph for on-board diagnostics: ontology, store,
//! enhancers, queries and triple import/export.

pub mod canon;
pub mod enhance;
pub mod fixtures;
pub mod model;
pub mod query;
pub mod store;
pub mod triples;

pub use canon::{canonical_form, isomorphic};
pub use enhance::{
    validate_dtc, Association, ClassificationInput, ClassificationKind, ComponentInput, ComponentSetInput, DiagLogInput,
    FaultContextInput, Reason,
};
pub use model::{Concept, Literal, LiteralKind, Predicate};
pub use query::{ComponentSetView, Suspect};
pub use store::{shared, Entity, EntityId, KgError, KnowledgeGraph, Relation, SharedKg, Stats};
pub use triples::{export_triples, import_str, import_triples};
