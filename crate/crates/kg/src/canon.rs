//! Id-independent canonical form via colour refinement.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use crate::store::{EntityId, KnowledgeGraph};

fn hash_of(value: impl Hash) -> u64 {
    let mut h = DefaultHasher::new();
    value.hash(&mut h);
    h.finish()
}

/// Canonical description of a graph: sorted entity colours and sorted
/// coloured edges. Equal forms for isomorphic graphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalForm {
    pub entities: Vec<u64>,
    pub relations: Vec<(u64, String, Option<u32>, u64)>,
}

fn colours(kg: &KnowledgeGraph) -> BTreeMap<EntityId, u64> {
    let mut colour: BTreeMap<EntityId, u64> = kg
        .entities()
        .map(|e| {
            let attributes = serde_json::to_string(&e.attributes).expect("attributes serialize");
            (e.id, hash_of((e.concept.as_str(), attributes)))
        })
        .collect();
    let mut classes = colour.values().collect::<BTreeSet<_>>().len();
    for _ in 0..kg.len() {
        let mut signature: BTreeMap<EntityId, Vec<(u8, &str, Option<u32>, u64)>> =
            colour.keys().map(|id| (*id, Vec::new())).collect();
        for r in kg.relations() {
            let p = r.predicate.as_str();
            signature.get_mut(&r.subject).expect("subject").push((0, p, r.order, colour[&r.object]));
            signature.get_mut(&r.object).expect("object").push((1, p, r.order, colour[&r.subject]));
        }
        let next: BTreeMap<EntityId, u64> = signature
            .into_iter()
            .map(|(id, mut sig)| {
                sig.sort_unstable();
                (id, hash_of((colour[&id], sig)))
            })
            .collect();
        let next_classes = next.values().collect::<BTreeSet<_>>().len();
        colour = next;
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
    colour
}

pub fn canonical_form(kg: &KnowledgeGraph) -> CanonicalForm {
    let colour = colours(kg);
    let mut entities: Vec<u64> = colour.values().copied().collect();
    entities.sort_unstable();
    let mut relations: Vec<_> = kg
        .relations()
        .iter()
        .map(|r| (colour[&r.subject], r.predicate.as_str().to_string(), r.order, colour[&r.object]))
        .collect();
    relations.sort();
    CanonicalForm { entities, relations }
}

/// Structural equality up to renaming of entity ids.
pub fn isomorphic(a: &KnowledgeGraph, b: &KnowledgeGraph) -> bool {
    a.len() == b.len() && a.relations().len() == b.relations().len() && canonical_form(a) == canonical_form(b)
}
