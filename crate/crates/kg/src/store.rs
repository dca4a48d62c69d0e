//! Typed entity/relation store.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Concept, Literal, Predicate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KgError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for KgError {
    fn from(e: std::io::Error) -> Self {
        KgError::Io(e.to_string())
    }
}

pub type Result<T, E = KgError> = std::result::Result<T, E>;

/// Opaque store-minted identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u64);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl FromStr for EntityId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.strip_prefix('e')
            .and_then(|n| n.parse().ok())
            .map(EntityId)
            .ok_or_else(|| format!("malformed entity id {s:?}"))
    }
}

impl Serialize for EntityId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EntityId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub concept: Concept,
    pub attributes: BTreeMap<String, Literal>,
}

impl Entity {
    pub fn get(&self, name: &str) -> Option<&Literal> {
        self.attributes.get(name)
    }

    pub fn str(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(Literal::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub subject: EntityId,
    pub predicate: Predicate,
    pub object: EntityId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
}

/// Entity and relation counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub entities: usize,
    pub relations: usize,
    pub revision: u64,
    pub by_concept: BTreeMap<String, usize>,
}

/// In-process knowledge graph.
///
/// Every write is validated against the concept table and the predicate
/// domain/range table; relations never point at missing entities. The
/// revision counter advances only when a write changes the graph.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: BTreeMap<EntityId, Entity>,
    relations: Vec<Relation>,
    keys: HashMap<(Concept, String), EntityId>,
    next_id: u64,
    revision: u64,
}

/// Shared handle: one writer, many readers.
pub type SharedKg = Arc<RwLock<KnowledgeGraph>>;

pub fn shared(kg: KnowledgeGraph) -> SharedKg {
    Arc::new(RwLock::new(kg))
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(&id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn entities_of(&self, concept: Concept) -> impl Iterator<Item = &Entity> {
        self.entities.values().filter(move |e| e.concept.is_a(concept))
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Looks up an entity by its natural key (dtc code, component name, vin, ...).
    pub fn by_key(&self, concept: Concept, key: &str) -> Option<EntityId> {
        self.keys.get(&(concept, key.to_string())).copied()
    }

    pub fn concept_of(&self, id: EntityId) -> Result<Concept> {
        self.entities
            .get(&id)
            .map(|e| e.concept)
            .ok_or_else(|| KgError::Integrity(format!("no entity {id}")))
    }

    pub fn stats(&self) -> Stats {
        let mut by_concept = BTreeMap::new();
        for e in self.entities.values() {
            *by_concept.entry(e.concept.to_string()).or_insert(0) += 1;
        }
        Stats { entities: self.entities.len(), relations: self.relations.len(), revision: self.revision, by_concept }
    }

    /// Objects of `subject --predicate-->`, in insertion order (ordered
    /// predicates by index).
    pub fn objects(&self, subject: EntityId, predicate: Predicate) -> Vec<EntityId> {
        let mut rels: Vec<&Relation> =
            self.relations.iter().filter(|r| r.subject == subject && r.predicate == predicate).collect();
        if predicate.is_ordered() {
            rels.sort_by_key(|r| r.order);
        }
        rels.into_iter().map(|r| r.object).collect()
    }

    /// Subjects of `--predicate--> object`, in insertion order.
    pub fn subjects(&self, predicate: Predicate, object: EntityId) -> Vec<EntityId> {
        self.relations.iter().filter(|r| r.object == object && r.predicate == predicate).map(|r| r.subject).collect()
    }

    pub fn has_relation(&self, subject: EntityId, predicate: Predicate, object: EntityId) -> bool {
        self.relations.iter().any(|r| r.subject == subject && r.predicate == predicate && r.object == object)
    }

    fn validate_attributes(&self, concept: Concept, attributes: &BTreeMap<String, Literal>, id: Option<EntityId>) -> Result<()> {
        for (name, kind) in concept.required() {
            match attributes.get(*name) {
                None => return Err(KgError::Validation(format!("{concept} requires attribute {name}"))),
                Some(v) if v.kind() != *kind => {
                    return Err(KgError::Validation(format!("{concept}.{name} must be {kind:?}, got {:?}", v.kind())))
                }
                _ => {}
            }
        }
        for (name, value) in attributes {
            let finite = match value {
                Literal::Real(r) => r.is_finite(),
                Literal::Series(s) => s.iter().all(|v| v.is_finite()),
                _ => true,
            };
            if !finite {
                return Err(KgError::Validation(format!("{concept}.{name} must be finite")));
            }
        }
        if let Some(Literal::Int(p)) = attributes.get("priority_id") {
            if *p < 0 {
                return Err(KgError::Validation(format!("priority_id must be non-negative, got {p}")));
            }
        }
        if let Some(u) = attributes.get("uncertainty") {
            match u.as_real() {
                Some(u) if (0.0..=1.0).contains(&u) => {}
                _ => return Err(KgError::Validation(format!("uncertainty must be a real in [0,1], got {u:?}"))),
            }
        }
        if concept == Concept::FaultContext {
            let code = attributes["code"].as_str().unwrap_or_default();
            crate::enhance::validate_dtc(code)?;
        }
        if let Some(key) = concept.natural_key() {
            let value = attributes.get(key).and_then(Literal::as_str).unwrap_or_default();
            if value.trim().is_empty() {
                return Err(KgError::Validation(format!("{concept}.{key} must be non-empty")));
            }
            if let Some(existing) = self.by_key(concept, value) {
                if Some(existing) != id {
                    return Err(KgError::Validation(format!("{concept} {value:?} already exists as {existing}")));
                }
            }
        }
        Ok(())
    }

    fn mint(&mut self) -> EntityId {
        self.next_id += 1;
        EntityId(self.next_id)
    }

    /// Creates an entity after validating its attributes.
    pub fn add_entity(&mut self, concept: Concept, attributes: BTreeMap<String, Literal>) -> Result<EntityId> {
        if concept.is_abstract() {
            return Err(KgError::Validation(format!("{concept} is abstract")));
        }
        self.validate_attributes(concept, &attributes, None)?;
        let id = self.mint();
        if let Some(key) = concept.natural_key() {
            let value = attributes[key].as_str().expect("validated").to_string();
            self.keys.insert((concept, value), id);
        }
        self.entities.insert(id, Entity { id, concept, attributes });
        self.revision += 1;
        Ok(id)
    }

    /// Sets one attribute; returns whether anything changed.
    pub fn set_attribute(&mut self, id: EntityId, name: &str, value: impl Into<Literal>) -> Result<bool> {
        let value = value.into();
        let entity = self.entities.get(&id).ok_or_else(|| KgError::Integrity(format!("no entity {id}")))?;
        if entity.attributes.get(name) == Some(&value) {
            return Ok(false);
        }
        let concept = entity.concept;
        let mut attributes = entity.attributes.clone();
        let old_key = concept.natural_key().and_then(|k| attributes.get(k)).and_then(Literal::as_str).map(str::to_string);
        attributes.insert(name.to_string(), value);
        self.validate_attributes(concept, &attributes, Some(id))?;
        if let Some(key) = concept.natural_key() {
            if let Some(old) = old_key {
                self.keys.remove(&(concept, old));
            }
            self.keys.insert((concept, attributes[key].as_str().expect("validated").to_string()), id);
        }
        self.entities.get_mut(&id).expect("checked").attributes = attributes;
        self.revision += 1;
        Ok(true)
    }

    /// Removes an optional attribute; required ones are refused.
    pub fn remove_attribute(&mut self, id: EntityId, name: &str) -> Result<bool> {
        let entity = self.entities.get_mut(&id).ok_or_else(|| KgError::Integrity(format!("no entity {id}")))?;
        if entity.concept.required().iter().any(|(n, _)| *n == name) {
            return Err(KgError::Validation(format!("{} requires attribute {name}", entity.concept)));
        }
        let removed = entity.attributes.remove(name).is_some();
        if removed {
            self.revision += 1;
        }
        Ok(removed)
    }

    fn check_relation(&self, subject: EntityId, predicate: Predicate, object: EntityId) -> Result<()> {
        let s = self.concept_of(subject)?;
        let o = self.concept_of(object)?;
        if !predicate.admits(s, o) {
            return Err(KgError::Validation(format!("{predicate} does not connect {s} to {o}")));
        }
        if predicate == Predicate::AffectedBy && subject == object {
            return Err(KgError::Validation(format!("{subject} cannot be affected by itself")));
        }
        Ok(())
    }

    /// Adds `subject --predicate--> object`; returns false when it already exists.
    pub fn add_relation(&mut self, subject: EntityId, predicate: Predicate, object: EntityId) -> Result<bool> {
        if predicate.is_ordered() {
            let next = self.objects(subject, predicate).len() as u32;
            return self.add_ordered_relation(subject, predicate, object, next);
        }
        self.check_relation(subject, predicate, object)?;
        if self.has_relation(subject, predicate, object) {
            return Ok(false);
        }
        self.relations.push(Relation { subject, predicate, object, order: None });
        self.revision += 1;
        Ok(true)
    }

    /// Adds an ordered relation at position `order`.
    pub fn add_ordered_relation(&mut self, subject: EntityId, predicate: Predicate, object: EntityId, order: u32) -> Result<bool> {
        self.check_relation(subject, predicate, object)?;
        if !predicate.is_ordered() {
            return Err(KgError::Validation(format!("{predicate} is not ordered")));
        }
        let relation = Relation { subject, predicate, object, order: Some(order) };
        if self.relations.contains(&relation) {
            return Ok(false);
        }
        if self.relations.iter().any(|r| r.subject == subject && r.predicate == predicate && r.order == Some(order)) {
            return Err(KgError::Validation(format!("{subject} already has {predicate} @{order}")));
        }
        self.relations.push(relation);
        self.revision += 1;
        Ok(true)
    }

    pub fn remove_relation(&mut self, subject: EntityId, predicate: Predicate, object: EntityId) -> bool {
        let before = self.relations.len();
        self.relations.retain(|r| !(r.subject == subject && r.predicate == predicate && r.object == object));
        let changed = self.relations.len() != before;
        if changed {
            self.revision += 1;
        }
        changed
    }

    /// Removes an entity together with every relation touching it.
    pub fn remove_entity(&mut self, id: EntityId) -> bool {
        let Some(entity) = self.entities.remove(&id) else { return false };
        if let Some(key) = entity.concept.natural_key() {
            if let Some(value) = entity.str(key) {
                self.keys.remove(&(entity.concept, value.to_string()));
            }
        }
        self.relations.retain(|r| r.subject != id && r.object != id);
        self.revision += 1;
        true
    }

    /// Scans the whole graph for invariant violations.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for r in &self.relations {
            match (self.entities.get(&r.subject), self.entities.get(&r.object)) {
                (Some(s), Some(o)) => {
                    if !r.predicate.admits(s.concept, o.concept) {
                        problems.push(format!("{} {} {} violates domain/range", r.subject, r.predicate, r.object));
                    }
                }
                _ => problems.push(format!("dangling relation {} {} {}", r.subject, r.predicate, r.object)),
            }
        }
        for e in self.entities.values() {
            if let Err(err) = self.validate_attributes(e.concept, &e.attributes, Some(e.id)) {
                problems.push(format!("{}: {err}", e.id));
            }
            if e.concept.is_a(Concept::Classification) {
                let reasons = self
                    .relations
                    .iter()
                    .filter(|r| r.object == e.id && matches!(r.predicate, Predicate::ReasonFor | Predicate::LedTo))
                    .count();
                if reasons != 1 {
                    problems.push(format!("{} has {reasons} reasons", e.id));
                }
            }
            if e.concept == Concept::FaultContext {
                let mut priorities: Vec<i64> = self
                    .objects(e.id, Predicate::HasAssociation)
                    .into_iter()
                    .filter_map(|a| self.entities.get(&a)?.get("priority_id")?.as_int())
                    .collect();
                priorities.sort_unstable();
                if priorities.windows(2).any(|w| w[0] == w[1]) {
                    problems.push(format!("{} has duplicate priorities", e.id));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for r in &self.relations {
            if !seen.insert(*r) {
                problems.push(format!("duplicate relation {} {} {}", r.subject, r.predicate, r.object));
            }
        }
        problems
    }

    /// JSON dump of one entity with its outgoing relations.
    pub fn entity_json(&self, id: EntityId) -> Option<serde_json::Value> {
        let e = self.entities.get(&id)?;
        let relations: Vec<serde_json::Value> = self
            .relations
            .iter()
            .filter(|r| r.subject == id)
            .map(|r| serde_json::json!({"predicate": r.predicate, "object": r.object, "order": r.order}))
            .collect();
        Some(serde_json::json!({
            "id": e.id,
            "concept": e.concept,
            "attributes": e.attributes,
            "relations": relations,
        }))
    }
}

/// Builds an attribute map from `(name, literal)` pairs.
pub fn attrs<const N: usize>(pairs: [(&str, Literal); N]) -> BTreeMap<String, Literal> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn component(kg: &mut KnowledgeGraph, name: &str) -> EntityId {
        kg.add_entity(Concept::SuspectComponent, attrs([("name", name.into()), ("use_oscilloscope", true.into())]))
            .unwrap()
    }

    #[test]
    fn required_attributes_enforced() {
        let mut kg = KnowledgeGraph::new();
        let err = kg.add_entity(Concept::SuspectComponent, attrs([("name", "x".into())])).unwrap_err();
        assert!(matches!(err, KgError::Validation(_)));
        let err = kg
            .add_entity(Concept::SuspectComponent, attrs([("name", "x".into()), ("use_oscilloscope", 1i64.into())]))
            .unwrap_err();
        assert!(err.to_string().contains("Bool"));
        assert!(kg.add_entity(Concept::Classification, BTreeMap::new()).is_err());
        assert_eq!(kg.revision(), 0);
    }

    #[test]
    fn natural_keys_are_unique() {
        let mut kg = KnowledgeGraph::new();
        let a = component(&mut kg, "pump");
        assert_eq!(kg.by_key(Concept::SuspectComponent, "pump"), Some(a));
        let err = kg.add_entity(
            Concept::SuspectComponent,
            attrs([("name", "pump".into()), ("use_oscilloscope", false.into())]),
        );
        assert!(err.is_err());
        kg.set_attribute(a, "name", "valve").unwrap();
        assert_eq!(kg.by_key(Concept::SuspectComponent, "pump"), None);
        assert_eq!(kg.by_key(Concept::SuspectComponent, "valve"), Some(a));
    }

    #[test]
    fn domain_and_range_checked() {
        let mut kg = KnowledgeGraph::new();
        let a = component(&mut kg, "a");
        let b = component(&mut kg, "b");
        assert!(kg.add_relation(a, Predicate::AffectedBy, b).unwrap());
        assert!(!kg.add_relation(a, Predicate::AffectedBy, b).unwrap());
        assert!(kg.add_relation(a, Predicate::PointsTo, b).is_err());
        assert!(kg.add_relation(a, Predicate::AffectedBy, a).is_err());
        assert!(kg.add_relation(a, Predicate::AffectedBy, EntityId(99)).is_err());
    }

    #[test]
    fn revision_moves_only_on_change() {
        let mut kg = KnowledgeGraph::new();
        let a = component(&mut kg, "a");
        let r = kg.revision();
        assert!(!kg.set_attribute(a, "use_oscilloscope", true).unwrap());
        assert_eq!(kg.revision(), r);
        assert!(kg.set_attribute(a, "use_oscilloscope", false).unwrap());
        assert_eq!(kg.revision(), r + 1);
    }

    #[test]
    fn removing_entity_drops_its_relations() {
        let mut kg = KnowledgeGraph::new();
        let a = component(&mut kg, "a");
        let b = component(&mut kg, "b");
        kg.add_relation(a, Predicate::AffectedBy, b).unwrap();
        assert!(kg.remove_entity(b));
        assert!(kg.relations().is_empty());
        assert!(kg.check_invariants().is_empty());
        assert_eq!(kg.by_key(Concept::SuspectComponent, "b"), None);
    }

    #[test]
    fn ordered_steps() {
        let mut kg = KnowledgeGraph::new();
        let a = component(&mut kg, "a");
        let b = component(&mut kg, "b");
        let fp = kg.add_entity(Concept::FaultPath, BTreeMap::new()).unwrap();
        kg.add_ordered_relation(fp, Predicate::PathStep, b, 1).unwrap();
        kg.add_ordered_relation(fp, Predicate::PathStep, a, 0).unwrap();
        assert_eq!(kg.objects(fp, Predicate::PathStep), vec![a, b]);
        assert!(kg.add_ordered_relation(fp, Predicate::PathStep, b, 0).is_err());
    }

    #[test]
    fn uncertainty_range() {
        let mut kg = KnowledgeGraph::new();
        let bad = kg.add_entity(
            Concept::OscillogramClassification,
            attrs([("prediction", true.into()), ("uncertainty", 1.5.into()), ("model_id", "m".into())]),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn ids_parse() {
        assert_eq!("e12".parse::<EntityId>().unwrap(), EntityId(12));
        assert!("12".parse::<EntityId>().is_err());
        assert_eq!(serde_json::to_string(&EntityId(3)).unwrap(), "\"e3\"");
    }
}
