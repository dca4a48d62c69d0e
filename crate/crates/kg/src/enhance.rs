//! Expert and diagnostic knowledge enhancers.
//!
//! Each enhancer turns a small payload into the full set of entities and
//! relations it implies, merging with what the graph already holds. Replaying
//! a payload leaves the graph unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{Concept, Literal, Predicate};
use crate::store::{attrs, EntityId, KgError, KnowledgeGraph, Result};

fn dtc_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"^[A-Z][0-9]{4}$").expect("valid pattern"))
}

/// Accepts a letter followed by four digits, e.g. `P2563`.
pub fn validate_dtc(code: &str) -> Result<()> {
    if dtc_pattern().is_match(code) {
        Ok(())
    } else {
        Err(KgError::Validation(format!("malformed DTC {code:?}: expected a letter followed by four digits")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub component: String,
    pub priority: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultContextInput {
    pub code: String,
    pub fault_condition: String,
    #[serde(default)]
    pub symptoms: Vec<String>,
    #[serde(default)]
    pub associations: Vec<Association>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentInput {
    pub name: String,
    pub use_oscilloscope: bool,
    #[serde(default)]
    pub affected_by: Vec<String>,
    #[serde(default)]
    pub subsystem: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSetInput {
    pub name: String,
    pub components: Vec<String>,
    pub verified_by: Vec<String>,
}

/// Source of a classification: the fault-context association that suggested
/// the component, or the anomalous classification that triggered it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Association(EntityId),
    Classification(EntityId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassificationKind {
    Manual,
    Oscillogram {
        uncertainty: f64,
        model_id: String,
        oscillogram: EntityId,
        #[serde(default)]
        heatmap: Option<EntityId>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationInput {
    pub component: String,
    pub prediction: bool,
    pub kind: ClassificationKind,
    pub reason: Reason,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagLogInput {
    pub dtc_codes: Vec<String>,
    pub vin: String,
    #[serde(default)]
    pub classifications: Vec<EntityId>,
    #[serde(default)]
    pub fault_paths: Vec<EntityId>,
}

impl KnowledgeGraph {
    fn component_or_create(&mut self, name: &str) -> Result<EntityId> {
        if name.trim().is_empty() {
            return Err(KgError::Validation("component name must be non-empty".into()));
        }
        match self.by_key(Concept::SuspectComponent, name) {
            Some(id) => Ok(id),
            None => self.add_entity(
                Concept::SuspectComponent,
                attrs([("name", name.into()), ("use_oscilloscope", false.into())]),
            ),
        }
    }

    fn require(&self, id: EntityId, concept: Concept) -> Result<()> {
        match self.entity(id) {
            Some(e) if e.concept.is_a(concept) => Ok(()),
            Some(e) => Err(KgError::Integrity(format!("{id} is a {}, expected {concept}", e.concept))),
            None => Err(KgError::Integrity(format!("no entity {id}"))),
        }
    }

    fn described(&mut self, concept: Concept, text: &str) -> Result<EntityId> {
        self.add_entity(concept, attrs([("description", text.into())]))
    }

    /// Adds or refines a DTC with its fault condition, symptoms and suspect
    /// associations.
    pub fn add_fault_context(&mut self, input: &FaultContextInput) -> Result<EntityId> {
        validate_dtc(&input.code)?;
        if input.fault_condition.trim().is_empty() {
            return Err(KgError::Validation("fault condition text must be non-empty".into()));
        }
        let mut priorities = BTreeSet::new();
        let mut components = BTreeSet::new();
        for a in &input.associations {
            if !priorities.insert(a.priority) {
                return Err(KgError::Validation(format!("duplicate priority {} for {}", a.priority, input.code)));
            }
            if !components.insert(a.component.as_str()) {
                return Err(KgError::Validation(format!("component {} listed twice", a.component)));
            }
        }
        if let Some(existing) = self.by_key(Concept::FaultContext, &input.code) {
            // Priorities of associations not named in the payload must not clash either.
            for (component, assoc) in self.associations_of(existing) {
                let prio = self.entity(assoc).and_then(|e| e.get("priority_id")).and_then(Literal::as_int);
                if !components.contains(component.as_str()) && prio.is_some_and(|p| priorities.contains(&(p as u32))) {
                    return Err(KgError::Validation(format!(
                        "priority {} already used by {component} for {}",
                        prio.unwrap_or_default(),
                        input.code
                    )));
                }
            }
        }
        for a in &input.associations {
            if a.component.trim().is_empty() {
                return Err(KgError::Validation("component name must be non-empty".into()));
            }
        }

        let context = match self.by_key(Concept::FaultContext, &input.code) {
            Some(id) => id,
            None => self.add_entity(Concept::FaultContext, attrs([("code", input.code.as_str().into())]))?,
        };
        let condition = match self.objects(context, Predicate::Represents).first() {
            Some(&c) => {
                self.set_attribute(c, "description", input.fault_condition.as_str())?;
                c
            }
            None => {
                let c = self.described(Concept::FaultCondition, &input.fault_condition)?;
                self.add_relation(context, Predicate::Represents, c)?;
                c
            }
        };
        let known: BTreeSet<String> = self
            .objects(condition, Predicate::ManifestedBy)
            .into_iter()
            .filter_map(|s| self.entity(s)?.str("description").map(str::to_string))
            .collect();
        for symptom in &input.symptoms {
            if symptom.trim().is_empty() {
                return Err(KgError::Validation("symptom text must be non-empty".into()));
            }
            if !known.contains(symptom) {
                let s = self.described(Concept::Symptom, symptom)?;
                self.add_relation(condition, Predicate::ManifestedBy, s)?;
            }
        }
        let existing: BTreeMap<String, EntityId> = self.associations_of(context).into_iter().collect();
        for a in &input.associations {
            match existing.get(&a.component) {
                Some(&assoc) => {
                    self.set_attribute(assoc, "priority_id", a.priority as i64)?;
                }
                None => {
                    let component = self.component_or_create(&a.component)?;
                    let assoc = self
                        .add_entity(Concept::DiagnosticAssociation, attrs([("priority_id", (a.priority as i64).into())]))?;
                    self.add_relation(context, Predicate::HasAssociation, assoc)?;
                    self.add_relation(assoc, Predicate::PointsTo, component)?;
                }
            }
        }
        Ok(context)
    }

    /// `(component name, association id)` for every association of a context.
    pub(crate) fn associations_of(&self, context: EntityId) -> Vec<(String, EntityId)> {
        self.objects(context, Predicate::HasAssociation)
            .into_iter()
            .filter_map(|assoc| {
                let component = *self.objects(assoc, Predicate::PointsTo).first()?;
                Some((self.entity(component)?.str("name")?.to_string(), assoc))
            })
            .collect()
    }

    /// Adds or refines a component. The affected_by list replaces the
    /// previous one; unknown affecting components are created.
    pub fn add_component(&mut self, input: &ComponentInput) -> Result<EntityId> {
        if input.name.trim().is_empty() {
            return Err(KgError::Validation("component name must be non-empty".into()));
        }
        if input.affected_by.iter().any(|a| a == &input.name) {
            return Err(KgError::Validation(format!("{} cannot be affected by itself", input.name)));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = input.affected_by.iter().find(|a| !seen.insert(a.as_str())) {
            return Err(KgError::Validation(format!("{dup} listed twice in affected_by")));
        }
        let id = match self.by_key(Concept::SuspectComponent, &input.name) {
            Some(id) => {
                self.set_attribute(id, "use_oscilloscope", input.use_oscilloscope)?;
                id
            }
            None => self.add_entity(
                Concept::SuspectComponent,
                attrs([("name", input.name.as_str().into()), ("use_oscilloscope", input.use_oscilloscope.into())]),
            )?,
        };
        let wanted: Vec<EntityId> =
            input.affected_by.iter().map(|a| self.component_or_create(a)).collect::<Result<_>>()?;
        let current = self.objects(id, Predicate::AffectedBy);
        if current != wanted {
            for old in current {
                self.remove_relation(id, Predicate::AffectedBy, old);
            }
            for w in wanted {
                self.add_relation(id, Predicate::AffectedBy, w)?;
            }
        }
        if let Some(subsystem) = &input.subsystem {
            let sub = match self.by_key(Concept::Subsystem, subsystem) {
                Some(s) => s,
                None => self.add_entity(Concept::Subsystem, attrs([("name", subsystem.as_str().into())]))?,
            };
            for old in self.objects(id, Predicate::ContainedIn) {
                if old != sub && self.concept_of(old)? == Concept::Subsystem {
                    self.remove_relation(id, Predicate::ContainedIn, old);
                }
            }
            self.add_relation(id, Predicate::ContainedIn, sub)?;
        }
        Ok(id)
    }

    /// Adds or refines a component set with its verifying components.
    pub fn add_component_set(&mut self, input: &ComponentSetInput) -> Result<EntityId> {
        if input.name.trim().is_empty() {
            return Err(KgError::Validation("component set name must be non-empty".into()));
        }
        if input.components.is_empty() {
            return Err(KgError::Validation("component set needs at least one member".into()));
        }
        if input.verified_by.is_empty() {
            return Err(KgError::Validation("component set needs a verifying component".into()));
        }
        let set = match self.by_key(Concept::ComponentSet, &input.name) {
            Some(s) => s,
            None => self.add_entity(Concept::ComponentSet, attrs([("name", input.name.as_str().into())]))?,
        };
        let members: Vec<EntityId> =
            input.components.iter().map(|c| self.component_or_create(c)).collect::<Result<_>>()?;
        for old in self.subjects(Predicate::ContainedIn, set) {
            if !members.contains(&old) {
                self.remove_relation(old, Predicate::ContainedIn, set);
            }
        }
        for m in members {
            self.add_relation(m, Predicate::ContainedIn, set)?;
        }
        let verifiers: Vec<EntityId> =
            input.verified_by.iter().map(|c| self.component_or_create(c)).collect::<Result<_>>()?;
        for old in self.objects(set, Predicate::VerifiedBy) {
            if !verifiers.contains(&old) {
                self.remove_relation(set, Predicate::VerifiedBy, old);
            }
        }
        for v in verifiers {
            self.add_relation(set, Predicate::VerifiedBy, v)?;
        }
        Ok(set)
    }

    /// Creates the vehicle or returns the existing one with this VIN.
    pub fn extend_kg_with_vehicle(&mut self, name: &str, vin: &str) -> Result<EntityId> {
        if vin.trim().is_empty() {
            return Err(KgError::Validation("VIN must be non-empty".into()));
        }
        if let Some(id) = self.by_key(Concept::Vehicle, vin) {
            if !name.trim().is_empty() {
                self.set_attribute(id, "name", name)?;
            }
            return Ok(id);
        }
        if name.trim().is_empty() {
            return Err(KgError::Validation("vehicle name must be non-empty".into()));
        }
        self.add_entity(Concept::Vehicle, attrs([("name", name.into()), ("vin", vin.into())]))
    }

    pub fn add_oscillogram(&mut self, samples: Vec<f64>) -> Result<EntityId> {
        if samples.is_empty() {
            return Err(KgError::Validation("oscillogram needs samples".into()));
        }
        self.add_entity(Concept::Oscillogram, attrs([("samples", samples.into())]))
    }

    /// Groups simultaneously recorded oscillograms.
    pub fn add_parallel_set(&mut self, oscillograms: &[EntityId]) -> Result<EntityId> {
        for &o in oscillograms {
            self.require(o, Concept::Oscillogram)?;
        }
        let set = self.add_entity(Concept::ParallelRecOscillogramSet, BTreeMap::new())?;
        for &o in oscillograms {
            self.add_relation(o, Predicate::PartOf, set)?;
        }
        Ok(set)
    }

    pub fn add_heatmap(&mut self, generation_method: &str, values: Vec<f64>) -> Result<EntityId> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(KgError::Validation("heatmap values must lie in [0,1]".into()));
        }
        self.add_entity(Concept::Heatmap, attrs([("generation_method", generation_method.into()), ("values", values.into())]))
    }

    /// Records one classification with its single reason.
    pub fn add_classification(&mut self, input: &ClassificationInput) -> Result<EntityId> {
        let component = self
            .by_key(Concept::SuspectComponent, &input.component)
            .ok_or_else(|| KgError::Integrity(format!("unknown component {:?}", input.component)))?;
        match input.reason {
            Reason::Association(a) => self.require(a, Concept::DiagnosticAssociation)?,
            Reason::Classification(c) => self.require(c, Concept::Classification)?,
        }
        let id = match &input.kind {
            ClassificationKind::Manual => {
                self.add_entity(Concept::ManualInspection, attrs([("prediction", input.prediction.into())]))?
            }
            ClassificationKind::Oscillogram { uncertainty, model_id, oscillogram, heatmap } => {
                self.require(*oscillogram, Concept::Oscillogram)?;
                if let Some(h) = heatmap {
                    self.require(*h, Concept::Heatmap)?;
                }
                let id = self.add_entity(
                    Concept::OscillogramClassification,
                    attrs([
                        ("prediction", input.prediction.into()),
                        ("uncertainty", (*uncertainty).into()),
                        ("model_id", model_id.as_str().into()),
                    ]),
                )?;
                self.add_relation(id, Predicate::Classifies, *oscillogram)?;
                if let Some(h) = heatmap {
                    self.add_relation(id, Predicate::ProducedHeatmap, *h)?;
                }
                id
            }
        };
        self.add_relation(id, Predicate::Checks, component)?;
        match input.reason {
            Reason::Association(a) => self.add_relation(a, Predicate::LedTo, id)?,
            Reason::Classification(c) => self.add_relation(c, Predicate::ReasonFor, id)?,
        };
        Ok(id)
    }

    /// Stores a fault path, root cause first.
    pub fn add_fault_path(&mut self, components: &[String]) -> Result<EntityId> {
        if components.is_empty() {
            return Err(KgError::Validation("fault path needs at least one component".into()));
        }
        let ids: Vec<EntityId> = components
            .iter()
            .map(|c| {
                self.by_key(Concept::SuspectComponent, c)
                    .ok_or_else(|| KgError::Integrity(format!("unknown component {c:?}")))
            })
            .collect::<Result<_>>()?;
        let path = self.add_entity(Concept::FaultPath, BTreeMap::new())?;
        for (i, c) in ids.into_iter().enumerate() {
            self.add_ordered_relation(path, Predicate::PathStep, c, i as u32)?;
        }
        Ok(path)
    }

    /// Creates the diagnostic log of one session and wires it to the vehicle,
    /// the recorded DTCs, the classifications and the fault paths.
    pub fn extend_kg_with_diag_log(&mut self, input: &DiagLogInput) -> Result<EntityId> {
        let vehicle = self
            .by_key(Concept::Vehicle, &input.vin)
            .ok_or_else(|| KgError::Integrity(format!("unknown VIN {:?}", input.vin)))?;
        let contexts: Vec<EntityId> = input
            .dtc_codes
            .iter()
            .map(|c| {
                self.by_key(Concept::FaultContext, c).ok_or_else(|| KgError::Integrity(format!("unknown DTC {c:?}")))
            })
            .collect::<Result<_>>()?;
        for &c in &input.classifications {
            self.require(c, Concept::Classification)?;
        }
        for &p in &input.fault_paths {
            self.require(p, Concept::FaultPath)?;
        }
        let log = self.add_entity(Concept::DiagLog, BTreeMap::new())?;
        self.add_relation(log, Predicate::CreatedFor, vehicle)?;
        for &context in &contexts {
            self.add_relation(context, Predicate::AppearsIn, log)?;
        }
        for &c in &input.classifications {
            self.add_relation(log, Predicate::Entails, c)?;
        }
        for &p in &input.fault_paths {
            self.add_relation(log, Predicate::Entails, p)?;
            for &context in &contexts {
                for condition in self.objects(context, Predicate::Represents) {
                    self.add_relation(condition, Predicate::ResultedIn, p)?;
                }
            }
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P2563_TEXT: &str = "Boost Control Position Sensor Circuit: Implausible Signal";

    fn with_boost_sensor() -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new();
        kg.add_component(&ComponentInput {
            name: "boost_sensor".into(),
            use_oscilloscope: true,
            affected_by: vec![],
            subsystem: None,
        })
        .unwrap();
        kg
    }

    fn p2563() -> FaultContextInput {
        FaultContextInput {
            code: "P2563".into(),
            fault_condition: P2563_TEXT.into(),
            symptoms: vec![],
            associations: vec![Association { component: "boost_sensor".into(), priority: 0 }],
        }
    }

    #[test]
    fn fault_context_creates_three_entities_and_relations() {
        let mut kg = with_boost_sensor();
        let (e0, r0) = (kg.len(), kg.relations().len());
        kg.add_fault_context(&p2563()).unwrap();
        assert_eq!(kg.len() - e0, 3);
        assert_eq!(kg.relations().len() - r0, 3);
        assert!(kg.check_invariants().is_empty());
    }

    #[test]
    fn replaying_fault_context_is_a_no_op() {
        let mut kg = with_boost_sensor();
        let first = kg.add_fault_context(&p2563()).unwrap();
        let revision = kg.revision();
        assert_eq!(kg.add_fault_context(&p2563()).unwrap(), first);
        assert_eq!(kg.revision(), revision);
    }

    #[test]
    fn malformed_codes_rejected() {
        for code in ["XYZ", "p2563", "P256", "P25630", "2563P"] {
            let mut input = p2563();
            input.code = code.into();
            assert!(matches!(KnowledgeGraph::new().add_fault_context(&input), Err(KgError::Validation(_))), "{code}");
        }
    }

    #[test]
    fn duplicate_priority_rejected() {
        let mut input = p2563();
        input.associations.push(Association { component: "other".into(), priority: 0 });
        let mut kg = with_boost_sensor();
        let before = kg.revision();
        assert!(matches!(kg.add_fault_context(&input), Err(KgError::Validation(_))));
        assert_eq!(kg.revision(), before);
    }

    #[test]
    fn refining_merges_symptoms_and_priorities() {
        let mut kg = with_boost_sensor();
        kg.add_fault_context(&p2563()).unwrap();
        let mut refined = p2563();
        refined.symptoms = vec!["loss of power".into()];
        refined.associations = vec![
            Association { component: "boost_sensor".into(), priority: 1 },
            Association { component: "wastegate".into(), priority: 0 },
        ];
        kg.add_fault_context(&refined).unwrap();
        assert!(kg.check_invariants().is_empty());
        assert_eq!(kg.entities_of(Concept::DiagnosticAssociation).count(), 2);
        assert_eq!(kg.entities_of(Concept::Symptom).count(), 1);
    }

    #[test]
    fn component_with_affecting_components() {
        let mut kg = KnowledgeGraph::new();
        let d = kg
            .add_component(&ComponentInput {
                name: "C_D".into(),
                use_oscilloscope: true,
                affected_by: vec!["C_A".into(), "C_C".into()],
                subsystem: Some("engine".into()),
            })
            .unwrap();
        assert_eq!(kg.objects(d, Predicate::AffectedBy).len(), 2);
        let leaf = kg
            .add_component(&ComponentInput { name: "C_B".into(), use_oscilloscope: true, affected_by: vec![], subsystem: None })
            .unwrap();
        assert!(kg.objects(leaf, Predicate::AffectedBy).is_empty());
        let err = kg.add_component(&ComponentInput {
            name: "X".into(),
            use_oscilloscope: true,
            affected_by: vec!["X".into()],
            subsystem: None,
        });
        assert!(matches!(err, Err(KgError::Validation(_))));
    }

    #[test]
    fn vehicle_is_found_by_vin() {
        let mut kg = KnowledgeGraph::new();
        let v = kg.extend_kg_with_vehicle("DummyVehicle", "ID2342713").unwrap();
        assert_eq!(kg.extend_kg_with_vehicle("DummyVehicle", "ID2342713").unwrap(), v);
        assert!(matches!(kg.extend_kg_with_vehicle("", ""), Err(KgError::Validation(_))));
    }

    #[test]
    fn diag_log_wiring() {
        let mut kg = with_boost_sensor();
        let ctx = kg.add_fault_context(&p2563()).unwrap();
        let vehicle = kg.extend_kg_with_vehicle("DummyVehicle", "ID2342713").unwrap();
        let assoc = kg.associations_of(ctx)[0].1;
        let c1 = kg
            .add_classification(&ClassificationInput {
                component: "boost_sensor".into(),
                prediction: true,
                kind: ClassificationKind::Manual,
                reason: Reason::Association(assoc),
            })
            .unwrap();
        let osc = kg.add_oscillogram(vec![0.0, 1.0]).unwrap();
        let heat = kg.add_heatmap("grad_cam", vec![0.0, 1.0]).unwrap();
        let c2 = kg
            .add_classification(&ClassificationInput {
                component: "boost_sensor".into(),
                prediction: false,
                kind: ClassificationKind::Oscillogram {
                    uncertainty: 0.1,
                    model_id: "m1".into(),
                    oscillogram: osc,
                    heatmap: Some(heat),
                },
                reason: Reason::Classification(c1),
            })
            .unwrap();
        let fp = kg.add_fault_path(&["boost_sensor".to_string()]).unwrap();
        let before = kg.relations().len();
        let log = kg
            .extend_kg_with_diag_log(&DiagLogInput {
                dtc_codes: vec!["P2563".into()],
                vin: "ID2342713".into(),
                classifications: vec![c1, c2],
                fault_paths: vec![fp],
            })
            .unwrap();
        assert!(kg.relations().len() - before >= 4);
        assert!(kg.has_relation(log, Predicate::CreatedFor, vehicle));
        assert!(kg.has_relation(ctx, Predicate::AppearsIn, log));
        let condition = kg.objects(ctx, Predicate::Represents)[0];
        assert!(kg.has_relation(condition, Predicate::ResultedIn, fp));
        assert!(kg.check_invariants().is_empty(), "{:?}", kg.check_invariants());

        let minimal = kg
            .extend_kg_with_diag_log(&DiagLogInput { dtc_codes: vec!["P2563".into()], vin: "ID2342713".into(), ..Default::default() })
            .unwrap();
        assert_eq!(kg.objects(minimal, Predicate::Entails), vec![]);
        let err = kg.extend_kg_with_diag_log(&DiagLogInput { vin: "nope".into(), ..Default::default() });
        assert!(matches!(err, Err(KgError::Integrity(_))));
    }

    #[test]
    fn component_set_membership() {
        let mut kg = KnowledgeGraph::new();
        let set = kg
            .add_component_set(&ComponentSetInput {
                name: "intake".into(),
                components: vec!["a".into(), "b".into()],
                verified_by: vec!["map_sensor".into()],
            })
            .unwrap();
        assert_eq!(kg.subjects(Predicate::ContainedIn, set).len(), 2);
        assert_eq!(kg.objects(set, Predicate::VerifiedBy).len(), 1);
        let rev = kg.revision();
        kg.add_component_set(&ComponentSetInput {
            name: "intake".into(),
            components: vec!["a".into(), "b".into()],
            verified_by: vec!["map_sensor".into()],
        })
        .unwrap();
        assert_eq!(kg.revision(), rev);
    }
}
