//! Fixed-shape queries over the knowledge graph.

use serde::Serialize;

use crate::model::{Concept, Literal, Predicate};
use crate::store::{EntityId, KnowledgeGraph};

/// A suspect component as returned by the DTC query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suspect {
    pub id: EntityId,
    pub name: String,
    pub priority: i64,
    pub use_oscilloscope: bool,
    pub association: EntityId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSetView {
    pub id: EntityId,
    pub name: String,
    pub components: Vec<String>,
    pub verified_by: Vec<String>,
}

impl KnowledgeGraph {
    /// Name of a component entity.
    pub fn component_name(&self, id: EntityId) -> Option<&str> {
        self.entity(id).filter(|e| e.concept == Concept::SuspectComponent)?.str("name")
    }

    pub fn component_id(&self, name: &str) -> Option<EntityId> {
        self.by_key(Concept::SuspectComponent, name)
    }

    /// Suspects of a DTC in ascending priority order.
    pub fn query_suspects(&self, dtc: &str) -> Vec<Suspect> {
        let Some(context) = self.by_key(Concept::FaultContext, dtc) else { return Vec::new() };
        let mut out: Vec<Suspect> = self
            .objects(context, Predicate::HasAssociation)
            .into_iter()
            .filter_map(|association| {
                let priority = self.entity(association)?.get("priority_id")?.as_int()?;
                let id = *self.objects(association, Predicate::PointsTo).first()?;
                let component = self.entity(id)?;
                Some(Suspect {
                    id,
                    name: component.str("name")?.to_string(),
                    priority,
                    use_oscilloscope: component.get("use_oscilloscope").and_then(Literal::as_bool).unwrap_or(false),
                    association,
                })
            })
            .collect();
        out.sort_by_key(|s| s.priority);
        out
    }

    pub fn query_suspect_components_by_dtc(&self, dtc: &str) -> Vec<EntityId> {
        self.query_suspects(dtc).into_iter().map(|s| s.id).collect()
    }

    /// Components whose malfunction could affect `component`, in insertion order.
    pub fn query_affected_by(&self, component: EntityId) -> Vec<EntityId> {
        match self.entity(component) {
            Some(e) if e.concept == Concept::SuspectComponent => self.objects(component, Predicate::AffectedBy),
            _ => Vec::new(),
        }
    }

    pub fn query_affected_by_name(&self, component: &str) -> Vec<String> {
        let Some(id) = self.component_id(component) else { return Vec::new() };
        self.query_affected_by(id).into_iter().filter_map(|c| self.component_name(c).map(str::to_string)).collect()
    }

    pub fn query_symptoms_by_dtc(&self, dtc: &str) -> Vec<String> {
        let Some(context) = self.by_key(Concept::FaultContext, dtc) else { return Vec::new() };
        self.objects(context, Predicate::Represents)
            .into_iter()
            .flat_map(|c| self.objects(c, Predicate::ManifestedBy))
            .filter_map(|s| self.entity(s)?.str("description").map(str::to_string))
            .collect()
    }

    pub fn query_fault_condition_by_dtc(&self, dtc: &str) -> Option<String> {
        let context = self.by_key(Concept::FaultContext, dtc)?;
        let condition = *self.objects(context, Predicate::Represents).first()?;
        self.entity(condition)?.str("description").map(str::to_string)
    }

    pub fn query_vehicle_instance_by_vin(&self, vin: &str) -> Option<EntityId> {
        self.by_key(Concept::Vehicle, vin)
    }

    /// Association linking a DTC to a component, if any.
    pub fn association_for(&self, dtc: &str, component: &str) -> Option<EntityId> {
        self.query_suspects(dtc).into_iter().find(|s| s.name == component).map(|s| s.association)
    }

    /// Sets the component belongs to.
    pub fn query_component_sets_of(&self, component: EntityId) -> Vec<EntityId> {
        self.objects(component, Predicate::ContainedIn)
            .into_iter()
            .filter(|s| self.entity(*s).is_some_and(|e| e.concept == Concept::ComponentSet))
            .collect()
    }

    pub fn component_sets(&self) -> Vec<ComponentSetView> {
        let names = |ids: Vec<EntityId>| ids.into_iter().filter_map(|c| self.component_name(c).map(str::to_string)).collect();
        self.entities_of(Concept::ComponentSet)
            .map(|set| ComponentSetView {
                id: set.id,
                name: set.str("name").unwrap_or_default().to_string(),
                components: names(self.subjects(Predicate::ContainedIn, set.id)),
                verified_by: names(self.objects(set.id, Predicate::VerifiedBy)),
            })
            .collect()
    }

    /// All component names, sorted.
    pub fn component_names(&self) -> Vec<String> {
        let mut names: Vec<String> =
            self.entities_of(Concept::SuspectComponent).filter_map(|e| e.str("name").map(str::to_string)).collect();
        names.sort();
        names
    }

    /// Ordered component names of a fault path.
    pub fn fault_path_components(&self, path: EntityId) -> Vec<String> {
        self.objects(path, Predicate::PathStep).into_iter().filter_map(|c| self.component_name(c).map(str::to_string)).collect()
    }
}
