//! One diagnosis session: fault-context selection, suspect suggestion,
//! classification, root-cause isolation and the final report.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use diagnostica_kg::{
    validate_dtc, ClassificationInput, ClassificationKind, Concept, DiagLogInput, EntityId, FaultContextInput,
    KnowledgeGraph, Literal, Reason, SharedKg, Suspect,
};
use diagnostica_neural::Heatmap;
use serde::{Deserialize, Serialize};

use crate::classifier::ModelRegistry;
use crate::rca::{fault_paths, FaultPath};
use crate::state::{SessionState, Transition};
use crate::{CircuitError, Result};

use SessionState::*;

const PROVISIONAL_CONDITION: &str = "unknown fault condition, pending expert completion";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Vehicle {
    pub name: String,
    pub vin: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StartRequest {
    pub vehicle: Vehicle,
    #[serde(default)]
    pub dtcs: Vec<String>,
    #[serde(default)]
    pub symptoms: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    RecordOscillogram,
    ManualInspection,
    ConfirmSensorHypothesis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingAction {
    pub kind: ActionKind,
    pub component: Option<String>,
    pub instruction: String,
}

impl PendingAction {
    fn for_component(component: &str, use_oscilloscope: bool) -> Self {
        if use_oscilloscope {
            PendingAction {
                kind: ActionKind::RecordOscillogram,
                component: Some(component.to_string()),
                instruction: format!("Record an oscillogram at {component}."),
            }
        } else {
            Self::manual(component, format!("Inspect {component} and report whether it is anomalous."))
        }
    }

    fn manual(component: &str, instruction: String) -> Self {
        PendingAction { kind: ActionKind::ManualInspection, component: Some(component.to_string()), instruction }
    }

    fn is(&self, kind: ActionKind, component: &str) -> bool {
        self.kind == kind && self.component.as_deref() == Some(component)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Model,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    /// Knowledge-graph entity of the classification.
    pub id: EntityId,
    pub component: String,
    pub source: Source,
    pub anomalous: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oscillogram: Option<EntityId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<EntityId>,
    pub reason: Reason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextStatus {
    pub code: String,
    /// Created by this session because the code was unknown.
    pub provisional: bool,
    pub processed: bool,
}

/// Fault path as stored in the knowledge graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolatedPath {
    pub id: EntityId,
    #[serde(flatten)]
    pub path: FaultPath,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OscillogramOutcome {
    Classified { record: ClassificationRecord, heatmap: Option<Heatmap> },
    /// No model is registered; the action now asks for a manual inspection.
    ConvertedToManual { notice: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RcaOutcome {
    /// Affecting components that must be classified before the analysis can go on.
    Pending(Vec<PendingAction>),
    Complete(Vec<IsolatedPath>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    FaultIsolated,
    SensorMalfunction,
    NoDiagnosis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub vehicle: Vehicle,
    pub symptoms: Vec<String>,
    pub contexts: Vec<ContextStatus>,
    pub outcome: Outcome,
    pub classifications: Vec<ClassificationRecord>,
    pub fault_paths: Vec<IsolatedPath>,
    pub heatmap_refs: Vec<EntityId>,
    pub transitions: Vec<Transition>,
    pub final_state: SessionState,
    /// Every classification requested from the user, suggestions and analysis alike.
    pub classification_requests: usize,
    pub notices: Vec<String>,
    pub diag_log: EntityId,
}

/// Snapshot for clients polling a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub state: SessionState,
    pub vehicle: Vehicle,
    pub current_context: Option<String>,
    pub contexts: Vec<ContextStatus>,
    pub pending: Vec<PendingAction>,
    pub classifications: Vec<ClassificationRecord>,
    pub fault_paths: Vec<IsolatedPath>,
    pub notices: Vec<String>,
    pub finalized: bool,
}

#[derive(Debug, Clone, Default)]
struct Rca {
    entries: Vec<String>,
    expanded: BTreeSet<String>,
}

pub struct Session {
    kg: SharedKg,
    registry: Arc<ModelRegistry>,
    vehicle: Vehicle,
    symptoms: Vec<String>,
    state: SessionState,
    contexts: Vec<ContextStatus>,
    current: Option<String>,
    pending: Vec<PendingAction>,
    reasons: BTreeMap<String, Reason>,
    records: Vec<ClassificationRecord>,
    /// Component to anomalous flag.
    examined: BTreeMap<String, bool>,
    /// Members of component sets whose verifiers were classified regular.
    covered: BTreeSet<String>,
    round_anomalous: Vec<String>,
    rca: Option<Rca>,
    paths: Vec<IsolatedPath>,
    sensor_defective: Option<bool>,
    requests: usize,
    transitions: Vec<Transition>,
    notices: Vec<String>,
    report: Option<SessionReport>,
}

fn uses_oscilloscope(kg: &KnowledgeGraph, component: &str) -> bool {
    kg.by_key(Concept::SuspectComponent, component)
        .and_then(|id| kg.entity(id))
        .and_then(|e| e.get("use_oscilloscope"))
        .and_then(Literal::as_bool)
        .unwrap_or(false)
}

impl Session {
    /// Stores the vehicle, resolves the fault contexts and stops in
    /// `SELECT_FAULT_CONTEXT`, or in the sensor hypothesis when none resolves.
    pub fn start(kg: SharedKg, registry: Arc<ModelRegistry>, request: StartRequest) -> Result<Session> {
        let mut session = Session {
            kg,
            registry,
            vehicle: request.vehicle,
            symptoms: request.symptoms,
            state: ProcessContext,
            contexts: Vec::new(),
            current: None,
            pending: Vec::new(),
            reasons: BTreeMap::new(),
            records: Vec::new(),
            examined: BTreeMap::new(),
            covered: BTreeSet::new(),
            round_anomalous: Vec::new(),
            rca: None,
            paths: Vec::new(),
            sensor_defective: None,
            requests: 0,
            transitions: Vec::new(),
            notices: Vec::new(),
            report: None,
        };
        {
            let mut kg = session.kg.write();
            kg.extend_kg_with_vehicle(&session.vehicle.name, &session.vehicle.vin)?;
            for code in &request.dtcs {
                if session.contexts.iter().any(|c| &c.code == code) {
                    continue;
                }
                if let Err(e) = validate_dtc(code) {
                    session.notices.push(format!("ignored {code:?}: {e}"));
                    continue;
                }
                let provisional = kg.by_key(Concept::FaultContext, code).is_none();
                if provisional {
                    kg.add_fault_context(&FaultContextInput {
                        code: code.clone(),
                        fault_condition: PROVISIONAL_CONDITION.into(),
                        symptoms: Vec::new(),
                        associations: Vec::new(),
                    })?;
                    session.notices.push(format!("{code} is unknown; created a provisional context for expert completion"));
                }
                session.contexts.push(ContextStatus { code: code.clone(), provisional, processed: false });
            }
        }
        if session.contexts.is_empty() {
            session.enter_sensor_hypothesis("no fault context");
        } else {
            let n = session.contexts.len();
            session.go(SelectFaultContext, format!("{n} fault contexts resolved"));
        }
        Ok(session)
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn vehicle(&self) -> &Vehicle {
        &self.vehicle
    }

    pub fn pending_actions(&self) -> &[PendingAction] {
        &self.pending
    }

    pub fn records(&self) -> &[ClassificationRecord] {
        &self.records
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn fault_paths(&self) -> &[IsolatedPath] {
        &self.paths
    }

    pub fn classification_requests(&self) -> usize {
        self.requests
    }

    pub fn report(&self) -> Option<&SessionReport> {
        self.report.as_ref()
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            state: self.state,
            vehicle: self.vehicle.clone(),
            current_context: self.current.clone(),
            contexts: self.contexts.clone(),
            pending: self.pending.clone(),
            classifications: self.records.clone(),
            fault_paths: self.paths.clone(),
            notices: self.notices.clone(),
            finalized: self.report.is_some(),
        }
    }

    fn go(&mut self, to: SessionState, event: impl Into<String>) {
        assert!(self.state.can_transition(to), "illegal transition {} -> {to}", self.state);
        self.transitions.push(Transition { from: self.state, to, event: event.into() });
        self.state = to;
    }

    fn expect(&self, allowed: &[SessionState], op: &str) -> Result<()> {
        if allowed.contains(&self.state) {
            return Ok(());
        }
        let names: Vec<&str> = allowed.iter().map(|s| s.as_str()).collect();
        Err(CircuitError::Protocol(format!("{op} needs state {}, session is in {}", names.join(" or "), self.state)))
    }

    fn is_examined(&self, component: &str) -> bool {
        self.examined.contains_key(component) || self.covered.contains(component)
    }

    fn unexamined_suspects(&self, kg: &KnowledgeGraph, code: &str) -> Vec<Suspect> {
        let mut seen = BTreeSet::new();
        kg.query_suspects(code)
            .into_iter()
            .filter(|s| !self.is_examined(&s.name) && seen.insert(s.name.clone()))
            .collect()
    }

    fn enter_sensor_hypothesis(&mut self, why: &str) {
        self.current = None;
        self.pending = vec![PendingAction {
            kind: ActionKind::ConfirmSensorHypothesis,
            component: None,
            instruction: "No anomalous component was found. Check whether a sensor is malfunctioning and confirm or \
                          refute."
                .into(),
        }];
        self.go(SensorMalfunctionHypothesis, why.to_string());
    }

    fn await_pending(&mut self, event: String) {
        let next = if self.pending.iter().any(|a| a.kind == ActionKind::RecordOscillogram) {
            AwaitMeasurements
        } else if self.pending.is_empty() {
            Evaluate
        } else {
            AwaitManualResults
        };
        self.go(next, event);
    }

    fn request(&mut self, kg: &KnowledgeGraph, components: Vec<(String, Reason)>) {
        self.pending.clear();
        for (c, reason) in components {
            self.pending.push(PendingAction::for_component(&c, uses_oscilloscope(kg, &c)));
            self.reasons.insert(c, reason);
            self.requests += 1;
        }
    }

    /// Picks the unprocessed context with the most unexamined suspects, the
    /// lexicographically smallest code on ties.
    pub fn select_fault_context(&mut self) -> Result<Option<String>> {
        self.expect(&[SelectFaultContext], "select_fault_context")?;
        let kg = Arc::clone(&self.kg);
        let best = {
            let kg = kg.read();
            self.contexts
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.processed)
                .map(|(i, c)| (self.unexamined_suspects(&kg, &c.code).len(), i))
                .max_by(|a, b| a.0.cmp(&b.0).then_with(|| self.contexts[b.1].code.cmp(&self.contexts[a.1].code)))
        };
        match best {
            Some((n, i)) => {
                self.contexts[i].processed = true;
                let code = self.contexts[i].code.clone();
                self.current = Some(code.clone());
                self.go(SuggestSuspects, format!("selected {code} with {n} unexamined suspects"));
                Ok(Some(code))
            }
            None => {
                self.enter_sensor_hypothesis("all fault contexts processed without anomaly");
                Ok(None)
            }
        }
    }

    /// Unexamined suspects of the selected context in priority order, each as
    /// an oscillogram recording or a manual inspection.
    pub fn next_actions(&mut self) -> Result<Vec<PendingAction>> {
        self.expect(&[SuggestSuspects], "next_actions")?;
        let code = self.current.clone().unwrap_or_default();
        let kg = Arc::clone(&self.kg);
        let kg = kg.read();
        let suspects = self.unexamined_suspects(&kg, &code);
        if suspects.is_empty() {
            self.go(SelectFaultContext, format!("no unexamined suspects left for {code}"));
            return Ok(Vec::new());
        }
        let n = suspects.len();
        self.round_anomalous.clear();
        self.request(&kg, suspects.into_iter().map(|s| (s.name, Reason::Association(s.association))).collect());
        self.await_pending(format!("suggested {n} suspects for {code}"));
        Ok(self.pending.clone())
    }

    fn take_pending(&mut self, kind: ActionKind, component: &str, op: &str) -> Result<usize> {
        self.pending.iter().position(|a| a.is(kind, component)).ok_or_else(|| {
            CircuitError::Protocol(format!("{op}: no pending {kind:?} action for {component:?}"))
        })
    }

    fn reason_for(&self, component: &str) -> Result<Reason> {
        self.reasons
            .get(component)
            .copied()
            .ok_or_else(|| CircuitError::Protocol(format!("no reason recorded for {component}")))
    }

    /// Classifies a recording with the component's registered model and
    /// stores oscillogram, heatmap and classification.
    pub fn submit_oscillogram(&mut self, component: &str, series: Vec<f64>) -> Result<OscillogramOutcome> {
        self.expect(&[AwaitMeasurements], "submit_oscillogram")?;
        let idx = self.take_pending(ActionKind::RecordOscillogram, component, "submit_oscillogram")?;
        let Some(classifier) = self.registry.get(component).cloned() else {
            let notice = format!("no model registered for {component}; inspect it manually instead");
            self.pending[idx] = PendingAction::manual(component, notice.clone());
            self.notices.push(notice.clone());
            if !self.pending.iter().any(|a| a.kind == ActionKind::RecordOscillogram) {
                self.go(AwaitManualResults, format!("no model for {component}"));
            }
            return Ok(OscillogramOutcome::ConvertedToManual { notice });
        };
        let verdict = classifier.classify(component, &series)?;
        let reason = self.reason_for(component)?;
        let record = {
            let mut kg = self.kg.write();
            let oscillogram = kg.add_oscillogram(series)?;
            let heatmap = match &verdict.heatmap {
                Some(h) => Some(kg.add_heatmap(h.method.as_str(), h.values.clone())?),
                None => None,
            };
            let kind = ClassificationKind::Oscillogram {
                uncertainty: verdict.uncertainty,
                model_id: classifier.model_id().to_string(),
                oscillogram,
                heatmap,
            };
            let id = kg.add_classification(&ClassificationInput {
                component: component.to_string(),
                prediction: verdict.anomalous,
                kind,
                reason,
            })?;
            ClassificationRecord {
                id,
                component: component.to_string(),
                source: Source::Model,
                anomalous: verdict.anomalous,
                uncertainty: Some(verdict.uncertainty),
                model_id: Some(classifier.model_id().to_string()),
                oscillogram: Some(oscillogram),
                heatmap,
                reason,
            }
        };
        self.go(Classify, format!("oscillogram of {component} submitted"));
        self.record(idx, record.clone());
        Ok(OscillogramOutcome::Classified { record, heatmap: verdict.heatmap })
    }

    pub fn submit_manual_result(&mut self, component: &str, anomalous: bool) -> Result<ClassificationRecord> {
        if self.state == AwaitMeasurements && self.pending.iter().any(|a| a.is(ActionKind::ManualInspection, component)) {
            return Err(CircuitError::Protocol("oscillogram recordings of this round come before manual inspections".into()));
        }
        self.expect(&[AwaitManualResults], "submit_manual_result")?;
        let idx = self.take_pending(ActionKind::ManualInspection, component, "submit_manual_result")?;
        let reason = self.reason_for(component)?;
        let id = self.kg.write().add_classification(&ClassificationInput {
            component: component.to_string(),
            prediction: anomalous,
            kind: ClassificationKind::Manual,
            reason,
        })?;
        let record = ClassificationRecord {
            id,
            component: component.to_string(),
            source: Source::Manual,
            anomalous,
            uncertainty: None,
            model_id: None,
            oscillogram: None,
            heatmap: None,
            reason,
        };
        self.go(Classify, format!("manual result for {component} submitted"));
        self.record(idx, record.clone());
        Ok(record)
    }

    fn record(&mut self, idx: usize, record: ClassificationRecord) {
        self.pending.remove(idx);
        self.reasons.remove(&record.component);
        self.examined.insert(record.component.clone(), record.anomalous);
        if record.anomalous {
            if self.rca.is_none() {
                self.round_anomalous.push(record.component.clone());
            }
        } else {
            self.cover_sets(&record.component);
        }
        let event = format!("{} classified {}", record.component, if record.anomalous { "anomalous" } else { "regular" });
        self.records.push(record);
        self.await_pending(event);
    }

    /// Marks the members of every set whose verifiers are all regular.
    fn cover_sets(&mut self, verifier: &str) {
        let sets = self.kg.read().component_sets();
        for set in sets.into_iter().filter(|s| s.verified_by.iter().any(|v| v == verifier)) {
            if !set.verified_by.iter().all(|v| self.examined.get(v) == Some(&false)) {
                continue;
            }
            for c in set.components {
                if self.examined.contains_key(&c) || !self.covered.insert(c.clone()) {
                    continue;
                }
                if let Some(i) = self.pending.iter().position(|a| a.component.as_deref() == Some(c.as_str())) {
                    self.pending.remove(i);
                    self.reasons.remove(&c);
                    self.notices.push(format!("{c} skipped: verified by component set {}", set.name));
                }
            }
        }
    }

    /// Routes to root-cause isolation when something anomalous was found,
    /// otherwise back to the suggestions.
    pub fn evaluate(&mut self) -> Result<SessionState> {
        self.expect(&[Evaluate], "evaluate")?;
        if self.rca.is_some() {
            self.go(IsolateRootCause, "analysis classifications complete");
        } else if self.round_anomalous.is_empty() {
            self.go(SuggestSuspects, "no anomaly in this round");
        } else {
            let found = self.round_anomalous.join(", ");
            self.go(IsolateRootCause, format!("anomalous: {found}"));
        }
        Ok(self.state)
    }

    /// Expands every anomalous component over `affected_by`; unexamined
    /// causes become classification requests. Once nothing is left to
    /// examine, stores the fault paths and moves to the report.
    pub fn isolate_root_cause(&mut self) -> Result<RcaOutcome> {
        self.expect(&[IsolateRootCause], "isolate_root_cause")?;
        let entries = self.round_anomalous.clone();
        let mut rca = self.rca.take().unwrap_or(Rca { entries, expanded: BTreeSet::new() });
        let kg = Arc::clone(&self.kg);
        let guard = kg.read();
        let mut requests: Vec<(String, Reason)> = Vec::new();
        let anomalous: Vec<String> = self.examined.iter().filter(|(_, a)| **a).map(|(c, _)| c.clone()).collect();
        for x in anomalous {
            if !rca.expanded.insert(x.clone()) {
                continue;
            }
            let trigger = self.records.iter().rev().find(|r| r.component == x).map(|r| r.id);
            for y in guard.query_affected_by_name(&x) {
                if self.is_examined(&y) || requests.iter().any(|(c, _)| *c == y) {
                    continue;
                }
                if let Some(t) = trigger {
                    requests.push((y, Reason::Classification(t)));
                }
            }
        }
        if !requests.is_empty() {
            let n = requests.len();
            self.request(&guard, requests);
            drop(guard);
            self.rca = Some(rca);
            self.await_pending(format!("requested {n} affecting components"));
            return Ok(RcaOutcome::Pending(self.pending.clone()));
        }
        let found = fault_paths(&rca.entries, |c| self.examined.get(c) == Some(&true), |c| guard.query_affected_by_name(c));
        drop(guard);
        self.rca = Some(rca);
        let mut kg = self.kg.write();
        for path in found {
            let id = kg.add_fault_path(&path.components)?;
            self.paths.push(IsolatedPath { id, path });
        }
        drop(kg);
        let n = self.paths.len();
        self.go(Report, format!("isolated {n} fault paths"));
        Ok(RcaOutcome::Complete(self.paths.clone()))
    }

    /// The mechanic's answer to the sensor-malfunction hypothesis.
    pub fn confirm_sensor_hypothesis(&mut self, defective: bool) -> Result<SessionState> {
        self.expect(&[SensorMalfunctionHypothesis], "confirm_sensor_hypothesis")?;
        self.pending.clear();
        self.sensor_defective = Some(defective);
        if defective {
            self.go(Report, "sensor malfunction confirmed");
        } else {
            self.go(NoDiagnosis, "sensor malfunction refuted");
        }
        Ok(self.state)
    }

    /// Runs the automatic steps until the session waits for the user or has
    /// ended; returns the pending actions.
    pub fn advance(&mut self) -> Result<Vec<PendingAction>> {
        loop {
            match self.state {
                SelectFaultContext => {
                    self.select_fault_context()?;
                }
                SuggestSuspects => {
                    self.next_actions()?;
                }
                Evaluate => {
                    self.evaluate()?;
                }
                IsolateRootCause => {
                    self.isolate_root_cause()?;
                }
                _ => return Ok(self.pending.clone()),
            }
        }
    }

    /// Writes the diagnostic log and returns the report. Repeated calls
    /// return the same report.
    pub fn finalize(&mut self) -> Result<SessionReport> {
        if let Some(r) = &self.report {
            return Ok(r.clone());
        }
        self.expect(&[Report, NoDiagnosis], "finalize")?;
        let diag_log = self.kg.write().extend_kg_with_diag_log(&DiagLogInput {
            dtc_codes: self.contexts.iter().map(|c| c.code.clone()).collect(),
            vin: self.vehicle.vin.clone(),
            classifications: self.records.iter().map(|r| r.id).collect(),
            fault_paths: self.paths.iter().map(|p| p.id).collect(),
        })?;
        let outcome = match (self.state, self.sensor_defective) {
            (NoDiagnosis, _) => Outcome::NoDiagnosis,
            (_, Some(true)) => Outcome::SensorMalfunction,
            _ => Outcome::FaultIsolated,
        };
        let report = SessionReport {
            vehicle: self.vehicle.clone(),
            symptoms: self.symptoms.clone(),
            contexts: self.contexts.clone(),
            outcome,
            classifications: self.records.clone(),
            fault_paths: self.paths.clone(),
            heatmap_refs: self.records.iter().filter_map(|r| r.heatmap).collect(),
            transitions: self.transitions.clone(),
            final_state: self.state,
            classification_requests: self.requests,
            notices: self.notices.clone(),
            diag_log,
        };
        self.report = Some(report.clone());
        Ok(report)
    }
}
