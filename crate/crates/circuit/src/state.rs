//! Session states and the transition table.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionState {
    ProcessContext,
    SelectFaultContext,
    SuggestSuspects,
    AwaitMeasurements,
    Classify,
    AwaitManualResults,
    Evaluate,
    IsolateRootCause,
    SensorMalfunctionHypothesis,
    Report,
    NoDiagnosis,
}

use SessionState::*;

/// Every allowed `(from, to)` pair.
pub const TRANSITIONS: &[(SessionState, SessionState)] = &[
    (ProcessContext, SelectFaultContext),
    (ProcessContext, SensorMalfunctionHypothesis),
    (SelectFaultContext, SuggestSuspects),
    (SelectFaultContext, SensorMalfunctionHypothesis),
    (SuggestSuspects, AwaitMeasurements),
    (SuggestSuspects, AwaitManualResults),
    (SuggestSuspects, SelectFaultContext),
    (AwaitMeasurements, Classify),
    (AwaitMeasurements, AwaitManualResults),
    (AwaitManualResults, Classify),
    (Classify, AwaitMeasurements),
    (Classify, AwaitManualResults),
    (Classify, Evaluate),
    (Evaluate, IsolateRootCause),
    (Evaluate, SuggestSuspects),
    (IsolateRootCause, AwaitMeasurements),
    (IsolateRootCause, AwaitManualResults),
    (IsolateRootCause, Report),
    (SensorMalfunctionHypothesis, Report),
    (SensorMalfunctionHypothesis, NoDiagnosis),
];

impl SessionState {
    pub const ALL: [SessionState; 11] = [
        ProcessContext,
        SelectFaultContext,
        SuggestSuspects,
        AwaitMeasurements,
        Classify,
        AwaitManualResults,
        Evaluate,
        IsolateRootCause,
        SensorMalfunctionHypothesis,
        Report,
        NoDiagnosis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProcessContext => "PROCESS_CONTEXT",
            SelectFaultContext => "SELECT_FAULT_CONTEXT",
            SuggestSuspects => "SUGGEST_SUSPECTS",
            AwaitMeasurements => "AWAIT_MEASUREMENTS",
            Classify => "CLASSIFY",
            AwaitManualResults => "AWAIT_MANUAL_RESULTS",
            Evaluate => "EVALUATE",
            IsolateRootCause => "ISOLATE_ROOT_CAUSE",
            SensorMalfunctionHypothesis => "SENSOR_MALFUNCTION_HYPOTHESIS",
            Report => "REPORT",
            NoDiagnosis => "NO_DIAGNOSIS",
        }
    }

    pub fn can_transition(self, to: SessionState) -> bool {
        TRANSITIONS.contains(&(self, to))
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Report | NoDiagnosis)
    }

    /// States in which the session waits for the user.
    pub fn awaits_user(self) -> bool {
        matches!(self, AwaitMeasurements | AwaitManualResults | SensorMalfunctionHypothesis)
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: SessionState,
    pub to: SessionState,
    pub event: String,
}

/// Replays a trace from `ProcessContext`; returns the final state or the
/// index of the first step that breaks the chain or the table.
pub fn replay(trace: &[Transition]) -> Result<SessionState, usize> {
    let mut at = ProcessContext;
    for (i, t) in trace.iter().enumerate() {
        if t.from != at || !at.can_transition(t.to) {
            return Err(i);
        }
        at = t.to;
    }
    Ok(at)
}
