//! Small graphs used by tests, the CLI and the gateway.

use crate::enhance::{Association, ComponentInput, FaultContextInput};
use crate::store::KnowledgeGraph;

/// DTC whose only suspect is `C_D` in [`causal_graph`].
pub const CAUSAL_DTC: &str = "P0234";

/// Four components: `C_D` is affected by `C_A` and `C_C`, `C_A` by `C_B`.
pub fn causal_graph() -> KnowledgeGraph {
    let mut kg = KnowledgeGraph::new();
    for (name, affected_by) in [("C_B", vec![]), ("C_C", vec![]), ("C_A", vec!["C_B"]), ("C_D", vec!["C_A", "C_C"])] {
        kg.add_component(&ComponentInput {
            name: name.into(),
            use_oscilloscope: true,
            affected_by: affected_by.into_iter().map(String::from).collect(),
            subsystem: None,
        })
        .expect("fixture component");
    }
    kg.add_fault_context(&FaultContextInput {
        code: CAUSAL_DTC.into(),
        fault_condition: "Turbocharger/Supercharger Overboost Condition".into(),
        symptoms: vec!["limp mode".into()],
        associations: vec![Association { component: "C_D".into(), priority: 0 }],
    })
    .expect("fixture context");
    kg
}
