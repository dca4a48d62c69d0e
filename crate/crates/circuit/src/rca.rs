//! Fault paths from classified components and `affected_by` links.

use serde::{Deserialize, Serialize};

/// Chain of anomalous components, root cause first. `cycle` marks a chain
/// whose backward walk ran into one of its own members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPath {
    pub components: Vec<String>,
    pub cycle: bool,
}

/// Walks `affected_by` backwards from each entry through anomalous components
/// until no anomalous, not yet visited component affects the chain's head,
/// then inverts the chain. Chains contained in a longer one are dropped.
pub fn fault_paths<A, B>(entries: &[String], is_anomalous: A, affected_by: B) -> Vec<FaultPath>
where
    A: Fn(&str) -> bool,
    B: Fn(&str) -> Vec<String>,
{
    let mut found = Vec::new();
    for entry in entries {
        if is_anomalous(entry) {
            walk(&mut vec![entry.clone()], &is_anomalous, &affected_by, &mut found);
        }
    }
    let mut out: Vec<FaultPath> = Vec::new();
    for (i, p) in found.iter().enumerate() {
        let contained = found.iter().enumerate().any(|(j, q)| {
            let inside = q.components.len() > p.components.len()
                && q.components.windows(p.components.len()).any(|w| w == p.components.as_slice());
            inside || (j < i && q.components == p.components)
        });
        if !contained {
            out.push(p.clone());
        }
    }
    out
}

fn walk<A, B>(chain: &mut Vec<String>, is_anomalous: &A, affected_by: &B, out: &mut Vec<FaultPath>)
where
    A: Fn(&str) -> bool,
    B: Fn(&str) -> Vec<String>,
{
    let head = chain.last().expect("chain starts non-empty").clone();
    let (mut extended, mut cycle) = (false, false);
    for cause in affected_by(&head) {
        if !is_anomalous(&cause) {
            continue;
        }
        if chain.contains(&cause) {
            cycle = true;
            continue;
        }
        chain.push(cause);
        walk(chain, is_anomalous, affected_by, out);
        chain.pop();
        extended = true;
    }
    if !extended {
        out.push(FaultPath { components: chain.iter().rev().cloned().collect(), cycle });
    }
}
