//! Seeded generators for planted-structure experiments.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kpi::{BomEdge, Booking, BookingKind, Material, StructureGraph};
use crate::scoring::{Case, Finding, FindingKey, PruneContext};

const SHIFTS: [&str; 3] = ["day", "late", "night"];
const STORAGE: [&str; 4] = ["S1", "S2", "S3", crate::kpi::EMPTY];
const COST_CENTERS: [&str; 3] = ["CC10", "CC20", "CC30"];

fn random_dag(rng: &mut ChaCha8Rng, n: usize, edge_probability: f64) -> StructureGraph {
    let materials: Vec<Material> = (0..n)
        .map(|i| Material {
            id: format!("M{i:03}"),
            label: None,
            price: rng.random_bool(0.9).then(|| rng.random_range(1..500) as f64),
        })
        .collect();
    let mut edges = Vec::new();
    for child in 1..n {
        for parent in 0..child {
            if rng.random_bool(edge_probability) {
                edges.push(BomEdge {
                    parent: materials[parent].id.clone(),
                    child: materials[child].id.clone(),
                    quantity: rng.random_range(1..=4) as f64,
                });
            }
        }
    }
    StructureGraph::new(materials, edges).expect("edges point forward")
}

fn split(rng: &mut ChaCha8Rng, total: u32, pieces: usize) -> Vec<u32> {
    let mut cuts: Vec<u32> = (1..pieces).map(|_| rng.random_range(0..=total)).collect();
    cuts.push(0);
    cuts.push(total);
    cuts.sort_unstable();
    cuts.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Bookings that satisfy the balance identity for every material.
///
/// Amounts are integers, so all balances are exactly zero.
pub fn consistent_books(seed: u64, materials: usize) -> (StructureGraph, Vec<Booking>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let structure = random_dag(&mut rng, materials, 0.15);
    let mut produced: BTreeMap<String, u32> = BTreeMap::new();
    for m in structure.materials() {
        produced.insert(m.id.clone(), rng.random_range(0..=10));
    }
    let mut bookings = Vec::new();
    for m in structure.materials() {
        let p = produced[&m.id];
        let inherited: u32 = structure.parents(&m.id).map(|e| produced[&e.parent] * e.quantity as u32).sum();
        let extra = rng.random_range(0..=10);
        let consumed = rng.random_range(0..=extra + p);
        let outflow = extra + p - consumed;
        for (kind, amount) in [
            (BookingKind::Production, p),
            (BookingKind::Inflow, inherited + extra),
            (BookingKind::Consumption, consumed),
            (BookingKind::Outflow, outflow),
        ] {
            let pieces = rng.random_range(1..=3);
            for piece in split(&mut rng, amount, pieces) {
                bookings.push(
                    Booking::new(m.id.clone(), kind, piece as f64)
                        .with_shift(*SHIFTS.choose(&mut rng).expect("non-empty"))
                        .with_storage_group(*STORAGE.choose(&mut rng).expect("non-empty"))
                        .with_cost_center(*COST_CENTERS.choose(&mut rng).expect("non-empty")),
                );
            }
        }
    }
    (structure, bookings)
}

/// Consistent books where night-shift bookings appear only on a random half
/// of the leaf materials.
///
/// Each such material books its inflow as two night bookings and its outflow
/// as one, so inflating every night booking by one unit leaves a net balance
/// of +1 on exactly those materials. Everything else is booked by the day or
/// late shift.
pub fn night_shift_books(seed: u64, materials: usize) -> (StructureGraph, Vec<Booking>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let structure = random_dag(&mut rng, materials, 0.1);
    let leaves: Vec<String> = structure
        .materials()
        .filter(|m| structure.children(&m.id).next().is_none())
        .map(|m| m.id.clone())
        .collect();
    let mut night: Vec<String> = leaves.clone();
    night.shuffle(&mut rng);
    night.truncate(leaves.len() / 2);
    let night: BTreeSet<String> = night.into_iter().collect();

    let produced: BTreeMap<String, u32> = structure
        .materials()
        .map(|m| (m.id.clone(), if night.contains(&m.id) { 0 } else { rng.random_range(0..=10) }))
        .collect();
    let mut bookings = Vec::new();
    let mut book = |rng: &mut ChaCha8Rng, id: &str, kind: BookingKind, amount: u32, shift: &str| {
        bookings.push(
            Booking::new(id, kind, amount as f64)
                .with_shift(shift)
                .with_storage_group(*STORAGE.choose(rng).expect("non-empty"))
                .with_cost_center(*COST_CENTERS.choose(rng).expect("non-empty")),
        );
    };
    for m in structure.materials() {
        let id = m.id.as_str();
        let p = produced[id];
        let inherited: u32 = structure.parents(id).map(|e| produced[&e.parent] * e.quantity as u32).sum();
        let extra = rng.random_range(1..=10);
        if night.contains(id) {
            let total = inherited + extra;
            let first = rng.random_range(0..=total);
            book(&mut rng, id, BookingKind::Inflow, first, "night");
            book(&mut rng, id, BookingKind::Inflow, total - first, "night");
            book(&mut rng, id, BookingKind::Outflow, extra, "night");
        } else {
            let shift = if rng.random_bool(0.5) { "day" } else { "late" };
            let consumed = rng.random_range(0..=extra + p);
            book(&mut rng, id, BookingKind::Production, p, shift);
            book(&mut rng, id, BookingKind::Inflow, inherited + extra, shift);
            book(&mut rng, id, BookingKind::Consumption, consumed, shift);
            book(&mut rng, id, BookingKind::Outflow, extra + p - consumed, shift);
        }
    }
    (structure, bookings)
}

/// Adds `delta` to the amount of every booking made by `shift`.
pub fn inflate_shift(bookings: &mut [Booking], shift: &str, delta: f64) {
    for b in bookings.iter_mut().filter(|b| b.shift == shift) {
        b.amount += delta;
    }
}

/// Cases with planted deterministic implications.
#[derive(Debug, Clone)]
pub struct PlantedCases {
    pub cases: Vec<Case>,
    /// Findings present exactly when their diagnosis is labeled.
    pub planted: Vec<(FindingKey, String)>,
}

/// `findings` binary findings `f1..`, `diagnoses` diagnoses `d1..`; finding
/// `f_i` is present iff `d_i` is labeled for `i ≤ diagnoses`, the rest are
/// independent coin flips.
pub fn planted_cases(seed: u64, cases: usize, findings: usize, diagnoses: usize) -> PlantedCases {
    assert!(diagnoses <= findings, "every diagnosis needs its own finding");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = (0..cases)
        .map(|_| {
            let labels: Vec<bool> = (0..diagnoses).map(|_| rng.random_bool(0.4)).collect();
            let present = (0..findings).filter(|&i| if i < diagnoses { labels[i] } else { rng.random_bool(0.5) });
            Case {
                findings: present.map(|i| Finding::new(format!("f{}", i + 1), "yes").abnormal(true)).collect(),
                diagnoses: (0..diagnoses).filter(|&i| labels[i]).map(|i| format!("d{}", i + 1)).collect(),
            }
        })
        .collect();
    let planted = (0..diagnoses)
        .map(|i| ((format!("f{}", i + 1), "yes".to_string()), format!("d{}", i + 1)))
        .collect();
    PlantedCases { cases: out, planted }
}

/// Cases from three organ partitions with two diagnoses each.
///
/// Every diagnosis has its own attribute reading `abnormal` when present and
/// `normal` otherwise. Diagnoses are coupled across partitions (the first of
/// one partition with the second of the next), which produces associations
/// that only background knowledge can rule out.
pub fn partitioned_cases(seed: u64, cases: usize) -> (Vec<Case>, PruneContext) {
    const PARTITIONS: [&str; 3] = ["liver", "kidney", "pancreas"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diagnoses: Vec<(String, &str)> =
        PARTITIONS.iter().flat_map(|p| (1..=2).map(move |i| (format!("{p}_disease_{i}"), *p))).collect();
    let mut ctx = PruneContext::default();
    for (d, p) in &diagnoses {
        ctx.diagnosis_class.insert(d.clone(), p.to_string());
        ctx.attribute_class.insert(format!("{d}_sign"), p.to_string());
        ctx.abnormal.insert((format!("{d}_sign"), "abnormal".to_string()));
    }
    let out = (0..cases)
        .map(|_| {
            let mut labels = [false; 6];
            for p in 0..3 {
                labels[2 * p] = rng.random_bool(0.3);
            }
            for p in 0..3 {
                let partner = labels[(2 * p + 2) % 6];
                labels[2 * p + 1] = if rng.random_bool(0.85) { partner } else { rng.random_bool(0.3) };
            }
            let findings = diagnoses
                .iter()
                .zip(labels)
                .map(|((d, _), on)| {
                    Finding::new(format!("{d}_sign"), if on { "abnormal" } else { "normal" }).abnormal(on)
                })
                .collect();
            let labelled = diagnoses.iter().zip(labels).filter(|(_, on)| *on).map(|((d, _), _)| d.clone()).collect();
            Case { findings, diagnoses: labelled }
        })
        .collect();
    (out, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kpi::{compute_all, AccountingGraph};

    #[test]
    fn consistent_books_balance() {
        let (sg, bookings) = consistent_books(7, 25);
        let ag = AccountingGraph::new(bookings, &sg);
        assert!(compute_all(&sg, &ag).iter().all(|k| k.balance == 0.0));
    }

    #[test]
    fn night_inflation_hits_night_leaves_only() {
        let (sg, mut bookings) = night_shift_books(3, 40);
        let night: BTreeSet<String> = bookings.iter().filter(|b| b.shift == "night").map(|b| b.material.clone()).collect();
        assert!(!night.is_empty());
        let ag = AccountingGraph::new(bookings.clone(), &sg);
        assert!(compute_all(&sg, &ag).iter().all(|k| k.balance == 0.0));
        inflate_shift(&mut bookings, "night", 1.0);
        let ag = AccountingGraph::new(bookings, &sg);
        for k in compute_all(&sg, &ag) {
            assert_eq!(k.balance, if night.contains(&k.material) { 1.0 } else { 0.0 }, "{}", k.material);
        }
    }

    #[test]
    fn planted_cases_shape() {
        let p = planted_cases(1, 50, 8, 3);
        assert_eq!(p.cases.len(), 50);
        for c in &p.cases {
            for i in 1..=3 {
                assert_eq!(c.has(&format!("f{i}"), "yes"), c.diagnoses.contains(&format!("d{i}")));
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(partitioned_cases(9, 30).0, partitioned_cases(9, 30).0);
        assert_eq!(consistent_books(9, 10).1, consistent_books(9, 10).1);
    }
}
