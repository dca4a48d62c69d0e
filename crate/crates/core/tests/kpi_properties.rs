use std::collections::BTreeSet;

use diagnostica_core::kpi::{compute_all, kpi_feature_table, AccountingGraph, BookingKind, Feature, Granularity, TARGET};
use diagnostica_core::synth::{consistent_books, inflate_shift, night_shift_books};
use diagnostica_core::{discover_top_k, MiningTask, Pattern, QualityMeasure, Selector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn consistent_books_balance_exactly(seed in any::<u64>(), n in 1usize..40) {
        let (sg, bookings) = consistent_books(seed, n);
        let ag = AccountingGraph::new(bookings, &sg);
        for k in compute_all(&sg, &ag) {
            prop_assert_eq!(k.balance, 0.0, "{}", k.material);
        }
    }

    #[test]
    fn real_amounts_balance_within_tolerance(seed in any::<u64>(), n in 1usize..30, scale in 0.001f64..10.0) {
        let (sg, mut bookings) = consistent_books(seed, n);
        // Scaling all amounts and quantities together keeps the identity.
        for b in &mut bookings {
            b.amount *= scale;
        }
        let ag = AccountingGraph::new(bookings, &sg);
        for k in compute_all(&sg, &ag) {
            prop_assert!(k.balance.abs() < 1e-9 * (1.0 + scale * 1e3), "{} {}", k.material, k.balance);
        }
    }

    #[test]
    fn perturbation_stays_local(seed in any::<u64>(), n in 2usize..30, pick in any::<prop::sample::Index>(), delta in 1u32..20) {
        let (sg, mut bookings) = consistent_books(seed, n);
        let before = compute_all(&sg, &AccountingGraph::new(bookings.clone(), &sg));
        let i = pick.index(bookings.len());
        bookings[i].amount += delta as f64;
        let touched = bookings[i].material.clone();
        let mut allowed: BTreeSet<String> = BTreeSet::from([touched.clone()]);
        if bookings[i].kind == BookingKind::Production {
            allowed.extend(sg.children(&touched).map(|e| e.child.clone()));
        }
        let after = compute_all(&sg, &AccountingGraph::new(bookings, &sg));
        for (b, a) in before.iter().zip(&after) {
            if !allowed.contains(&a.material) {
                prop_assert_eq!(b.balance, a.balance, "{} changed", a.material);
            }
        }
        let own = after.iter().find(|k| k.material == touched).unwrap();
        prop_assert!(own.balance != 0.0);
    }
}

#[test]
fn night_shift_is_top_mean_shift_pattern() {
    for seed in 0..10 {
        let (sg, mut bookings) = night_shift_books(seed, 60);
        inflate_shift(&mut bookings, "night", 1.0);
        let ag = AccountingGraph::new(bookings, &sg);
        for granularity in [Granularity::Material, Granularity::BookingGroup] {
            let ds = kpi_feature_table(&sg, &ag, &Feature::ALL, granularity).unwrap();
            let top = discover_top_k(&ds, &MiningTask::new(QualityMeasure::MeanShift, 1, 2)).unwrap();
            assert_eq!(
                top[0].pattern,
                Pattern::new([Selector::new("shift", "night")]).unwrap(),
                "seed {seed} {granularity:?}"
            );
            let t = &ds.numeric_target().unwrap();
            assert_eq!(t.name, TARGET);
        }
    }
}

#[test]
fn csv_round_trip_through_loader() {
    let (sg, bookings) = consistent_books(11, 12);
    let mut structure = String::from("parent,child,quantity,price_parent,price_child\n");
    let price = |id: &str| sg.material(id).and_then(|m| m.price).map(|p| p.to_string()).unwrap_or_default();
    for e in sg.edges() {
        structure += &format!("{},{},{},{},{}\n", e.parent, e.child, e.quantity, price(&e.parent), price(&e.child));
    }
    let mut ledger = String::from("material,kind,amount,shift,storage_group,cost_center_id\n");
    for b in &bookings {
        ledger += &format!("{},{},{},{},{},{}\n", b.material, b.kind, b.amount, b.shift, b.storage_group, b.cost_center_id);
    }
    let (sg2, ag2) = diagnostica_core::kpi::load_graphs(structure.as_bytes(), ledger.as_bytes()).unwrap();
    assert_eq!(sg2.edges(), sg.edges());
    // Isolated materials are not part of the edge list, so their bookings dangle.
    let dangling = ag2.dangling_materials();
    assert!(dangling.iter().all(|m| sg.degree(m) == 0));
    assert!(compute_all(&sg2, &ag2).iter().all(|k| k.balance == 0.0));
}
