use diagnostica_kg::enhance::{Association, ClassificationInput, ClassificationKind, ComponentInput, FaultContextInput, Reason};
use diagnostica_kg::{export_triples, import_str, isomorphic, Concept, DiagLogInput, KnowledgeGraph, Predicate};
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dtc(i: usize) -> String {
    format!("P{:04}", i)
}

fn component(i: usize) -> String {
    format!("comp_{i}")
}

/// Applies one random enhancer call; errors are expected for some inputs.
fn mutate(kg: &mut KnowledgeGraph, rng: &mut ChaCha8Rng, pool: usize) {
    match rng.random_range(0..9) {
        0 | 1 => {
            let n = rng.random_range(0..4);
            let mut priorities: Vec<u32> = (0..n as u32).collect();
            if rng.random_bool(0.1) && n > 1 {
                priorities[1] = priorities[0];
            }
            let mut comps: Vec<usize> = (0..pool).collect();
            comps.shuffle(rng);
            let _ = kg.add_fault_context(&FaultContextInput {
                code: if rng.random_bool(0.05) { "bad".into() } else { dtc(rng.random_range(0..pool)) },
                fault_condition: format!("condition {}", rng.random_range(0..3)),
                symptoms: (0..rng.random_range(0..3)).map(|i| format!("symptom {i}")).collect(),
                associations: priorities
                    .into_iter()
                    .zip(comps)
                    .map(|(priority, c)| Association { component: component(c), priority })
                    .collect(),
            });
        }
        2 | 3 => {
            let name = rng.random_range(0..pool);
            let affected: Vec<String> =
                (0..pool).filter(|_| rng.random_bool(0.2)).map(component).collect();
            let _ = kg.add_component(&ComponentInput {
                name: component(name),
                use_oscilloscope: rng.random_bool(0.5),
                affected_by: affected,
                subsystem: rng.random_bool(0.3).then(|| format!("sub_{}", rng.random_range(0..3))),
            });
        }
        4 => {
            let _ = kg.extend_kg_with_vehicle("car", &format!("VIN{}", rng.random_range(0..4)));
        }
        5 => {
            let associations: Vec<_> = kg.entities_of(Concept::DiagnosticAssociation).map(|e| e.id).collect();
            let classifications: Vec<_> = kg
                .entities()
                .filter(|e| e.concept.is_a(Concept::Classification))
                .map(|e| e.id)
                .collect();
            let reason = if rng.random_bool(0.5) && !classifications.is_empty() {
                Reason::Classification(*classifications.choose(rng).unwrap())
            } else if let Some(a) = associations.choose(rng) {
                Reason::Association(*a)
            } else {
                return;
            };
            let kind = if rng.random_bool(0.5) {
                ClassificationKind::Manual
            } else {
                let Ok(osc) = kg.add_oscillogram(vec![rng.random(), rng.random()]) else { return };
                ClassificationKind::Oscillogram {
                    uncertainty: rng.random(),
                    model_id: "m".into(),
                    oscillogram: osc,
                    heatmap: None,
                }
            };
            let _ = kg.add_classification(&ClassificationInput {
                component: component(rng.random_range(0..pool)),
                prediction: rng.random_bool(0.5),
                kind,
                reason,
            });
        }
        6 => {
            let path: Vec<String> = (0..rng.random_range(1..4)).map(|_| component(rng.random_range(0..pool))).collect();
            let _ = kg.add_fault_path(&path);
        }
        7 => {
            let classifications: Vec<_> =
                kg.entities().filter(|e| e.concept.is_a(Concept::Classification)).map(|e| e.id).collect();
            let paths: Vec<_> = kg.entities_of(Concept::FaultPath).map(|e| e.id).collect();
            let _ = kg.extend_kg_with_diag_log(&DiagLogInput {
                dtc_codes: vec![dtc(rng.random_range(0..pool))],
                vin: format!("VIN{}", rng.random_range(0..4)),
                classifications: classifications.choose_multiple(rng, 2).copied().collect(),
                fault_paths: paths.choose(rng).copied().into_iter().collect(),
            });
        }
        _ => {
            let ids: Vec<_> = kg.entities().map(|e| e.id).collect();
            if let (Some(&s), Some(&o)) = (ids.choose(rng), ids.choose(rng)) {
                let p = *Predicate::ALL.choose(rng).unwrap();
                let _ = kg.add_relation(s, p, o);
            }
        }
    }
}

#[test]
fn thousand_mutations_keep_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut kg = KnowledgeGraph::new();
    let mut last = kg.revision();
    for step in 0..1000 {
        mutate(&mut kg, &mut rng, 12);
        let problems = kg.check_invariants();
        assert!(problems.is_empty(), "step {step}: {problems:?}");
        assert!(kg.revision() >= last);
        last = kg.revision();
    }
    assert!(kg.len() > 50);
}

#[test]
fn two_hundred_entity_graph_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut kg = KnowledgeGraph::new();
    while kg.len() < 200 {
        mutate(&mut kg, &mut rng, 30);
    }
    let text = export_triples(&kg);
    let back = import_str(&text).unwrap();
    assert!(isomorphic(&kg, &back));
    assert!(back.check_invariants().is_empty());
    assert_eq!(import_str(&export_triples(&back)).map(|g| isomorphic(&g, &kg)), Ok(true));
}

fn fault_context() -> impl Strategy<Value = FaultContextInput> {
    (
        0u16..50,
        "[a-z ]{1,12}",
        prop::collection::vec("[a-z]{1,6}", 0..4),
        prop::collection::btree_map("[a-z]{1,4}", any::<u8>(), 0..4),
    )
        .prop_map(|(code, condition, symptoms, comps)| FaultContextInput {
            code: format!("P{code:04}"),
            fault_condition: format!("c {condition}"),
            symptoms,
            associations: comps
                .into_keys()
                .enumerate()
                .map(|(i, component)| Association { component, priority: i as u32 })
                .collect(),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replaying_payloads_changes_nothing(payloads in prop::collection::vec(fault_context(), 1..6), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kg = KnowledgeGraph::new();
        for _ in 0..20 {
            mutate(&mut kg, &mut rng, 6);
        }
        for p in &payloads {
            if kg.add_fault_context(p).is_ok() {
                let before = export_triples(&kg);
                let revision = kg.revision();
                kg.add_fault_context(p).unwrap();
                prop_assert_eq!(kg.revision(), revision);
                prop_assert_eq!(export_triples(&kg), before);
            }
        }
        prop_assert!(kg.check_invariants().is_empty());
    }

    #[test]
    fn queries_are_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kg = KnowledgeGraph::new();
        for _ in 0..40 {
            mutate(&mut kg, &mut rng, 6);
        }
        for i in 0..6 {
            prop_assert_eq!(kg.query_suspect_components_by_dtc(&dtc(i)), kg.query_suspect_components_by_dtc(&dtc(i)));
            prop_assert_eq!(kg.query_affected_by_name(&component(i)), kg.query_affected_by_name(&component(i)));
            let prios: Vec<i64> = kg.query_suspects(&dtc(i)).iter().map(|s| s.priority).collect();
            prop_assert!(prios.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn export_import_is_isomorphic(seed in any::<u64>(), steps in 0usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kg = KnowledgeGraph::new();
        for _ in 0..steps {
            mutate(&mut kg, &mut rng, 8);
        }
        let text = export_triples(&kg);
        let back = import_str(&text).unwrap();
        prop_assert!(isomorphic(&kg, &back), "{}\n---\n{}", text, export_triples(&back));
    }
}
