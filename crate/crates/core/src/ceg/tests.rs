use super::*;
use crate::reqs::{extract_causal, Requirement};

fn leaf(t: &str) -> CauseExpr {
    CauseExpr::Leaf(CausePhrase {
        text: t.into(),
        variable: None,
        value: None,
    })
}

fn effect(t: &str) -> EffectPhrase {
    EffectPhrase {
        text: t.into(),
        variable: None,
        value: None,
        negated: false,
    }
}

fn extraction(id: &str, cause: CauseExpr) -> CausalExtraction {
    CausalExtraction {
        requirement_id: id.into(),
        cause,
        effects: vec![effect("E")],
        pattern_id: "P01".into(),
    }
}

fn graph(cause: CauseExpr) -> CauseEffectGraph {
    build_graph(&extraction("R1", cause))
}

fn cp_requirement() -> CausalExtraction {
    extract_causal(&Requirement {
        id: "R01".into(),
        text: "If the signal status is RTE_E_OK and the signal value is 3.0, the component shall set the output to READY_WITH_VENT."
            .into(),
        hint: None,
        category: None,
    })
    .unwrap()
}

/// (assignment bits, expected bit of the first effect) per case.
fn table(suite: &TestSuite) -> Vec<(Vec<u8>, u8)> {
    suite
        .cases()
        .map(|c| {
            (
                c.assignments.iter().map(|(_, v)| u8::from(*v)).collect(),
                u8::from(c.expected[0].1),
            )
        })
        .collect()
}

#[test]
fn or_graph_shape() {
    let g = graph(CauseExpr::Or(vec![leaf("A"), leaf("B")]));
    assert_eq!(
        (g.causes.len(), g.gates.len(), g.effects.len(), g.edges.len()),
        (2, 1, 1, 3)
    );
    assert_eq!(g.gates[0].op, GateOp::Or);
    assert!(g.edges.iter().all(|e| !e.negated));
}

#[test]
fn cp_requirement_graph_shape() {
    let g = build_graph(&cp_requirement());
    assert_eq!(g.causes.len(), 2);
    assert_eq!(g.gates.len(), 1);
    assert_eq!(g.gates[0].op, GateOp::And);
    assert_eq!(g.effects.len(), 1);
    assert_eq!(g.causes[0].phrase.value.as_deref(), Some("RTE_E_OK"));
}

#[test]
fn negation_is_an_edge_flag() {
    let g = graph(CauseExpr::Not(Box::new(leaf("A"))));
    assert_eq!((g.causes.len(), g.gates.len(), g.edges.len()), (1, 0, 1));
    assert!(g.edges[0].negated);

    let g = graph(CauseExpr::Not(Box::new(CauseExpr::Not(Box::new(leaf("A"))))));
    assert!(!g.edges[0].negated);
}

#[test]
fn repeated_phrases_share_one_cause() {
    let g = graph(CauseExpr::Or(vec![
        CauseExpr::And(vec![leaf("the A"), leaf("B")]),
        CauseExpr::And(vec![leaf("a"), leaf("C")]),
    ]));
    assert_eq!(g.causes.len(), 3);
    assert_eq!(g.gates.len(), 3);
}

#[test]
fn or_cases() {
    let s = derive_test_cases(&graph(CauseExpr::Or(vec![leaf("A"), leaf("B")]))).unwrap();
    assert_eq!(table(&s), [(vec![1, 0], 1), (vec![0, 1], 1), (vec![0, 0], 0)]);
    let rules: Vec<&str> = s.cases().map(|c| c.rule.as_str()).collect();
    assert_eq!(rules, ["OR-T", "OR-T", "OR-F"]);
}

#[test]
fn and_cases() {
    let s = derive_test_cases(&graph(CauseExpr::And(vec![leaf("A"), leaf("B")]))).unwrap();
    assert_eq!(table(&s), [(vec![1, 1], 1), (vec![0, 1], 0), (vec![1, 0], 0)]);
}

#[test]
fn not_cases() {
    let s = derive_test_cases(&graph(CauseExpr::Not(Box::new(leaf("A"))))).unwrap();
    assert_eq!(table(&s), [(vec![0], 1), (vec![1], 0)]);
}

#[test]
fn negative_effect_flips_expectation() {
    let mut x = extraction("R1", leaf("A"));
    x.effects[0].negated = true;
    let s = derive_test_cases(&build_graph(&x)).unwrap();
    assert_eq!(table(&s), [(vec![0], 1), (vec![1], 0)]);
}

#[test]
fn case_ids_are_unique_and_prefixed() {
    let s = derive_test_cases(&build_graph(&cp_requirement())).unwrap();
    let ids: Vec<&str> = s.cases().map(|c| c.id.as_str()).collect();
    assert_eq!(ids, ["R01_1", "R01_2", "R01_3"]);
}

#[test]
fn too_many_causes() {
    let leaves = (0..17).map(|i| leaf(&format!("c{i}"))).collect();
    let err = derive_test_cases(&graph(CauseExpr::And(leaves))).unwrap_err();
    assert_eq!(
        err,
        CegError::TooManyCauses {
            requirement: "R1".into(),
            count: 17
        }
    );
}

#[test]
fn natural_order() {
    let mut ids = vec!["R10", "R2", "R1", "R02a", "S1"];
    ids.sort_by(|a, b| natural_cmp(a, b));
    assert_eq!(ids, ["R1", "R2", "R02a", "R10", "S1"]);
}

#[test]
fn tabular_export() {
    let s = derive_test_cases(&graph(CauseExpr::Or(vec![leaf("A"), leaf("B")]))).unwrap();
    let csv = export_suite(&s, ExportFormat::Tabular).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "requirement,case,A,B,E,rule");
    assert_eq!(lines[1], "R1,R1_1,1,0,1,OR-T");
    assert_eq!(lines.len(), 4);
    assert!(!csv.contains('\r'));
}

#[test]
fn export_groups_by_requirement() {
    let a = derive_test_cases(&build_graph(&extraction("R10", leaf("X")))).unwrap();
    let b = derive_test_cases(&build_graph(&extraction("R2", leaf("Y")))).unwrap();
    let s = TestSuite::merge([a, b]);
    assert_eq!(s.requirement_ids(), ["R2", "R10"]);
    let csv = export_suite(&s, ExportFormat::Tabular).unwrap();
    let reqs: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(reqs, ["R2", "R2", "R10", "R10"]);
    assert_eq!(csv.lines().next().unwrap(), "requirement,case,Y,X,E,rule");
    assert!(csv.contains("R10,R10_1,,1,1,CAUSE-T"));

    let json = export_suite(&s, ExportFormat::Structured).unwrap();
    let back: TestSuite = serde_json::from_str(&json).unwrap();
    assert_eq!(back, s);
}

#[test]
fn export_errors() {
    assert_eq!(
        export_suite(&TestSuite::default(), ExportFormat::Tabular),
        Err(CegError::EmptySuite)
    );
    assert_eq!(
        "xml".parse::<ExportFormat>(),
        Err(CegError::UnsupportedFormat("xml".into()))
    );
}

const MAP: &str = r#"
[[causes]]
variable = "signal status"
event = "hardwareControl -> controlPilot.cpSignalSW(*, *)"
param = 0

[[causes]]
variable = "signal value"
event = "hardwareControl -> controlPilot.cpSignalSW(*, *)"
param = 1

[[effects]]
variable = "output"
event = "controlPilot -> application.evaluatedCpSignal(*)"
param = 0
"#;

#[test]
fn stub_with_full_map() {
    let s = derive_test_cases(&build_graph(&cp_requirement())).unwrap();
    let stubs = emit_harness_stubs(&s, &EventMap::parse(MAP).unwrap());
    let first: Vec<&str> = stubs.split("\n\n").next().unwrap().lines().collect();
    assert_eq!(
        first,
        [
            "test R01_1 \"R01 case 1 (AND-T)\" {",
            "    trigger hardwareControl -> controlPilot.cpSignalSW(\"RTE_E_OK\", 3.0)",
            "    eventually controlPilot -> application.evaluatedCpSignal(\"READY_WITH_VENT\")",
            "}",
        ]
    );
    let first_src = stubs.split("\n\n").next().unwrap();
    let spec = crate::harness::parse_tests(first_src).unwrap();
    assert_eq!(spec[0].directives.len(), 2);
    // Case 2 has status false: the merged trigger stays incomplete.
    assert!(stubs.contains("# TODO: complete trigger hardwareControl -> controlPilot.cpSignalSW(*, 3.0)"));
    assert!(stubs.contains("# TODO negative: signal status is RTE_E_OK"));
}

#[test]
fn stub_with_empty_map() {
    let s = derive_test_cases(&build_graph(&cp_requirement())).unwrap();
    let stubs = emit_harness_stubs(&s, &EventMap::default());
    for line in stubs.lines().filter(|l| l.starts_with("    ")) {
        assert!(line.trim_start().starts_with("# TODO"), "{line}");
    }
    assert!(stubs.contains("# TODO: signal status is RTE_E_OK"));
}

#[test]
fn unmapped_false_cause_is_annotated_negative() {
    let s = derive_test_cases(&graph(CauseExpr::Not(Box::new(leaf("plug is connected"))))).unwrap();
    let stubs = emit_harness_stubs(&s, &EventMap::default());
    assert!(stubs.contains("# TODO negative: plug is connected"));
}

#[test]
fn event_map_validation() {
    assert!(EventMap::parse("[[causes]]\nvariable = \"x\"\nevent = \"a -> b.m(*)\"\nparam = 1\n").is_err());
    assert!(EventMap::parse("[[causes]]\nphrase = \"x\"\nevent = \"a -> b.m(\"\n").is_err());
    assert!(EventMap::parse("[[causes]]\nevent = \"a -> b.m()\"\n").is_err());
    assert!(EventMap::parse("[[effects]]\nphrase = \"x\"\nevent = \"a -> b.m()\"\n").is_ok());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    /// Random boolean trees over up to `n` named causes, depth at most 3.
    pub(crate) fn expr(n: usize) -> impl Strategy<Value = CauseExpr> {
        let base = (0..n).prop_map(|i| leaf(&format!("c{i}")));
        base.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                inner.clone().prop_map(|x| CauseExpr::Not(Box::new(x))),
                prop::collection::vec(inner.clone(), 2..4).prop_map(CauseExpr::And),
                prop::collection::vec(inner, 2..4).prop_map(CauseExpr::Or),
            ]
        })
    }

    fn eval(e: &CauseExpr, value: &dyn Fn(&str) -> bool) -> bool {
        match e {
            CauseExpr::Leaf(p) => value(&p.text),
            CauseExpr::Not(x) => !eval(x, value),
            CauseExpr::And(xs) => xs.iter().all(|x| eval(x, value)),
            CauseExpr::Or(xs) => xs.iter().any(|x| eval(x, value)),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn oracle_soundness(e in expr(6), neg in any::<bool>()) {
            let mut x = extraction("R1", e.clone());
            x.effects[0].negated = neg;
            let g = build_graph(&x);
            let s = derive_test_cases(&g).unwrap();
            prop_assert!(!s.is_empty());
            let mut seen = HashSet::new();
            for c in s.cases() {
                prop_assert_eq!(c.assignments.len(), g.causes.len());
                let bits: Vec<bool> = c.assignments.iter().map(|(_, v)| *v).collect();
                prop_assert!(seen.insert(bits));
                let lookup = |phrase: &str| {
                    let i = g.causes.iter().position(|n| n.phrase.text == phrase).unwrap();
                    c.assignments[i].1
                };
                prop_assert_eq!(c.expected[0].1, eval(&e, &lookup) ^ neg);
            }
            let ids: HashSet<&str> = s.cases().map(|c| c.id.as_str()).collect();
            prop_assert_eq!(ids.len(), s.len());
            prop_assert_eq!(
                export_suite(&s, ExportFormat::Tabular).unwrap(),
                export_suite(&derive_test_cases(&g).unwrap(), ExportFormat::Tabular).unwrap()
            );
        }

        #[test]
        fn single_gate_economy_and_coverage(n in 2usize..=8, and in any::<bool>()) {
            let leaves = (0..n).map(|i| leaf(&format!("c{i}"))).collect();
            let g = graph(if and { CauseExpr::And(leaves) } else { CauseExpr::Or(leaves) });
            let s = derive_test_cases(&g).unwrap();
            prop_assert_eq!(s.len(), n + 1);
            let cases: Vec<&GeneratedTestCase> = s.cases().collect();
            for i in 0..n {
                let observable = cases.iter().any(|a| cases.iter().any(|b| {
                    (0..n).all(|j| (a.assignments[j].1 == b.assignments[j].1) == (j != i))
                        && a.expected[0].1 != b.expected[0].1
                }));
                prop_assert!(observable, "cause {} not observable", i);
            }
        }
    }
}
