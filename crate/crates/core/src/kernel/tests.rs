use super::*;
use crate::event::{Endpoint, ObjectKind, ParamKind};
use crate::fixtures::{cp_decls, parse, CP_COMPONENT, CP_INTERCOMPONENT};

fn num(x: f64) -> Value {
    Value::Number(x)
}

fn text(s: &str) -> Value {
    Value::Text(s.into())
}

fn cp_hw(v: f64) -> MessageEvent {
    MessageEvent::new("chargingSocket", "hardwareControl", "cpSignalHW", vec![num(v)])
}

fn program(src: &str, decls: Declarations) -> Program {
    load_program(parse(src), decls, ExecutionConfig::default()).expect("program loads")
}

fn messages(trace: &Trace) -> Vec<String> {
    trace.events().map(|e| e.message.clone()).collect()
}

#[test]
fn loaded_program_has_no_instances() {
    let src = format!("{CP_INTERCOMPONENT}{CP_COMPONENT}");
    let p = program(&src, cp_decls());
    assert!(p.scenario_states().is_empty());
    assert!(p.trace().is_empty());
    assert_eq!(p.defs().count(), 2);
}

#[test]
fn empty_program_records_only_the_external_event() {
    let mut p = program("", cp_decls());
    p.post_external(cp_hw(0.0)).unwrap();
    let seg = p.run_to_quiescence().unwrap();
    assert_eq!(seg.len(), 1);
    assert_eq!(seg[0].origin, Origin::Triggered);
    assert!(p.is_quiescent());
}

#[test]
fn invalid_program_is_rejected() {
    let src = "scenario s intercomponent on chargingSocket -> hardwareControl.nope() { }";
    let err = load_program(parse(src), cp_decls(), ExecutionConfig::default()).unwrap_err();
    let KernelError::InvalidProgram(diags) = err else {
        panic!("wrong error")
    };
    assert_eq!(diags.len(), 1);
}

#[test]
fn external_events_must_be_declared_and_concrete() {
    let mut p = program("", cp_decls());
    let wild = EventPattern {
        sender: Endpoint::Named("chargingSocket".into()),
        receiver: Endpoint::Named("hardwareControl".into()),
        message: "cpSignalHW".into(),
        params: vec![ParamValue::Wildcard],
    };
    assert!(matches!(
        p.post_external_pattern(&wild),
        Err(KernelError::WildcardInExternalEvent(_))
    ));
    let undeclared = MessageEvent::new("chargingSocket", "hardwareControl", "nope", vec![]);
    assert!(matches!(
        p.post_external(undeclared),
        Err(KernelError::UndeclaredEvent(_))
    ));
    assert_eq!(p.pending_external().count(), 0);

    p.post_external(cp_hw(0.0)).unwrap();
    assert_eq!(p.pending_external().count(), 1);
    assert!(p.trace().is_empty());
}

#[test]
fn intercomponent_scenario_requests_in_order() {
    let mut p = program(CP_INTERCOMPONENT, cp_decls());
    p.post_external(cp_hw(0.0)).unwrap();
    p.run_to_quiescence().unwrap();
    let t = p.trace();
    assert_eq!(messages(t), ["cpSignalHW", "cpSignalSW", "cpSignalInformation"]);
    // Flexible requests without a rigid partner fall back to defaults; the
    // bound variable keeps the trigger's value.
    assert_eq!(t.entries[1].event.params, vec![text(""), num(0.0)]);
    assert_eq!(t.entries[2].event.params, vec![text("")]);
    assert_eq!(t.entries[1].event.sender, "hardwareControl");
    assert_eq!(t.entries[2].event.receiver, "application");
    assert!(t.entries.iter().all(|e| e.superstep == 0));
    assert!(p
        .scenario_states()
        .iter()
        .all(|s| s.status == InstanceStatus::Completed));
}

#[test]
fn instance_sits_at_second_statement_mid_superstep() {
    let mut p = program(CP_INTERCOMPONENT, cp_decls());
    p.post_external(cp_hw(0.0)).unwrap();
    p.step().unwrap().unwrap();
    let states = p.scenario_states();
    assert_eq!(states.len(), 1);
    assert_eq!(states[0].status, InstanceStatus::ActiveAtSync);
    let def = p.defs().next().unwrap();
    assert_eq!(states[0].location, Some(def.body[1].loc));
    assert_eq!(states[0].bindings["cpSignalValue"], num(0.0));
}

#[test]
fn flexible_request_takes_rigid_valuation() {
    let decls = cp_decls();
    let flex = RequestedEvent {
        sender: "hardwareControl".into(),
        receiver: "controlPilot".into(),
        message: "cpSignalSW".into(),
        params: vec![ParamValue::Wildcard, ParamValue::Concrete(num(3.0))],
        flexible: true,
    };
    let rigid = RequestedEvent {
        params: vec![ParamValue::Concrete(text("RTE_E_OK")), ParamValue::Concrete(num(3.0))],
        flexible: false,
        ..flex.clone()
    };
    let out = resolve_flexible_requests(&[flex.clone(), rigid.clone()], &decls);
    assert_eq!(
        out,
        vec![MessageEvent::new(
            "hardwareControl",
            "controlPilot",
            "cpSignalSW",
            vec![text("RTE_E_OK"), num(3.0)]
        )]
    );
    assert!(flex.accepts(&out[0]) && rigid.accepts(&out[0]));
}

#[test]
fn lone_flexible_request_is_filled_with_defaults() {
    let req = RequestedEvent {
        sender: "controlPilot".into(),
        receiver: "application".into(),
        message: "cpSignalInformation".into(),
        params: vec![ParamValue::Wildcard],
        flexible: true,
    };
    let out = resolve_flexible_requests(&[req], &cp_decls());
    assert_eq!(out[0].params, vec![text("")]);
}

#[test]
fn default_fill_covers_every_kind() {
    let mut d = Declarations::new();
    d.declare_object("a", ObjectKind::UnderSpecification)
        .declare_message("m", vec![ParamKind::Text, ParamKind::Number, ParamKind::Boolean]);
    let req = RequestedEvent {
        sender: "a".into(),
        receiver: "a".into(),
        message: "m".into(),
        params: vec![ParamValue::Wildcard; 3],
        flexible: true,
    };
    let out = resolve_flexible_requests(&[req], &d);
    assert_eq!(out[0].params, vec![text(""), num(0.0), Value::Boolean(false)]);
}

fn two_rigid(first_value: f64, second_value: f64) -> Trace {
    let src = format!(
        r#"
scenario first intercomponent on chargingSocket -> hardwareControl.cpSignalHW(*) {{
    request hardwareControl -> controlPilot.cpSignalSW("x", {first_value:?})
}}
scenario second intercomponent on chargingSocket -> hardwareControl.cpSignalHW(*) {{
    request hardwareControl -> controlPilot.cpSignalSW("x", {second_value:?})
}}
"#
    );
    let mut p = program(&src, cp_decls());
    p.post_external(cp_hw(0.0)).unwrap();
    p.run_to_quiescence().unwrap();
    p.trace().clone()
}

#[test]
fn rigid_candidates_follow_definition_order() {
    for (a, b) in [(1.0, 2.0), (2.0, 1.0)] {
        let t = two_rigid(a, b);
        let values: Vec<&Value> = t.entries[1..].iter().map(|e| &e.event.params[1]).collect();
        assert_eq!(values, vec![&num(a), &num(b)]);
    }
}

#[test]
fn both_rigid_valuations_are_candidates() {
    let src = r#"
scenario first intercomponent on chargingSocket -> hardwareControl.cpSignalHW(*) {
    request hardwareControl -> controlPilot.cpSignalSW("x", 1.0)
}
scenario second intercomponent on chargingSocket -> hardwareControl.cpSignalHW(*) {
    request hardwareControl -> controlPilot.cpSignalSW("x", 2.0)
}
"#;
    let mut p = program(src, cp_decls());
    p.post_external(cp_hw(0.0)).unwrap();
    p.step().unwrap();
    let c = p.candidates();
    assert_eq!(c.len(), 2);
    assert_eq!(c[0].event.params[1], num(1.0));
    assert_eq!(c[0].requesters, vec![0]);
    assert_eq!(c[1].requesters, vec![1]);
}

fn ping_pong_decls() -> Declarations {
    let mut d = Declarations::new();
    d.declare_object("env", ObjectKind::External)
        .declare_object("a", ObjectKind::UnderSpecification)
        .declare_object("b", ObjectKind::UnderSpecification)
        .declare_message("ping", vec![])
        .declare_message("pong", vec![]);
    d
}

#[test]
fn mutual_retrigger_hits_the_superstep_limit() {
    let src = r#"
scenario pinger intercomponent on * -> b.ping() {
    request b -> a.pong()
}
scenario ponger intercomponent on * -> a.pong() {
    request a -> b.ping()
}
"#;
    let mut p = program(src, ping_pong_decls());
    p.post_external(MessageEvent::new("env", "b", "ping", vec![])).unwrap();
    let err = p.run_to_quiescence().unwrap_err();
    assert_eq!(
        err,
        KernelError::SuperstepLimitExceeded {
            limit: 10_000,
            superstep: 0
        }
    );
    let requested = p
        .trace()
        .entries
        .iter()
        .filter(|e| e.origin == Origin::Requested)
        .count();
    assert_eq!(requested, 10_000);
}

#[test]
fn limit_counts_per_superstep() {
    let src = r#"
scenario s intercomponent on env -> a.ping() {
    request a -> b.pong()
    request a -> b.pong()
}
"#;
    let cfg = ExecutionConfig {
        max_events_per_superstep: 2,
        ..ExecutionConfig::default()
    };
    let mut p = load_program(parse(src), ping_pong_decls(), cfg).unwrap();
    for _ in 0..3 {
        p.post_external(MessageEvent::new("env", "a", "ping", vec![])).unwrap();
    }
    p.run_to_quiescence().unwrap();
    assert_eq!(p.trace().len(), 9);
    let supersteps: Vec<usize> = p.trace().entries.iter().map(|e| e.superstep).collect();
    assert_eq!(supersteps, [0, 0, 0, 1, 1, 1, 2, 2, 2]);
}

#[test]
fn retrigger_while_active_spawns_second_instance() {
    let src = r#"
scenario s intercomponent on env -> a.ping() {
    waitFor * -> *.pong()
}
"#;
    let mut p = program(src, ping_pong_decls());
    p.post_external(MessageEvent::new("env", "a", "ping", vec![])).unwrap();
    p.post_external(MessageEvent::new("env", "a", "ping", vec![])).unwrap();
    p.run_to_quiescence().unwrap();
    let states = p.scenario_states();
    assert_eq!(states.len(), 2);
    assert!(states.iter().all(|s| s.status == InstanceStatus::ActiveAtSync));
    p.post_external(MessageEvent::new("env", "b", "pong", vec![])).unwrap();
    p.run_to_quiescence().unwrap();
    assert!(p
        .scenario_states()
        .iter()
        .all(|s| s.status == InstanceStatus::Completed));
}

const BLOCKING: &str = r#"
scenario blocker intercomponent on env -> a.ping() {
    block a -> b.pong() until env -> b.ping()
    waitFor env -> a.pong()
}
scenario requester intercomponent on env -> a.ping() {
    request a -> b.pong()
}
"#;

#[test]
fn blocked_request_waits_until_block_is_lifted() {
    let mut p = program(BLOCKING, ping_pong_decls());
    p.post_external(MessageEvent::new("env", "a", "ping", vec![])).unwrap();
    p.run_to_quiescence().unwrap();
    assert_eq!(messages(p.trace()), ["ping"]);
    let c = p.candidates();
    assert_eq!(c.len(), 1);
    assert_eq!(c[0].blocked_by, vec![0]);

    p.post_external(MessageEvent::new("env", "b", "ping", vec![])).unwrap();
    p.run_to_quiescence().unwrap();
    assert_eq!(messages(p.trace()), ["ping", "ping", "pong"]);
}

#[test]
fn finished_body_keeps_until_blocks() {
    let src = r#"
scenario blocker intercomponent on env -> a.ping() {
    block a -> b.pong() until env -> b.ping()
}
scenario requester intercomponent on env -> a.ping() {
    request a -> b.pong()
}
"#;
    let mut p = program(src, ping_pong_decls());
    p.post_external(MessageEvent::new("env", "a", "ping", vec![])).unwrap();
    p.run_to_quiescence().unwrap();
    assert_eq!(p.trace().len(), 1);
    let sp = p.sync_point(0).unwrap();
    assert!(sp.requested.is_empty());
    assert_eq!(sp.waited.len(), 1);
    assert_eq!(sp.blocked.len(), 1);

    p.post_external(MessageEvent::new("env", "b", "ping", vec![])).unwrap();
    p.run_to_quiescence().unwrap();
    assert_eq!(p.scenario_states()[0].status, InstanceStatus::Completed);
    assert_eq!(messages(p.trace()), ["ping", "ping", "pong"]);
}

#[test]
fn block_without_until_ends_with_the_body() {
    let src = r#"
scenario blocker intercomponent on env -> a.ping() {
    block a -> b.pong()
}
scenario requester intercomponent on env -> a.ping() {
    request a -> b.pong()
}
"#;
    let mut p = program(src, ping_pong_decls());
    p.post_external(MessageEvent::new("env", "a", "ping", vec![])).unwrap();
    p.run_to_quiescence().unwrap();
    assert_eq!(messages(p.trace()), ["ping", "pong"]);
}

#[test]
fn strict_scenario_with_blocked_request_is_violated() {
    let strict = BLOCKING.replace("requester intercomponent", "requester intercomponent strict");
    let mut p = program(&strict, ping_pong_decls());
    p.post_external(MessageEvent::new("env", "a", "ping", vec![])).unwrap();
    p.run_to_quiescence().unwrap();
    let states = p.scenario_states();
    assert_eq!(states[1].status, InstanceStatus::Violated);
    assert!(p.sync_point(1).is_none());

    let mut lax = program(BLOCKING, ping_pong_decls());
    lax.post_external(MessageEvent::new("env", "a", "ping", vec![]))
        .unwrap();
    lax.run_to_quiescence().unwrap();
    assert_eq!(lax.scenario_states()[1].status, InstanceStatus::ActiveAtSync);
}

#[test]
fn guard_selects_branch_from_bindings() {
    let src = format!("{CP_INTERCOMPONENT}{CP_COMPONENT}");
    let mut p = program(&src, cp_decls());
    p.post_external(cp_hw(0.0)).unwrap();
    p.run_to_quiescence().unwrap();
    // Default-filled status never equals RTE_E_OK, so the component's guard is false.
    assert!(!messages(p.trace()).contains(&"setOutputValue".to_string()));
}

#[test]
fn rigid_component_request_overrides_flexible_value() {
    let src = r#"
scenario hw intercomponent on chargingSocket -> hardwareControl.cpSignalHW(*) {
    requestFlex hardwareControl -> controlPilot.cpSignalSW(*, 3.0)
}
scenario comp component on chargingSocket -> hardwareControl.cpSignalHW(*) {
    request hardwareControl -> controlPilot.cpSignalSW("RTE_E_OK", 3.0)
}
"#;
    let mut p = program(src, cp_decls());
    p.post_external(cp_hw(0.0)).unwrap();
    p.run_to_quiescence().unwrap();
    assert_eq!(p.trace().len(), 2);
    assert_eq!(p.trace().entries[1].event.params, vec![text("RTE_E_OK"), num(3.0)]);
    assert!(p
        .scenario_states()
        .iter()
        .all(|s| s.status == InstanceStatus::Completed));
}

#[test]
fn test_scenarios_start_explicitly() {
    let src = format!(
        r#"{CP_INTERCOMPONENT}
scenario t test {{
    label "hw test"
    request chargingSocket -> hardwareControl.cpSignalHW(1.0)
    waitFor controlPilot -> application.cpSignalInformation(*)
}}
"#
    );
    let mut p = program(&src, cp_decls());
    p.post_external(cp_hw(0.0)).unwrap();
    p.run_to_quiescence().unwrap();
    // The test scenario has no trigger and does not spawn by itself.
    assert!(p.scenario_states().iter().all(|s| s.def_id != "t"));

    let mut p = p.fresh();
    p.start("t").unwrap();
    p.run_to_quiescence().unwrap();
    assert_eq!(messages(p.trace()), ["cpSignalHW", "cpSignalSW", "cpSignalInformation"]);
    assert_eq!(p.trace().entries[0].origin, Origin::Requested);
    let t = p.scenario_states().into_iter().find(|s| s.def_id == "t").unwrap();
    assert_eq!(t.status, InstanceStatus::Completed);
    assert!(matches!(p.start("nope"), Err(KernelError::UnknownScenario(_))));
}

#[test]
fn trace_serialization_round_trips() {
    let mut p = program(CP_INTERCOMPONENT, cp_decls());
    p.post_external(cp_hw(0.5)).unwrap();
    p.run_to_quiescence().unwrap();
    let text = p.trace().serialize();
    assert_eq!(
        text.lines().next().unwrap(),
        "0\t0\ttriggered\tchargingSocket\thardwareControl\tcpSignalHW\t0.5"
    );
    assert_eq!(
        text.lines().nth(1).unwrap(),
        "1\t0\trequested\thardwareControl\tcontrolPilot\tcpSignalSW\t\"\",0.5"
    );
    assert_eq!(Trace::parse(&text).unwrap(), *p.trace());
}

#[test]
fn trace_parse_rejects_malformed_lines() {
    assert!(Trace::parse("0\t0\ttriggered\ta\tb\n").is_err());
    assert!(Trace::parse("0\t0\tsideways\ta\tb\tm\t\n").is_err());
    assert!(Trace::parse("0\t0\ttriggered\ta\tb\tm\t1.0,\n").is_err());
    let t = Trace::parse("0\t0\ttriggered\ta\tb\tm\t\"x, y\",true\n").unwrap();
    assert_eq!(t.entries[0].event.params, vec![text("x, y"), Value::Boolean(true)]);
}

#[test]
fn quiescent_run_is_idempotent() {
    let mut p = program(BLOCKING, ping_pong_decls());
    p.post_external(MessageEvent::new("env", "a", "ping", vec![])).unwrap();
    p.run_to_quiescence().unwrap();
    let before = p.trace().clone();
    assert!(p.run_to_quiescence().unwrap().is_empty());
    assert_eq!(*p.trace(), before);
}

mod props {
    use super::*;
    use crate::dsl::{Arg, Statement, StatementKind};
    use proptest::prelude::*;

    const OBJECTS: [&str; 3] = ["a", "b", "c"];

    fn decls() -> Declarations {
        let mut d = Declarations::new();
        d.declare_object("env", ObjectKind::External);
        for o in OBJECTS {
            d.declare_object(o, ObjectKind::UnderSpecification);
        }
        d.declare_message("m0", vec![])
            .declare_message("m1", vec![ParamKind::Number])
            .declare_message("m2", vec![])
            .declare_message("m3", vec![ParamKind::Number]);
        d
    }

    fn arity(msg: usize) -> usize {
        msg % 2
    }

    fn object() -> impl Strategy<Value = String> {
        prop::sample::select(OBJECTS.to_vec()).prop_map(String::from)
    }

    fn endpoint() -> impl Strategy<Value = Endpoint> {
        prop_oneof![Just(Endpoint::Any), object().prop_map(Endpoint::Named)]
    }

    fn arg(wild: bool) -> impl Strategy<Value = Arg> {
        let lit = prop::sample::select(vec![1.0, 2.0]).prop_map(|x| Arg::Lit(Value::Number(x)));
        if wild {
            prop_oneof![lit, Just(Arg::Wildcard)].boxed()
        } else {
            lit.boxed()
        }
    }

    fn template(concrete_endpoints: bool, wild: bool) -> impl Strategy<Value = Template> {
        let ep = move || {
            if concrete_endpoints {
                object().prop_map(Endpoint::Named).boxed()
            } else {
                endpoint().boxed()
            }
        };
        (ep(), ep(), 0usize..4, arg(wild)).prop_map(|(sender, receiver, m, a)| Template {
            sender,
            receiver,
            message: format!("m{m}"),
            args: if arity(m) == 1 { vec![a] } else { vec![] },
        })
    }

    fn statement() -> impl Strategy<Value = Statement> {
        prop_oneof![
            3 => template(true, false).prop_map(|t| Statement::new(StatementKind::Request(t))),
            2 => template(true, true).prop_map(|t| Statement::new(StatementKind::RequestFlex(t))),
            2 => template(false, true).prop_map(|t| Statement::new(StatementKind::WaitFor(t))),
            3 => (template(false, true), prop::option::of(template(false, true)))
                .prop_map(|(pattern, until)| Statement::new(StatementKind::Block { pattern, until })),
        ]
    }

    fn program_defs() -> impl Strategy<Value = Vec<ScenarioDef>> {
        prop::collection::vec(
            (
                template(false, true),
                prop::collection::vec(statement(), 0..5),
                any::<bool>(),
            ),
            0..5,
        )
        .prop_map(|defs| {
            defs.into_iter()
                .enumerate()
                .map(|(i, (trigger, body, strict))| ScenarioDef {
                    id: format!("s{i}"),
                    kind: ScenarioKind::InterComponent,
                    strict,
                    trigger: Some(trigger.to_pattern(&BTreeMap::new(), &[]).unwrap()),
                    label: None,
                    body,
                    loc: Loc::default(),
                })
                .collect()
        })
    }

    fn externals() -> impl Strategy<Value = Vec<MessageEvent>> {
        prop::collection::vec((object(), 0usize..4, prop::sample::select(vec![1.0, 2.0])), 1..5).prop_map(|v| {
            v.into_iter()
                .map(|(r, m, x)| {
                    let params = if arity(m) == 1 { vec![Value::Number(x)] } else { vec![] };
                    MessageEvent::new("env", r, format!("m{m}"), params)
                })
                .collect()
        })
    }

    fn load(defs: Vec<ScenarioDef>) -> Program {
        let cfg = ExecutionConfig {
            max_events_per_superstep: 50,
            ..ExecutionConfig::default()
        };
        load_program(defs, decls(), cfg).expect("generated program is valid")
    }

    fn play(mut p: Program, ext: &[MessageEvent]) -> (Program, Option<KernelError>) {
        for e in ext {
            p.post_external(e.clone()).unwrap();
        }
        let err = p.run_to_quiescence().err();
        (p, err)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn execution_is_deterministic(defs in program_defs(), ext in externals()) {
            let p = load(defs);
            let (a, ea) = play(p.fresh(), &ext);
            let (b, eb) = play(p.fresh(), &ext);
            prop_assert_eq!(a.trace().serialize(), b.trace().serialize());
            prop_assert_eq!(ea, eb);
        }

        #[test]
        fn every_step_respects_blocks_and_requests(defs in program_defs(), ext in externals()) {
            let mut p = load(defs);
            for e in &ext {
                p.post_external(e.clone()).unwrap();
            }
            loop {
                let blocks = p.active_blocks();
                let candidates = p.candidates();
                let entry = match p.step() {
                    Ok(Some(entry)) => entry,
                    Ok(None) | Err(_) => break,
                };
                if entry.origin == Origin::Requested {
                    for b in &blocks {
                        prop_assert!(!matches(b, &entry.event).unwrap(), "{} executed while blocked by {}", entry.event, b);
                    }
                    let c = candidates.iter().find(|c| c.event == entry.event);
                    prop_assert!(c.is_some_and(|c| !c.requesters.is_empty()));
                    prop_assert!(p.last_effect().advanced >= 1);
                }
            }
        }

        #[test]
        fn trace_is_dense_and_supersteps_never_decrease(defs in program_defs(), ext in externals()) {
            let (p, _) = play(load(defs), &ext);
            for (i, e) in p.trace().entries.iter().enumerate() {
                prop_assert_eq!(e.seq, i);
            }
            for w in p.trace().entries.windows(2) {
                prop_assert!(w[0].superstep <= w[1].superstep);
            }
            prop_assert_eq!(Trace::parse(&p.trace().serialize()).unwrap(), p.trace().clone());
        }

        #[test]
        fn quiescence_is_stable(defs in program_defs(), ext in externals()) {
            let (mut p, err) = play(load(defs), &ext);
            if err.is_none() {
                let len = p.trace().len();
                prop_assert!(p.run_to_quiescence().unwrap().is_empty());
                prop_assert_eq!(p.trace().len(), len);
            }
        }

        #[test]
        fn active_instances_expose_one_sync_point(defs in program_defs(), ext in externals()) {
            let (p, _) = play(load(defs), &ext);
            for s in p.scenario_states() {
                let sp = p.sync_point(s.instance);
                match s.status {
                    InstanceStatus::ActiveAtSync => {
                        let sp = sp.unwrap();
                        prop_assert_eq!(sp.requested.len() + sp.waited.len().min(1), 1);
                    }
                    _ => prop_assert!(sp.is_none()),
                }
            }
        }
    }
}
