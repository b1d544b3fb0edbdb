use super::*;
use crate::event::Value;
use crate::fixtures::{cp_decls, parse, CP_COMPONENT, CP_INTERCOMPONENT};

#[test]
fn cp_intercomponent_parses_to_one_intercomponent_scenario() {
    let defs = parse(CP_INTERCOMPONENT);
    assert_eq!(defs.len(), 1);
    assert_eq!(defs[0].kind, ScenarioKind::InterComponent);
    assert_eq!(defs[0].body.len(), 3);
    assert!(matches!(defs[0].body[0].kind, StatementKind::Bind { index: 0, .. }));
    assert!(matches!(defs[0].body[1].kind, StatementKind::RequestFlex(_)));
    assert!(matches!(defs[0].body[2].kind, StatementKind::RequestFlex(_)));
}

#[test]
fn empty_source_has_no_scenarios() {
    assert!(parse_scenario_source("").unwrap().is_empty());
    assert!(parse_scenario_source("  // only a comment\n").unwrap().is_empty());
}

#[test]
fn cp_component_has_guard_with_two_statement_then_body() {
    let defs = parse(CP_COMPONENT);
    assert_eq!(defs[0].kind, ScenarioKind::Component);
    let StatementKind::Guard {
        then_body, else_body, ..
    } = &defs[0].body[2].kind
    else {
        panic!("expected guard");
    };
    assert_eq!(then_body.len(), 2);
    assert!(else_body.is_empty());
}

#[test]
fn syntax_errors_report_line_and_column() {
    let err = parse_scenario_source("scenario s intercomponent on a -> b.m( {\n}").unwrap_err();
    assert_eq!(err.len(), 1);
    assert_eq!(err[0].code, DiagCode::SyntaxError);
    assert_eq!(err[0].loc, Loc::new(1, 40));
}

#[test]
fn duplicate_ids_are_errors() {
    let src = "scenario a intercomponent on x -> y.m() {}\nscenario a intercomponent on x -> y.m() {}";
    let err = parse_scenario_source(src).unwrap_err();
    assert_eq!(err[0].code, DiagCode::DuplicateScenario);
    assert_eq!(err[0].loc.line, 2);
}

#[test]
fn kind_specific_header_requirements() {
    assert!(parse_scenario_source("scenario a component { }").is_err());
    assert!(parse_scenario_source("scenario t test { request a -> b.m() }").is_err());
    let t = parse_scenario_source("scenario t test { label \"x\" request a -> b.m() }").unwrap();
    assert_eq!(t[0].label.as_deref(), Some("x"));
    assert!(t[0].trigger.is_none());
}

#[test]
fn trigger_rejects_variables() {
    let e = parse_scenario_source("scenario a intercomponent on x -> y.m(v) {}").unwrap_err();
    assert!(e[0].message.contains("variable"));
}

#[test]
fn statement_locations_increase() {
    let defs = parse(CP_COMPONENT);
    let locs: Vec<_> = defs[0].body.iter().map(|s| s.loc).collect();
    assert!(locs.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn cp_component_format_round_trips() {
    let def = &parse(CP_COMPONENT)[0];
    let text = format_scenario(def);
    let back = &parse(&text)[0];
    assert_eq!(back.without_locations(), def.without_locations());
    assert!(text.contains("when status == \"RTE_E_OK\" and value == 3.0 {"));
}

#[test]
fn empty_body_formats_as_header_and_empty_block() {
    let def = &parse("scenario s intercomponent on a -> b.m() {}")[0];
    assert_eq!(format_scenario(def), "scenario s intercomponent on a -> b.m() {\n}\n");
}

#[test]
fn nested_guard_indents_to_depth_two() {
    let src = r#"scenario s intercomponent on a -> b.m(*) {
        bind x = 0
        when x > 1.0 { when x < 5.0 or not x == 2.0 { request a -> b.m(x) } otherwise { request b -> a.m(x) } }
    }"#;
    let def = &parse(src)[0];
    let text = format_scenario(def);
    assert!(text.contains("\n        when x < 5.0 or not x == 2.0 {\n"));
    assert!(text.contains("\n            request a -> b.m(x)\n"));
    assert_eq!(parse(&text)[0].without_locations(), def.without_locations());
}

#[test]
fn cond_formatting_keeps_needed_parentheses() {
    let src = "scenario s intercomponent on a -> b.m(*) { bind x = 0 when (x == 1.0 or x == 2.0) and not (x == 3.0 and x == 4.0) { } }";
    let def = &parse(src)[0];
    let text = format_scenario(def);
    assert!(text.contains("when (x == 1.0 or x == 2.0) and not (x == 3.0 and x == 4.0) {"));
    assert_eq!(parse(&text)[0].without_locations(), def.without_locations());
}

#[test]
fn cp_intercomponent_validates_cleanly() {
    let diags = validate_program(&parse(CP_INTERCOMPONENT), &cp_decls());
    assert!(!has_errors(&diags), "{diags:?}");
}

#[test]
fn undeclared_message_is_one_error() {
    let src = r#"scenario s intercomponent on chargingSocket -> hardwareControl.cpSignalHW(*) {
        request controlPilot -> application.evaluatedPrxSignal("x")
    }"#;
    let diags: Vec<_> = validate_program(&parse(src), &cp_decls())
        .into_iter()
        .filter(Diagnostic::is_error)
        .collect();
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].code, DiagCode::UndeclaredMessage);
}

#[test]
fn unbound_guard_variable_is_one_error() {
    let src = r#"scenario s intercomponent on chargingSocket -> hardwareControl.cpSignalHW(*) {
        when v == 1.0 { }
    }"#;
    let diags: Vec<_> = validate_program(&parse(src), &cp_decls())
        .into_iter()
        .filter(Diagnostic::is_error)
        .collect();
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].code, DiagCode::UnboundVariable);
}

#[test]
fn validation_catches_arity_kind_and_wildcards() {
    let src = r#"scenario s intercomponent on chargingSocket -> hardwareControl.cpSignalHW(*) {
        bind v = 0
        bind w = 3
        request controlPilot -> application.cpSignalInformation(v)
        request controlPilot -> application.cpSignalInformation(*)
        requestFlex controlPilot -> application.cpSignalInformation("a", "b")
        request nobody -> application.cpSignalInformation("a")
    }"#;
    let codes: Vec<_> = validate_program(&parse(src), &cp_decls())
        .into_iter()
        .filter(Diagnostic::is_error)
        .map(|d| d.code)
        .collect();
    assert_eq!(
        codes,
        vec![
            DiagCode::BadBindIndex,
            DiagCode::ParamKindMismatch,
            DiagCode::WildcardInRequest,
            DiagCode::ArityMismatch,
            DiagCode::UndeclaredObject,
        ]
    );
}

#[test]
fn guard_branch_bindings_merge_by_intersection() {
    let src = r#"scenario s intercomponent on chargingSocket -> hardwareControl.cpSignalHW(*) {
        bind v = 0
        when v == 1.0 { let a = "x" let b = "y" } otherwise { let a = "z" }
        request controlPilot -> application.cpSignalInformation(a)
        request controlPilot -> application.cpSignalInformation(b)
    }"#;
    let diags = validate_program(&parse(src), &cp_decls());
    let unbound: Vec<_> = diags.iter().filter(|d| d.code == DiagCode::UnboundVariable).collect();
    assert_eq!(unbound.len(), 1);
    assert!(unbound[0].message.contains("`b`"));
}

#[test]
fn unreachable_trigger_is_a_warning() {
    let src = r#"scenario s component on hardwareControl -> controlPilot.cpSignalSW(*, *) { }"#;
    let diags = validate_program(&parse(src), &cp_decls());
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].severity, Severity::Warning);
    assert_eq!(diags[0].code, DiagCode::UnreachableTrigger);
    let mut both = parse(CP_INTERCOMPONENT);
    both.extend(parse(src));
    assert!(validate_program(&both, &cp_decls()).is_empty());
}

#[test]
fn guard_evaluation_follows_comparison_rules() {
    let def = &parse(CP_COMPONENT)[0];
    let StatementKind::Guard { cond, .. } = &def.body[2].kind else {
        unreachable!()
    };
    let mut vars = std::collections::BTreeMap::new();
    vars.insert("status".to_string(), Value::Text("RTE_E_OK".into()));
    vars.insert("value".to_string(), Value::Number(3.0 + 1e-12));
    assert!(cond.eval(&vars));
    vars.insert("value".to_string(), Value::Number(0.0));
    assert!(!cond.eval(&vars));
    assert!(CmpOp::Ne.eval(&Value::Number(1.0), &Value::Text("1".into())));
    assert!(!CmpOp::Lt.eval(&Value::Number(1.0), &Value::Text("1".into())));
}

mod props {
    use super::*;
    use crate::dsl::arbitrary::scenario_def;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn format_then_parse_is_identity(def in scenario_def()) {
            let text = format_scenario(&def);
            let back = parse_scenario_source(&text).map_err(|e| TestCaseError::fail(format!("{e:?}\n{text}")))?;
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(back[0].without_locations(), def);
        }

        #[test]
        fn parser_is_total(src in any::<String>()) {
            let _ = parse_scenario_source(&src);
        }

        #[test]
        fn parser_is_total_on_near_valid_input(cut in 0usize..400, def in scenario_def()) {
            let text = format_scenario(&def);
            let mut end = cut.min(text.len());
            while !text.is_char_boundary(end) { end -= 1; }
            match parse_scenario_source(&text[..end]) {
                Ok(_) => {}
                Err(diags) => prop_assert!(!diags.is_empty()),
            }
        }
    }
}
