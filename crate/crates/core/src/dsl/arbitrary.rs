//! Proptest strategies producing well-formed scenario ASTs, for round-trip
//! and robustness tests here and in dependent crates.

use proptest::prelude::*;

use super::ast::*;
use super::lexer::Loc;
use super::parser;
use crate::event::{Endpoint, EventPattern, ParamValue, Value};

pub fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-zA-Z0-9_]{0,6}".prop_filter("keyword", |s| !parser::KEYWORDS.contains(&s.as_str()))
}

pub fn value() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<String>().prop_map(Value::Text),
        any::<f64>()
            .prop_filter("finite", |n| n.is_finite())
            .prop_map(Value::Number),
        (-100i32..100).prop_map(|n| Value::Number(n as f64 * 0.25)),
        any::<bool>().prop_map(Value::Boolean),
    ]
}

pub fn arg() -> impl Strategy<Value = Arg> {
    prop_oneof![
        value().prop_map(Arg::Lit),
        Just(Arg::Wildcard),
        ident().prop_map(Arg::Var),
    ]
}

pub fn endpoint(wild: bool) -> BoxedStrategy<Endpoint> {
    if wild {
        prop_oneof![ident().prop_map(Endpoint::Named), Just(Endpoint::Any)].boxed()
    } else {
        ident().prop_map(Endpoint::Named).boxed()
    }
}

pub fn template(wild: bool) -> impl Strategy<Value = Template> {
    (
        endpoint(wild),
        endpoint(wild),
        ident(),
        prop::collection::vec(arg(), 0..4),
    )
        .prop_map(|(sender, receiver, message, args)| Template {
            sender,
            receiver,
            message,
            args,
        })
}

pub fn trigger() -> impl Strategy<Value = EventPattern> {
    (
        endpoint(true),
        endpoint(true),
        ident(),
        prop::collection::vec(
            prop_oneof![value().prop_map(ParamValue::Concrete), Just(ParamValue::Wildcard)],
            0..3,
        ),
    )
        .prop_map(|(sender, receiver, message, params)| EventPattern {
            sender,
            receiver,
            message,
            params,
        })
}

pub fn operand() -> impl Strategy<Value = Operand> {
    prop_oneof![ident().prop_map(Operand::Var), value().prop_map(Operand::Lit)]
}

pub fn cond() -> impl Strategy<Value = Cond> {
    let op = prop_oneof![
        Just(CmpOp::Eq),
        Just(CmpOp::Ne),
        Just(CmpOp::Lt),
        Just(CmpOp::Le),
        Just(CmpOp::Gt),
        Just(CmpOp::Ge)
    ];
    let leaf = (operand(), op, operand()).prop_map(|(l, o, r)| Cond::Cmp(l, o, r));
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Cond::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Cond::Or(Box::new(a), Box::new(b))),
            inner.prop_map(|c| Cond::Not(Box::new(c))),
        ]
    })
}

pub fn simple_statement() -> impl Strategy<Value = StatementKind> {
    prop_oneof![
        template(false).prop_map(StatementKind::Request),
        template(false).prop_map(StatementKind::RequestFlex),
        template(true).prop_map(StatementKind::WaitFor),
        (template(true), prop::option::of(template(true)))
            .prop_map(|(pattern, until)| StatementKind::Block { pattern, until }),
        (ident(), 0usize..10).prop_map(|(var, index)| StatementKind::Bind { var, index }),
        (ident(), operand()).prop_map(|(var, value)| StatementKind::SetLocal { var, value }),
    ]
}

pub fn statements() -> impl Strategy<Value = Vec<Statement>> {
    let leaf = simple_statement().prop_map(Statement::new);
    let stmt = leaf.prop_recursive(2, 24, 4, |inner| {
        (
            cond(),
            prop::collection::vec(inner.clone(), 0..3),
            prop::collection::vec(inner, 0..3),
        )
            .prop_map(|(cond, then_body, else_body)| {
                Statement::new(StatementKind::Guard {
                    cond,
                    then_body,
                    else_body,
                })
            })
    });
    prop::collection::vec(stmt, 0..5)
}

pub fn scenario_def() -> impl Strategy<Value = ScenarioDef> {
    (
        ident(),
        prop_oneof![
            Just(ScenarioKind::InterComponent),
            Just(ScenarioKind::Component),
            Just(ScenarioKind::Test)
        ],
        any::<bool>(),
        prop::option::of(trigger()),
        prop::option::of(any::<String>()),
        statements(),
    )
        .prop_map(|(id, kind, strict, trigger, label, body)| {
            let (trigger, label) = match kind {
                ScenarioKind::Test => (trigger, Some(label.unwrap_or_default())),
                _ => (
                    Some(trigger.unwrap_or(EventPattern {
                        sender: Endpoint::Any,
                        receiver: Endpoint::Any,
                        message: "m".into(),
                        params: vec![],
                    })),
                    label,
                ),
            };
            ScenarioDef {
                id,
                kind,
                strict,
                trigger,
                label,
                body,
                loc: Loc::default(),
            }
        })
}
