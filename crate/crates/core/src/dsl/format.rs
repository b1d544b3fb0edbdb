use std::fmt::Write;

use super::ast::*;

const INDENT: &str = "    ";

/// Canonical source text for a scenario definition.
pub fn format_scenario(def: &ScenarioDef) -> String {
    let mut out = String::new();
    write!(out, "scenario {} {}", def.id, def.kind.keyword()).unwrap();
    if def.strict {
        out.push_str(" strict");
    }
    if let Some(t) = &def.trigger {
        write!(out, " on {t}").unwrap();
    }
    out.push_str(" {\n");
    if let Some(label) = &def.label {
        out.push_str(INDENT);
        out.push_str("label ");
        crate::event::write_quoted(&mut out, label).unwrap();
        out.push('\n');
    }
    write_body(&mut out, &def.body, 1);
    out.push_str("}\n");
    out
}

/// Formats several scenarios separated by blank lines.
pub fn format_scenarios(defs: &[ScenarioDef]) -> String {
    defs.iter().map(format_scenario).collect::<Vec<_>>().join("\n")
}

fn write_body(out: &mut String, body: &[Statement], depth: usize) {
    for s in body {
        let pad = INDENT.repeat(depth);
        out.push_str(&pad);
        match &s.kind {
            StatementKind::Request(t) => writeln!(out, "request {t}"),
            StatementKind::RequestFlex(t) => writeln!(out, "requestFlex {t}"),
            StatementKind::WaitFor(t) => writeln!(out, "waitFor {t}"),
            StatementKind::Block { pattern, until } => match until {
                Some(u) => writeln!(out, "block {pattern} until {u}"),
                None => writeln!(out, "block {pattern}"),
            },
            StatementKind::Bind { var, index } => writeln!(out, "bind {var} = {index}"),
            StatementKind::SetLocal { var, value } => writeln!(out, "let {var} = {value}"),
            StatementKind::Guard {
                cond,
                then_body,
                else_body,
            } => {
                writeln!(out, "when {} {{", format_cond(cond)).unwrap();
                write_body(out, then_body, depth + 1);
                out.push_str(&pad);
                if else_body.is_empty() {
                    out.push_str("}\n");
                } else {
                    out.push_str("} otherwise {\n");
                    write_body(out, else_body, depth + 1);
                    out.push_str(&pad);
                    out.push_str("}\n");
                }
                Ok(())
            }
        }
        .unwrap();
    }
}

pub fn format_cond(c: &Cond) -> String {
    fmt_cond(c, 0)
}

// Precedence: 0 = or, 1 = and, 2 = not/atom.
fn fmt_cond(c: &Cond, min_prec: u8) -> String {
    let (prec, text) = match c {
        Cond::Or(a, b) => (0, format!("{} or {}", fmt_cond(a, 0), fmt_cond(b, 1))),
        Cond::And(a, b) => (1, format!("{} and {}", fmt_cond(a, 1), fmt_cond(b, 2))),
        Cond::Not(x) => (2, format!("not {}", fmt_cond(x, 2))),
        Cond::Cmp(l, op, r) => (2, format!("{l} {} {r}", op.symbol())),
    };
    if prec < min_prec {
        format!("({text})")
    } else {
        text
    }
}
