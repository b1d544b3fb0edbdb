//! The `.scn` scenario language: parsing, canonical formatting and static
//! validation against project declarations.

#[cfg(any(test, feature = "arbitrary"))]
pub mod arbitrary;
pub mod ast;
mod format;
pub mod lexer;
pub(crate) mod parser;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use ast::*;
pub use format::{format_cond, format_scenario, format_scenarios};
pub use lexer::{Loc, SyntaxError};
pub use parser::{parse_event_pattern, parse_scenario_source};

use crate::event::{Declarations, Endpoint, EventPattern, ObjectKind, ParamKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagCode {
    SyntaxError,
    DuplicateScenario,
    UndeclaredObject,
    UndeclaredMessage,
    ArityMismatch,
    ParamKindMismatch,
    UnboundVariable,
    BadBindIndex,
    WildcardInRequest,
    MissingTrigger,
    MissingLabel,
    UnreachableTrigger,
    UnusedCapture,
    CaptureOutOfRange,
    DirectiveRole,
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub file: Option<String>,
    pub loc: Loc,
    pub code: DiagCode,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: DiagCode, loc: Loc, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            file: None,
            loc,
            code,
            message: message.into(),
        }
    }

    pub fn warning(code: DiagCode, loc: Loc, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            ..Self::error(code, loc, message)
        }
    }

    pub fn in_file(mut self, file: impl Into<String>) -> Self {
        self.file = Some(file.into());
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        if let Some(file) = &self.file {
            write!(f, "{file}:")?;
        }
        write!(f, "{}: {sev}[{}]: {}", self.loc, self.code, self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}

/// Variable name to statically known kind (None when unknown).
type Scope = BTreeMap<String, Option<ParamKind>>;

struct Checker<'a> {
    decls: &'a Declarations,
    out: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn endpoint(&mut self, ep: &Endpoint, loc: crate::dsl::Loc) {
        if let Endpoint::Named(n) = ep {
            if self.decls.object(n).is_none() {
                self.out.push(Diagnostic::error(
                    DiagCode::UndeclaredObject,
                    loc,
                    format!("undeclared object `{n}`"),
                ));
            }
        }
    }

    /// Checks endpoints, message, arity and argument kinds. Returns the
    /// declared param kinds when the message is known.
    fn template(&mut self, t: &Template, scope: &Scope, loc: Loc) -> Option<Vec<ParamKind>> {
        self.endpoint(&t.sender, loc);
        self.endpoint(&t.receiver, loc);
        for v in t.vars() {
            if !scope.contains_key(v) {
                self.out.push(Diagnostic::error(
                    DiagCode::UnboundVariable,
                    loc,
                    format!("unbound variable `{v}`"),
                ));
            }
        }
        let Some(decl) = self.decls.message(&t.message) else {
            self.out.push(Diagnostic::error(
                DiagCode::UndeclaredMessage,
                loc,
                format!("undeclared message `{}`", t.message),
            ));
            return None;
        };
        if decl.params.len() != t.args.len() {
            self.out.push(Diagnostic::error(
                DiagCode::ArityMismatch,
                loc,
                format!(
                    "message `{}` takes {} params, {} given",
                    t.message,
                    decl.params.len(),
                    t.args.len()
                ),
            ));
            return None;
        }
        for (i, (arg, kind)) in t.args.iter().zip(&decl.params).enumerate() {
            let actual = match arg {
                Arg::Lit(v) => Some(v.kind()),
                Arg::Var(v) => scope.get(v).copied().flatten(),
                Arg::Wildcard | Arg::Capture(_) => None,
            };
            if let Some(actual) = actual {
                if actual != *kind {
                    self.out.push(Diagnostic::error(
                        DiagCode::ParamKindMismatch,
                        loc,
                        format!("param {i} of `{}` must be {kind}, found {actual}", t.message),
                    ));
                }
            }
        }
        Some(decl.params.clone())
    }

    fn pattern(&mut self, p: &EventPattern, loc: Loc) -> Option<Vec<ParamKind>> {
        self.template(&Template::from_pattern(p), &Scope::new(), loc)
    }

    fn body(&mut self, body: &[Statement], scope: &mut Scope, trigger: Option<&[ParamKind]>, has_trigger: bool) {
        for s in body {
            let loc = s.loc;
            match &s.kind {
                StatementKind::Request(t) => {
                    self.template(t, scope, loc);
                    self.concrete_endpoints(t, loc);
                    if t.args.iter().any(|a| matches!(a, Arg::Wildcard)) {
                        self.out.push(Diagnostic::error(
                            DiagCode::WildcardInRequest,
                            loc,
                            format!("rigid request `{t}` contains `*`; use requestFlex"),
                        ));
                    }
                }
                StatementKind::RequestFlex(t) => {
                    self.template(t, scope, loc);
                    self.concrete_endpoints(t, loc);
                }
                StatementKind::WaitFor(t) => {
                    self.template(t, scope, loc);
                }
                StatementKind::Block { pattern, until } => {
                    self.template(pattern, scope, loc);
                    if let Some(u) = until {
                        self.template(u, scope, loc);
                    }
                }
                StatementKind::Bind { var, index } => {
                    let kind = match trigger {
                        Some(kinds) => match kinds.get(*index) {
                            Some(k) => Some(*k),
                            None => {
                                self.out.push(Diagnostic::error(
                                    DiagCode::BadBindIndex,
                                    loc,
                                    format!("trigger has {} params; cannot bind index {index}", kinds.len()),
                                ));
                                None
                            }
                        },
                        None => {
                            if !has_trigger {
                                self.out.push(Diagnostic::error(
                                    DiagCode::BadBindIndex,
                                    loc,
                                    "`bind` needs a trigger event",
                                ));
                            }
                            None
                        }
                    };
                    scope.insert(var.clone(), kind);
                }
                StatementKind::SetLocal { var, value } => {
                    let kind = match value {
                        Operand::Lit(v) => Some(v.kind()),
                        Operand::Var(v) => match scope.get(v) {
                            Some(k) => *k,
                            None => {
                                self.out.push(Diagnostic::error(
                                    DiagCode::UnboundVariable,
                                    loc,
                                    format!("unbound variable `{v}`"),
                                ));
                                None
                            }
                        },
                    };
                    scope.insert(var.clone(), kind);
                }
                StatementKind::Guard {
                    cond,
                    then_body,
                    else_body,
                } => {
                    for v in cond.vars() {
                        if !scope.contains_key(v) {
                            self.out.push(Diagnostic::error(
                                DiagCode::UnboundVariable,
                                loc,
                                format!("unbound variable `{v}`"),
                            ));
                        }
                    }
                    let mut a = scope.clone();
                    let mut b = scope.clone();
                    self.body(then_body, &mut a, trigger, has_trigger);
                    self.body(else_body, &mut b, trigger, has_trigger);
                    // Only variables bound on both paths survive the guard.
                    *scope = a.into_iter().filter(|(k, _)| b.contains_key(k)).collect();
                }
            }
        }
    }

    fn concrete_endpoints(&mut self, t: &Template, loc: Loc) {
        if t.sender == Endpoint::Any || t.receiver == Endpoint::Any {
            self.out.push(Diagnostic::error(
                DiagCode::WildcardInRequest,
                loc,
                format!("requested event `{t}` needs concrete sender and receiver"),
            ));
        }
    }
}

/// Static checks of a scenario program against the project declarations.
pub fn validate_program(defs: &[ScenarioDef], decls: &Declarations) -> Vec<Diagnostic> {
    let mut ck = Checker { decls, out: Vec::new() };
    let mut seen = HashSet::new();
    for def in defs {
        if !seen.insert(def.id.as_str()) {
            ck.out.push(Diagnostic::error(
                DiagCode::DuplicateScenario,
                def.loc,
                format!("duplicate scenario id `{}`", def.id),
            ));
        }
        if def.trigger.is_none() && def.kind != ScenarioKind::Test {
            ck.out.push(Diagnostic::error(
                DiagCode::MissingTrigger,
                def.loc,
                format!("scenario `{}` needs a trigger", def.id),
            ));
        }
        if def.label.is_none() && def.kind == ScenarioKind::Test {
            ck.out.push(Diagnostic::error(
                DiagCode::MissingLabel,
                def.loc,
                format!("test scenario `{}` needs a label", def.id),
            ));
        }
        let trigger_kinds = def.trigger.as_ref().and_then(|t| ck.pattern(t, def.loc));
        let mut scope = Scope::new();
        ck.body(&def.body, &mut scope, trigger_kinds.as_deref(), def.trigger.is_some());
    }

    ck.out
        .extend(unreachable_triggers(defs, decls).into_iter().map(|(_, d)| d));
    ck.out
}

/// Warnings for triggers sent by an object under specification that no
/// scenario in `defs` requests, with the index of the offending definition.
/// External objects are the environment and may send anything.
pub fn unreachable_triggers(defs: &[ScenarioDef], decls: &Declarations) -> Vec<(usize, Diagnostic)> {
    let mut out = Vec::new();
    for (i, def) in defs.iter().enumerate() {
        let Some(trigger) = &def.trigger else { continue };
        let external_sender = match &trigger.sender {
            Endpoint::Any => true,
            Endpoint::Named(n) => decls.object(n).map(|o| o.kind == ObjectKind::External).unwrap_or(true),
        };
        if external_sender {
            continue;
        }
        let emitted = defs.iter().flat_map(|d| d.requests()).any(|t| {
            t.message == trigger.message
                && t.sender.name().map(|n| trigger.sender.accepts(n)).unwrap_or(true)
                && t.receiver.name().map(|n| trigger.receiver.accepts(n)).unwrap_or(true)
        });
        if !emitted {
            out.push((
                i,
                Diagnostic::warning(
                    DiagCode::UnreachableTrigger,
                    def.loc,
                    format!("no scenario ever requests the trigger of `{}` ({trigger})", def.id),
                ),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests;
