use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::lexer::Loc;
use crate::event::{join_params, Endpoint, EventPattern, MessageEvent, ParamValue, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    InterComponent,
    Component,
    Test,
}

impl ScenarioKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ScenarioKind::InterComponent => "intercomponent",
            ScenarioKind::Component => "component",
            ScenarioKind::Test => "test",
        }
    }
}

/// One argument position of an event template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Arg {
    Lit(Value),
    Wildcard,
    Var(String),
    /// `$n` step-text capture, 1-based. Only valid in bindings files.
    Capture(usize),
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Lit(v) => v.fmt(f),
            Arg::Wildcard => f.write_str("*"),
            Arg::Var(v) => f.write_str(v),
            Arg::Capture(n) => write!(f, "${n}"),
        }
    }
}

/// An event or pattern as written in source, before variables are resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub sender: Endpoint,
    pub receiver: Endpoint,
    pub message: String,
    pub args: Vec<Arg>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("capture ${0} is not available")]
    Capture(usize),
    #[error("wildcard not allowed in `{0}`")]
    Wildcard(String),
}

impl Template {
    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|a| match a {
            Arg::Var(v) => Some(v.as_str()),
            _ => None,
        })
    }

    pub fn resolve_args(
        &self,
        vars: &BTreeMap<String, Value>,
        captures: &[Value],
    ) -> Result<Vec<ParamValue>, ResolveError> {
        self.args
            .iter()
            .map(|a| match a {
                Arg::Lit(v) => Ok(ParamValue::Concrete(v.clone())),
                Arg::Wildcard => Ok(ParamValue::Wildcard),
                Arg::Var(name) => vars
                    .get(name)
                    .cloned()
                    .map(ParamValue::Concrete)
                    .ok_or_else(|| ResolveError::Unbound(name.clone())),
                Arg::Capture(n) => n
                    .checked_sub(1)
                    .and_then(|i| captures.get(i))
                    .cloned()
                    .map(ParamValue::Concrete)
                    .ok_or(ResolveError::Capture(*n)),
            })
            .collect()
    }

    pub fn to_pattern(&self, vars: &BTreeMap<String, Value>, captures: &[Value]) -> Result<EventPattern, ResolveError> {
        Ok(EventPattern {
            sender: self.sender.clone(),
            receiver: self.receiver.clone(),
            message: self.message.clone(),
            params: self.resolve_args(vars, captures)?,
        })
    }

    /// Resolves to a wildcard-free event.
    pub fn to_event(&self, vars: &BTreeMap<String, Value>, captures: &[Value]) -> Result<MessageEvent, ResolveError> {
        let (Some(sender), Some(receiver)) = (self.sender.name(), self.receiver.name()) else {
            return Err(ResolveError::Wildcard(self.to_string()));
        };
        let params = self
            .resolve_args(vars, captures)?
            .into_iter()
            .map(|p| match p {
                ParamValue::Concrete(v) => Ok(v),
                ParamValue::Wildcard => Err(ResolveError::Wildcard(self.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MessageEvent::new(sender, receiver, &self.message, params))
    }

    pub fn from_pattern(p: &EventPattern) -> Self {
        Template {
            sender: p.sender.clone(),
            receiver: p.receiver.clone(),
            message: p.message.clone(),
            args: p
                .params
                .iter()
                .map(|v| match v {
                    ParamValue::Concrete(v) => Arg::Lit(v.clone()),
                    ParamValue::Wildcard => Arg::Wildcard,
                })
                .collect(),
        }
    }

    pub fn from_event(e: &MessageEvent) -> Self {
        Self::from_pattern(&e.to_pattern())
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} -> {}.{}({})",
            self.sender,
            self.receiver,
            self.message,
            join_params(&self.args)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Var(String),
    Lit(Value),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => f.write_str(v),
            Operand::Lit(v) => v.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    /// Mixed-kind operands are unequal and unordered.
    pub fn eval(self, lhs: &Value, rhs: &Value) -> bool {
        use std::cmp::Ordering;
        let ord = match (lhs, rhs) {
            (Value::Number(a), Value::Number(b)) => {
                if lhs == rhs {
                    Some(Ordering::Equal)
                } else {
                    a.partial_cmp(b)
                }
            }
            (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
            (Value::Boolean(a), Value::Boolean(b)) => Some(a.cmp(b)),
            _ => None,
        };
        match (self, ord) {
            (CmpOp::Ne, None) => true,
            (_, None) => false,
            (CmpOp::Eq, Some(o)) => o.is_eq(),
            (CmpOp::Ne, Some(o)) => o.is_ne(),
            (CmpOp::Lt, Some(o)) => o.is_lt(),
            (CmpOp::Le, Some(o)) => o.is_le(),
            (CmpOp::Gt, Some(o)) => o.is_gt(),
            (CmpOp::Ge, Some(o)) => o.is_ge(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cond {
    Cmp(Operand, CmpOp, Operand),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Not(Box<Cond>),
}

impl Cond {
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Cond::Cmp(l, _, r) => {
                for o in [l, r] {
                    if let Operand::Var(v) = o {
                        out.push(v);
                    }
                }
            }
            Cond::And(a, b) | Cond::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Cond::Not(c) => c.collect_vars(out),
        }
    }

    /// Unbound variables make the comparison false.
    pub fn eval(&self, vars: &BTreeMap<String, Value>) -> bool {
        let operand = |o: &Operand| match o {
            Operand::Var(v) => vars.get(v).cloned(),
            Operand::Lit(v) => Some(v.clone()),
        };
        match self {
            Cond::Cmp(l, op, r) => match (operand(l), operand(r)) {
                (Some(a), Some(b)) => op.eval(&a, &b),
                _ => false,
            },
            Cond::And(a, b) => a.eval(vars) && b.eval(vars),
            Cond::Or(a, b) => a.eval(vars) || b.eval(vars),
            Cond::Not(c) => !c.eval(vars),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StatementKind {
    Request(Template),
    RequestFlex(Template),
    WaitFor(Template),
    Block {
        pattern: Template,
        until: Option<Template>,
    },
    Bind {
        var: String,
        index: usize,
    },
    Guard {
        cond: Cond,
        then_body: Vec<Statement>,
        else_body: Vec<Statement>,
    },
    SetLocal {
        var: String,
        value: Operand,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub kind: StatementKind,
    pub loc: Loc,
}

impl Statement {
    pub fn new(kind: StatementKind) -> Self {
        Self {
            kind,
            loc: Loc::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDef {
    pub id: String,
    pub kind: ScenarioKind,
    /// Strict scenarios are marked Violated when their own request stays blocked.
    pub strict: bool,
    pub trigger: Option<EventPattern>,
    pub label: Option<String>,
    pub body: Vec<Statement>,
    pub loc: Loc,
}

impl ScenarioDef {
    /// Copy with every source location zeroed, for structural comparison.
    pub fn without_locations(&self) -> ScenarioDef {
        fn strip(body: &[Statement]) -> Vec<Statement> {
            body.iter()
                .map(|s| Statement {
                    loc: Loc::default(),
                    kind: match &s.kind {
                        StatementKind::Guard {
                            cond,
                            then_body,
                            else_body,
                        } => StatementKind::Guard {
                            cond: cond.clone(),
                            then_body: strip(then_body),
                            else_body: strip(else_body),
                        },
                        k => k.clone(),
                    },
                })
                .collect()
        }
        ScenarioDef {
            loc: Loc::default(),
            body: strip(&self.body),
            ..self.clone()
        }
    }

    /// Every template in the body, depth-first in source order.
    pub fn templates(&self) -> Vec<&Template> {
        fn walk<'a>(body: &'a [Statement], out: &mut Vec<&'a Template>) {
            for s in body {
                match &s.kind {
                    StatementKind::Request(t) | StatementKind::RequestFlex(t) | StatementKind::WaitFor(t) => {
                        out.push(t)
                    }
                    StatementKind::Block { pattern, until } => {
                        out.push(pattern);
                        out.extend(until.iter());
                    }
                    StatementKind::Guard {
                        then_body, else_body, ..
                    } => {
                        walk(then_body, out);
                        walk(else_body, out);
                    }
                    StatementKind::Bind { .. } | StatementKind::SetLocal { .. } => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }

    /// Templates of request statements only.
    pub fn requests(&self) -> Vec<&Template> {
        fn walk<'a>(body: &'a [Statement], out: &mut Vec<&'a Template>) {
            for s in body {
                match &s.kind {
                    StatementKind::Request(t) | StatementKind::RequestFlex(t) => out.push(t),
                    StatementKind::Guard {
                        then_body, else_body, ..
                    } => {
                        walk(then_body, out);
                        walk(else_body, out);
                    }
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }
}
