use std::collections::HashSet;

use super::ast::*;
use super::lexer::{lex, Loc, SyntaxError, Tok, Token};
use super::{DiagCode, Diagnostic};
use crate::event::{Endpoint, EventPattern, ParamValue, Value};

pub(crate) const KEYWORDS: &[&str] = &[
    "scenario",
    "intercomponent",
    "component",
    "test",
    "strict",
    "on",
    "label",
    "request",
    "requestFlex",
    "waitFor",
    "block",
    "until",
    "bind",
    "let",
    "when",
    "otherwise",
    "and",
    "or",
    "not",
    "true",
    "false",
];

/// Recursive-descent helper over a token vector.
pub(crate) struct TokenStream {
    toks: Vec<Token>,
    pos: usize,
    /// Whether `$n` captures are legal arguments.
    pub allow_captures: bool,
}

impl TokenStream {
    pub fn new(src: &str) -> Result<Self, SyntaxError> {
        Ok(Self {
            toks: lex(src)?,
            pos: 0,
            allow_captures: false,
        })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn loc(&self) -> Loc {
        self.toks[self.pos].loc
    }

    pub fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn error(&self, expected: &str) -> SyntaxError {
        SyntaxError::new(self.loc(), format!("expected {expected}, found {}", self.peek()))
    }

    pub fn expect(&mut self, tok: &Tok) -> Result<(), SyntaxError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(&tok.to_string()))
        }
    }

    pub fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("`{kw}`")))
        }
    }

    /// Identifier that is not a reserved keyword.
    pub fn ident(&mut self, what: &str) -> Result<String, SyntaxError> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => Err(self.error(what)),
        }
    }

    pub fn string(&mut self) -> Result<String, SyntaxError> {
        match self.peek() {
            Tok::Str(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => Err(self.error("string literal")),
        }
    }

    fn literal(&mut self) -> Option<Value> {
        let v = match self.peek() {
            Tok::Str(s) => Value::Text(s.clone()),
            Tok::Num(n) => Value::Number(*n),
            Tok::Ident(s) if s == "true" => Value::Boolean(true),
            Tok::Ident(s) if s == "false" => Value::Boolean(false),
            _ => return None,
        };
        self.next();
        Some(v)
    }

    fn endpoint(&mut self, allow_wildcard: bool) -> Result<Endpoint, SyntaxError> {
        if allow_wildcard && self.eat(&Tok::Star) {
            return Ok(Endpoint::Any);
        }
        Ok(Endpoint::Named(self.ident("object name")?))
    }

    fn arg(&mut self) -> Result<Arg, SyntaxError> {
        if self.eat(&Tok::Star) {
            return Ok(Arg::Wildcard);
        }
        if let Some(v) = self.literal() {
            return Ok(Arg::Lit(v));
        }
        if let Tok::Capture(n) = *self.peek() {
            if !self.allow_captures {
                return Err(SyntaxError::new(
                    self.loc(),
                    "capture references are only allowed in bindings",
                ));
            }
            if n == 0 {
                return Err(SyntaxError::new(self.loc(), "captures are numbered from $1"));
            }
            self.next();
            return Ok(Arg::Capture(n));
        }
        Ok(Arg::Var(self.ident("argument")?))
    }

    /// `sender -> receiver.message(args)`; endpoints may be `*` when
    /// `patterns` is set.
    pub fn template(&mut self, patterns: bool) -> Result<Template, SyntaxError> {
        let sender = self.endpoint(patterns)?;
        self.expect(&Tok::Arrow)?;
        let receiver = self.endpoint(patterns)?;
        self.expect(&Tok::Dot)?;
        let message = self.ident("message name")?;
        self.expect(&Tok::LParen)?;
        let mut args = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                args.push(self.arg()?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(&Tok::Comma)?;
            }
        }
        Ok(Template {
            sender,
            receiver,
            message,
            args,
        })
    }

    /// A pattern with literal or wildcard arguments only.
    pub fn literal_pattern(&mut self) -> Result<EventPattern, SyntaxError> {
        let loc = self.loc();
        let t = self.template(true)?;
        let params = t
            .args
            .iter()
            .map(|a| match a {
                Arg::Lit(v) => Ok(ParamValue::Concrete(v.clone())),
                Arg::Wildcard => Ok(ParamValue::Wildcard),
                Arg::Var(v) => Err(SyntaxError::new(
                    loc,
                    format!("variable `{v}` not allowed here; use a literal or `*`"),
                )),
                Arg::Capture(n) => Err(SyntaxError::new(loc, format!("capture ${n} not allowed here"))),
            })
            .collect::<Result<_, _>>()?;
        Ok(EventPattern {
            sender: t.sender,
            receiver: t.receiver,
            message: t.message,
            params,
        })
    }

    fn operand(&mut self) -> Result<Operand, SyntaxError> {
        if let Some(v) = self.literal() {
            return Ok(Operand::Lit(v));
        }
        Ok(Operand::Var(self.ident("variable or literal")?))
    }

    pub fn cond(&mut self) -> Result<Cond, SyntaxError> {
        let mut lhs = self.cond_and()?;
        while self.eat_kw("or") {
            let rhs = self.cond_and()?;
            lhs = Cond::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cond_and(&mut self) -> Result<Cond, SyntaxError> {
        let mut lhs = self.cond_not()?;
        while self.eat_kw("and") {
            let rhs = self.cond_not()?;
            lhs = Cond::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cond_not(&mut self) -> Result<Cond, SyntaxError> {
        if self.eat_kw("not") {
            return Ok(Cond::Not(Box::new(self.cond_not()?)));
        }
        if self.eat(&Tok::LParen) {
            let c = self.cond()?;
            self.expect(&Tok::RParen)?;
            return Ok(c);
        }
        let lhs = self.operand()?;
        let op = match self.peek() {
            Tok::EqEq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return Err(self.error("comparison operator")),
        };
        self.next();
        let rhs = self.operand()?;
        Ok(Cond::Cmp(lhs, op, rhs))
    }

    fn index(&mut self) -> Result<usize, SyntaxError> {
        match *self.peek() {
            Tok::Num(n) if n >= 0.0 && n.fract() == 0.0 && n < 1e9 => {
                self.next();
                Ok(n as usize)
            }
            _ => Err(self.error("parameter index")),
        }
    }

    fn body(&mut self) -> Result<Vec<Statement>, SyntaxError> {
        self.expect(&Tok::LBrace)?;
        let mut out = Vec::new();
        while !self.eat(&Tok::RBrace) {
            out.push(self.statement()?);
        }
        Ok(out)
    }

    fn statement(&mut self) -> Result<Statement, SyntaxError> {
        let loc = self.loc();
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            Tok::Eof => return Err(self.error("`}`")),
            _ => return Err(self.error("statement")),
        };
        self.next();
        let kind = match kw.as_str() {
            "request" => StatementKind::Request(self.template(false)?),
            "requestFlex" => StatementKind::RequestFlex(self.template(false)?),
            "waitFor" => StatementKind::WaitFor(self.template(true)?),
            "block" => {
                let pattern = self.template(true)?;
                let until = if self.eat_kw("until") {
                    Some(self.template(true)?)
                } else {
                    None
                };
                StatementKind::Block { pattern, until }
            }
            "bind" => {
                let var = self.ident("variable name")?;
                self.expect(&Tok::Assign)?;
                let index = self.index()?;
                StatementKind::Bind { var, index }
            }
            "let" => {
                let var = self.ident("variable name")?;
                self.expect(&Tok::Assign)?;
                let value = self.operand()?;
                StatementKind::SetLocal { var, value }
            }
            "when" => {
                let cond = self.cond()?;
                let then_body = self.body()?;
                let else_body = if self.eat_kw("otherwise") {
                    self.body()?
                } else {
                    Vec::new()
                };
                StatementKind::Guard {
                    cond,
                    then_body,
                    else_body,
                }
            }
            "label" => {
                return Err(SyntaxError::new(
                    loc,
                    "`label` must be the first line of a scenario body",
                ))
            }
            other => return Err(SyntaxError::new(loc, format!("unknown statement `{other}`"))),
        };
        Ok(Statement { kind, loc })
    }

    fn scenario(&mut self) -> Result<ScenarioDef, SyntaxError> {
        let loc = self.loc();
        self.expect_kw("scenario")?;
        let id = self.ident("scenario id")?;
        let kind = if self.eat_kw("intercomponent") {
            ScenarioKind::InterComponent
        } else if self.eat_kw("component") {
            ScenarioKind::Component
        } else if self.eat_kw("test") {
            ScenarioKind::Test
        } else {
            return Err(self.error("scenario kind (`intercomponent`, `component` or `test`)"));
        };
        let strict = self.eat_kw("strict");
        let trigger = if self.eat_kw("on") {
            Some(self.literal_pattern()?)
        } else {
            None
        };
        if trigger.is_none() && kind != ScenarioKind::Test {
            return Err(SyntaxError::new(
                self.loc(),
                format!("{} scenario `{id}` needs an `on` trigger", kind.keyword()),
            ));
        }
        self.expect(&Tok::LBrace)?;
        let label = if self.eat_kw("label") {
            Some(self.string()?)
        } else {
            None
        };
        if label.is_none() && kind == ScenarioKind::Test {
            return Err(SyntaxError::new(
                self.loc(),
                format!("test scenario `{id}` needs a `label`"),
            ));
        }
        let mut body = Vec::new();
        while !self.eat(&Tok::RBrace) {
            body.push(self.statement()?);
        }
        Ok(ScenarioDef {
            id,
            kind,
            strict,
            trigger,
            label,
            body,
            loc,
        })
    }
}

/// Parses a `.scn` document. Fails with the first syntax error, or with one
/// diagnostic per duplicated scenario id.
pub fn parse_scenario_source(src: &str) -> Result<Vec<ScenarioDef>, Vec<Diagnostic>> {
    let syntax = |e: SyntaxError| vec![Diagnostic::error(DiagCode::SyntaxError, e.loc, e.message)];
    let mut ts = TokenStream::new(src).map_err(syntax)?;
    let mut defs = Vec::new();
    while !ts.at_eof() {
        defs.push(ts.scenario().map_err(syntax)?);
    }
    let mut seen = HashSet::new();
    let dups: Vec<Diagnostic> = defs
        .iter()
        .filter(|d| !seen.insert(d.id.clone()))
        .map(|d| {
            Diagnostic::error(
                DiagCode::DuplicateScenario,
                d.loc,
                format!("duplicate scenario id `{}`", d.id),
            )
        })
        .collect();
    if dups.is_empty() {
        Ok(defs)
    } else {
        Err(dups)
    }
}

/// A standalone event pattern such as `a -> b.m("x", *)`.
pub fn parse_event_pattern(src: &str) -> Result<EventPattern, SyntaxError> {
    let mut ts = TokenStream::new(src)?;
    let p = ts.literal_pattern()?;
    if !ts.at_eof() {
        return Err(ts.error("end of pattern"));
    }
    Ok(p)
}
