//! Objects, messages, parameter values and the matching rules shared by every
//! other module.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used whenever two numeric parameters are compared.
pub const NUMERIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    UnderSpecification,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectRef {
    pub name: String,
    pub kind: ObjectKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Text,
    Number,
    Boolean,
}

impl ParamKind {
    /// Value used to fill a wildcard when a flexible request is executed
    /// without any concrete co-request.
    pub fn default_value(self) -> Value {
        match self {
            ParamKind::Text => Value::Text(String::new()),
            ParamKind::Number => Value::Number(0.0),
            ParamKind::Boolean => Value::Boolean(false),
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamKind::Text => "text",
            ParamKind::Number => "number",
            ParamKind::Boolean => "boolean",
        })
    }
}

/// A concrete parameter value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Boolean(bool),
    Number(f64),
    Text(String),
}

impl Value {
    pub fn kind(&self) -> ParamKind {
        match self {
            Value::Text(_) => ParamKind::Text,
            Value::Number(_) => ParamKind::Number,
            Value::Boolean(_) => ParamKind::Boolean,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::Number(a), Value::Number(b)) => (a - b).abs() <= NUMERIC_TOLERANCE,
            (Value::Boolean(a), Value::Boolean(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => write_quoted(f, s),
            Value::Number(n) => write!(f, "{n:?}"),
            Value::Boolean(b) => write!(f, "{b}"),
        }
    }
}

pub(crate) fn write_quoted(f: &mut impl fmt::Write, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            '\r' => f.write_str("\\r")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

/// A parameter position in a pattern or request: concrete or `*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamValue {
    Concrete(Value),
    Wildcard,
}

impl ParamValue {
    pub fn is_wildcard(&self) -> bool {
        matches!(self, ParamValue::Wildcard)
    }

    /// Position-wise match: wildcard matches anything.
    pub fn accepts(&self, value: &Value) -> bool {
        match self {
            ParamValue::Wildcard => true,
            ParamValue::Concrete(v) => v == value,
        }
    }
}

impl From<Value> for ParamValue {
    fn from(v: Value) -> Self {
        ParamValue::Concrete(v)
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Concrete(v) => v.fmt(f),
            ParamValue::Wildcard => f.write_str("*"),
        }
    }
}

/// A directed message between two named objects. Always wildcard-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageEvent {
    pub sender: String,
    pub receiver: String,
    pub message: String,
    pub params: Vec<Value>,
}

impl MessageEvent {
    pub fn new(
        sender: impl Into<String>,
        receiver: impl Into<String>,
        message: impl Into<String>,
        params: Vec<Value>,
    ) -> Self {
        Self {
            sender: sender.into(),
            receiver: receiver.into(),
            message: message.into(),
            params,
        }
    }

    /// The event viewed as an exact pattern.
    pub fn to_pattern(&self) -> EventPattern {
        EventPattern {
            sender: Endpoint::Named(self.sender.clone()),
            receiver: Endpoint::Named(self.receiver.clone()),
            message: self.message.clone(),
            params: self.params.iter().cloned().map(ParamValue::Concrete).collect(),
        }
    }

    pub fn params_text(&self) -> String {
        join_params(&self.params)
    }

    pub fn same_channel(&self, other: &MessageEvent) -> bool {
        self.sender == other.sender && self.receiver == other.receiver && self.message == other.message
    }
}

pub(crate) fn join_params<T: fmt::Display>(params: &[T]) -> String {
    params.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for MessageEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} -> {}.{}({})",
            self.sender,
            self.receiver,
            self.message,
            join_params(&self.params)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Named(String),
    Any,
}

impl Endpoint {
    pub fn accepts(&self, name: &str) -> bool {
        match self {
            Endpoint::Any => true,
            Endpoint::Named(n) => n == name,
        }
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            Endpoint::Named(n) => Some(n),
            Endpoint::Any => None,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Named(n) => f.write_str(n),
            Endpoint::Any => f.write_str("*"),
        }
    }
}

/// Pattern over message events. The message name is never a wildcard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPattern {
    pub sender: Endpoint,
    pub receiver: Endpoint,
    pub message: String,
    pub params: Vec<ParamValue>,
}

impl fmt::Display for EventPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} -> {}.{}({})",
            self.sender,
            self.receiver,
            self.message,
            join_params(&self.params)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("arity mismatch for `{message}`: pattern has {pattern} params, event has {event}")]
pub struct ArityMismatch {
    pub message: String,
    pub pattern: usize,
    pub event: usize,
}

/// True iff the message names agree, sender and receiver are equal or
/// wildcarded, and every parameter position is equal or wildcarded.
pub fn matches(pattern: &EventPattern, event: &MessageEvent) -> Result<bool, ArityMismatch> {
    if pattern.message != event.message {
        return Ok(false);
    }
    if pattern.params.len() != event.params.len() {
        return Err(ArityMismatch {
            message: event.message.clone(),
            pattern: pattern.params.len(),
            event: event.params.len(),
        });
    }
    Ok(pattern.sender.accepts(&event.sender)
        && pattern.receiver.accepts(&event.receiver)
        && pattern.params.iter().zip(&event.params).all(|(p, v)| p.accepts(v)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageDecl {
    pub name: String,
    pub params: Vec<ParamKind>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EventError {
    #[error("undeclared object `{0}`")]
    UndeclaredObject(String),
    #[error("undeclared message `{0}`")]
    UndeclaredMessage(String),
    #[error("message `{message}` expects {expected} params, got {actual}")]
    Arity {
        message: String,
        expected: usize,
        actual: usize,
    },
    #[error("param {index} of `{message}` must be {expected}")]
    Kind {
        message: String,
        index: usize,
        expected: ParamKind,
    },
    #[error("event `{0}` contains a wildcard")]
    Wildcard(String),
}

/// Object and message declarations of a project.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Declarations {
    objects: Vec<ObjectRef>,
    messages: Vec<MessageDecl>,
    object_index: HashMap<String, usize>,
    message_index: HashMap<String, usize>,
}

impl Declarations {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares an object; redeclaration keeps the first declaration.
    pub fn declare_object(&mut self, name: impl Into<String>, kind: ObjectKind) -> &mut Self {
        let name = name.into();
        if !self.object_index.contains_key(&name) {
            self.object_index.insert(name.clone(), self.objects.len());
            self.objects.push(ObjectRef { name, kind });
        }
        self
    }

    pub fn declare_message(&mut self, name: impl Into<String>, params: Vec<ParamKind>) -> &mut Self {
        let name = name.into();
        if !self.message_index.contains_key(&name) {
            self.message_index.insert(name.clone(), self.messages.len());
            self.messages.push(MessageDecl { name, params });
        }
        self
    }

    pub fn objects(&self) -> &[ObjectRef] {
        &self.objects
    }

    pub fn messages(&self) -> &[MessageDecl] {
        &self.messages
    }

    pub fn object(&self, name: &str) -> Option<&ObjectRef> {
        self.object_index.get(name).map(|&i| &self.objects[i])
    }

    pub fn message(&self, name: &str) -> Option<&MessageDecl> {
        self.message_index.get(name).map(|&i| &self.messages[i])
    }

    /// Checks that an event to be executed is fully declared and typed.
    pub fn check_event(&self, event: &MessageEvent) -> Result<(), EventError> {
        for obj in [&event.sender, &event.receiver] {
            if self.object(obj).is_none() {
                return Err(EventError::UndeclaredObject(obj.clone()));
            }
        }
        let decl = self
            .message(&event.message)
            .ok_or_else(|| EventError::UndeclaredMessage(event.message.clone()))?;
        if decl.params.len() != event.params.len() {
            return Err(EventError::Arity {
                message: event.message.clone(),
                expected: decl.params.len(),
                actual: event.params.len(),
            });
        }
        for (index, (kind, value)) in decl.params.iter().zip(&event.params).enumerate() {
            if value.kind() != *kind {
                return Err(EventError::Kind {
                    message: event.message.clone(),
                    index,
                    expected: *kind,
                });
            }
        }
        Ok(())
    }

    /// Fills wildcards with the declared default of each position.
    pub fn fill_defaults(&self, message: &str, params: &[ParamValue]) -> Option<Vec<Value>> {
        let decl = self.message(message)?;
        if decl.params.len() != params.len() {
            return None;
        }
        Some(
            params
                .iter()
                .zip(&decl.params)
                .map(|(p, kind)| match p {
                    ParamValue::Concrete(v) => v.clone(),
                    ParamValue::Wildcard => kind.default_value(),
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(s: &str) -> Value {
        Value::Text(s.to_string())
    }

    fn pat(s: &str, r: &str, m: &str, params: Vec<ParamValue>) -> EventPattern {
        let ep = |x: &str| {
            if x == "*" {
                Endpoint::Any
            } else {
                Endpoint::Named(x.to_string())
            }
        };
        EventPattern {
            sender: ep(s),
            receiver: ep(r),
            message: m.to_string(),
            params,
        }
    }

    #[test]
    fn wildcard_param_matches_concrete_value() {
        let p = pat(
            "controlPilot",
            "application",
            "cpSignalInformation",
            vec![ParamValue::Wildcard],
        );
        let e = MessageEvent::new(
            "controlPilot",
            "application",
            "cpSignalInformation",
            vec![text("READY_WITH_VENT")],
        );
        assert_eq!(matches(&p, &e), Ok(true));
    }

    #[test]
    fn different_message_names_never_match() {
        let p = pat("x", "y", "m", vec![]);
        let e = MessageEvent::new("x", "y", "n", vec![]);
        assert_eq!(matches(&p, &e), Ok(false));
    }

    #[test]
    fn numbers_match_within_tolerance() {
        let p = pat("a", "b", "m", vec![Value::Number(3.0).into()]);
        let e = MessageEvent::new("a", "b", "m", vec![Value::Number(3.0 + 1e-12)]);
        assert_eq!(matches(&p, &e), Ok(true));
        let far = MessageEvent::new("a", "b", "m", vec![Value::Number(3.0 + 1e-6)]);
        assert_eq!(matches(&p, &far), Ok(false));
    }

    #[test]
    fn arity_mismatch_is_an_error_only_for_same_name() {
        let p = pat("a", "b", "m", vec![ParamValue::Wildcard]);
        let e = MessageEvent::new("a", "b", "m", vec![]);
        assert!(matches(&p, &e).is_err());
        let other = MessageEvent::new("a", "b", "n", vec![]);
        assert_eq!(matches(&p, &other), Ok(false));
    }

    #[test]
    fn endpoints_participate_in_matching() {
        let p = pat("a", "*", "m", vec![]);
        assert_eq!(matches(&p, &MessageEvent::new("a", "z", "m", vec![])), Ok(true));
        assert_eq!(matches(&p, &MessageEvent::new("c", "z", "m", vec![])), Ok(false));
    }

    #[test]
    fn mixed_kinds_are_unequal() {
        assert_ne!(Value::Number(1.0), text("1.0"));
        assert_ne!(Value::Boolean(false), Value::Number(0.0));
    }

    #[test]
    fn display_uses_star_and_quotes() {
        let p = pat("*", "b", "m", vec![ParamValue::Wildcard, text("a\"b").into()]);
        assert_eq!(p.to_string(), r#"* -> b.m(*, "a\"b")"#);
        let e = MessageEvent::new("a", "b", "m", vec![Value::Number(3.0), Value::Boolean(true)]);
        assert_eq!(e.to_string(), "a -> b.m(3.0, true)");
    }

    #[test]
    fn check_event_reports_each_failure() {
        let mut d = Declarations::new();
        d.declare_object("a", ObjectKind::External)
            .declare_object("b", ObjectKind::UnderSpecification)
            .declare_message("m", vec![ParamKind::Text, ParamKind::Number]);
        let ok = MessageEvent::new("a", "b", "m", vec![text("x"), Value::Number(1.0)]);
        assert!(d.check_event(&ok).is_ok());
        let bad_obj = MessageEvent::new("a", "q", "m", vec![text("x"), Value::Number(1.0)]);
        assert_eq!(d.check_event(&bad_obj), Err(EventError::UndeclaredObject("q".into())));
        let bad_msg = MessageEvent::new("a", "b", "zz", vec![]);
        assert_eq!(d.check_event(&bad_msg), Err(EventError::UndeclaredMessage("zz".into())));
        let bad_kind = MessageEvent::new("a", "b", "m", vec![Value::Number(1.0), Value::Number(1.0)]);
        assert!(matches!(
            d.check_event(&bad_kind),
            Err(EventError::Kind { index: 0, .. })
        ));
        assert_eq!(
            d.fill_defaults("m", &[ParamValue::Wildcard, ParamValue::Wildcard]),
            Some(vec![text(""), Value::Number(0.0)])
        );
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn value() -> impl Strategy<Value = Value> {
        prop_oneof![
            "[a-zA-Z_]{0,6}".prop_map(Value::Text),
            (-1000i32..1000).prop_map(|n| Value::Number(n as f64 / 8.0)),
            any::<bool>().prop_map(Value::Boolean),
        ]
    }

    fn event() -> impl Strategy<Value = MessageEvent> {
        ("[a-c]", "[a-c]", "[mn]", prop::collection::vec(value(), 0..4))
            .prop_map(|(s, r, m, params)| MessageEvent::new(s, r, m, params))
    }

    proptest! {
        #[test]
        fn matching_is_reflexive(e in event()) {
            prop_assert_eq!(matches(&e.to_pattern(), &e), Ok(true));
        }

        #[test]
        fn widening_never_breaks_a_match(
            e in event(),
            widen_sender in any::<bool>(),
            widen_receiver in any::<bool>(),
            mask in prop::collection::vec(any::<bool>(), 4),
        ) {
            let mut p = e.to_pattern();
            if widen_sender { p.sender = Endpoint::Any; }
            if widen_receiver { p.receiver = Endpoint::Any; }
            for (slot, w) in p.params.iter_mut().zip(mask) {
                if w { *slot = ParamValue::Wildcard; }
            }
            prop_assert_eq!(matches(&p, &e), Ok(true));
        }

        #[test]
        fn widening_is_monotone_on_arbitrary_pairs(
            e in event(),
            other in event(),
            pos in 0usize..4,
        ) {
            let p = other.to_pattern();
            let before = matches(&p, &e);
            let mut wide = p.clone();
            if pos < wide.params.len() { wide.params[pos] = ParamValue::Wildcard; }
            if let Ok(true) = before {
                prop_assert_eq!(matches(&wide, &e), Ok(true));
            }
        }
    }
}
