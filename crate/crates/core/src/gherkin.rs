//! Gherkin subset (Feature, Scenario, Given/When/Then/And/But, `#`
//! comments) and declarative step bindings.

use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::lexer::Tok;
use crate::dsl::parser::TokenStream;
use crate::dsl::{Arg, DiagCode, Diagnostic, Loc, SyntaxError, Template};
use crate::event::{Declarations, Value};
use crate::harness::{run_test, Directive, TestResult, TestSpec};
use crate::kernel::Program;
use crate::par::{map_ordered, ExecMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Given,
    When,
    Then,
}

impl Role {
    pub fn keyword(self) -> &'static str {
        match self {
            Role::Given => "given",
            Role::When => "when",
            Role::Then => "then",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKeyword {
    Given,
    When,
    Then,
    And,
    But,
}

impl StepKeyword {
    const ALL: [StepKeyword; 5] = [
        StepKeyword::Given,
        StepKeyword::When,
        StepKeyword::Then,
        StepKeyword::And,
        StepKeyword::But,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepKeyword::Given => "Given",
            StepKeyword::When => "When",
            StepKeyword::Then => "Then",
            StepKeyword::And => "And",
            StepKeyword::But => "But",
        }
    }

    fn role(self) -> Option<Role> {
        match self {
            StepKeyword::Given => Some(Role::Given),
            StepKeyword::When => Some(Role::When),
            StepKeyword::Then => Some(Role::Then),
            StepKeyword::And | StepKeyword::But => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub keyword: StepKeyword,
    /// Semantic role; And/But inherit it from the preceding step.
    pub role: Role,
    pub text: String,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageScenario {
    pub name: String,
    pub steps: Vec<Step>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDoc {
    pub name: String,
    pub scenarios: Vec<UsageScenario>,
}

impl FeatureDoc {
    pub fn without_locations(&self) -> FeatureDoc {
        let mut f = self.clone();
        for s in &mut f.scenarios {
            s.loc = Loc::default();
            for st in &mut s.steps {
                st.loc = Loc::default();
            }
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GherkinError {
    #[error("{loc}: {kind}")]
    Syntax { loc: Loc, kind: FeatureSyntax },
    #[error("step `{step}` matches several bindings: {}", .candidates.join(", "))]
    AmbiguousBinding { step: String, candidates: Vec<String> },
    #[error("{loc}: no binding for step `{step}`")]
    UnboundStep { step: String, loc: Loc },
    #[error("step `{step}`: {message}")]
    BadDirective { step: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureSyntax {
    #[error("missing `Feature:` header")]
    MissingFeature,
    #[error("feature has no scenario")]
    MissingScenario,
    #[error("step outside of a scenario")]
    StepBeforeScenario,
    #[error("`{0}` has no preceding Given/When/Then")]
    DanglingConjunction(String),
    #[error("unknown keyword in `{0}`")]
    UnknownKeyword(String),
    #[error("empty {0}")]
    Empty(&'static str),
}

pub fn parse_feature(text: &str) -> Result<FeatureDoc, GherkinError> {
    let err = |line: usize, col: usize, kind| GherkinError::Syntax {
        loc: Loc::new(line as u32, col as u32),
        kind,
    };
    let mut name: Option<String> = None;
    let mut scenarios: Vec<UsageScenario> = Vec::new();
    let mut last_role: Option<Role> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let col = raw.len() - raw.trim_start().len() + 1;
        if let Some(rest) = trimmed.strip_prefix("Feature:") {
            if name.is_some() {
                return Err(err(line, col, FeatureSyntax::UnknownKeyword(trimmed.to_string())));
            }
            let n = rest.trim();
            if n.is_empty() {
                return Err(err(line, col, FeatureSyntax::Empty("feature name")));
            }
            name = Some(n.to_string());
            continue;
        }
        if name.is_none() {
            return Err(err(line, col, FeatureSyntax::MissingFeature));
        }
        if let Some(rest) = trimmed.strip_prefix("Scenario:") {
            let n = rest.trim();
            if n.is_empty() {
                return Err(err(line, col, FeatureSyntax::Empty("scenario name")));
            }
            scenarios.push(UsageScenario {
                name: n.to_string(),
                steps: Vec::new(),
                loc: Loc::new(line as u32, col as u32),
            });
            last_role = None;
            continue;
        }
        let step_kw = StepKeyword::ALL.into_iter().find(|k| {
            trimmed
                .strip_prefix(k.as_str())
                .is_some_and(|r| r.starts_with(char::is_whitespace))
        });
        let Some(keyword) = step_kw else {
            return Err(err(line, col, FeatureSyntax::UnknownKeyword(trimmed.to_string())));
        };
        let Some(scenario) = scenarios.last_mut() else {
            return Err(err(line, col, FeatureSyntax::StepBeforeScenario));
        };
        let role = match keyword.role().or(last_role) {
            Some(r) => r,
            None => {
                return Err(err(
                    line,
                    col,
                    FeatureSyntax::DanglingConjunction(keyword.as_str().into()),
                ))
            }
        };
        last_role = Some(role);
        scenario.steps.push(Step {
            keyword,
            role,
            text: trimmed[keyword.as_str().len()..].trim().to_string(),
            loc: Loc::new(line as u32, col as u32),
        });
    }
    let Some(name) = name else {
        return Err(err(1, 1, FeatureSyntax::MissingFeature));
    };
    if scenarios.is_empty() {
        return Err(err(1, 1, FeatureSyntax::MissingScenario));
    }
    Ok(FeatureDoc { name, scenarios })
}

/// Canonical text: two-space indentation per level, one blank line between
/// scenarios.
pub fn format_feature(doc: &FeatureDoc) -> String {
    let mut out = format!("Feature: {}\n", doc.name);
    for (i, s) in doc.scenarios.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("  Scenario: {}\n", s.name));
        for st in &s.steps {
            out.push_str(&format!("    {} {}\n", st.keyword.as_str(), st.text));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirectiveKind {
    Trigger,
    Receive,
    Eventually,
}

impl DirectiveKind {
    pub fn keyword(self) -> &'static str {
        match self {
            DirectiveKind::Trigger => "trigger",
            DirectiveKind::Receive => "receive",
            DirectiveKind::Eventually => "eventually",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingDirective {
    pub kind: DirectiveKind,
    pub template: Template,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    Text,
    Number,
}

/// Step-text pattern with `{text}` / `{number}` slots, bound to directives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepBinding {
    pub role: Role,
    pub pattern: String,
    pub directives: Vec<BindingDirective>,
    /// Written as `-> pending`; counts as bound for skeletons, not for runs.
    pub pending: bool,
    pub loc: Loc,
    #[serde(skip)]
    compiled: Option<CompiledPattern>,
}

impl PartialEq for StepBinding {
    fn eq(&self, other: &Self) -> bool {
        self.role == other.role
            && self.pattern == other.pattern
            && self.directives == other.directives
            && self.pending == other.pending
            && self.loc == other.loc
    }
}

#[derive(Debug, Clone)]
struct CompiledPattern {
    regex: Regex,
    slots: Vec<SlotKind>,
    literal_prefix: usize,
}

fn compile_pattern(pattern: &str) -> CompiledPattern {
    let mut re = String::from("^");
    let mut slots = Vec::new();
    let mut literal_prefix = None;
    let mut rest = pattern;
    loop {
        let next = [("{text}", SlotKind::Text), ("{number}", SlotKind::Number)]
            .into_iter()
            .filter_map(|(tok, kind)| rest.find(tok).map(|i| (i, tok, kind)))
            .min_by_key(|(i, _, _)| *i);
        let Some((i, tok, kind)) = next else {
            re.push_str(&regex::escape(rest));
            break;
        };
        re.push_str(&regex::escape(&rest[..i]));
        if literal_prefix.is_none() {
            literal_prefix = Some(pattern.len() - rest.len() + i);
        }
        re.push_str(match kind {
            SlotKind::Text => r#"("[^"]*"|.+?)"#,
            SlotKind::Number => r"(-?[0-9]+(?:\.[0-9]+)?)",
        });
        slots.push(kind);
        rest = &rest[i + tok.len()..];
    }
    re.push('$');
    CompiledPattern {
        regex: Regex::new(&re).expect("escaped pattern is a valid regex"),
        slots,
        literal_prefix: literal_prefix.unwrap_or(pattern.len()),
    }
}

impl StepBinding {
    pub fn new(role: Role, pattern: impl Into<String>, directives: Vec<BindingDirective>) -> Self {
        let pattern = pattern.into();
        Self {
            role,
            compiled: Some(compile_pattern(&pattern)),
            pattern,
            directives,
            pending: false,
            loc: Loc::default(),
        }
    }

    pub fn pending(role: Role, pattern: impl Into<String>) -> Self {
        Self {
            pending: true,
            ..Self::new(role, pattern, Vec::new())
        }
    }

    fn compiled(&self) -> CompiledPattern {
        self.compiled.clone().unwrap_or_else(|| compile_pattern(&self.pattern))
    }

    pub fn capture_count(&self) -> usize {
        self.compiled().slots.len()
    }

    /// Captured values when the step text matches this binding's pattern.
    pub fn captures(&self, text: &str) -> Option<Vec<Value>> {
        let c = self.compiled();
        let m = c.regex.captures(text)?;
        c.slots
            .iter()
            .enumerate()
            .map(|(i, kind)| {
                let raw = m.get(i + 1)?.as_str();
                match kind {
                    SlotKind::Text => {
                        let unquoted = raw.strip_prefix('"').and_then(|r| r.strip_suffix('"')).unwrap_or(raw);
                        Some(Value::Text(unquoted.to_string()))
                    }
                    SlotKind::Number => raw.parse().ok().map(Value::Number),
                }
            })
            .collect()
    }

    fn literal_prefix(&self) -> usize {
        self.compiled().literal_prefix
    }
}

impl fmt::Display for StepBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.role.keyword())?;
        crate::event::write_quoted(f, &self.pattern)?;
        f.write_str(" ->")?;
        if self.pending {
            return f.write_str(" pending");
        }
        for (i, d) in self.directives.iter().enumerate() {
            let sep = if i + 1 < self.directives.len() { ";" } else { "" };
            write!(f, "\n    {} {}{sep}", d.kind.keyword(), d.template)?;
        }
        Ok(())
    }
}

pub fn format_bindings(bindings: &[StepBinding]) -> String {
    bindings.iter().map(|b| format!("{b}\n")).collect::<Vec<_>>().join("\n")
}

/// Parses a `.steps` file:
///
/// ```text
/// given "the user connects plug {text} to socket {text}" ->
///     trigger vehicleUser -> chargingSocket.connectChargingPlug($1, $2)
/// then "the OBC shall detect and interlock the plug {text}" ->
///     eventually hardwareControl -> chargingSocket.actuateMotorHW(*)
/// ```
///
/// Several directives are separated by `;`. `-> pending` marks a stub.
pub fn parse_bindings(src: &str) -> Result<Vec<StepBinding>, SyntaxError> {
    let mut ts = TokenStream::new(src)?;
    ts.allow_captures = true;
    let mut out = Vec::new();
    while !ts.at_eof() {
        let loc = ts.loc();
        let role = if ts.eat_kw("given") {
            Role::Given
        } else if ts.eat_kw("when") {
            Role::When
        } else if ts.eat_kw("then") {
            Role::Then
        } else {
            return Err(ts.error("`given`, `when` or `then`"));
        };
        let pattern = ts.string()?;
        ts.expect(&Tok::Arrow)?;
        let mut b = if ts.eat_kw("pending") {
            StepBinding::pending(role, pattern)
        } else {
            let mut directives = Vec::new();
            loop {
                let kind = if ts.eat_kw("trigger") {
                    DirectiveKind::Trigger
                } else if ts.eat_kw("receive") || ts.eat_kw("waitFor") {
                    DirectiveKind::Receive
                } else if ts.eat_kw("eventually") {
                    DirectiveKind::Eventually
                } else {
                    return Err(ts.error("`trigger`, `receive`, `waitFor`, `eventually` or `pending`"));
                };
                let tloc = ts.loc();
                let template = ts.template(kind != DirectiveKind::Trigger)?;
                if let Some(v) = template.vars().next() {
                    return Err(SyntaxError::new(
                        tloc,
                        format!("variable `{v}` not allowed in bindings; use a literal, `*` or `$n`"),
                    ));
                }
                directives.push(BindingDirective { kind, template });
                if !ts.eat(&Tok::Semi) {
                    break;
                }
                if ts.at_eof() || ts.is_kw("given") || ts.is_kw("when") || ts.is_kw("then") {
                    break;
                }
            }
            StepBinding::new(role, pattern, directives)
        };
        b.loc = loc;
        out.push(b);
    }
    Ok(out)
}

/// Checks roles, capture references and event declarations.
pub fn validate_bindings(bindings: &[StepBinding], decls: &Declarations) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for b in bindings {
        let captures = b.capture_count();
        let mut used = vec![false; captures];
        for d in &b.directives {
            let ok_role = match b.role {
                Role::Given | Role::When => d.kind == DirectiveKind::Trigger,
                Role::Then => d.kind != DirectiveKind::Trigger,
            };
            if !ok_role {
                out.push(Diagnostic::error(
                    DiagCode::DirectiveRole,
                    b.loc,
                    format!(
                        "`{}` is not allowed in a {} binding",
                        d.kind.keyword(),
                        b.role.keyword()
                    ),
                ));
            }
            let t = &d.template;
            for ep in [&t.sender, &t.receiver] {
                if let Some(n) = ep.name() {
                    if decls.object(n).is_none() {
                        out.push(Diagnostic::error(
                            DiagCode::UndeclaredObject,
                            b.loc,
                            format!("undeclared object `{n}`"),
                        ));
                    }
                }
            }
            match decls.message(&t.message) {
                None => out.push(Diagnostic::error(
                    DiagCode::UndeclaredMessage,
                    b.loc,
                    format!("undeclared message `{}`", t.message),
                )),
                Some(m) if m.params.len() != t.args.len() => out.push(Diagnostic::error(
                    DiagCode::ArityMismatch,
                    b.loc,
                    format!(
                        "message `{}` takes {} params, {} given",
                        t.message,
                        m.params.len(),
                        t.args.len()
                    ),
                )),
                Some(_) => {}
            }
            for a in &t.args {
                match a {
                    Arg::Capture(n) if *n > captures => out.push(Diagnostic::error(
                        DiagCode::CaptureOutOfRange,
                        b.loc,
                        format!("`${n}` but the pattern has {captures} captures"),
                    )),
                    Arg::Capture(n) => used[n - 1] = true,
                    Arg::Wildcard if d.kind == DirectiveKind::Trigger => out.push(Diagnostic::error(
                        DiagCode::WildcardInRequest,
                        b.loc,
                        "trigger directives need concrete params",
                    )),
                    _ => {}
                }
            }
        }
        if !b.pending {
            for (i, u) in used.iter().enumerate() {
                if !u {
                    out.push(Diagnostic::warning(
                        DiagCode::UnusedCapture,
                        b.loc,
                        format!("capture {} of \"{}\" is never used", i + 1, b.pattern),
                    ));
                }
            }
        }
    }
    out
}

/// The unique binding for a step: among matching bindings of the step's
/// role, the one with the longest literal prefix. A tie is ambiguous.
pub fn find_binding<'a>(step: &Step, bindings: &'a [StepBinding]) -> Result<Option<&'a StepBinding>, GherkinError> {
    let matching: Vec<&StepBinding> = bindings
        .iter()
        .filter(|b| b.role == step.role && b.captures(&step.text).is_some())
        .collect();
    let Some(best) = matching.iter().map(|b| b.literal_prefix()).max() else {
        return Ok(None);
    };
    let top: Vec<&&StepBinding> = matching.iter().filter(|b| b.literal_prefix() == best).collect();
    if top.len() > 1 {
        return Err(GherkinError::AmbiguousBinding {
            step: step.text.clone(),
            candidates: top
                .iter()
                .map(|b| format!("{} \"{}\" ({})", b.role.keyword(), b.pattern, b.loc))
                .collect(),
        });
    }
    Ok(Some(top[0]))
}

/// Binding stubs for every step without a binding, as a valid bindings file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SkeletonFile {
    pub stubs: Vec<StepBinding>,
}

impl fmt::Display for SkeletonFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.stubs.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            writeln!(f, "# TODO: add directives for this step")?;
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

pub fn generate_skeletons(feature: &FeatureDoc, bindings: &[StepBinding]) -> Result<SkeletonFile, GherkinError> {
    let mut stubs: Vec<StepBinding> = Vec::new();
    for s in feature.scenarios.iter().flat_map(|s| &s.steps) {
        if find_binding(s, bindings)?.is_some() {
            continue;
        }
        // Step text is a literal pattern unless it happens to contain slot syntax.
        let pattern = s.text.replace("{text}", "{ text }").replace("{number}", "{ number }");
        if !stubs.iter().any(|b| b.role == s.role && b.pattern == pattern) {
            stubs.push(StepBinding::pending(s.role, pattern));
        }
    }
    Ok(SkeletonFile { stubs })
}

/// Compiles each usage scenario into a test spec with captures substituted.
/// Every step must have a non-pending binding.
pub fn compile_feature(feature: &FeatureDoc, bindings: &[StepBinding]) -> Result<Vec<TestSpec>, GherkinError> {
    let mut out = Vec::new();
    for sc in &feature.scenarios {
        let mut directives = Vec::new();
        for step in &sc.steps {
            let unbound = || GherkinError::UnboundStep {
                step: format!("{} {}", step.keyword.as_str(), step.text),
                loc: step.loc,
            };
            let b = find_binding(step, bindings)?.ok_or_else(unbound)?;
            if b.pending {
                return Err(unbound());
            }
            let captures = b.captures(&step.text).unwrap_or_default();
            let bad = |e: crate::dsl::ResolveError| GherkinError::BadDirective {
                step: step.text.clone(),
                message: e.to_string(),
            };
            for d in &b.directives {
                let vars = BTreeMap::new();
                directives.push(match d.kind {
                    DirectiveKind::Trigger => Directive::Trigger(d.template.to_event(&vars, &captures).map_err(bad)?),
                    DirectiveKind::Receive => Directive::Receive(d.template.to_pattern(&vars, &captures).map_err(bad)?),
                    DirectiveKind::Eventually => {
                        Directive::Eventually(d.template.to_pattern(&vars, &captures).map_err(bad)?)
                    }
                });
            }
        }
        out.push(TestSpec {
            id: sc.name.clone(),
            name: format!("{}: {}", feature.name, sc.name),
            directives,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureResult {
    pub feature: String,
    pub scenarios: Vec<TestResult>,
}

impl FeatureResult {
    pub fn passed(&self) -> bool {
        self.scenarios.iter().all(TestResult::passed)
    }
}

/// Runs every usage scenario on a fresh program. Binding problems are
/// reported before anything executes.
pub fn run_feature(
    feature: &FeatureDoc,
    bindings: &[StepBinding],
    program: &Program,
    mode: ExecMode,
) -> Result<FeatureResult, GherkinError> {
    let specs = compile_feature(feature, bindings)?;
    Ok(FeatureResult {
        feature: feature.name.clone(),
        scenarios: map_ordered(&specs, mode, |s| run_test(program, s)),
    })
}
