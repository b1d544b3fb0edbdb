//! Test-driven scenario specification: run directive-based tests and test
//! scenarios against a program and report verdicts with trace evidence.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tracing::info;

use crate::dsl::lexer::Tok;
use crate::dsl::parser::TokenStream;
use crate::dsl::{DiagCode, Diagnostic, Loc, ScenarioDef, ScenarioKind, Statement, StatementKind, Template};
use crate::event::{matches, EventPattern, MessageEvent};
use crate::kernel::{InstanceStatus, KernelError, Origin, Program, Trace};
use crate::par::{map_ordered, ExecMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Directive {
    Trigger(MessageEvent),
    /// The next requested event must match.
    Receive(EventPattern),
    /// Some later event must match.
    Eventually(EventPattern),
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Directive::Trigger(e) => write!(f, "trigger {e}"),
            Directive::Receive(p) => write!(f, "receive {p}"),
            Directive::Eventually(p) => write!(f, "eventually {p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub id: String,
    pub name: String,
    pub directives: Vec<Directive>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Error,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Error => "ERROR",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureReason {
    /// Nothing in the searched range matched.
    NoMatchingEvent,
    /// The next requested event did not match a `receive`.
    Mismatch {
        found: MessageEvent,
    },
    /// A test scenario did not reach its end.
    Incomplete {
        waiting_at: Option<Loc>,
    },
    /// The test scenario instance was marked Violated.
    Violated,
    Kernel {
        message: String,
    },
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::NoMatchingEvent => f.write_str("no matching event"),
            FailureReason::Mismatch { found } => write!(f, "next requested event was {found}"),
            FailureReason::Incomplete { waiting_at: Some(loc) } => write!(f, "test scenario stuck at {loc}"),
            FailureReason::Incomplete { waiting_at: None } => f.write_str("test scenario did not complete"),
            FailureReason::Violated => f.write_str("test scenario violated"),
            FailureReason::Kernel { message } => f.write_str(message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    /// Index of the failing directive (or statement, for test scenarios).
    pub directive: usize,
    pub reason: FailureReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_id: String,
    pub verdict: Verdict,
    pub failure: Option<Failure>,
    pub trace: Trace,
}

impl TestResult {
    fn error(test_id: &str, directive: usize, e: KernelError, trace: Trace) -> Self {
        Self {
            test_id: test_id.to_string(),
            verdict: Verdict::Error,
            failure: Some(Failure {
                directive,
                reason: FailureReason::Kernel { message: e.to_string() },
            }),
            trace,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Runs a directive test on a fresh copy of `program`. All triggers are
/// executed first (each to quiescence); the verdict is then computed from
/// the recorded trace alone.
pub fn run_test(program: &Program, spec: &TestSpec) -> TestResult {
    let mut p = program.fresh();
    for (i, d) in spec.directives.iter().enumerate() {
        if let Directive::Trigger(e) = d {
            let run = p.post_external(e.clone()).and_then(|_| p.run_to_quiescence());
            if let Err(e) = run {
                return TestResult::error(&spec.id, i, e, p.trace().clone());
            }
        }
    }
    let trace = p.trace().clone();
    let failure = verdict_from_trace(spec, &trace).err();
    info!(test = %spec.id, passed = failure.is_none(), "test finished");
    TestResult {
        test_id: spec.id.clone(),
        verdict: if failure.is_none() {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        failure,
        trace,
    }
}

/// Evaluates the directives against a trace. The k-th trigger directive
/// corresponds to the k-th externally triggered entry; a `receive` or
/// `eventually` only sees entries after the previous match and before the
/// next trigger.
pub fn verdict_from_trace(spec: &TestSpec, trace: &Trace) -> Result<(), Failure> {
    let triggered: Vec<usize> = trace
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.origin == Origin::Triggered)
        .map(|(i, _)| i)
        .collect();
    let fail = |directive, reason| Failure { directive, reason };
    let mut pos = 0;
    let mut end = 0;
    let mut triggers_seen = 0;
    for (i, d) in spec.directives.iter().enumerate() {
        match d {
            Directive::Trigger(e) => {
                let Some(&at) = triggered.get(triggers_seen) else {
                    return Err(fail(i, FailureReason::NoMatchingEvent));
                };
                if trace.entries[at].event != *e {
                    return Err(fail(
                        i,
                        FailureReason::Mismatch {
                            found: trace.entries[at].event.clone(),
                        },
                    ));
                }
                triggers_seen += 1;
                pos = at + 1;
                end = triggered.get(triggers_seen).copied().unwrap_or(trace.len());
            }
            Directive::Receive(p) => {
                let next = (pos..end).find(|&j| trace.entries[j].origin == Origin::Requested);
                let Some(j) = next else {
                    return Err(fail(i, FailureReason::NoMatchingEvent));
                };
                let found = &trace.entries[j].event;
                if !matches(p, found).unwrap_or(false) {
                    return Err(fail(i, FailureReason::Mismatch { found: found.clone() }));
                }
                pos = j + 1;
            }
            Directive::Eventually(p) => {
                let Some(j) = (pos..end).find(|&j| matches(p, &trace.entries[j].event).unwrap_or(false)) else {
                    return Err(fail(i, FailureReason::NoMatchingEvent));
                };
                pos = j + 1;
            }
        }
    }
    Ok(())
}

/// Loads `test` as an extra scenario, starts it at t0 and runs to
/// quiescence. Passes iff the test instance completes.
pub fn run_test_scenario(program: &Program, test: &ScenarioDef) -> TestResult {
    let loaded = if program.defs().any(|d| d.id == test.id) {
        Ok(program.fresh())
    } else {
        program.with_extra_def(test.clone())
    };
    let mut p = match loaded {
        Ok(p) => p,
        Err(e) => return TestResult::error(&test.id, 0, e, Trace::default()),
    };
    if let Err(e) = p.start(&test.id).and_then(|_| p.run_to_quiescence()) {
        return TestResult::error(&test.id, 0, e, p.trace().clone());
    }
    let state = p
        .scenario_states()
        .into_iter()
        .find(|s| s.def_id == test.id)
        .expect("test instance was started");
    let failure = match state.status {
        InstanceStatus::Completed => None,
        InstanceStatus::Violated => Some(Failure {
            directive: statement_index(&test.body, state.location),
            reason: FailureReason::Violated,
        }),
        InstanceStatus::ActiveAtSync => Some(Failure {
            directive: statement_index(&test.body, state.location),
            reason: FailureReason::Incomplete {
                waiting_at: state.location,
            },
        }),
    };
    info!(test = %test.id, passed = failure.is_none(), "test scenario finished");
    TestResult {
        test_id: test.id.clone(),
        verdict: if failure.is_none() {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        failure,
        trace: p.trace().clone(),
    }
}

/// Depth-first index of the statement at `loc`.
fn statement_index(body: &[Statement], loc: Option<Loc>) -> usize {
    fn walk(body: &[Statement], loc: Loc, n: &mut usize) -> bool {
        for s in body {
            if s.loc == loc {
                return true;
            }
            *n += 1;
            if let StatementKind::Guard {
                then_body, else_body, ..
            } = &s.kind
            {
                if walk(then_body, loc, n) || walk(else_body, loc, n) {
                    return true;
                }
            }
        }
        false
    }
    let mut n = 0;
    match loc {
        Some(loc) if walk(body, loc, &mut n) => n,
        _ => n,
    }
}

/// One runnable unit of a test batch.
#[derive(Debug, Clone)]
pub enum TestCase {
    Spec(TestSpec),
    Scenario(ScenarioDef),
}

impl TestCase {
    pub fn id(&self) -> &str {
        match self {
            TestCase::Spec(s) => &s.id,
            TestCase::Scenario(d) => &d.id,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            TestCase::Spec(s) => &s.name,
            TestCase::Scenario(d) => d.label.as_deref().unwrap_or(&d.id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub id: String,
    pub verdict: Verdict,
    pub failed_directive: Option<usize>,
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

/// Runs every case on its own fresh program. Results are sorted by id.
pub fn run_batch(program: &Program, cases: &[TestCase], mode: ExecMode) -> Vec<(TestResult, f64)> {
    let mut out = map_ordered(cases, mode, |c| {
        let start = Instant::now();
        let r = match c {
            TestCase::Spec(s) => run_test(program, s),
            TestCase::Scenario(d) => run_test_scenario(program, d),
        };
        (r, start.elapsed().as_secs_f64())
    });
    out.sort_by(|a, b| a.0.test_id.cmp(&b.0.test_id));
    out
}

pub fn report_records(results: &[(TestResult, f64)], timings: bool) -> Vec<ReportRecord> {
    results
        .iter()
        .map(|(r, secs)| ReportRecord {
            id: r.test_id.clone(),
            verdict: r.verdict,
            failed_directive: r.failure.as_ref().map(|f| f.directive),
            reason: r.failure.as_ref().map(|f| f.reason.to_string()),
            seconds: timings.then_some(*secs),
        })
        .collect()
}

pub fn summary(results: &[TestResult]) -> String {
    let mut out = String::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in results {
        let line = match &r.failure {
            Some(f) => format!(
                "{} {} (directive {}: {})\n",
                r.verdict, r.test_id, f.directive, f.reason
            ),
            None => format!("{} {}\n", r.verdict, r.test_id),
        };
        out.push_str(&line);
        *counts
            .entry(match r.verdict {
                Verdict::Pass => "passed",
                Verdict::Fail => "failed",
                Verdict::Error => "errors",
            })
            .or_default() += 1;
    }
    let total: Vec<String> = counts.iter().map(|(k, v)| format!("{v} {k}")).collect();
    out.push_str(&format!("{} tests: {}\n", results.len(), total.join(", ")));
    out
}

/// Parses a `.tests` file:
///
/// ```text
/// test pilotSignal "cp signal reaches the application" {
///     trigger chargingSocket -> hardwareControl.cpSignalHW(0.0)
///     receive hardwareControl -> controlPilot.cpSignalSW(*, *)
///     eventually * -> application.cpSignalInformation(*)
/// }
/// ```
pub fn parse_tests(src: &str) -> Result<Vec<TestSpec>, Diagnostic> {
    let syntax = |e: crate::dsl::SyntaxError| Diagnostic::error(DiagCode::SyntaxError, e.loc, e.message);
    let mut ts = TokenStream::new(src).map_err(syntax)?;
    let mut out: Vec<TestSpec> = Vec::new();
    while !ts.at_eof() {
        let loc = ts.loc();
        ts.expect_kw("test").map_err(syntax)?;
        let id = ts.ident("test id").map_err(syntax)?;
        if out.iter().any(|t| t.id == id) {
            return Err(Diagnostic::error(
                DiagCode::DuplicateScenario,
                loc,
                format!("duplicate test id `{id}`"),
            ));
        }
        let name = match ts.peek() {
            Tok::Str(_) => ts.string().map_err(syntax)?,
            _ => id.clone(),
        };
        ts.expect(&Tok::LBrace).map_err(syntax)?;
        let mut directives = Vec::new();
        while !ts.eat(&Tok::RBrace) {
            let dloc = ts.loc();
            let d = if ts.eat_kw("trigger") {
                let t = ts.template(false).map_err(syntax)?;
                Directive::Trigger(concrete(&t, dloc)?)
            } else if ts.eat_kw("receive") {
                Directive::Receive(ts.literal_pattern().map_err(syntax)?)
            } else if ts.eat_kw("eventually") {
                Directive::Eventually(ts.literal_pattern().map_err(syntax)?)
            } else {
                return Err(syntax(ts.error("`trigger`, `receive`, `eventually` or `}`")));
            };
            ts.eat(&Tok::Semi);
            directives.push(d);
        }
        if !matches!(directives.first(), Some(Directive::Trigger(_))) {
            return Err(Diagnostic::error(
                DiagCode::SyntaxError,
                loc,
                format!("test `{id}` must start with a trigger"),
            ));
        }
        out.push(TestSpec { id, name, directives });
    }
    Ok(out)
}

fn concrete(t: &Template, loc: Loc) -> Result<MessageEvent, Diagnostic> {
    t.to_event(&BTreeMap::new(), &[])
        .map_err(|e| Diagnostic::error(DiagCode::WildcardInRequest, loc, e.to_string()))
}

/// Test scenarios among a list of definitions.
pub fn test_scenarios(defs: &[ScenarioDef]) -> impl Iterator<Item = &ScenarioDef> {
    defs.iter().filter(|d| d.kind == ScenarioKind::Test)
}
