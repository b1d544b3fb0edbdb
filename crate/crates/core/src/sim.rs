//! Play-out sessions: step-wise or automatic execution over a program with a
//! script of external events, plus sequence diagrams and component graphs.

pub mod server;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{ScenarioDef, Statement, StatementKind};
use crate::event::{Declarations, Endpoint, MessageEvent};
use crate::gherkin::{compile_feature, GherkinError};
use crate::harness::{Directive, TestSpec};
use crate::kernel::{InstanceState, InstanceStatus, KernelError, Program, TraceEntry};
use crate::project::Project;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Manual,
    /// Runs to quiescence on creation and after every reset.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("stale revision {given}; the session is at revision {current}")]
    StaleRevision { given: u64, current: u64 },
    #[error("event `{0}` is not enabled")]
    NotEnabled(String),
    #[error("unknown script `{0}`")]
    UnknownScript(String),
    #[error("invalid project: {0}")]
    InvalidProject(String),
    #[error("cannot bind {addr}: {message}")]
    BindFailure { addr: String, message: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl SimError {
    /// Stable error code for the wire protocol.
    pub fn code(&self) -> &'static str {
        match self {
            SimError::UnknownSession(_) => "UnknownSession",
            SimError::StaleRevision { .. } => "StaleRevision",
            SimError::NotEnabled(_) => "NotEnabled",
            SimError::UnknownScript(_) => "UnknownScript",
            SimError::InvalidProject(_) => "InvalidProject",
            SimError::BindFailure { .. } => "BindFailure",
            SimError::Kernel(KernelError::SuperstepLimitExceeded { .. }) => "SuperstepLimitExceeded",
            SimError::Kernel(_) => "KernelError",
        }
    }
}

/// External events fed to a session, taken from the triggers of a feature
/// scenario or a test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub name: String,
    pub events: Vec<MessageEvent>,
}

impl Script {
    pub fn from_spec(spec: &TestSpec) -> Script {
        Script {
            name: spec.id.clone(),
            events: spec
                .directives
                .iter()
                .filter_map(|d| match d {
                    Directive::Trigger(e) => Some(e.clone()),
                    _ => None,
                })
                .collect(),
        }
    }
}

/// Scripts of a project: feature scenarios in file order, then tests.
pub fn project_scripts(project: &Project) -> Result<Vec<Script>, GherkinError> {
    let mut out = Vec::new();
    for (_, f) in &project.features {
        out.extend(compile_feature(f, &project.bindings)?.iter().map(Script::from_spec));
    }
    out.extend(project.tests.iter().map(Script::from_spec));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnabledEvent {
    /// Valid only for the revision it was listed at.
    pub event_id: String,
    pub event: MessageEvent,
    /// Queue head of the external script rather than a requested event.
    pub external: bool,
    pub requesters: Vec<String>,
    pub blocked_by: Vec<String>,
}

impl EnabledEvent {
    pub fn selectable(&self) -> bool {
        self.blocked_by.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioDelta {
    pub instance: usize,
    pub def_id: String,
    /// None for an instance the step created.
    pub before: Option<InstanceStatus>,
    pub after: InstanceStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepResult {
    pub executed: TraceEntry,
    pub revision: u64,
    pub enabled: Vec<EnabledEvent>,
    pub deltas: Vec<ScenarioDelta>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Choice {
    Event(String),
    NextByTieBreak,
}

#[derive(Debug, Clone)]
pub struct SimSession {
    pub id: String,
    pub mode: SimMode,
    pub script: Script,
    base: Program,
    program: Program,
    revision: u64,
}

impl SimSession {
    /// A session at revision 0 with the script queued.
    pub fn new(id: impl Into<String>, base: &Program, script: Script, mode: SimMode) -> Result<Self, SimError> {
        let mut program = base.fresh();
        for e in &script.events {
            program.post_external(e.clone())?;
        }
        let mut s = SimSession {
            id: id.into(),
            mode,
            script,
            base: base.fresh(),
            program,
            revision: 0,
        };
        if mode == SimMode::Auto {
            s.auto_run()?;
        }
        Ok(s)
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.program.trace().entries
    }

    fn def_name(&self, instance: usize) -> String {
        self.program
            .scenario_states()
            .into_iter()
            .find(|s| s.instance == instance)
            .map(|s| s.def_id)
            .unwrap_or_else(|| format!("#{instance}"))
    }

    /// Requested candidates in tie-break order; when none is selectable, the
    /// head of the external queue.
    pub fn enabled_events(&self) -> Vec<EnabledEvent> {
        let mut out: Vec<EnabledEvent> = self
            .program
            .candidates()
            .into_iter()
            .map(|c| EnabledEvent {
                event_id: String::new(),
                event: c.event,
                external: false,
                requesters: c.requesters.iter().map(|i| self.def_name(*i)).collect(),
                blocked_by: c.blocked_by.iter().map(|i| self.def_name(*i)).collect(),
            })
            .collect();
        if !out.iter().any(EnabledEvent::selectable) {
            if let Some(head) = self.program.pending_external().next() {
                out.push(EnabledEvent {
                    event_id: String::new(),
                    event: head.clone(),
                    external: true,
                    requesters: Vec::new(),
                    blocked_by: Vec::new(),
                });
            }
        }
        for (i, e) in out.iter_mut().enumerate() {
            e.event_id = format!("e{}", i + 1);
        }
        out
    }

    pub fn scenario_states(&self) -> Vec<InstanceState> {
        self.program.scenario_states()
    }

    /// Executes exactly one event. A stale revision or a choice that is not
    /// selectable leaves the session untouched.
    pub fn step(&mut self, revision: u64, choice: &Choice) -> Result<StepResult, SimError> {
        if revision != self.revision {
            return Err(SimError::StaleRevision {
                given: revision,
                current: self.revision,
            });
        }
        let enabled = self.enabled_events();
        let chosen = match choice {
            Choice::NextByTieBreak => enabled
                .iter()
                .find(|e| e.selectable())
                .ok_or_else(|| SimError::NotEnabled("next".into()))?,
            Choice::Event(id) => enabled
                .iter()
                .find(|e| &e.event_id == id && e.selectable())
                .ok_or_else(|| SimError::NotEnabled(id.clone()))?,
        };
        let before = self.program.scenario_states();
        let executed = if chosen.external {
            self.program.execute_next_external()
        } else {
            self.program.execute_requested(chosen.event.clone())?
        };
        self.revision += 1;
        Ok(StepResult {
            executed,
            revision: self.revision,
            enabled: self.enabled_events(),
            deltas: deltas(&before, &self.program.scenario_states()),
        })
    }

    /// Steps by tie-break until nothing is selectable; returns the new
    /// trace entries.
    pub fn auto_run(&mut self) -> Result<Vec<TraceEntry>, SimError> {
        let start = self.program.trace().len();
        let result = self.program.run_to_quiescence();
        let added = self.program.trace().len() - start;
        self.revision += added as u64;
        result?;
        Ok(self.program.trace().entries[start..].to_vec())
    }

    /// Back to the initial state with the script queued again.
    pub fn reset(&mut self) -> Result<u64, SimError> {
        let fresh = SimSession::new(self.id.clone(), &self.base, self.script.clone(), self.mode)?;
        let revision = self.revision + 1 + fresh.revision;
        *self = fresh;
        self.revision = revision;
        Ok(revision)
    }

    pub fn diagram(&self) -> String {
        emit_sequence_diagram(self.trace())
    }
}

fn deltas(before: &[InstanceState], after: &[InstanceState]) -> Vec<ScenarioDelta> {
    after
        .iter()
        .filter_map(|a| {
            let b = before.iter().find(|b| b.instance == a.instance);
            let changed = match b {
                None => true,
                Some(b) => b.status != a.status || b.location != a.location || b.bindings != a.bindings,
            };
            changed.then(|| ScenarioDelta {
                instance: a.instance,
                def_id: a.def_id.clone(),
                before: b.map(|b| b.status),
                after: a.status,
            })
        })
        .collect()
}

/// PlantUML sequence diagram: participants in first-appearance order, one
/// arrow per trace entry.
pub fn emit_sequence_diagram(trace: &[TraceEntry]) -> String {
    let mut lifelines: Vec<&str> = Vec::new();
    for e in trace {
        for name in [&e.event.sender, &e.event.receiver] {
            if !lifelines.contains(&name.as_str()) {
                lifelines.push(name);
            }
        }
    }
    let mut out = String::from("@startuml\n");
    for l in &lifelines {
        writeln!(out, "participant {l}").unwrap();
    }
    for e in trace {
        let ev = &e.event;
        writeln!(
            out,
            "{} -> {} : {}({})",
            ev.sender,
            ev.receiver,
            ev.message,
            ev.params_text()
        )
        .unwrap();
    }
    out.push_str("@enduml\n");
    out
}

/// Graphviz digraph: a node per declared object, an edge per distinct
/// (sender, receiver, message) named in any trigger or statement. Edges
/// are ordered by declaration order of sender, receiver and message.
pub fn emit_component_graph(name: &str, decls: &Declarations, defs: &[ScenarioDef]) -> String {
    let obj = |n: &str| decls.objects().iter().position(|o| o.name == n).unwrap_or(usize::MAX);
    let msg = |n: &str| decls.messages().iter().position(|m| m.name == n).unwrap_or(usize::MAX);
    let mut edges: BTreeSet<(usize, usize, usize, String, String, String)> = BTreeSet::new();
    let mut add = |s: &Endpoint, r: &Endpoint, m: &str| {
        if let (Endpoint::Named(s), Endpoint::Named(r)) = (s, r) {
            edges.insert((obj(s), obj(r), msg(m), s.clone(), r.clone(), m.to_string()));
        }
    };
    fn walk(body: &[Statement], add: &mut dyn FnMut(&Endpoint, &Endpoint, &str)) {
        for st in body {
            match &st.kind {
                StatementKind::Request(t) | StatementKind::RequestFlex(t) | StatementKind::WaitFor(t) => {
                    add(&t.sender, &t.receiver, &t.message)
                }
                StatementKind::Block { pattern, until } => {
                    add(&pattern.sender, &pattern.receiver, &pattern.message);
                    if let Some(u) = until {
                        add(&u.sender, &u.receiver, &u.message);
                    }
                }
                StatementKind::Guard {
                    then_body, else_body, ..
                } => {
                    walk(then_body, add);
                    walk(else_body, add);
                }
                StatementKind::Bind { .. } | StatementKind::SetLocal { .. } => {}
            }
        }
    }
    for d in defs {
        if let Some(t) = &d.trigger {
            add(&t.sender, &t.receiver, &t.message);
        }
        walk(&d.body, &mut add);
    }
    let mut out = format!("digraph \"{}\" {{\n", name.replace('"', "\\\""));
    for o in decls.objects() {
        writeln!(out, "  {};", o.name).unwrap();
    }
    for (_, _, _, s, r, m) in &edges {
        writeln!(out, "  {s} -> {r} [label=\"{m}\"];").unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests;
