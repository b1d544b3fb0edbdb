//! Play-out engine: executes a set of scenario definitions as one interwoven
//! program.
//!
//! Each instance of a scenario runs until it reaches a synchronization point
//! (a request or a wait). At every step the program collects the requested
//! events of all instances, resolves flexible requests, drops everything
//! matched by an active block, and executes the first remaining candidate in
//! definition order. External events are only dequeued once no requested
//! event is selectable, so every external event starts a new super-step that
//! runs to quiescence.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, trace, warn};

use crate::dsl::{
    has_errors, validate_program, Cond, Diagnostic, Loc, Operand, ScenarioDef, ScenarioKind, Statement, StatementKind,
    Template,
};
use crate::event::{join_params, matches, Declarations, EventError, EventPattern, MessageEvent, ParamValue, Value};

pub const DEFAULT_MAX_EVENTS_PER_SUPERSTEP: usize = 10_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Scenario definition order, then instance creation order.
    #[default]
    DefinitionOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutionConfig {
    pub max_events_per_superstep: usize,
    pub tie_break: TieBreak,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        Self {
            max_events_per_superstep: DEFAULT_MAX_EVENTS_PER_SUPERSTEP,
            tie_break: TieBreak::DefinitionOrder,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("program has errors:\n{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    InvalidProgram(Vec<Diagnostic>),
    #[error("external event rejected: {0}")]
    UndeclaredEvent(#[from] EventError),
    #[error("external event `{0}` contains a wildcard")]
    WildcardInExternalEvent(String),
    #[error("more than {limit} events executed in super-step {superstep}")]
    SuperstepLimitExceeded { limit: usize, superstep: usize },
    #[error("event is not enabled")]
    NotEnabled,
    #[error("no scenario `{0}`")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Triggered,
    Requested,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Triggered => "triggered",
            Origin::Requested => "requested",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub seq: usize,
    pub superstep: usize,
    pub origin: Origin,
    pub event: MessageEvent,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = &self.event;
        let params: Vec<String> = e.params.iter().map(|p| p.to_string()).collect();
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.seq,
            self.superstep,
            self.origin.as_str(),
            e.sender,
            e.receiver,
            e.message,
            params.join(",")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("trace line {line}: {message}")]
pub struct TraceParseError {
    pub line: usize,
    pub message: String,
}

/// Ordered record of executed events.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn events(&self) -> impl Iterator<Item = &MessageEvent> {
        self.entries.iter().map(|e| &e.event)
    }

    /// Tab-separated line format, one entry per line, LF terminated.
    pub fn serialize(&self) -> String {
        self.entries.iter().map(|e| format!("{e}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Trace, TraceParseError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let err = |message: String| TraceParseError { line: i + 1, message };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 7 {
                return Err(err(format!("expected 7 columns, found {}", cols.len())));
            }
            let seq = cols[0].parse().map_err(|_| err("bad seq".into()))?;
            let superstep = cols[1].parse().map_err(|_| err("bad superstep".into()))?;
            let origin = match cols[2] {
                "triggered" => Origin::Triggered,
                "requested" => Origin::Requested,
                o => return Err(err(format!("unknown origin `{o}`"))),
            };
            let params = parse_param_list(cols[6]).map_err(err)?;
            entries.push(TraceEntry {
                seq,
                superstep,
                origin,
                event: MessageEvent::new(cols[3], cols[4], cols[5], params),
            });
        }
        Ok(Trace { entries })
    }
}

fn parse_param_list(text: &str) -> Result<Vec<Value>, String> {
    use crate::dsl::lexer::{lex, Tok};
    let toks = lex(text).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    let mut expect_value = true;
    for t in toks {
        match (t.tok, expect_value) {
            (Tok::Eof, _) => break,
            (Tok::Str(s), true) => out.push(Value::Text(s)),
            (Tok::Num(n), true) => out.push(Value::Number(n)),
            (Tok::Ident(s), true) if s == "true" => out.push(Value::Boolean(true)),
            (Tok::Ident(s), true) if s == "false" => out.push(Value::Boolean(false)),
            (Tok::Comma, false) => {}
            (tok, _) => return Err(format!("unexpected {tok} in params")),
        }
        expect_value = !expect_value;
    }
    if expect_value && !out.is_empty() {
        return Err("trailing comma in params".into());
    }
    Ok(out)
}

/// A requested event; flexible requests may carry wildcards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestedEvent {
    pub sender: String,
    pub receiver: String,
    pub message: String,
    pub params: Vec<ParamValue>,
    pub flexible: bool,
}

impl RequestedEvent {
    fn same_channel(&self, e: &MessageEvent) -> bool {
        self.sender == e.sender && self.receiver == e.receiver && self.message == e.message
    }

    /// A rigid request accepts only its own valuation; a flexible one any
    /// valuation on the same channel.
    pub fn accepts(&self, e: &MessageEvent) -> bool {
        self.same_channel(e)
            && (self.flexible
                || (self.params.len() == e.params.len()
                    && self.params.iter().zip(&e.params).all(|(p, v)| p.accepts(v))))
    }

    fn rigid_valuation(&self) -> Option<Vec<Value>> {
        if self.flexible {
            return None;
        }
        self.params
            .iter()
            .map(|p| match p {
                ParamValue::Concrete(v) => Some(v.clone()),
                ParamValue::Wildcard => None,
            })
            .collect()
    }
}

impl fmt::Display for RequestedEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} -> {}.{}({}){}",
            self.sender,
            self.receiver,
            self.message,
            join_params(&self.params),
            if self.flexible { " [flexible]" } else { "" }
        )
    }
}

/// What an active instance currently offers for synchronization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SyncPoint {
    pub requested: Vec<RequestedEvent>,
    pub waited: Vec<EventPattern>,
    pub blocked: Vec<EventPattern>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstanceStatus {
    ActiveAtSync,
    Completed,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InstanceState {
    pub instance: usize,
    pub def_id: String,
    pub status: InstanceStatus,
    /// Source location of the statement the instance is synchronized at.
    pub location: Option<Loc>,
    pub bindings: BTreeMap<String, Value>,
}

/// A selectable (or blocked) event at the current step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub event: MessageEvent,
    /// Instance ids whose request this event satisfies.
    pub requesters: Vec<usize>,
    /// Instance ids holding a block that matches this event.
    pub blocked_by: Vec<usize>,
}

impl Candidate {
    pub fn selectable(&self) -> bool {
        self.blocked_by.is_empty()
    }
}

#[derive(Debug, Clone)]
enum Op {
    Request { template: Template, flexible: bool },
    WaitFor(Template),
    Block { pattern: Template, until: Option<Template> },
    Bind { var: String, index: usize },
    Set { var: String, value: Operand },
    Branch { cond: Cond, else_pc: usize },
    Jump(usize),
}

#[derive(Debug)]
struct CompiledDef {
    def: ScenarioDef,
    ops: Vec<Op>,
    locs: Vec<Loc>,
}

fn compile(def: ScenarioDef) -> CompiledDef {
    fn emit(body: &[Statement], ops: &mut Vec<Op>, locs: &mut Vec<Loc>) {
        for s in body {
            match &s.kind {
                StatementKind::Request(t) => push(
                    ops,
                    locs,
                    s.loc,
                    Op::Request {
                        template: t.clone(),
                        flexible: false,
                    },
                ),
                StatementKind::RequestFlex(t) => push(
                    ops,
                    locs,
                    s.loc,
                    Op::Request {
                        template: t.clone(),
                        flexible: true,
                    },
                ),
                StatementKind::WaitFor(t) => push(ops, locs, s.loc, Op::WaitFor(t.clone())),
                StatementKind::Block { pattern, until } => push(
                    ops,
                    locs,
                    s.loc,
                    Op::Block {
                        pattern: pattern.clone(),
                        until: until.clone(),
                    },
                ),
                StatementKind::Bind { var, index } => push(
                    ops,
                    locs,
                    s.loc,
                    Op::Bind {
                        var: var.clone(),
                        index: *index,
                    },
                ),
                StatementKind::SetLocal { var, value } => push(
                    ops,
                    locs,
                    s.loc,
                    Op::Set {
                        var: var.clone(),
                        value: value.clone(),
                    },
                ),
                StatementKind::Guard {
                    cond,
                    then_body,
                    else_body,
                } => {
                    let branch = ops.len();
                    push(
                        ops,
                        locs,
                        s.loc,
                        Op::Branch {
                            cond: cond.clone(),
                            else_pc: 0,
                        },
                    );
                    emit(then_body, ops, locs);
                    let jump = ops.len();
                    push(ops, locs, s.loc, Op::Jump(0));
                    let else_pc = ops.len();
                    emit(else_body, ops, locs);
                    let end = ops.len();
                    ops[branch] = Op::Branch {
                        cond: cond.clone(),
                        else_pc,
                    };
                    ops[jump] = Op::Jump(end);
                }
            }
        }
    }
    fn push(ops: &mut Vec<Op>, locs: &mut Vec<Loc>, loc: Loc, op: Op) {
        ops.push(op);
        locs.push(loc);
    }
    let mut ops = Vec::new();
    let mut locs = Vec::new();
    emit(&def.body, &mut ops, &mut locs);
    CompiledDef { def, ops, locs }
}

#[derive(Debug, Clone)]
struct ActiveBlock {
    pattern: EventPattern,
    until: Option<EventPattern>,
}

#[derive(Debug, Clone)]
enum Sync {
    Request(RequestedEvent),
    Wait(EventPattern),
    /// Body finished; waiting for the until-events of its remaining blocks.
    Until,
}

#[derive(Debug, Clone)]
struct Instance {
    id: usize,
    def: usize,
    bindings: BTreeMap<String, Value>,
    trigger: Option<MessageEvent>,
    pc: usize,
    status: InstanceStatus,
    blocks: Vec<ActiveBlock>,
    sync: Option<Sync>,
}

#[derive(Debug)]
struct Shared {
    decls: Declarations,
    defs: Vec<CompiledDef>,
    config: ExecutionConfig,
}

/// A loaded scenario program with its runtime state. Cloning a fresh
/// program is cheap; definitions are shared.
#[derive(Debug, Clone)]
pub struct Program {
    shared: Arc<Shared>,
    instances: Vec<Instance>,
    pending: VecDeque<MessageEvent>,
    trace: Trace,
    superstep: usize,
    events_in_superstep: usize,
    last_effect: StepEffect,
}

/// How many instances the last executed event moved forward or created.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEffect {
    pub advanced: usize,
    pub spawned: usize,
}

/// Validates the definitions and builds a program with no instances.
pub fn load_program(
    defs: Vec<ScenarioDef>,
    decls: Declarations,
    config: ExecutionConfig,
) -> Result<Program, KernelError> {
    let diags = validate_program(&defs, &decls);
    if has_errors(&diags) {
        return Err(KernelError::InvalidProgram(
            diags.into_iter().filter(|d| d.is_error()).collect(),
        ));
    }
    let config = ExecutionConfig {
        max_events_per_superstep: config.max_events_per_superstep.max(1),
        ..config
    };
    Ok(Program {
        shared: Arc::new(Shared {
            decls,
            defs: defs.into_iter().map(compile).collect(),
            config,
        }),
        instances: Vec::new(),
        pending: VecDeque::new(),
        trace: Trace::default(),
        superstep: 0,
        events_in_superstep: 0,
        last_effect: StepEffect::default(),
    })
}

impl Program {
    pub fn declarations(&self) -> &Declarations {
        &self.shared.decls
    }

    pub fn config(&self) -> &ExecutionConfig {
        &self.shared.config
    }

    pub fn defs(&self) -> impl Iterator<Item = &ScenarioDef> {
        self.shared.defs.iter().map(|c| &c.def)
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn pending_external(&self) -> impl Iterator<Item = &MessageEvent> {
        self.pending.iter()
    }

    /// A fresh program over the same definitions (no instances, empty trace).
    pub fn fresh(&self) -> Program {
        Program {
            shared: Arc::clone(&self.shared),
            instances: Vec::new(),
            pending: VecDeque::new(),
            trace: Trace::default(),
            superstep: 0,
            events_in_superstep: 0,
            last_effect: StepEffect::default(),
        }
    }

    pub fn last_effect(&self) -> StepEffect {
        self.last_effect
    }

    /// Fresh program with `extra` appended to the definitions.
    pub fn with_extra_def(&self, extra: ScenarioDef) -> Result<Program, KernelError> {
        let mut defs: Vec<ScenarioDef> = self.defs().cloned().collect();
        defs.push(extra);
        load_program(defs, self.shared.decls.clone(), self.shared.config.clone())
    }

    /// Starts an instance of a scenario without a trigger event (test
    /// scenarios self-start at t0).
    pub fn start(&mut self, def_id: &str) -> Result<usize, KernelError> {
        let def = self
            .shared
            .defs
            .iter()
            .position(|c| c.def.id == def_id)
            .ok_or_else(|| KernelError::UnknownScenario(def_id.to_string()))?;
        Ok(self.spawn(def, None))
    }

    pub fn post_external(&mut self, event: MessageEvent) -> Result<(), KernelError> {
        self.shared.decls.check_event(&event)?;
        debug!(%event, "external event queued");
        self.pending.push_back(event);
        Ok(())
    }

    /// Posts an event given as a pattern; any wildcard is rejected.
    pub fn post_external_pattern(&mut self, pattern: &EventPattern) -> Result<(), KernelError> {
        let wildcard = || KernelError::WildcardInExternalEvent(pattern.to_string());
        let (Some(s), Some(r)) = (pattern.sender.name(), pattern.receiver.name()) else {
            return Err(wildcard());
        };
        let params = pattern
            .params
            .iter()
            .map(|p| match p {
                ParamValue::Concrete(v) => Ok(v.clone()),
                ParamValue::Wildcard => Err(wildcard()),
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.post_external(MessageEvent::new(s, r, &pattern.message, params))
    }

    fn sorted_active(&self) -> Vec<&Instance> {
        let mut v: Vec<&Instance> = self
            .instances
            .iter()
            .filter(|i| i.status == InstanceStatus::ActiveAtSync)
            .collect();
        match self.shared.config.tie_break {
            TieBreak::DefinitionOrder => v.sort_by_key(|i| (i.def, i.id)),
        }
        v
    }

    /// Requested events after flexible-request resolution, in tie-break
    /// order, each annotated with its requesters and blockers.
    pub fn candidates(&self) -> Vec<Candidate> {
        let active = self.sorted_active();
        let requests: Vec<(usize, &Instance, &RequestedEvent)> = active
            .iter()
            .enumerate()
            .filter_map(|(rank, inst)| match &inst.sync {
                Some(Sync::Request(r)) => Some((rank, *inst, r)),
                _ => None,
            })
            .collect();
        let resolved = resolve_flexible_requests(
            &requests.iter().map(|(_, _, r)| (*r).clone()).collect::<Vec<_>>(),
            &self.shared.decls,
        );
        let mut out: Vec<(usize, Candidate)> = resolved
            .into_iter()
            .map(|event| {
                let mut rank = usize::MAX;
                let mut requesters = Vec::new();
                for (r, inst, req) in &requests {
                    if req.accepts(&event) {
                        rank = rank.min(*r);
                        requesters.push(inst.id);
                    }
                }
                let blocked_by = active
                    .iter()
                    .filter(|i| i.blocks.iter().any(|b| matches(&b.pattern, &event).unwrap_or(false)))
                    .map(|i| i.id)
                    .collect();
                (
                    rank,
                    Candidate {
                        event,
                        requesters,
                        blocked_by,
                    },
                )
            })
            .collect();
        out.sort_by_key(|(rank, _)| *rank);
        out.into_iter().map(|(_, c)| c).collect()
    }

    /// Every block pattern held by an active instance.
    pub fn active_blocks(&self) -> Vec<EventPattern> {
        self.sorted_active()
            .iter()
            .flat_map(|i| i.blocks.iter().map(|b| b.pattern.clone()))
            .collect()
    }

    pub fn sync_point(&self, instance: usize) -> Option<SyncPoint> {
        let inst = self.instances.iter().find(|i| i.id == instance)?;
        if inst.status != InstanceStatus::ActiveAtSync {
            return None;
        }
        let mut sp = SyncPoint {
            blocked: inst.blocks.iter().map(|b| b.pattern.clone()).collect(),
            ..SyncPoint::default()
        };
        match &inst.sync {
            Some(Sync::Request(r)) => sp.requested.push(r.clone()),
            Some(Sync::Wait(p)) => sp.waited.push(p.clone()),
            Some(Sync::Until) => sp.waited.extend(inst.blocks.iter().filter_map(|b| b.until.clone())),
            None => {}
        }
        Some(sp)
    }

    pub fn scenario_states(&self) -> Vec<InstanceState> {
        self.instances
            .iter()
            .map(|inst| {
                let cd = &self.shared.defs[inst.def];
                InstanceState {
                    instance: inst.id,
                    def_id: cd.def.id.clone(),
                    status: inst.status,
                    location: match inst.status {
                        InstanceStatus::Completed => None,
                        _ => cd.locs.get(inst.pc).copied(),
                    },
                    bindings: inst.bindings.clone(),
                }
            })
            .collect()
    }

    /// The event the next `step` would execute, without executing it.
    pub fn next_event(&self) -> Option<(MessageEvent, Origin)> {
        if let Some(c) = self.candidates().into_iter().find(Candidate::selectable) {
            return Some((c.event, Origin::Requested));
        }
        self.pending.front().map(|e| (e.clone(), Origin::Triggered))
    }

    /// Executes one event by the kernel rules; `None` at quiescence.
    pub fn step(&mut self) -> Result<Option<TraceEntry>, KernelError> {
        if let Some(c) = self.candidates().into_iter().find(Candidate::selectable) {
            return self.execute_requested(c.event).map(Some);
        }
        if !self.pending.is_empty() {
            return Ok(Some(self.execute_next_external()));
        }
        self.mark_violations();
        Ok(None)
    }

    /// Executes a specific requested candidate (must be selectable).
    pub fn execute_requested(&mut self, event: MessageEvent) -> Result<TraceEntry, KernelError> {
        let enabled = self.candidates().iter().any(|c| c.selectable() && c.event == event);
        if !enabled {
            return Err(KernelError::NotEnabled);
        }
        if self.events_in_superstep >= self.shared.config.max_events_per_superstep {
            return Err(KernelError::SuperstepLimitExceeded {
                limit: self.shared.config.max_events_per_superstep,
                superstep: self.superstep,
            });
        }
        self.events_in_superstep += 1;
        Ok(self.execute(event, Origin::Requested))
    }

    /// Dequeues and executes the head of the external queue, starting a new
    /// super-step. Panics if the queue is empty.
    pub fn execute_next_external(&mut self) -> TraceEntry {
        let event = self.pending.pop_front().expect("external queue is empty");
        if !self.trace.is_empty() {
            self.superstep += 1;
        }
        self.events_in_superstep = 0;
        self.execute(event, Origin::Triggered)
    }

    /// Runs until no requested event is selectable and no external event is
    /// pending; returns the newly executed entries.
    pub fn run_to_quiescence(&mut self) -> Result<Vec<TraceEntry>, KernelError> {
        let start = self.trace.len();
        while self.step()?.is_some() {}
        Ok(self.trace.entries[start..].to_vec())
    }

    pub fn is_quiescent(&self) -> bool {
        self.next_event().is_none()
    }

    fn execute(&mut self, event: MessageEvent, origin: Origin) -> TraceEntry {
        let entry = TraceEntry {
            seq: self.trace.len(),
            superstep: self.superstep,
            origin,
            event: event.clone(),
        };
        trace!(%event, ?origin, "execute");
        self.trace.entries.push(entry.clone());

        let shared = Arc::clone(&self.shared);
        let mut effect = StepEffect::default();
        for inst in self.instances.iter_mut() {
            if inst.status != InstanceStatus::ActiveAtSync {
                continue;
            }
            let before = inst.blocks.len();
            inst.blocks
                .retain(|b| !b.until.as_ref().is_some_and(|u| matches(u, &event).unwrap_or(false)));
            let lifted = inst.blocks.len() != before;
            let progressed = match &inst.sync {
                Some(Sync::Request(r)) => r.accepts(&event),
                Some(Sync::Wait(p)) => matches(p, &event).unwrap_or(false),
                Some(Sync::Until) => lifted,
                None => false,
            };
            if progressed {
                effect.advanced += 1;
                if !matches!(inst.sync, Some(Sync::Until)) {
                    inst.pc += 1;
                }
                advance(inst, &shared.defs[inst.def]);
            }
        }

        let spawn: Vec<usize> = shared
            .defs
            .iter()
            .enumerate()
            .filter(|(_, cd)| {
                cd.def
                    .trigger
                    .as_ref()
                    .is_some_and(|t| matches(t, &event).unwrap_or(false))
            })
            .map(|(i, _)| i)
            .collect();
        effect.spawned = spawn.len();
        for def in spawn {
            self.spawn(def, Some(event.clone()));
        }
        self.last_effect = effect;
        entry
    }

    fn spawn(&mut self, def: usize, trigger: Option<MessageEvent>) -> usize {
        let id = self.instances.len();
        let mut inst = Instance {
            id,
            def,
            bindings: BTreeMap::new(),
            trigger,
            pc: 0,
            status: InstanceStatus::ActiveAtSync,
            blocks: Vec::new(),
            sync: None,
        };
        let shared = Arc::clone(&self.shared);
        advance(&mut inst, &shared.defs[def]);
        debug!(scenario = %shared.defs[def].def.id, instance = id, "spawned");
        self.instances.push(inst);
        id
    }

    fn mark_violations(&mut self) {
        let blocked_requesters: Vec<usize> = self
            .candidates()
            .iter()
            .filter(|c| !c.selectable())
            .flat_map(|c| c.requesters.clone())
            .collect();
        for inst in self.instances.iter_mut() {
            if inst.status == InstanceStatus::ActiveAtSync
                && self.shared.defs[inst.def].def.strict
                && blocked_requesters.contains(&inst.id)
            {
                warn!(scenario = %self.shared.defs[inst.def].def.id, "strict scenario violated");
                inst.status = InstanceStatus::Violated;
                inst.sync = None;
            }
        }
    }
}

/// Runs non-synchronizing statements until the instance reaches a sync
/// point or completes.
fn advance(inst: &mut Instance, cd: &CompiledDef) {
    loop {
        let Some(op) = cd.ops.get(inst.pc) else {
            if inst.blocks.iter().any(|b| b.until.is_some()) {
                inst.blocks.retain(|b| b.until.is_some());
                inst.sync = Some(Sync::Until);
            } else {
                inst.status = InstanceStatus::Completed;
                inst.blocks.clear();
                inst.sync = None;
            }
            return;
        };
        let captures: &[Value] = &[];
        let resolved = match op {
            Op::Request { template, flexible } => template.resolve_args(&inst.bindings, captures).map(|params| {
                inst.sync = Some(Sync::Request(RequestedEvent {
                    sender: template.sender.to_string(),
                    receiver: template.receiver.to_string(),
                    message: template.message.clone(),
                    params,
                    flexible: *flexible,
                }));
                true
            }),
            Op::WaitFor(t) => t.to_pattern(&inst.bindings, captures).map(|p| {
                inst.sync = Some(Sync::Wait(p));
                true
            }),
            Op::Block { pattern, until } => pattern.to_pattern(&inst.bindings, captures).and_then(|pattern| {
                let until = until
                    .as_ref()
                    .map(|u| u.to_pattern(&inst.bindings, captures))
                    .transpose()?;
                inst.blocks.push(ActiveBlock { pattern, until });
                inst.pc += 1;
                Ok(false)
            }),
            Op::Bind { var, index } => {
                if let Some(v) = inst.trigger.as_ref().and_then(|t| t.params.get(*index)) {
                    inst.bindings.insert(var.clone(), v.clone());
                }
                inst.pc += 1;
                Ok(false)
            }
            Op::Set { var, value } => {
                let v = match value {
                    Operand::Lit(v) => Some(v.clone()),
                    Operand::Var(name) => inst.bindings.get(name).cloned(),
                };
                if let Some(v) = v {
                    inst.bindings.insert(var.clone(), v);
                }
                inst.pc += 1;
                Ok(false)
            }
            Op::Branch { cond, else_pc } => {
                inst.pc = if cond.eval(&inst.bindings) {
                    inst.pc + 1
                } else {
                    *else_pc
                };
                Ok(false)
            }
            Op::Jump(t) => {
                inst.pc = *t;
                Ok(false)
            }
        };
        match resolved {
            Ok(true) => return,
            Ok(false) => {}
            Err(e) => {
                warn!(scenario = %cd.def.id, error = %e, "instance cannot continue");
                inst.status = InstanceStatus::Violated;
                inst.sync = None;
                return;
            }
        }
    }
}

/// Turns the requests gathered at one selection step into concrete
/// candidate events, grouped per (sender, receiver, message) in first
/// encounter order. Within a group every distinct rigid valuation is a
/// candidate; a group with only flexible requests yields its first request
/// with wildcards filled by the declared defaults.
pub fn resolve_flexible_requests(requests: &[RequestedEvent], decls: &Declarations) -> Vec<MessageEvent> {
    let mut groups: Vec<(&RequestedEvent, Vec<&RequestedEvent>)> = Vec::new();
    for r in requests {
        match groups
            .iter_mut()
            .find(|(head, _)| head.sender == r.sender && head.receiver == r.receiver && head.message == r.message)
        {
            Some((_, members)) => members.push(r),
            None => groups.push((r, vec![r])),
        }
    }
    let mut out = Vec::new();
    for (_, members) in groups {
        let mut rigid: Vec<MessageEvent> = Vec::new();
        for r in &members {
            if let Some(vals) = r.rigid_valuation() {
                let e = MessageEvent::new(&r.sender, &r.receiver, &r.message, vals);
                if !rigid.contains(&e) {
                    rigid.push(e);
                }
            }
        }
        if rigid.is_empty() {
            let first = members[0];
            let params = decls.fill_defaults(&first.message, &first.params).unwrap_or_else(|| {
                first
                    .params
                    .iter()
                    .filter_map(|p| match p {
                        ParamValue::Concrete(v) => Some(v.clone()),
                        ParamValue::Wildcard => None,
                    })
                    .collect()
            });
            out.push(MessageEvent::new(
                &first.sender,
                &first.receiver,
                &first.message,
                params,
            ));
        } else {
            out.extend(rigid);
        }
    }
    out
}

/// True for scenario kinds that the kernel spawns from triggers.
pub fn is_model_scenario(def: &ScenarioDef) -> bool {
    def.kind != ScenarioKind::Test
}

#[cfg(test)]
mod tests;
