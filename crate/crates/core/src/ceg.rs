//! Cause-effect graphs, test derivation by basic path sensitization, suite
//! export and harness stub generation.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::parse_event_pattern;
use crate::event::{EventPattern, ParamValue, Value};
use crate::reqs::{CausalExtraction, CauseExpr, CausePhrase, EffectPhrase};

pub const MAX_CAUSES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateOp {
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CauseNode {
    pub id: String,
    pub phrase: CausePhrase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectNode {
    pub id: String,
    pub phrase: EffectPhrase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateNode {
    pub id: String,
    pub op: GateOp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub negated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CauseEffectGraph {
    pub requirement_id: String,
    pub causes: Vec<CauseNode>,
    pub effects: Vec<EffectNode>,
    pub gates: Vec<GateNode>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Node {
    Cause(usize),
    Gate(usize),
}

fn phrase_key(s: &str) -> String {
    let lower = s.to_lowercase();
    let words: Vec<&str> = lower.split_whitespace().collect();
    let skip = usize::from(matches!(words.first(), Some(&("the" | "a" | "an"))) && words.len() > 1);
    words[skip..].join(" ")
}

/// One cause node per distinct leaf phrase, one gate per AND/OR, one effect
/// node per effect. NOT nodes fold into edge negation; a negative effect
/// flips the edge into its node.
pub fn build_graph(x: &CausalExtraction) -> CauseEffectGraph {
    let mut g = CauseEffectGraph {
        requirement_id: x.requirement_id.clone(),
        causes: Vec::new(),
        effects: Vec::new(),
        gates: Vec::new(),
        edges: Vec::new(),
    };
    let (root, negated) = g.add_expr(&x.cause, false);
    for (i, e) in x.effects.iter().enumerate() {
        let id = format!("E{}", i + 1);
        g.edges.push(Edge {
            from: root.clone(),
            to: id.clone(),
            negated: negated ^ e.negated,
        });
        g.effects.push(EffectNode { id, phrase: e.clone() });
    }
    g
}

impl CauseEffectGraph {
    fn add_expr(&mut self, e: &CauseExpr, negated: bool) -> (String, bool) {
        match e {
            CauseExpr::Leaf(p) => {
                let key = phrase_key(&p.text);
                let id = match self.causes.iter().find(|c| phrase_key(&c.phrase.text) == key) {
                    Some(c) => c.id.clone(),
                    None => {
                        let id = format!("C{}", self.causes.len() + 1);
                        self.causes.push(CauseNode {
                            id: id.clone(),
                            phrase: p.clone(),
                        });
                        id
                    }
                };
                (id, negated)
            }
            CauseExpr::Not(inner) => self.add_expr(inner, !negated),
            CauseExpr::And(xs) | CauseExpr::Or(xs) => {
                let op = if matches!(e, CauseExpr::And(_)) {
                    GateOp::And
                } else {
                    GateOp::Or
                };
                let id = format!("G{}", self.gates.len() + 1);
                self.gates.push(GateNode { id: id.clone(), op });
                for x in xs {
                    let (from, neg) = self.add_expr(x, false);
                    self.edges.push(Edge {
                        from,
                        to: id.clone(),
                        negated: neg,
                    });
                }
                (id, negated)
            }
        }
    }

    fn node(&self, id: &str) -> Node {
        if let Some(i) = self.causes.iter().position(|c| c.id == id) {
            Node::Cause(i)
        } else {
            Node::Gate(
                self.gates
                    .iter()
                    .position(|g| g.id == id)
                    .expect("edge source is a cause or gate"),
            )
        }
    }

    fn inputs(&self, id: &str) -> impl Iterator<Item = (Node, bool)> + '_ {
        let id = id.to_string();
        self.edges
            .iter()
            .filter(move |e| e.to == id)
            .map(|e| (self.node(&e.from), e.negated))
    }

    fn value(&self, node: Node, causes: &[bool]) -> bool {
        match node {
            Node::Cause(i) => causes[i],
            Node::Gate(i) => {
                let g = &self.gates[i];
                let mut vals = self.inputs(&g.id).map(|(n, neg)| self.value(n, causes) ^ neg);
                match g.op {
                    GateOp::And => vals.all(|v| v),
                    GateOp::Or => vals.any(|v| v),
                }
            }
        }
    }

    /// Effect values, in effect order, under a full cause assignment.
    pub fn evaluate(&self, causes: &[bool]) -> Vec<bool> {
        assert_eq!(causes.len(), self.causes.len(), "assignment must cover every cause");
        self.effects
            .iter()
            .map(|e| {
                let (n, neg) = self.inputs(&e.id).next().expect("effect has an input");
                self.value(n, causes) ^ neg
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CegError {
    #[error("requirement `{requirement}` has {count} causes; at most {MAX_CAUSES} are supported")]
    TooManyCauses { requirement: String, count: usize },
    #[error("the suite is empty")]
    EmptySuite,
    #[error("unsupported export format `{0}`; use `tabular` or `structured`")]
    UnsupportedFormat(String),
    #[error("event map: {0}")]
    BadEventMap(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedTestCase {
    pub id: String,
    pub requirement_id: String,
    /// Cause id to value, covering every cause in graph order.
    pub assignments: Vec<(String, bool)>,
    /// Effect id to expected value, in graph order.
    pub expected: Vec<(String, bool)>,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementSuite {
    pub graph: CauseEffectGraph,
    pub cases: Vec<GeneratedTestCase>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub requirements: Vec<RequirementSuite>,
}

impl TestSuite {
    pub fn merge(suites: impl IntoIterator<Item = TestSuite>) -> TestSuite {
        let mut requirements: Vec<RequirementSuite> = suites.into_iter().flat_map(|s| s.requirements).collect();
        requirements.sort_by(|a, b| natural_cmp(&a.graph.requirement_id, &b.graph.requirement_id));
        TestSuite { requirements }
    }

    pub fn requirement_ids(&self) -> Vec<&str> {
        self.requirements
            .iter()
            .map(|r| r.graph.requirement_id.as_str())
            .collect()
    }

    pub fn cases(&self) -> impl Iterator<Item = &GeneratedTestCase> {
        self.requirements.iter().flat_map(|r| &r.cases)
    }

    pub fn len(&self) -> usize {
        self.cases().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Compares digit runs numerically, so `R2` sorts before `R10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for ((da, xa), (db, xb)) in ca.iter().zip(&cb) {
        let ord = if *da && *db {
            let (ta, tb) = (xa.trim_start_matches('0'), xb.trim_start_matches('0'));
            ta.len().cmp(&tb.len()).then(ta.cmp(tb)).then(xa.len().cmp(&xb.len()))
        } else {
            xa.cmp(xb)
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len())
}

type Partial = Vec<Option<bool>>;

impl CauseEffectGraph {
    /// Assignments that set `node` to `v` with the path through it sensitized.
    fn sensitize(&self, node: Node, v: bool) -> Vec<(Partial, &'static str)> {
        match node {
            Node::Cause(i) => {
                let mut p = vec![None; self.causes.len()];
                p[i] = Some(v);
                vec![(p, if v { "CAUSE-T" } else { "CAUSE-F" })]
            }
            Node::Gate(gi) => {
                let g = &self.gates[gi];
                let inputs: Vec<(Node, bool)> = self.inputs(&g.id).collect();
                // The gate value for which every input is held at one level.
                let (held_level, rule_all, rule_each) = match g.op {
                    GateOp::And => (true, "AND-T", "AND-F"),
                    GateOp::Or => (false, "OR-F", "OR-T"),
                };
                let empty = vec![None; self.causes.len()];
                if v == held_level {
                    let held: Vec<usize> = (0..inputs.len()).collect();
                    return self
                        .hold(&inputs, &held, held_level, empty)
                        .map(|p| vec![(p, rule_all)])
                        .unwrap_or_default();
                }
                let mut out = Vec::new();
                for (i, (n, neg)) in inputs.iter().enumerate() {
                    let others: Vec<usize> = (0..inputs.len()).filter(|j| *j != i).collect();
                    for (p, _) in self.sensitize(*n, !held_level ^ neg) {
                        if let Some(full) = self.hold(&inputs, &others, held_level, p) {
                            out.push((full, rule_each));
                        }
                    }
                }
                out
            }
        }
    }

    /// Extends `acc` so every listed input reads `level`, backtracking over
    /// the choices OR-true and AND-false leave open.
    fn hold(&self, inputs: &[(Node, bool)], which: &[usize], level: bool, acc: Partial) -> Option<Partial> {
        let goals: Vec<(Node, bool)> = which.iter().map(|&j| (inputs[j].0, level ^ inputs[j].1)).collect();
        self.justify(&goals, acc)
    }

    fn justify(&self, goals: &[(Node, bool)], mut acc: Partial) -> Option<Partial> {
        let Some(&(node, v)) = goals.first() else {
            return Some(acc);
        };
        let rest = &goals[1..];
        match node {
            Node::Cause(i) => match acc[i] {
                Some(b) if b != v => None,
                _ => {
                    acc[i] = Some(v);
                    self.justify(rest, acc)
                }
            },
            Node::Gate(gi) => {
                let g = &self.gates[gi];
                let inputs: Vec<(Node, bool)> = self.inputs(&g.id).collect();
                let all = matches!((g.op, v), (GateOp::And, true) | (GateOp::Or, false));
                if all {
                    let mut next: Vec<(Node, bool)> = inputs.iter().map(|(n, neg)| (*n, v ^ neg)).collect();
                    next.extend_from_slice(rest);
                    self.justify(&next, acc)
                } else {
                    inputs.iter().find_map(|(n, neg)| {
                        let mut next = vec![(*n, v ^ neg)];
                        next.extend_from_slice(rest);
                        self.justify(&next, acc.clone())
                    })
                }
            }
        }
    }
}

/// Basic path sensitization from every effect back to the causes. Cases for
/// the effect being true come first; identical assignment vectors are kept
/// once. Causes no path constrains are set false.
pub fn derive_test_cases(g: &CauseEffectGraph) -> Result<TestSuite, CegError> {
    if g.causes.len() > MAX_CAUSES {
        return Err(CegError::TooManyCauses {
            requirement: g.requirement_id.clone(),
            count: g.causes.len(),
        });
    }
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    let mut cases = Vec::new();
    for e in &g.effects {
        let (root, neg) = g.inputs(&e.id).next().expect("effect has an input");
        for target in [true, false] {
            let mut options: Vec<(Vec<bool>, &str)> = g
                .sensitize(root, target ^ neg)
                .into_iter()
                .map(|(p, rule)| (p.iter().map(|v| v.unwrap_or(false)).collect(), rule))
                .collect();
            if options.is_empty() {
                // Shared causes can defeat every sensitized path; fall back
                // to the first assignment that reaches the target at all.
                let n = g.causes.len();
                let e_idx = g.effects.iter().position(|x| x.id == e.id).unwrap();
                options.extend(
                    (0u32..1 << n)
                        .map(|bits| (0..n).map(|i| bits >> i & 1 == 1).collect::<Vec<bool>>())
                        .find(|a| g.evaluate(a)[e_idx] == target)
                        .map(|a| (a, "JUSTIFY")),
                );
            }
            for (full, rule) in options {
                if !seen.insert(full.clone()) {
                    continue;
                }
                let expected = g.evaluate(&full);
                cases.push(GeneratedTestCase {
                    id: format!("{}_{}", sanitize_id(&g.requirement_id), cases.len() + 1),
                    requirement_id: g.requirement_id.clone(),
                    assignments: g.causes.iter().map(|c| c.id.clone()).zip(full).collect(),
                    expected: g.effects.iter().map(|e| e.id.clone()).zip(expected).collect(),
                    rule: rule.to_string(),
                });
            }
        }
    }
    Ok(TestSuite {
        requirements: vec![RequirementSuite {
            graph: g.clone(),
            cases,
        }],
    })
}

fn sanitize_id(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// Comma-separated, one row per case.
    Tabular,
    /// Pretty-printed JSON mirroring [`TestSuite`].
    Structured,
}

impl FromStr for ExportFormat {
    type Err = CegError;

    fn from_str(s: &str) -> Result<Self, CegError> {
        match s {
            "tabular" | "csv" => Ok(ExportFormat::Tabular),
            "structured" | "json" => Ok(ExportFormat::Structured),
            other => Err(CegError::UnsupportedFormat(other.to_string())),
        }
    }
}

pub fn export_suite(suite: &TestSuite, format: ExportFormat) -> Result<String, CegError> {
    if suite.is_empty() {
        return Err(CegError::EmptySuite);
    }
    let mut reqs: Vec<&RequirementSuite> = suite.requirements.iter().collect();
    reqs.sort_by(|a, b| natural_cmp(&a.graph.requirement_id, &b.graph.requirement_id));
    match format {
        ExportFormat::Structured => {
            let ordered = TestSuite {
                requirements: reqs.into_iter().cloned().collect(),
            };
            let mut s = serde_json::to_string_pretty(&ordered).expect("suite serializes");
            s.push('\n');
            Ok(s)
        }
        ExportFormat::Tabular => Ok(tabular(&reqs)),
    }
}

fn tabular(reqs: &[&RequirementSuite]) -> String {
    let mut causes: Vec<String> = Vec::new();
    let mut effects: Vec<String> = Vec::new();
    for r in reqs {
        for c in &r.graph.causes {
            if !causes.contains(&c.phrase.text) {
                causes.push(c.phrase.text.clone());
            }
        }
        for e in &r.graph.effects {
            if !effects.contains(&e.phrase.text) {
                effects.push(e.phrase.text.clone());
            }
        }
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["requirement".to_string(), "case".to_string()];
    header.extend(causes.iter().cloned());
    header.extend(effects.iter().cloned());
    header.push("rule".into());
    w.write_record(&header).expect("write to memory");
    let bit = |b: bool| if b { "1" } else { "0" }.to_string();
    for r in reqs {
        let g = &r.graph;
        for case in &r.cases {
            let mut row = vec![case.requirement_id.clone(), case.id.clone()];
            for phrase in &causes {
                let cell = g
                    .causes
                    .iter()
                    .position(|c| &c.phrase.text == phrase)
                    .map(|i| bit(case.assignments[i].1));
                row.push(cell.unwrap_or_default());
            }
            for phrase in &effects {
                let cell = g
                    .effects
                    .iter()
                    .position(|e| &e.phrase.text == phrase)
                    .map(|i| bit(case.expected[i].1));
                row.push(cell.unwrap_or_default());
            }
            row.push(case.rule.clone());
            w.write_record(&row).expect("write to memory");
        }
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 input")
}

/// Links requirement phrases to events. An entry names either a whole
/// `phrase`, or a `variable` whose extracted value fills argument `param`
/// of the event.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventMap {
    #[serde(default)]
    pub causes: Vec<MapEntry>,
    #[serde(default)]
    pub effects: Vec<MapEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    #[serde(default)]
    pub phrase: Option<String>,
    #[serde(default)]
    pub variable: Option<String>,
    pub event: String,
    #[serde(default)]
    pub param: Option<usize>,
}

impl EventMap {
    pub fn parse(toml_src: &str) -> Result<EventMap, CegError> {
        let map: EventMap = toml::from_str(toml_src).map_err(|e| CegError::BadEventMap(e.to_string()))?;
        for entry in map.causes.iter().chain(&map.effects) {
            let p = entry.pattern()?;
            match (&entry.phrase, &entry.variable, entry.param) {
                (Some(_), None, None) => {}
                (None, Some(v), Some(i)) if i < p.params.len() => {
                    if !p.params[i].is_wildcard() {
                        return Err(CegError::BadEventMap(format!(
                            "`{v}`: argument {i} of `{p}` must be `*`"
                        )));
                    }
                }
                (None, Some(v), Some(i)) => {
                    return Err(CegError::BadEventMap(format!("`{v}`: `{p}` has no argument {i}")))
                }
                _ => {
                    return Err(CegError::BadEventMap(format!(
                        "`{}`: give either `phrase`, or `variable` with `param`",
                        entry.event
                    )))
                }
            }
        }
        Ok(map)
    }

    fn lookup<'a>(entries: &'a [MapEntry], text: &str, variable: Option<&str>) -> Option<&'a MapEntry> {
        let key = phrase_key(text);
        entries
            .iter()
            .find(|e| e.phrase.as_deref().is_some_and(|p| phrase_key(p) == key))
            .or_else(|| {
                let var = phrase_key(variable?);
                entries
                    .iter()
                    .find(|e| e.variable.as_deref().is_some_and(|v| phrase_key(v) == var))
            })
    }
}

impl MapEntry {
    fn pattern(&self) -> Result<EventPattern, CegError> {
        parse_event_pattern(&self.event).map_err(|e| CegError::BadEventMap(format!("`{}`: {e}", self.event)))
    }

    /// The event with this entry's argument filled from `value`.
    fn instantiate(&self, value: Option<&str>) -> EventPattern {
        let mut p = self.pattern().expect("validated on load");
        if let (Some(i), Some(v)) = (self.param, value) {
            p.params[i] = ParamValue::Concrete(literal(v));
        }
        p
    }
}

fn literal(v: &str) -> Value {
    match v.parse::<f64>() {
        Ok(n) if v.chars().any(|c| c.is_ascii_digit()) => Value::Number(n),
        _ => match v {
            "true" => Value::Boolean(true),
            "false" => Value::Boolean(false),
            _ => Value::Text(v.to_string()),
        },
    }
}

/// One `.tests` stub per case. Mapped true causes become triggers (entries
/// naming the same event merge into one), mapped true effects become
/// `eventually` directives, and everything else is a TODO comment keeping
/// the phrase.
pub fn emit_harness_stubs(suite: &TestSuite, map: &EventMap) -> String {
    let mut out = String::new();
    for r in &suite.requirements {
        let g = &r.graph;
        for case in &r.cases {
            if !out.is_empty() {
                out.push('\n');
            }
            write_stub(&mut out, g, case, map).expect("write to string");
        }
    }
    out
}

fn write_stub(out: &mut String, g: &CauseEffectGraph, case: &GeneratedTestCase, map: &EventMap) -> fmt::Result {
    writeln!(
        out,
        "test {} \"{} case {} ({})\" {{",
        case.id,
        g.requirement_id,
        case.id.rsplit('_').next().unwrap_or(""),
        case.rule
    )?;
    let mut triggers: Vec<EventPattern> = Vec::new();
    let mut lines: Vec<String> = Vec::new();
    for (c, (_, value)) in g.causes.iter().zip(&case.assignments) {
        let entry = EventMap::lookup(&map.causes, &c.phrase.text, c.phrase.variable.as_deref());
        match (entry, value) {
            (Some(e), true) => {
                let filled = e.instantiate(c.phrase.value.as_deref());
                let base = e.pattern().expect("validated on load");
                match triggers.iter_mut().find(|t| same_event(t, &base)) {
                    Some(t) => {
                        for (slot, new) in t.params.iter_mut().zip(filled.params) {
                            if slot.is_wildcard() {
                                *slot = new;
                            }
                        }
                    }
                    None => triggers.push(filled),
                }
            }
            (None, true) => lines.push(format!("# TODO: {}", c.phrase.text)),
            (_, false) => lines.push(format!("# TODO negative: {}", c.phrase.text)),
        }
    }
    for t in &triggers {
        if t.params.iter().any(ParamValue::is_wildcard) {
            writeln!(out, "    # TODO: complete trigger {t}")?;
        } else {
            writeln!(out, "    trigger {t}")?;
        }
    }
    for l in lines {
        writeln!(out, "    {l}")?;
    }
    for (e, (_, value)) in g.effects.iter().zip(&case.expected) {
        let entry = EventMap::lookup(&map.effects, &e.phrase.text, e.phrase.variable.as_deref());
        match (entry, value) {
            (Some(m), true) => writeln!(out, "    eventually {}", m.instantiate(e.phrase.value.as_deref()))?,
            (Some(m), false) => writeln!(
                out,
                "    # TODO negative: expect no {}",
                m.instantiate(e.phrase.value.as_deref())
            )?,
            (None, true) => writeln!(out, "    # TODO: {}", e.phrase.text)?,
            (None, false) => writeln!(out, "    # TODO negative: {}", e.phrase.text)?,
        }
    }
    writeln!(out, "}}")
}

fn same_event(a: &EventPattern, b: &EventPattern) -> bool {
    a.sender == b.sender && a.receiver == b.receiver && a.message == b.message
}

#[cfg(test)]
mod tests;
