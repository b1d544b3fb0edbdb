//! Natural-language requirements: ingestion, classification and rule-based
//! extraction of cause/effect structure from causal sentences.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    FunctionalCausal,
    FunctionalStatic,
    Interface,
    Configuration,
    VariableDefinition,
    Other,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::FunctionalCausal,
        Category::FunctionalStatic,
        Category::Interface,
        Category::Configuration,
        Category::VariableDefinition,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::FunctionalCausal => "functional-causal",
            Category::FunctionalStatic => "functional-static",
            Category::Interface => "interface",
            Category::Configuration => "configuration",
            Category::VariableDefinition => "variable-definition",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        Ok(match norm.as_str() {
            "functional-causal" | "causal" => Category::FunctionalCausal,
            "functional-static" | "static" => Category::FunctionalStatic,
            "interface" => Category::Interface,
            "configuration" | "config" => Category::Configuration,
            "variable-definition" | "variable" => Category::VariableDefinition,
            "other" => Category::Other,
            _ => return Err(format!("unknown category `{s}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: String,
    pub text: String,
    /// Label supplied with the input, if any. Not used by the classifier.
    pub hint: Option<Category>,
    /// None until classified.
    pub category: Option<Category>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("duplicate requirement id `{0}`")]
    DuplicateId(String),
    #[error("requirement `{0}` has no text")]
    EmptyText(String),
    #[error("line {line}: {message}")]
    Format { line: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// Header row with `id`, `text` and optionally `category_hint`.
    Csv,
    /// One requirement per line, `ID: text` or bare text (numbered R1, R2, ...).
    Plain,
}

impl InputFormat {
    pub fn from_path(path: &std::path::Path) -> InputFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => InputFormat::Csv,
            _ => InputFormat::Plain,
        }
    }
}

pub fn ingest_requirements(text: &str, format: InputFormat) -> Result<Vec<Requirement>, IngestError> {
    let raw = match format {
        InputFormat::Csv => ingest_csv(text)?,
        InputFormat::Plain => ingest_plain(text),
    };
    let mut seen = HashSet::new();
    for r in &raw {
        if !seen.insert(r.id.clone()) {
            return Err(IngestError::DuplicateId(r.id.clone()));
        }
        if r.text.trim().is_empty() {
            return Err(IngestError::EmptyText(r.id.clone()));
        }
    }
    Ok(raw)
}

fn ingest_csv(text: &str) -> Result<Vec<Requirement>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let fmt_err = |e: csv::Error| IngestError::Format {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    };
    let headers = rdr.headers().map_err(fmt_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(id_col), Some(text_col)) = (col("id"), col("text")) else {
        if headers.is_empty() {
            return Ok(Vec::new());
        }
        return Err(IngestError::Format {
            line: 1,
            message: "header must name `id` and `text` columns".into(),
        });
    };
    let hint_col = col("category_hint");
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(fmt_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| rec.get(i).unwrap_or("").to_string();
        let hint = match hint_col.map(get).filter(|h| !h.is_empty()) {
            Some(h) => Some(h.parse().map_err(|message| IngestError::Format { line, message })?),
            None => None,
        };
        out.push(Requirement {
            id: get(id_col),
            text: normalize_space(&get(text_col)),
            hint,
            category: None,
        });
    }
    Ok(out)
}

fn ingest_plain(text: &str) -> Vec<Requirement> {
    static ID: OnceLock<Regex> = OnceLock::new();
    let id_re = ID.get_or_init(|| Regex::new(r"^([A-Za-z][A-Za-z0-9_.-]*):\s+(.*)$").unwrap());
    let mut out = Vec::new();
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let (id, body) = match id_re.captures(line) {
            Some(c) => (c[1].to_string(), c[2].to_string()),
            None => (format!("R{}", out.len() + 1), line.to_string()),
        };
        out.push(Requirement {
            id,
            text: normalize_space(&body),
            hint: None,
            category: None,
        });
    }
    out
}

fn normalize_space(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Keyword lists for the non-causal categories, matched case-insensitively
/// as substrings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub variable_definition: Vec<String>,
    pub configuration: Vec<String>,
    pub interface: Vec<String>,
    pub obligation: Vec<String>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            variable_definition: v(&["shall be defined as", "is defined as", "data type", "is of type"]),
            configuration: v(&[
                "configuration parameter",
                "configurable",
                "shall be configured",
                "configure",
            ]),
            interface: v(&["interface", "provide", "signal name"]),
            obligation: v(&["shall", "must"]),
        }
    }
}

/// Classification order: causal, variable definition, configuration,
/// interface, static, other. The first rule that applies wins.
pub fn classify(req: &Requirement, cfg: &ClassifierConfig) -> Category {
    let lower = req.text.to_lowercase();
    let has = |words: &[String]| words.iter().any(|w| lower.contains(&w.to_lowercase()));
    let obligation = cfg.obligation.iter().any(|w| contains_word(&lower, &w.to_lowercase()));
    if obligation && find_pattern(&req.text).is_some() {
        Category::FunctionalCausal
    } else if has(&cfg.variable_definition) {
        Category::VariableDefinition
    } else if has(&cfg.configuration) {
        Category::Configuration
    } else if has(&cfg.interface) {
        Category::Interface
    } else if obligation {
        Category::FunctionalStatic
    } else {
        Category::Other
    }
}

fn contains_word(haystack: &str, word: &str) -> bool {
    haystack
        .match_indices(word)
        .any(|(i, _)| is_boundary(haystack, i) && is_boundary(haystack, i + word.len()))
}

fn is_boundary(s: &str, i: usize) -> bool {
    let before = s[..i].chars().next_back();
    let after = s[i..].chars().next();
    !(before.is_some_and(|c| c.is_alphanumeric()) && after.is_some_and(|c| c.is_alphanumeric()))
}

/// Surface form of a causal sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CausalPattern {
    pub id: &'static str,
    pub marker: &'static str,
    /// Cause clause first (`If C, E`) or effect first (`E if C`).
    pub leading: bool,
    /// `E unless C` means the effect holds when C does not.
    pub negates_cause: bool,
    pub example: &'static str,
}

const fn pat(id: &'static str, marker: &'static str, leading: bool, example: &'static str) -> CausalPattern {
    CausalPattern {
        id,
        marker,
        leading,
        negates_cause: false,
        example,
    }
}

/// Causal sentence shapes. Markers are tried longest first at each
/// position, so `in case of` wins over `in case`.
pub const PATTERNS: [CausalPattern; 15] = [
    pat("P01", "if", true, "If A or B, the system shall E."),
    pat("P02", "if", true, "If A, then the system shall E."),
    pat("P03", "when", true, "When A, the system shall E."),
    pat("P04", "in case of", true, "In case of A, the system shall E."),
    pat("P05", "in case", true, "In case A, the system shall E."),
    pat("P06", "as soon as", true, "As soon as A, the system shall E."),
    pat("P07", "after", true, "After A, the system shall E."),
    pat("P08", "while", true, "While A, the system must E."),
    pat("P09", "if", false, "The system shall E if A."),
    pat("P10", "when", false, "The system shall E when A."),
    pat("P11", "in case of", false, "The system shall E in case of A."),
    pat("P12", "as soon as", false, "The system shall E as soon as A."),
    pat("P13", "after", false, "The system shall E after A."),
    pat("P14", "while", false, "The system must E while A."),
    CausalPattern {
        id: "P15",
        marker: "unless",
        leading: false,
        negates_cause: true,
        example: "The system shall E unless A.",
    },
];

const MARKERS: [&str; 7] = [
    "in case of",
    "as soon as",
    "in case",
    "unless",
    "while",
    "after",
    "when",
];

fn markers_by_length() -> impl Iterator<Item = &'static str> {
    MARKERS.into_iter().chain(["if"])
}

/// Leftmost causal marker (longest at that position) with its byte offset.
fn leftmost_marker(lower: &str) -> Option<(usize, &'static str)> {
    let mut best: Option<(usize, &'static str)> = None;
    for m in markers_by_length() {
        for (i, _) in lower.match_indices(m) {
            if is_boundary(lower, i) && is_boundary(lower, i + m.len()) {
                let better = match best {
                    None => true,
                    Some((j, bm)) => i < j || (i == j && m.len() > bm.len()),
                };
                if better {
                    best = Some((i, m));
                }
                break;
            }
        }
    }
    best
}

fn obligation_at(lower: &str) -> Option<usize> {
    ["shall", "must"]
        .iter()
        .filter_map(|w| {
            lower
                .match_indices(w)
                .find(|(i, _)| is_boundary(lower, *i) && is_boundary(lower, i + w.len()))
                .map(|(i, _)| i)
        })
        .min()
}

fn strip_period(s: &str) -> &str {
    s.trim().trim_end_matches(['.', '!', ';']).trim()
}

/// The pattern whose shape the sentence has, if any.
pub fn find_pattern(text: &str) -> Option<&'static CausalPattern> {
    let sentence = strip_period(text);
    let lower = sentence.to_lowercase();
    let (pos, marker) = leftmost_marker(&lower)?;
    let obl = obligation_at(&lower)?;
    let leading = pos == 0;
    if !leading && obl > pos {
        // Marker sits before the obligation but not at the start: no table shape.
        return None;
    }
    let then_form = leading && marker == "if" && {
        let effect_start = split_leading(sentence).map(|(_, e)| e.trim().to_lowercase());
        effect_start.is_some_and(|e| e.starts_with("then "))
    };
    PATTERNS
        .iter()
        .filter(|p| p.marker == marker && p.leading == leading)
        .find(|p| !(p.id == "P01" && then_form) && !(p.id == "P02" && !then_form))
}

/// Cause and effect text of a leading-marker sentence: the cause runs to the
/// last comma before the obligation word.
fn split_leading(sentence: &str) -> Option<(&str, &str)> {
    let lower = sentence.to_lowercase();
    let obl = obligation_at(&lower)?;
    let comma = sentence[..obl].rfind(',')?;
    Some((&sentence[..comma], &sentence[comma + 1..]))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausePhrase {
    pub text: String,
    pub variable: Option<String>,
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectPhrase {
    pub text: String,
    pub variable: Option<String>,
    pub value: Option<String>,
    /// `shall not` / `must not`; `text` holds the positive form.
    pub negated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CauseExpr {
    Leaf(CausePhrase),
    Not(Box<CauseExpr>),
    And(Vec<CauseExpr>),
    Or(Vec<CauseExpr>),
}

impl CauseExpr {
    pub fn leaves(&self) -> Vec<&CausePhrase> {
        match self {
            CauseExpr::Leaf(p) => vec![p],
            CauseExpr::Not(x) => x.leaves(),
            CauseExpr::And(xs) | CauseExpr::Or(xs) => xs.iter().flat_map(|x| x.leaves()).collect(),
        }
    }
}

impl fmt::Display for CauseExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CauseExpr::Leaf(p) => f.write_str(&p.text),
            CauseExpr::Not(x) => write!(f, "NOT({x})"),
            CauseExpr::And(xs) | CauseExpr::Or(xs) => {
                f.write_str(if matches!(self, CauseExpr::And(_)) {
                    "AND("
                } else {
                    "OR("
                })?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalExtraction {
    pub requirement_id: String,
    pub cause: CauseExpr,
    pub effects: Vec<EffectPhrase>,
    pub pattern_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("requirement `{0}` is not causal")]
    NotCausal(String),
    #[error("requirement `{id}`: cannot parse `{span}`: {reason}")]
    UnparsableCausal { id: String, span: String, reason: String },
}

pub fn extract_causal(req: &Requirement) -> Result<CausalExtraction, ExtractError> {
    let pattern = find_pattern(&req.text).ok_or_else(|| ExtractError::NotCausal(req.id.clone()))?;
    let sentence = strip_period(&req.text);
    let unparsable = |span: &str, reason: &str| ExtractError::UnparsableCausal {
        id: req.id.clone(),
        span: span.trim().to_string(),
        reason: reason.to_string(),
    };
    let (cause_text, effect_text) = if pattern.leading {
        let (c, e) = split_leading(sentence)
            .ok_or_else(|| unparsable(sentence, "no comma between the condition and the obligation"))?;
        let c = c.trim()[pattern.marker.len()..].trim();
        let e = e.trim();
        let e = if pattern.id == "P02" { e[4..].trim() } else { e };
        (c, e)
    } else {
        let lower = sentence.to_lowercase();
        let (pos, m) = leftmost_marker(&lower).expect("pattern implies a marker");
        (
            sentence[pos + m.len()..].trim(),
            sentence[..pos].trim().trim_end_matches(',').trim(),
        )
    };
    if cause_text.is_empty() {
        return Err(unparsable(sentence, "empty condition"));
    }
    if leftmost_marker(&cause_text.to_lowercase()).is_some() {
        return Err(unparsable(cause_text, "nested conditional"));
    }
    if obligation_at(&cause_text.to_lowercase()).is_some() {
        return Err(unparsable(
            cause_text,
            "obligation inside the condition; check comma placement",
        ));
    }
    let mut cause = parse_cause(cause_text).map_err(|reason| unparsable(cause_text, &reason))?;
    if pattern.negates_cause {
        cause = CauseExpr::Not(Box::new(cause));
    }
    let effects = parse_effects(effect_text).map_err(|reason| unparsable(effect_text, &reason))?;
    Ok(CausalExtraction {
        requirement_id: req.id.clone(),
        cause,
        effects,
        pattern_id: pattern.id.to_string(),
    })
}

fn split_word<'a>(s: &'a str, word: &str) -> Vec<&'a str> {
    let pat = format!(" {word} ");
    let lower = s.to_lowercase();
    let mut out = Vec::new();
    let mut last = 0;
    for (i, _) in lower.match_indices(&pat) {
        out.push(&s[last..i]);
        last = i + pat.len();
    }
    out.push(&s[last..]);
    out
}

/// Boolean structure of a condition: OR of ANDs, comma lists joined by
/// the final conjunction, `not`/`no`/`is not` negation per operand.
fn parse_cause(text: &str) -> Result<CauseExpr, String> {
    let text = text.trim();
    let ors = split_word(text, "or");
    let has_and = split_word(text, "and").len() > 1;
    let has_or = ors.len() > 1;
    if text.contains(',') && has_and && has_or {
        return Err("comma list mixes `and` and `or`".into());
    }
    let comma_split = |s: &str| -> Vec<String> {
        s.split(',')
            .map(|p| p.trim().to_string())
            .filter(|p| !p.is_empty())
            .collect()
    };
    let mut or_parts: Vec<CauseExpr> = Vec::new();
    for part in ors {
        let parts: Vec<String> = if has_or && !has_and {
            comma_split(part)
        } else {
            vec![part.trim().to_string()]
        };
        for p in parts {
            let ands: Vec<String> = split_word(&p, "and")
                .into_iter()
                .flat_map(|a| {
                    if has_and {
                        comma_split(a)
                    } else {
                        vec![a.trim().to_string()]
                    }
                })
                .collect();
            let leaves = ands.iter().map(|a| leaf(a)).collect::<Result<Vec<_>, _>>()?;
            or_parts.push(if leaves.len() == 1 {
                leaves.into_iter().next().unwrap()
            } else {
                CauseExpr::And(leaves)
            });
        }
    }
    Ok(if or_parts.len() == 1 {
        or_parts.pop().unwrap()
    } else {
        CauseExpr::Or(or_parts)
    })
}

fn strip_article(s: &str) -> &str {
    for a in ["the ", "a ", "an "] {
        if s.len() > a.len() && s[..a.len()].eq_ignore_ascii_case(a) {
            return &s[a.len()..];
        }
    }
    s
}

fn leaf(text: &str) -> Result<CauseExpr, String> {
    let t = text.trim();
    if t.is_empty() {
        return Err("empty operand".into());
    }
    let lower = t.to_lowercase();
    for neg in ["not ", "no "] {
        if lower.starts_with(neg) {
            let inner = leaf(&t[neg.len()..])?;
            return Ok(CauseExpr::Not(Box::new(inner)));
        }
    }
    for (neg, pos) in [
        (" is not ", " is "),
        (" are not ", " are "),
        (" does not ", " "),
        (" has not ", " has "),
    ] {
        if let Some(i) = lower.find(neg) {
            let positive = format!("{}{pos}{}", &t[..i], &t[i + neg.len()..]);
            return Ok(CauseExpr::Not(Box::new(leaf(&positive)?)));
        }
    }
    let phrase = normalize_space(strip_article(t));
    let (variable, value) = variable_value(&phrase, &[" is equal to ", " equals ", " is "]);
    Ok(CauseExpr::Leaf(CausePhrase {
        text: phrase,
        variable,
        value,
    }))
}

fn variable_value(phrase: &str, ops: &[&str]) -> (Option<String>, Option<String>) {
    let lower = phrase.to_lowercase();
    for op in ops {
        if let Some(i) = lower.rfind(op) {
            let var = strip_article(phrase[..i].trim()).to_string();
            let val = phrase[i + op.len()..].trim().to_string();
            if !var.is_empty() && !val.is_empty() && !val.contains(' ') {
                return (Some(var), Some(val));
            }
        }
    }
    (None, None)
}

fn parse_effects(text: &str) -> Result<Vec<EffectPhrase>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("empty effect".into());
    }
    let mut clauses: Vec<String> = Vec::new();
    let mut prefix = String::new();
    for part in split_word(text, "and") {
        let part = part.trim();
        let lower = part.to_lowercase();
        match obligation_at(&lower) {
            Some(i) => {
                let modal_end = i + lower[i..].find(' ').unwrap_or(lower.len() - i);
                prefix = part[..modal_end].to_string();
                clauses.push(part.to_string());
            }
            None if !prefix.is_empty() => clauses.push(format!("{prefix} {part}")),
            None => return Err("effect has no obligation (`shall`/`must`)".into()),
        }
    }
    Ok(clauses.iter().map(|c| effect(c)).collect())
}

fn effect(clause: &str) -> EffectPhrase {
    static SET: OnceLock<Regex> = OnceLock::new();
    static BE_SET: OnceLock<Regex> = OnceLock::new();
    let text = normalize_space(strip_article(clause));
    let lower = text.to_lowercase();
    let negated = lower.contains("shall not ") || lower.contains("must not ");
    // Polarity is carried by the flag; the phrase names the positive effect.
    let text = if negated {
        let i = lower.find("shall not ").or_else(|| lower.find("must not ")).unwrap();
        let modal = if lower[i..].starts_with("shall") { 5 } else { 4 };
        format!("{}{}", &text[..i + modal], &text[i + modal + 4..])
    } else {
        text
    };
    let set = SET.get_or_init(|| Regex::new(r"(?i)\b(?:shall|must) (?:not )?set (?:the )?(.+?) to (\S+)$").unwrap());
    let be_set = BE_SET.get_or_init(|| Regex::new(r"(?i)^(.+?) (?:shall|must) (?:not )?be set to (\S+)$").unwrap());
    let (variable, value) = match set.captures(&text).or_else(|| be_set.captures(&text)) {
        Some(c) => (Some(c[1].to_string()), Some(c[2].to_string())),
        None => (None, None),
    };
    EffectPhrase {
        text,
        variable,
        value,
        negated,
    }
}
