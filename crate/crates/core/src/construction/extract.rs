//! Two-turn conversational extraction: turn one lists candidate entities
//! restricted to the closed schema, turn two writes triples whose endpoints
//! must come from those candidates (or from pre-existing anchors).

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use serde_json::Value;
use tracing::{debug, warn};

use crate::graph::{normalize_label, EntityKind};
use crate::model::{ChatModel, ChatTurn, MediaPayload, ModelError};
use crate::prompts;
use crate::text::extract_json;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Candidate {
    pub name: String,
    pub kind: EntityKind,
}

impl Candidate {
    pub fn new(name: impl Into<String>, kind: EntityKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    fn key(&self) -> (EntityKind, String) {
        (self.kind, normalize_label(&self.name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TripleDraft {
    pub subject: Candidate,
    pub relation: String,
    pub object: Candidate,
    pub attrs: BTreeMap<String, Vec<String>>,
    /// Cited media ids; all belong to the conversation's source data.
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub turn: u8,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Scaffold,
    History,
}

impl Step {
    fn as_str(self) -> &'static str {
        match self {
            Step::Scaffold => "scaffold",
            Step::History => "history",
        }
    }
}

/// Everything one extraction conversation needs.
#[derive(Debug, Clone)]
pub struct ExtractionInput {
    pub step: Step,
    /// Serialized graph given as background.
    pub context: String,
    /// Textual description of the source data.
    pub source: String,
    /// Media ids drafts may cite.
    pub media_ids: Vec<String>,
    /// Attached payloads (may be a subset of `media_ids`).
    pub media: Vec<MediaPayload>,
    /// Entities that are valid endpoints without being listed in turn one.
    pub anchors: Vec<Candidate>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ExtractionOutcome {
    pub candidates: Vec<Candidate>,
    pub drafts: Vec<TripleDraft>,
    pub rejections: Vec<Rejection>,
    /// Number of triples the model proposed in turn two.
    pub proposed: usize,
    /// Parse failures and similar non-fatal problems.
    pub diagnostics: Vec<String>,
}

fn reject(out: &mut ExtractionOutcome, turn: u8, reason: String) {
    warn!(turn, %reason, "extraction rejected");
    out.rejections.push(Rejection { turn, reason });
}

fn value_to_strings(v: &Value) -> Vec<String> {
    match v {
        Value::Null => Vec::new(),
        Value::String(s) => vec![s.clone()],
        Value::Array(items) => items.iter().flat_map(value_to_strings).collect(),
        other => vec![other.to_string()],
    }
}

fn str_field<'a>(obj: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| obj.get(*k).and_then(Value::as_str))
}

/// Parses turn one into schema-valid candidates.
fn parse_candidates(text: &str, out: &mut ExtractionOutcome) -> Option<Vec<Candidate>> {
    let json = extract_json(text)?;
    let list = match &json {
        Value::Array(a) => a.clone(),
        Value::Object(_) => json.get("entities")?.as_array()?.clone(),
        _ => return None,
    };
    let mut seen = BTreeSet::new();
    let mut candidates = Vec::new();
    for item in &list {
        let Some(name) = str_field(item, &["name", "label", "entity"]).map(str::trim) else {
            reject(out, 1, format!("entity without a name: {item}"));
            continue;
        };
        let kind_text = str_field(item, &["type", "kind"]).unwrap_or("");
        let kind: EntityKind = match kind_text.parse() {
            Ok(k) => k,
            Err(_) => {
                reject(
                    out,
                    1,
                    format!("entity {name:?} has type {kind_text:?} outside the schema"),
                );
                continue;
            }
        };
        if normalize_label(name).is_empty() {
            reject(out, 1, "entity with empty name".into());
            continue;
        }
        if kind == EntityKind::Date && chrono::NaiveDate::parse_from_str(name, "%Y-%m-%d").is_err() {
            reject(out, 1, format!("date entity {name:?} is not YYYY-MM-DD"));
            continue;
        }
        let c = Candidate::new(name, kind);
        if seen.insert(c.key()) {
            candidates.push(c);
        }
    }
    Some(candidates)
}

fn resolve_endpoint(allowed: &[Candidate], name: &str, kind_hint: Option<&str>) -> Result<Candidate, String> {
    let norm = normalize_label(name);
    let matches: Vec<&Candidate> = allowed.iter().filter(|c| normalize_label(&c.name) == norm).collect();
    if matches.is_empty() {
        return Err(format!("entity {name:?} is not a candidate"));
    }
    match kind_hint.filter(|k| !k.trim().is_empty()) {
        None => Ok(matches[0].clone()),
        Some(hint) => {
            let kind: EntityKind = hint
                .parse()
                .map_err(|_| format!("entity {name:?} has type {hint:?} outside the schema"))?;
            matches
                .into_iter()
                .find(|c| c.kind == kind)
                .cloned()
                .ok_or_else(|| format!("entity {name:?} is not a candidate of type {kind}"))
        }
    }
}

fn parse_drafts(text: &str, allowed: &[Candidate], media_ids: &[String], out: &mut ExtractionOutcome) -> bool {
    let Some(json) = extract_json(text) else {
        return false;
    };
    let list = match &json {
        Value::Array(a) => a.clone(),
        Value::Object(_) => match json.get("triples").and_then(Value::as_array) {
            Some(a) => a.clone(),
            None => return false,
        },
        _ => return false,
    };
    out.proposed = list.len();
    let valid_media: BTreeSet<&str> = media_ids.iter().map(String::as_str).collect();
    for item in &list {
        let (Some(s), Some(r), Some(o)) = (
            str_field(item, &["subject", "head"]),
            str_field(item, &["relation", "predicate"]),
            str_field(item, &["object", "tail"]),
        ) else {
            reject(out, 2, format!("incomplete triple: {item}"));
            continue;
        };
        if r.trim().is_empty() {
            reject(out, 2, format!("empty relation in ({s}, ?, {o})"));
            continue;
        }
        let subject = match resolve_endpoint(allowed, s, str_field(item, &["subject_type"])) {
            Ok(c) => c,
            Err(reason) => {
                reject(out, 2, format!("({s}, {r}, {o}): {reason}"));
                continue;
            }
        };
        let object = match resolve_endpoint(allowed, o, str_field(item, &["object_type"])) {
            Ok(c) => c,
            Err(reason) => {
                reject(out, 2, format!("({s}, {r}, {o}): {reason}"));
                continue;
            }
        };
        if subject.key() == object.key() {
            reject(
                out,
                2,
                format!("({s}, {r}, {o}): subject and object are the same entity"),
            );
            continue;
        }
        let sources = item
            .get("sources")
            .or_else(|| item.get("source_ids"))
            .map(value_to_strings)
            .unwrap_or_default();
        if let Some(bad) = sources.iter().find(|id| !valid_media.contains(id.as_str())) {
            reject(out, 2, format!("({s}, {r}, {o}): cites unknown media id {bad:?}"));
            continue;
        }
        let mut attrs = BTreeMap::new();
        if let Some(Value::Object(map)) = item.get("attributes").or_else(|| item.get("attrs")) {
            for (k, v) in map {
                let vals: Vec<String> = value_to_strings(v)
                    .into_iter()
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                if !k.trim().is_empty() && !vals.is_empty() {
                    attrs.insert(k.trim().to_string(), vals);
                }
            }
        }
        out.drafts.push(TripleDraft {
            subject,
            relation: r.trim().to_string(),
            object,
            attrs,
            sources,
        });
    }
    true
}

fn render_candidates(candidates: &[Candidate]) -> String {
    candidates
        .iter()
        .map(|c| format!("- {} ({})", c.name, c.kind))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Runs both turns. Model transport errors are returned; malformed model
/// output yields an empty outcome with a diagnostic.
pub fn two_turn_extract(model: &dyn ChatModel, input: &ExtractionInput) -> Result<ExtractionOutcome, ModelError> {
    let mut out = ExtractionOutcome::default();
    let turn1 = prompts::render(
        prompts::EXTRACT_ENTITIES,
        &[
            ("step", input.step.as_str()),
            ("context", &input.context),
            ("source", &input.source),
        ],
    );
    let mut conversation = vec![
        ChatTurn::system(prompts::SYSTEM.trim_end()),
        ChatTurn::user_with_media(turn1, input.media.clone()),
    ];
    let reply1 = model.complete(&conversation)?;
    let Some(candidates) = parse_candidates(&reply1.text, &mut out) else {
        out.diagnostics
            .push("turn 1: no parseable entity list in model output".into());
        return Ok(out);
    };
    out.candidates = candidates;

    let mut allowed = out.candidates.clone();
    let listed: BTreeSet<_> = allowed.iter().map(Candidate::key).collect();
    allowed.extend(input.anchors.iter().filter(|a| !listed.contains(&a.key())).cloned());

    let turn2 = prompts::render(
        prompts::EXTRACT_TRIPLES,
        &[
            ("step", input.step.as_str()),
            ("candidates", &render_candidates(&allowed)),
            ("media_ids", &input.media_ids.join(", ")),
        ],
    );
    conversation.push(ChatTurn::assistant(reply1.text));
    conversation.push(ChatTurn::user(turn2));
    let reply2 = model.complete(&conversation)?;
    if !parse_drafts(&reply2.text, &allowed, &input.media_ids, &mut out) {
        out.diagnostics
            .push("turn 2: no parseable triple list in model output".into());
        out.drafts.clear();
    }
    debug!(
        candidates = out.candidates.len(),
        drafts = out.drafts.len(),
        rejected = out.rejections.len(),
        "two-turn extraction finished"
    );
    Ok(out)
}
