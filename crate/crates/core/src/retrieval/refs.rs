//! Source-record fetching and the sufficiency check.

use std::collections::BTreeSet;

use serde::Serialize;
use serde_json::Value;
use tracing::{debug, warn};

use super::path::{render_paths, Path};
use crate::graph::{LifeGraph, MediaRef};
use crate::media::MediaStore;
use crate::model::{ChatModel, ChatTurn, MediaPayload};
use crate::prompts;
use crate::text::extract_json;

/// A resolved source record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reference {
    pub media_ref: MediaRef,
    pub mime: String,
    /// Inline content for text records; images are only attached to prompts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip)]
    pub payload: MediaPayload,
}

impl Reference {
    pub fn media_id(&self) -> &str {
        &self.media_ref.media_id
    }

    fn describe(&self) -> String {
        let date = self.media_ref.date.map_or_else(String::new, |d| format!(" ({d})"));
        match &self.text {
            Some(t) => format!("- {}{}: {}", self.media_id(), date, t.trim()),
            None => format!("- {}{} [{}]", self.media_id(), date, self.mime),
        }
    }
}

pub fn render_refs(refs: &[Reference]) -> String {
    if refs.is_empty() {
        return "(none)".to_string();
    }
    refs.iter().map(Reference::describe).collect::<Vec<_>>().join("\n")
}

/// Media refs reachable from `paths`, most recently added path first, each
/// media id once.
pub fn available_refs<'g>(graph: &'g LifeGraph, paths: &[Path]) -> Vec<&'g MediaRef> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for p in paths.iter().rev() {
        for r in p.source_refs(graph) {
            if seen.insert(r.media_id.as_str()) {
                out.push(r);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FetchOutcome {
    pub added: Vec<String>,
    pub ignored: Vec<String>,
    pub diagnostics: Vec<String>,
}

fn requested_ids(text: &str, available: &[&MediaRef]) -> Vec<String> {
    let Some(json) = extract_json(text) else {
        return Vec::new();
    };
    if json.get("need_references").and_then(Value::as_bool) == Some(false) {
        return Vec::new();
    }
    let list = json
        .get("media_ids")
        .or_else(|| json.get("selected"))
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    list.iter()
        .filter_map(|v| match v {
            Value::String(s) => Some(s.trim().to_string()),
            // A bare number indexes the numbered availability list.
            Value::Number(n) => n
                .as_u64()
                .and_then(|n| available.get((n as usize).checked_sub(1)?))
                .map(|r| r.media_id.clone()),
            _ => None,
        })
        .collect()
}

/// Asks the model which source records it needs and appends the resolvable
/// ones to `refs`, in availability order, up to `max_refs` in total.
/// Ids that are not attached to any of `paths` are ignored.
pub fn fetch_references(
    model: &dyn ChatModel,
    query: &str,
    graph: &LifeGraph,
    paths: &[Path],
    store: &dyn MediaStore,
    refs: &mut Vec<Reference>,
    max_refs: usize,
) -> FetchOutcome {
    let mut outcome = FetchOutcome::default();
    let available = available_refs(graph, paths);
    if available.is_empty() || refs.len() >= max_refs {
        return outcome;
    }
    let listing = available
        .iter()
        .enumerate()
        .map(|(i, r)| match r.date {
            Some(d) => format!("[{}] {} ({d})", i + 1, r.media_id),
            None => format!("[{}] {}", i + 1, r.media_id),
        })
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = prompts::render(
        prompts::FETCH_REFERENCES,
        &[
            ("query", query),
            ("paths", &render_paths(graph, paths)),
            ("available", &listing),
        ],
    );
    let conversation = [ChatTurn::system(prompts::SYSTEM.trim_end()), ChatTurn::user(prompt)];
    let requested = match model.complete(&conversation) {
        Ok(r) => requested_ids(&r.text, &available),
        Err(e) => {
            warn!(error = %e, "reference selection failed");
            outcome.diagnostics.push(format!("model error: {e}"));
            return outcome;
        }
    };
    let requested: BTreeSet<String> = requested.into_iter().collect();
    let on_paths: BTreeSet<&str> = available.iter().map(|r| r.media_id.as_str()).collect();
    outcome.ignored = requested
        .iter()
        .filter(|id| !on_paths.contains(id.as_str()))
        .cloned()
        .collect();
    for r in available.iter().filter(|r| requested.contains(&r.media_id)) {
        if refs.len() >= max_refs {
            break;
        }
        if refs.iter().any(|x| x.media_ref.media_id == r.media_id) {
            continue;
        }
        match store.fetch(&r.media_id) {
            Ok(payload) => {
                let text = payload
                    .is_text()
                    .then(|| String::from_utf8_lossy(&payload.data).into_owned());
                refs.push(Reference {
                    media_ref: (*r).clone(),
                    mime: payload.mime.clone(),
                    text,
                    payload,
                });
                outcome.added.push(r.media_id.clone());
            }
            Err(e) => {
                debug!(media_id = %r.media_id, error = %e, "reference unresolvable");
                outcome.diagnostics.push(format!("{}: {e}", r.media_id));
            }
        }
    }
    outcome
}

/// Decides a model verdict from its last non-empty line.
pub fn parse_verdict(text: &str, positive: &str, negative: &str) -> Option<bool> {
    let last = text.lines().rev().map(str::trim).find(|l| !l.is_empty())?;
    let upper = last.to_uppercase();
    // The negative word contains the positive one, so test it first.
    if upper.contains(negative) {
        Some(false)
    } else if upper.contains(positive) {
        Some(true)
    } else {
        None
    }
}

/// True iff the model judges the context sufficient. Errors and unclear
/// replies count as insufficient.
pub fn reasoning_check(
    model: &dyn ChatModel,
    query: &str,
    graph: &LifeGraph,
    paths: &[Path],
    refs: &[Reference],
    with_media: bool,
) -> bool {
    let prompt = prompts::render(
        prompts::REASONING_CHECK,
        &[
            ("query", query),
            ("paths", &render_paths(graph, paths)),
            ("refs", &render_refs(refs)),
        ],
    );
    let user = if with_media && !refs.is_empty() {
        ChatTurn::user_with_media(prompt, refs.iter().map(|r| r.payload.clone()).collect())
    } else {
        ChatTurn::user(prompt)
    };
    let conversation = [ChatTurn::system(prompts::SYSTEM.trim_end()), user];
    match model.complete(&conversation) {
        Ok(r) => parse_verdict(&r.text, "SUFFICIENT", "INSUFFICIENT").unwrap_or(false),
        Err(e) => {
            warn!(error = %e, "reasoning check failed; continuing");
            false
        }
    }
}
