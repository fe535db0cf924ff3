//! Seed selection: a lexical stage ranks every node by token overlap with
//! the query, then the model picks up to `k` of the top `3k`.

use std::collections::BTreeSet;

use serde_json::Value;
use tracing::debug;

use super::RetrievalError;
use crate::graph::{LifeGraph, NodeId};
use crate::model::{ChatModel, ChatTurn};
use crate::prompts;
use crate::text::{content_tokens, extract_json};

/// Weight of a query token found in a node label.
pub const LABEL_TOKEN_WEIGHT: u32 = 3;
/// Weight of a query token found only in a node attribute value.
pub const ATTR_TOKEN_WEIGHT: u32 = 1;
/// Bonus when every label token occurs in the query.
pub const FULL_LABEL_BONUS: u32 = 5;

/// Lexical relevance of one node to the query tokens.
pub fn lexical_score(graph: &LifeGraph, id: &NodeId, query_tokens: &BTreeSet<String>) -> u32 {
    let Some(node) = graph.node(id) else {
        return 0;
    };
    let label: BTreeSet<String> = content_tokens(&node.label).into_iter().collect();
    let attrs: BTreeSet<String> = node
        .attrs
        .values()
        .flat_map(|v| content_tokens(v))
        .filter(|t| !label.contains(t))
        .collect();
    let label_hits = label.intersection(query_tokens).count() as u32;
    let attr_hits = attrs.intersection(query_tokens).count() as u32;
    let full = !label.is_empty() && label.is_subset(query_tokens);
    LABEL_TOKEN_WEIGHT * label_hits + ATTR_TOKEN_WEIGHT * attr_hits + if full { FULL_LABEL_BONUS } else { 0 }
}

/// Every node with its lexical score, ordered by (score desc, id asc).
pub fn lexical_ranking(query: &str, graph: &LifeGraph) -> Vec<(NodeId, u32)> {
    let tokens: BTreeSet<String> = content_tokens(query).into_iter().collect();
    let mut ranked: Vec<(NodeId, u32)> = graph
        .nodes()
        .map(|n| (n.id.clone(), lexical_score(graph, &n.id, &tokens)))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

fn parse_selection(text: &str, shortlist: &[NodeId], graph: &LifeGraph) -> Vec<NodeId> {
    let Some(json) = extract_json(text) else {
        return Vec::new();
    };
    let items = match &json {
        Value::Array(a) => a.clone(),
        Value::Object(_) => json
            .get("selected")
            .or_else(|| json.get("entities"))
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default(),
        _ => Vec::new(),
    };
    let by_number = |n: u64| shortlist.get((n as usize).checked_sub(1)?).cloned();
    let by_label = |s: &str| {
        let norm = crate::graph::normalize_label(s);
        shortlist
            .iter()
            .find(|id| graph.node(id).is_some_and(|n| n.normalized_label() == norm))
            .cloned()
    };
    let mut out = Vec::new();
    for item in items {
        let picked = match &item {
            Value::Number(n) => n.as_u64().and_then(by_number),
            Value::String(s) => s.trim().parse::<u64>().ok().and_then(by_number).or_else(|| by_label(s)),
            _ => None,
        };
        if let Some(id) = picked {
            if !out.contains(&id) {
                out.push(id);
            }
        }
    }
    out
}

/// Up to `k` seed nodes. With `model = None` the lexical stage decides alone.
pub fn top_entities(
    query: &str,
    graph: &LifeGraph,
    k: usize,
    model: Option<&dyn ChatModel>,
) -> Result<Vec<NodeId>, RetrievalError> {
    if graph.is_empty() {
        return Err(RetrievalError::EmptyGraph);
    }
    let ranking = lexical_ranking(query, graph);
    let lexical_top: Vec<NodeId> = ranking.iter().take(k).map(|(id, _)| id.clone()).collect();
    let Some(model) = model else {
        return Ok(lexical_top);
    };
    let shortlist: Vec<NodeId> = ranking.iter().take(3 * k).map(|(id, _)| id.clone()).collect();
    if shortlist.len() <= k {
        return Ok(shortlist);
    }
    let listing = shortlist
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let n = graph.node(id).expect("ranked node exists");
            format!("[{}] {} ({})", i + 1, n.label, n.kind)
        })
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = prompts::render(
        prompts::SELECT_ENTITIES,
        &[("query", query), ("k", &k.to_string()), ("candidates", &listing)],
    );
    let conversation = [ChatTurn::system(prompts::SYSTEM.trim_end()), ChatTurn::user(prompt)];
    let picked = match model.complete(&conversation) {
        Ok(r) => parse_selection(&r.text, &shortlist, graph),
        Err(e) => {
            debug!(error = %e, "seed selection failed; using lexical ranking");
            Vec::new()
        }
    };
    if picked.is_empty() {
        return Ok(lexical_top);
    }
    Ok(picked.into_iter().take(k).collect())
}
