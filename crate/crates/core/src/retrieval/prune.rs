//! Candidate search and model-scored pruning.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;
use tracing::{debug, warn};

use super::path::{render_paths, Path, Step};
use crate::graph::{Direction, EdgeId, LifeGraph, NodeId};
use crate::model::{fan_out, ChatModel, ChatTurn};
use crate::prompts;
use crate::text::extract_json;

/// Score assigned to every candidate of a chunk whose reply could not be parsed.
pub const FALLBACK_SCORE: f64 = 0.5;

/// One (relation, entity) step extending the frontier path at index `origin`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Candidate {
    pub origin: usize,
    pub edge: EdgeId,
    pub node: NodeId,
    pub direction: Direction,
}

impl Candidate {
    pub fn step(&self) -> Step {
        Step {
            edge: self.edge.clone(),
            node: self.node.clone(),
            direction: self.direction,
        }
    }

    /// `Tail -[rel]-> Node (Kind)`
    pub fn render(&self, graph: &LifeGraph, tail: &NodeId) -> String {
        let label = |id: &NodeId| graph.node(id).map_or_else(|| id.to_string(), |n| n.label.clone());
        let rel = graph
            .edge(&self.edge)
            .map_or_else(|| self.edge.to_string(), |e| graph.render_relation(e));
        let kind = graph.node(&self.node).map_or("?", |n| n.kind.as_str());
        match self.direction {
            Direction::Outgoing => format!("{} -[{rel}]-> {} ({kind})", label(tail), label(&self.node)),
            Direction::Incoming => format!("{} <-[{rel}]- {} ({kind})", label(tail), label(&self.node)),
        }
    }
}

/// All undirected neighbours of every frontier tail, minus nodes already on
/// the path that reached that tail. Ordered by frontier index, then by edge id.
pub fn search_candidates(graph: &LifeGraph, frontier: &[Path]) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (origin, path) in frontier.iter().enumerate() {
        let Ok(neighbors) = graph.neighbors(path.tail()) else {
            continue;
        };
        for nb in neighbors {
            if path.contains(&nb.node.id) {
                continue;
            }
            out.push(Candidate {
                origin,
                edge: nb.edge.id.clone(),
                node: nb.node.id.clone(),
                direction: nb.direction,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneScore {
    pub candidate: Candidate,
    /// Raw score divided by the round maximum, in [0, 1].
    pub score: f64,
    /// 1-based position under the tie-break order.
    pub rank: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PruneOutcome {
    /// Top-k, best first.
    pub retained: Vec<PruneScore>,
    /// Every candidate, in rank order.
    pub ranking: Vec<PruneScore>,
    pub model_calls: usize,
    pub fallback_chunks: usize,
}

/// (score desc, node id asc, edge id asc, origin asc). Only the relative
/// order of scores matters, so any positive rescaling ranks identically.
pub fn rank_order(a: (&Candidate, f64), b: (&Candidate, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.node.cmp(&b.0.node))
        .then_with(|| a.0.edge.cmp(&b.0.edge))
        .then_with(|| a.0.origin.cmp(&b.0.origin))
}

/// Ranks `candidates` under the given raw scores and keeps `k`.
pub fn rank_candidates(candidates: &[Candidate], raw: &[f64], k: usize) -> (Vec<PruneScore>, Vec<PruneScore>) {
    let max = raw.iter().cloned().fold(0.0_f64, f64::max);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| rank_order((&candidates[i], raw[i]), (&candidates[j], raw[j])));
    let ranking: Vec<PruneScore> = order
        .into_iter()
        .enumerate()
        .map(|(pos, i)| PruneScore {
            candidate: candidates[i].clone(),
            score: if max > 0.0 { raw[i] / max } else { 0.0 },
            rank: pos + 1,
        })
        .collect();
    let retained = ranking.iter().take(k).cloned().collect();
    (retained, ranking)
}

fn parse_scores(text: &str, count: usize) -> Option<Vec<f64>> {
    let json = extract_json(text)?;
    let map = json.get("scores").unwrap_or(&json);
    let mut parsed: BTreeMap<usize, f64> = BTreeMap::new();
    match map {
        Value::Object(obj) => {
            for (k, v) in obj {
                let (Ok(n), Some(s)) = (k.trim().parse::<usize>(), v.as_f64()) else {
                    continue;
                };
                if (1..=count).contains(&n) && s.is_finite() && s >= 0.0 {
                    parsed.insert(n, s);
                }
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate().take(count) {
                if let Some(s) = v.as_f64().filter(|s| s.is_finite() && *s >= 0.0) {
                    parsed.insert(i + 1, s);
                }
            }
        }
        _ => {}
    }
    if parsed.is_empty() {
        return None;
    }
    Some((1..=count).map(|n| parsed.get(&n).copied().unwrap_or(0.0)).collect())
}

/// Scores candidates with the model and keeps the global top `k`.
/// Candidates are sent in chunks of `chunk`, scored concurrently up to the
/// model's parallelism. When there are no more than `k` candidates the model
/// is not consulted and all are kept.
#[allow(clippy::too_many_arguments)]
pub fn prune(
    model: &dyn ChatModel,
    query: &str,
    graph: &LifeGraph,
    frontier: &[Path],
    paths: &[Path],
    candidates: &[Candidate],
    k: usize,
    chunk: usize,
) -> PruneOutcome {
    if candidates.is_empty() {
        return PruneOutcome::default();
    }
    if candidates.len() <= k {
        let raw = vec![1.0; candidates.len()];
        let (retained, ranking) = rank_candidates(candidates, &raw, k);
        return PruneOutcome {
            retained,
            ranking,
            ..Default::default()
        };
    }
    let rendered_paths = render_paths(graph, paths);
    let chunks: Vec<&[Candidate]> = candidates.chunks(chunk.max(1)).collect();
    let results = fan_out(&chunks, model.max_parallelism(), |chunk| {
        let listing = chunk
            .iter()
            .enumerate()
            .map(|(i, c)| format!("[{}] {}", i + 1, c.render(graph, frontier[c.origin].tail())))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = prompts::render(
            prompts::PRUNE,
            &[("query", query), ("paths", &rendered_paths), ("candidates", &listing)],
        );
        let conversation = [ChatTurn::system(prompts::SYSTEM.trim_end()), ChatTurn::user(prompt)];
        match model.complete(&conversation) {
            Ok(r) => parse_scores(&r.text, chunk.len()),
            Err(e) => {
                warn!(error = %e, "prune scoring failed; using fallback scores");
                None
            }
        }
    });
    let mut raw = Vec::with_capacity(candidates.len());
    let mut fallback_chunks = 0;
    for (chunk, scores) in chunks.iter().zip(results) {
        match scores {
            Some(s) => raw.extend(s),
            None => {
                fallback_chunks += 1;
                raw.extend(std::iter::repeat_n(FALLBACK_SCORE, chunk.len()));
            }
        }
    }
    if fallback_chunks > 0 {
        debug!(fallback_chunks, "prune used fallback scores");
    }
    let (retained, ranking) = rank_candidates(candidates, &raw, k);
    PruneOutcome {
        retained,
        ranking,
        model_calls: chunks.len(),
        fallback_chunks,
    }
}
