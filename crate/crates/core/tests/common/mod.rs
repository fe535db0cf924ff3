//! Test support: random graphs, a deterministic prune-scoring mock and
//! independent oracles. Shared with the acceptance harness.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

pub mod fixture;
pub mod ops;

use lifegraph::graph::{Direction, EdgeAttrs, EntityKind, LifeGraph, MediaRef, NodeAttrs, NodeId};
use lifegraph::model::{ChatTurn, Matcher, Responder, Role, ScriptedMock};
use lifegraph::retrieval::{Path, Step};
use lifegraph::text::content_tokens;
use rand::Rng;

const KINDS: [EntityKind; 5] = [
    EntityKind::PersonAnimal,
    EntityKind::Event,
    EntityKind::Location,
    EntityKind::Activity,
    EntityKind::Object,
];

/// Random graph with labels `N0..N{n-1}`, up to three relation names and
/// independent edge probability `p` per ordered pair and relation. Every
/// node and edge carries one media ref.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> LifeGraph {
    let mut g = LifeGraph::new("owner");
    let mut ids = Vec::new();
    for i in 0..n {
        let kind = KINDS[rng.gen_range(0..KINDS.len())];
        let r = MediaRef::new(format!("m{i}.txt"), None);
        ids.push(g.add_node(kind, &format!("N{i}"), NodeAttrs::new(), [r]).unwrap());
    }
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            for rel in ["r0", "r1", "r2"] {
                if rng.gen_bool(p / 3.0) {
                    let r = MediaRef::new(format!("e{a}-{b}-{rel}.txt"), None);
                    g.add_edge(&ids[a], rel, &ids[b], EdgeAttrs::new(), [r]).unwrap();
                }
            }
        }
    }
    g
}

/// Deterministic, tie-heavy relevance of a node label `N<i>`.
pub fn label_score(label: &str) -> f64 {
    let i: u64 = label.trim_start_matches('N').parse().unwrap_or(0);
    ((i * 31) % 7) as f64 / 7.0
}

fn last_user(conversation: &[ChatTurn]) -> &str {
    conversation
        .iter()
        .rev()
        .find(|t| t.role == Role::User)
        .map_or("", |t| t.text.as_str())
}

/// Node label of a rendered candidate `Tail -[rel]-> Node (Kind)`.
pub fn candidate_label(line: &str) -> &str {
    let out = line.rfind("]-> ").map(|i| i + 4);
    let inc = line.rfind("]- ").map(|i| i + 3);
    let start = out.max(inc).unwrap_or(0);
    let rest = &line[start..];
    rest.rfind(" (").map_or(rest, |i| &rest[..i])
}

/// Prune replies scoring each numbered candidate `scale * label_score(label)`.
pub fn prune_reply(conversation: &[ChatTurn], scale: f64) -> String {
    let text = last_user(conversation);
    let body = text.split("Candidate relation-entity steps:").nth(1).unwrap_or("");
    let mut scores = serde_json::Map::new();
    for line in body.lines() {
        let Some(rest) = line.strip_prefix('[') else { continue };
        let Some((n, cand)) = rest.split_once("] ") else {
            continue;
        };
        let s = scale * label_score(candidate_label(cand));
        scores.insert(n.to_string(), serde_json::json!(s));
    }
    format!("```json\n{}\n```", serde_json::json!({ "scores": scores }))
}

/// Mock with label-based prune scores, no reference requests and a reasoning
/// check that never finds the context sufficient.
pub fn scoring_mock(scale: f64) -> ScriptedMock {
    ScriptedMock::new()
        .rule(
            Matcher::contains("TASK: prune"),
            Responder::generate(move |c| prune_reply(c, scale)),
        )
        .when("TASK: fetch-references", r#"{"need_references": false}"#)
        .when("TASK: reasoning-check", "not yet\nINSUFFICIENT")
        .with_default("ok")
}

/// Neighbours computed straight from the edge list.
pub fn brute_neighbors(g: &LifeGraph, node: &NodeId) -> Vec<(Step, NodeId)> {
    let mut out = Vec::new();
    for e in g.edges() {
        if &e.subject == node {
            out.push((
                Step {
                    edge: e.id.clone(),
                    node: e.object.clone(),
                    direction: Direction::Outgoing,
                },
                e.object.clone(),
            ));
        }
        if &e.object == node {
            out.push((
                Step {
                    edge: e.id.clone(),
                    node: e.subject.clone(),
                    direction: Direction::Incoming,
                },
                e.subject.clone(),
            ));
        }
    }
    out
}

/// All simple paths of 1..=max_len edges starting at `start`.
pub fn all_simple_paths(g: &LifeGraph, start: &NodeId, max_len: usize) -> Vec<Path> {
    let mut out = Vec::new();
    let mut stack = vec![Path::seed(start.clone())];
    while let Some(p) = stack.pop() {
        if p.len() == max_len {
            continue;
        }
        for (step, next) in brute_neighbors(g, p.tail()) {
            if p.nodes().any(|n| n == &next) {
                continue;
            }
            let q = p.extended(step);
            out.push(q.clone());
            stack.push(q);
        }
    }
    out
}

/// Lexical seed score recomputed from its definition.
pub fn brute_lexical(query: &str, g: &LifeGraph) -> Vec<(NodeId, u32)> {
    let q: BTreeSet<String> = content_tokens(query).into_iter().collect();
    let mut scored: Vec<(NodeId, u32)> = g
        .nodes()
        .map(|n| {
            let label: BTreeSet<String> = content_tokens(&n.label).into_iter().collect();
            let mut attr = BTreeSet::new();
            for v in n.attrs.values() {
                for t in content_tokens(v) {
                    if !label.contains(&t) {
                        attr.insert(t);
                    }
                }
            }
            let lh = label.iter().filter(|t| q.contains(*t)).count() as u32;
            let ah = attr.iter().filter(|t| q.contains(*t)).count() as u32;
            let full = !label.is_empty() && label.iter().all(|t| q.contains(t));
            (n.id.clone(), 3 * lh + ah + if full { 5 } else { 0 })
        })
        .collect();
    scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
}

/// Retained paths by exhaustive enumeration: at each depth, every simple
/// path whose prefix was kept at the previous depth competes, and the best
/// `k` under (score desc, node asc, edge asc, prefix rank asc) survive.
/// With no more than `k` contenders scores are not consulted.
pub fn oracle_paths(g: &LifeGraph, seeds: &[NodeId], d: usize, k: usize) -> Vec<Path> {
    let mut everything: Vec<Path> = Vec::new();
    for s in seeds {
        everything.extend(all_simple_paths(g, s, d));
    }
    let mut kept: Vec<Path> = seeds.iter().cloned().map(Path::seed).collect();
    let mut all = kept.clone();
    for depth in 1..=d {
        let rank: BTreeMap<&Path, usize> = kept.iter().enumerate().map(|(i, p)| (p, i)).collect();
        let mut contenders: Vec<(f64, &Path, usize)> = everything
            .iter()
            .filter(|p| p.len() == depth)
            .filter_map(|p| {
                let prefix = Path {
                    start: p.start.clone(),
                    steps: p.steps[..depth - 1].to_vec(),
                };
                let label = &g.node(p.tail()).unwrap().label;
                rank.get(&prefix).map(|&r| (label_score(label), p, r))
            })
            .collect();
        if contenders.is_empty() {
            break;
        }
        let use_scores = contenders.len() > k;
        contenders.sort_by(|a, b| {
            let by_score = if use_scores {
                b.0.partial_cmp(&a.0).unwrap()
            } else {
                std::cmp::Ordering::Equal
            };
            let (sa, sb) = (a.1.steps.last().unwrap(), b.1.steps.last().unwrap());
            by_score
                .then(sa.node.cmp(&sb.node))
                .then(sa.edge.cmp(&sb.edge))
                .then(a.2.cmp(&b.2))
        });
        kept = contenders.into_iter().take(k).map(|c| c.1.clone()).collect();
        all.extend(kept.iter().cloned());
    }
    all
}

/// Eccentricity-based diameter from Floyd–Warshall over the undirected view,
/// restricted to the largest connected component (ties: the component with
/// the smallest node id).
pub fn floyd_diameter(g: &LifeGraph) -> usize {
    let ids: Vec<&NodeId> = g.nodes().map(|n| &n.id).collect();
    let n = ids.len();
    if n == 0 {
        return 0;
    }
    let idx: BTreeMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    const INF: usize = usize::MAX / 4;
    let mut dist = vec![vec![INF; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0;
    }
    for e in g.edges() {
        let (a, b) = (idx[&e.subject], idx[&e.object]);
        dist[a][b] = 1;
        dist[b][a] = 1;
    }
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = dist[i][m] + dist[m][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }
    // Components from reachability.
    let mut comp = vec![usize::MAX; n];
    let mut sizes: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        if comp[i] != usize::MAX {
            continue;
        }
        let c = sizes.len();
        let mut size = 0;
        for j in 0..n {
            if dist[i][j] < INF {
                comp[j] = c;
                size += 1;
            }
        }
        sizes.push((size, i));
    }
    let best = (0..sizes.len())
        .max_by(|&a, &b| sizes[a].0.cmp(&sizes[b].0).then(sizes[b].1.cmp(&sizes[a].1)))
        .unwrap();
    let mut diameter = 0;
    for i in 0..n {
        for j in 0..n {
            if comp[i] == best && comp[j] == best {
                diameter = diameter.max(dist[i][j]);
            }
        }
    }
    diameter
}

/// Plain BFS distances, for spot checks.
pub fn bfs_dist(g: &LifeGraph, from: &NodeId) -> BTreeMap<NodeId, usize> {
    let mut dist = BTreeMap::new();
    dist.insert(from.clone(), 0);
    let mut q = VecDeque::from([from.clone()]);
    while let Some(u) = q.pop_front() {
        let du = dist[&u];
        for (_, v) in brute_neighbors(g, &u) {
            if !dist.contains_key(&v) {
                dist.insert(v.clone(), du + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

/// Barabási–Albert style growth: each new node links to `m` distinct
/// existing nodes picked with probability proportional to degree.
pub fn preferential_attachment(rng: &mut impl Rng, n: usize, m: usize) -> LifeGraph {
    let mut g = LifeGraph::new("owner");
    let ids: Vec<NodeId> = (0..n)
        .map(|i| {
            g.add_node(EntityKind::Object, &format!("N{i}"), NodeAttrs::new(), [])
                .unwrap()
        })
        .collect();
    // Each edge endpoint appears once per incident edge.
    let mut ends: Vec<usize> = Vec::new();
    let core = m + 1;
    for a in 0..core {
        for b in a + 1..core {
            g.add_edge(&ids[a], "link", &ids[b], EdgeAttrs::new(), []).unwrap();
            ends.extend([a, b]);
        }
    }
    for v in core..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(ends[rng.gen_range(0..ends.len())]);
        }
        for t in targets {
            g.add_edge(&ids[v], "link", &ids[t], EdgeAttrs::new(), []).unwrap();
            ends.extend([v, t]);
        }
    }
    g
}
