//! Random graph edit sequences checked against a shadow model, and a
//! bin-packing checker.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use lifegraph::construction::{ExtractionBatch, PackingConfig};
use lifegraph::graph::{AttrValue, EdgeAttrs, EntityKind, LifeGraph, MediaRef, NodeAttrs, NodeId};
use lifegraph::vaccount::HistoryEvent;
use rand::Rng;

const KINDS: [EntityKind; 5] = [
    EntityKind::PersonAnimal,
    EntityKind::Event,
    EntityKind::Location,
    EntityKind::Activity,
    EntityKind::Object,
];

#[derive(Debug, Clone)]
pub enum Op {
    /// Entity `name` (its kind follows from the index), spelled one of
    /// three equivalent ways.
    Node {
        name: usize,
        spelling: u8,
        media: usize,
    },
    Date {
        day: u32,
        media: usize,
    },
    /// Endpoints index the nodes added so far; `attr` points at another one.
    Edge {
        a: usize,
        rel: u8,
        b: usize,
        attr: Option<usize>,
        media: usize,
    },
    /// An edge to a node that does not exist.
    Dangling {
        a: usize,
        media: usize,
    },
}

pub fn random_ops(rng: &mut impl Rng, len: usize, max_nodes: usize) -> Vec<Op> {
    (0..len)
        .map(|_| match rng.gen_range(0..10) {
            0..=3 => Op::Node {
                name: rng.gen_range(0..max_nodes.saturating_sub(30).max(1)),
                spelling: rng.gen_range(0..3),
                media: rng.gen_range(0..20),
            },
            4 => Op::Date {
                day: rng.gen_range(1..=28),
                media: rng.gen_range(0..20),
            },
            5..=8 => Op::Edge {
                a: rng.gen(),
                rel: rng.gen_range(0..4),
                b: rng.gen(),
                attr: rng.gen_bool(0.3).then(|| rng.gen()),
                media: rng.gen_range(0..20),
            },
            _ => Op::Dangling {
                a: rng.gen(),
                media: rng.gen_range(0..20),
            },
        })
        .collect()
}

fn spell(name: usize, spelling: u8) -> String {
    match spelling {
        0 => format!("Entity {name}"),
        1 => format!("  entity   {name} "),
        _ => format!("ENTITY {name}"),
    }
}

fn media(i: usize) -> MediaRef {
    MediaRef::new(format!("img_{i:02}.jpg"), None)
}

fn persist(g: &LifeGraph) -> Vec<u8> {
    let mut buf = Vec::new();
    g.persist(&mut buf).unwrap();
    buf
}

/// Applies `ops`, checking after each step that the graph agrees with a
/// plain map-based model; finally checks the persistence round trip.
pub fn check_ops(ops: &[Op]) -> Result<(), String> {
    let mut g = LifeGraph::new("owner");
    // (kind, normalized label) -> (id, refs)
    let mut nodes: BTreeMap<(EntityKind, String), (NodeId, BTreeSet<MediaRef>)> = BTreeMap::new();
    let mut order: Vec<NodeId> = Vec::new();
    // (subject, relation, object, attr target) -> refs
    let mut edges: BTreeMap<(NodeId, String, NodeId, Option<NodeId>), BTreeSet<MediaRef>> = BTreeMap::new();

    for (step, op) in ops.iter().enumerate() {
        let fail = |m: String| format!("step {step} {op:?}: {m}");
        match *op {
            Op::Node {
                name,
                spelling,
                media: m,
            } => {
                let kind = KINDS[name % KINDS.len()];
                let key = (kind, format!("entity {name}"));
                let id = g
                    .add_node(kind, &spell(name, spelling), NodeAttrs::new(), [media(m)])
                    .map_err(|e| fail(e.to_string()))?;
                if g.find_node(kind, &key.1).map(|n| &n.id) != Some(&id) {
                    return Err(fail("label lookup does not find the node".into()));
                }
                match nodes.get_mut(&key) {
                    Some((known, refs)) => {
                        if *known != id {
                            return Err(fail(format!("duplicate spelling got a new id {id}")));
                        }
                        refs.insert(media(m));
                    }
                    None => {
                        order.push(id.clone());
                        nodes.insert(key, (id, BTreeSet::from([media(m)])));
                    }
                }
            }
            Op::Date { day, media: m } => {
                let date = NaiveDate::from_ymd_opt(2024, 2, day).unwrap().to_string();
                let id = g
                    .add_node(EntityKind::Date, &date, NodeAttrs::new(), [media(m)])
                    .map_err(|e| fail(e.to_string()))?;
                let entry = nodes.entry((EntityKind::Date, date)).or_insert_with(|| {
                    order.push(id.clone());
                    (id.clone(), BTreeSet::new())
                });
                if entry.0 != id {
                    return Err(fail("date node id changed".into()));
                }
                entry.1.insert(media(m));
            }
            Op::Edge {
                a,
                rel,
                b,
                attr,
                media: m,
            } => {
                if order.len() < 2 {
                    continue;
                }
                let (s, o) = (order[a % order.len()].clone(), order[b % order.len()].clone());
                let relation = format!("rel{rel}");
                let target = attr.map(|i| order[i % order.len()].clone());
                let mut attrs = EdgeAttrs::new();
                if let Some(t) = &target {
                    attrs.insert("with".into(), vec![AttrValue::entity(t.clone())]);
                }
                let res = g.add_edge(&s, &relation, &o, attrs, [media(m)]);
                if s == o {
                    if res.is_ok() {
                        return Err(fail("self loop accepted".into()));
                    }
                } else {
                    let eid = res.map_err(|e| fail(e.to_string()))?;
                    let e = g.edge(&eid).ok_or_else(|| fail("edge missing after insert".into()))?;
                    if e.subject != s || e.object != o || g.node(&s).is_none() || g.node(&o).is_none() {
                        return Err(fail("edge endpoints do not resolve".into()));
                    }
                    edges.entry((s, relation, o, target)).or_default().insert(media(m));
                }
            }
            Op::Dangling { a, media: m } => {
                if order.is_empty() {
                    continue;
                }
                let s = order[a % order.len()].clone();
                let ghost = NodeId("n_missing".into());
                let before = (g.node_count(), g.edge_count());
                if g.add_edge(&s, "rel0", &ghost, EdgeAttrs::new(), [media(m)]).is_ok() {
                    return Err(fail("dangling edge accepted".into()));
                }
                if (g.node_count(), g.edge_count()) != before {
                    return Err(fail("failed insert changed the graph".into()));
                }
            }
        }
        // Elements are never removed or relabelled, so the touched element is
        // checked above and the full scan runs periodically.
        if step % 25 == 24 || step + 1 == ops.len() {
            g.check_invariants().map_err(|e| fail(e.to_string()))?;
        }
        if g.node_count() != nodes.len() || g.edge_count() != edges.len() {
            return Err(fail(format!(
                "counts {}/{} vs model {}/{}",
                g.node_count(),
                g.edge_count(),
                nodes.len(),
                edges.len()
            )));
        }
    }
    for (id, refs) in nodes.values() {
        let n = g.node(id).ok_or(format!("node {id} missing"))?;
        if &n.source_refs != refs {
            return Err(format!("node {id}: refs {:?} vs model {refs:?}", n.source_refs));
        }
    }
    let degree_sum: usize = order.iter().map(|id| g.degree(id)).sum();
    if degree_sum != 2 * edges.len() {
        return Err(format!("degree sum {degree_sum} for {} edges", edges.len()));
    }
    let edge_refs: BTreeSet<Vec<&MediaRef>> = g.edges().map(|e| e.source_refs.iter().collect()).collect();
    let model_refs: BTreeSet<Vec<&MediaRef>> = edges.values().map(|r| r.iter().collect()).collect();
    if edge_refs != model_refs {
        return Err("edge refs differ from model".into());
    }
    let bytes = persist(&g);
    let back = LifeGraph::load(&bytes[..]).map_err(|e| format!("reload: {e}"))?;
    if back != g {
        return Err("round trip changed the graph".into());
    }
    if persist(&back) != bytes {
        return Err("round trip changed the serialization".into());
    }
    Ok(())
}

pub fn random_history(rng: &mut impl Rng, n: usize) -> Vec<HistoryEvent> {
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    (0..n)
        .map(|i| HistoryEvent {
            date: start + chrono::Days::new(i as u64 * 3),
            description: "x".repeat(rng.gen_range(0..3000)),
            images: (0..rng.gen_range(0..12)).map(|j| format!("e{i}_{j}.jpg")).collect(),
        })
        .collect()
}

/// Every batch fits (or is a flagged oversized singleton), the events come
/// back in order exactly once, and no batch could have taken the next event.
pub fn check_packing(history: &[HistoryEvent], cfg: &PackingConfig, batches: &[ExtractionBatch]) -> Result<(), String> {
    let weight =
        |e: &HistoryEvent| e.images.len() as u64 * cfg.image_cost + (e.description.chars().count() as u64).div_ceil(4);
    let flat: Vec<&HistoryEvent> = batches.iter().flat_map(|b| &b.events).collect();
    if flat.len() != history.len() || flat.iter().zip(history).any(|(a, b)| *a != b) {
        return Err("events lost, duplicated or reordered".into());
    }
    for (i, b) in batches.iter().enumerate() {
        let w: u64 = b.events.iter().map(weight).sum();
        if w != b.weight {
            return Err(format!("batch {i}: weight {} vs {w}", b.weight));
        }
        if b.events.is_empty() {
            return Err(format!("batch {i} is empty"));
        }
        if w > cfg.capacity && !(b.over_capacity && b.events.len() == 1) {
            return Err(format!("batch {i} over capacity ({w} > {})", cfg.capacity));
        }
        if b.over_capacity != (w > cfg.capacity) {
            return Err(format!("batch {i}: over_capacity flag is wrong"));
        }
        if let Some(next) = batches.get(i + 1) {
            let first = weight(&next.events[0]);
            if !b.over_capacity && !next.over_capacity && w + first <= cfg.capacity {
                return Err(format!("batch {i} had room for the next event"));
            }
        }
    }
    Ok(())
}
