//! Graph construction from a [`Vaccount`].
//!
//! Step one builds the social-network scaffold (one PersonAnimal node per
//! concept plus model-extracted relations). Step two packs the dated history
//! into batches and integrates each batch with a two-turn extraction, using
//! the current graph as context. Scaffold nodes are never modified during
//! step two.

mod extract;
mod packing;

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;
use tracing::{info, warn};

pub use extract::{two_turn_extract, Candidate, ExtractionInput, ExtractionOutcome, Rejection, Step, TripleDraft};
pub use packing::{pack_batches, ExtractionBatch, PackingConfig};

use crate::graph::{
    AttrValue, Direction, EdgeAttrs, EdgeId, EntityKind, GraphError, LifeGraph, MediaRef, NodeAttrs, NodeId,
};
use crate::media::MediaStore;
use crate::model::{ChatModel, MediaPayload, ModelError};
use crate::vaccount::Vaccount;

/// Relation used for the Event→Date link added when the model gives none.
pub const EVENT_DATE_RELATION: &str = "onDate";

#[derive(Debug, Error)]
pub enum ConstructionError {
    #[error("vaccount has no concepts")]
    NoConcepts,
    #[error("scaffold extraction failed: {0}")]
    Model(#[from] ModelError),
    #[error("all {proposed} scaffold triples were rejected")]
    AllTriplesRejected { proposed: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConstructionConfig {
    pub packing: PackingConfig,
    /// Character budget for the serialized graph context.
    pub context_budget: usize,
    /// Attach media payloads to extraction prompts when a store is given.
    pub attach_media: bool,
}

impl Default for ConstructionConfig {
    fn default() -> Self {
        Self {
            packing: PackingConfig::default(),
            context_budget: 4000,
            attach_media: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StageReport {
    /// `None` for the scaffold stage.
    pub batch: Option<usize>,
    pub dates: Vec<NaiveDate>,
    pub candidates: usize,
    pub proposed: usize,
    pub touched_nodes: Vec<NodeId>,
    pub touched_edges: Vec<EdgeId>,
    pub rejections: Vec<Rejection>,
    pub diagnostics: Vec<String>,
    /// Set when the whole batch was skipped.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BuildReport {
    pub scaffold: StageReport,
    pub batches: Vec<StageReport>,
}

impl BuildReport {
    pub fn rejected(&self) -> usize {
        self.scaffold.rejections.len() + self.batches.iter().map(|b| b.rejections.len()).sum::<usize>()
    }
}

/// Compact, recency-ordered triple list used as model context.
pub fn graph_context(graph: &LifeGraph, budget: usize) -> String {
    if graph.is_empty() {
        return "(empty graph)".to_string();
    }
    let mut lines = Vec::new();
    let people: Vec<String> = graph
        .nodes()
        .filter(|n| n.kind == EntityKind::PersonAnimal)
        .map(|n| match n.attrs.get("relation_to_owner") {
            Some(r) if !r.is_empty() => format!("{} ({r})", n.label),
            _ => n.label.clone(),
        })
        .collect();
    if !people.is_empty() {
        lines.push(format!("People and animals: {}", people.join(", ")));
    }
    let mut edges: Vec<_> = graph.edges().collect();
    edges.sort_by(|a, b| {
        let recency = |e: &crate::graph::HyperEdge| e.source_refs.iter().filter_map(|r| r.date).max();
        recency(b).cmp(&recency(a)).then_with(|| a.id.cmp(&b.id))
    });
    let mut used: usize = lines.iter().map(|l| l.len() + 1).sum();
    let total = edges.len();
    for (i, e) in edges.into_iter().enumerate() {
        let line = format!(
            "{} —{}→ {}",
            graph.node(&e.subject).map_or("?", |n| n.label.as_str()),
            graph.render_relation(e),
            graph.node(&e.object).map_or("?", |n| n.label.as_str()),
        );
        if used + line.len() + 1 > budget {
            lines.push(format!("… ({} more facts omitted)", total - i));
            break;
        }
        used += line.len() + 1;
        lines.push(line);
    }
    lines.join("\n")
}

fn fetch_payloads(store: Option<&dyn MediaStore>, ids: &[String], diagnostics: &mut Vec<String>) -> Vec<MediaPayload> {
    let Some(store) = store else {
        return Vec::new();
    };
    ids.iter()
        .filter_map(|id| match store.fetch(id) {
            Ok(p) => Some(p),
            Err(e) => {
                diagnostics.push(format!("media {id}: {e}"));
                None
            }
        })
        .collect()
}

pub struct GraphBuilder<'a> {
    model: &'a dyn ChatModel,
    media: Option<&'a dyn MediaStore>,
    config: ConstructionConfig,
}

impl<'a> GraphBuilder<'a> {
    pub fn new(model: &'a dyn ChatModel) -> Self {
        Self {
            model,
            media: None,
            config: ConstructionConfig::default(),
        }
    }

    pub fn with_media(mut self, media: &'a dyn MediaStore) -> Self {
        self.media = Some(media);
        self
    }

    pub fn with_config(mut self, config: ConstructionConfig) -> Self {
        self.config = config;
        self
    }

    pub fn config(&self) -> &ConstructionConfig {
        &self.config
    }

    /// Scaffold plus every history batch.
    pub fn build(&self, vaccount: &Vaccount) -> Result<(LifeGraph, BuildReport), ConstructionError> {
        let (graph, scaffold) = self.build_scaffold(vaccount)?;
        let batches = pack_batches(&vaccount.history, &self.config.packing);
        let (graph, reports) = self.integrate_history(graph, &batches);
        Ok((
            graph,
            BuildReport {
                scaffold,
                batches: reports,
            },
        ))
    }

    pub fn build_scaffold(&self, vaccount: &Vaccount) -> Result<(LifeGraph, StageReport), ConstructionError> {
        if vaccount.concepts.is_empty() {
            return Err(ConstructionError::NoConcepts);
        }
        let mut graph = LifeGraph::new(vaccount.id.clone());
        let mut report = StageReport::default();
        let mut portraits: BTreeMap<(EntityKind, String), MediaRef> = BTreeMap::new();
        for c in &vaccount.concepts {
            let mut attrs = NodeAttrs::new();
            if !c.persona.is_empty() {
                attrs.insert("persona".into(), c.persona.clone());
            }
            if !c.relation_to_owner.is_empty() {
                attrs.insert("relation_to_owner".into(), c.relation_to_owner.clone());
            }
            let id = graph.add_node(EntityKind::PersonAnimal, &c.name, attrs, [c.portrait_ref()])?;
            report.touched_nodes.push(id);
            portraits.insert(
                (EntityKind::PersonAnimal, crate::graph::normalize_label(&c.name)),
                c.portrait_ref(),
            );
        }

        let source = vaccount
            .concepts
            .iter()
            .map(|c| {
                format!(
                    "- {} (relation to owner: {}; portrait: {}): {}",
                    c.name,
                    if c.relation_to_owner.is_empty() {
                        "unknown"
                    } else {
                        &c.relation_to_owner
                    },
                    c.portrait,
                    c.persona
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        let media_ids: Vec<String> = vaccount.concepts.iter().map(|c| c.portrait.clone()).collect();
        let media = if self.config.attach_media {
            fetch_payloads(self.media, &media_ids, &mut report.diagnostics)
        } else {
            Vec::new()
        };
        let input = ExtractionInput {
            step: Step::Scaffold,
            context: "(empty graph)".into(),
            source,
            media_ids: media_ids.clone(),
            media,
            anchors: vaccount
                .concepts
                .iter()
                .map(|c| Candidate::new(c.name.clone(), EntityKind::PersonAnimal))
                .collect(),
        };
        let outcome = two_turn_extract(self.model, &input)?;
        report.candidates = outcome.candidates.len();
        report.proposed = outcome.proposed;
        report.rejections = outcome.rejections.clone();
        report.diagnostics.extend(outcome.diagnostics.iter().cloned());

        let all_portraits: BTreeSet<MediaRef> = portraits.values().cloned().collect();
        let protected: BTreeSet<NodeId> = report.touched_nodes.iter().cloned().collect();
        for draft in &outcome.drafts {
            let mut refs: BTreeSet<MediaRef> = draft.sources.iter().map(|id| MediaRef::new(id.clone(), None)).collect();
            if refs.is_empty() {
                refs = [&draft.subject, &draft.object]
                    .iter()
                    .filter_map(|c| portraits.get(&(c.kind, crate::graph::normalize_label(&c.name))))
                    .cloned()
                    .collect();
            }
            if refs.is_empty() {
                refs = all_portraits.clone();
            }
            match insert_draft(&mut graph, draft, &refs, &protected) {
                Ok((nodes, edge)) => {
                    report.touched_nodes.extend(nodes);
                    report.touched_edges.push(edge);
                }
                Err(reason) => report.rejections.push(Rejection { turn: 2, reason }),
            }
        }
        if report.proposed > 0 && report.touched_edges.is_empty() {
            return Err(ConstructionError::AllTriplesRejected {
                proposed: report.proposed,
            });
        }
        dedup(&mut report.touched_nodes);
        dedup_edges(&mut report.touched_edges);
        info!(
            nodes = graph.node_count(),
            edges = graph.edge_count(),
            rejected = report.rejections.len(),
            "scaffold built"
        );
        Ok((graph, report))
    }

    pub fn integrate_history(&self, graph: LifeGraph, batches: &[ExtractionBatch]) -> (LifeGraph, Vec<StageReport>) {
        self.integrate_history_with(graph, batches, |_, _| {})
    }

    /// As [`Self::integrate_history`], calling `after_batch` with the graph
    /// state after every batch.
    pub fn integrate_history_with(
        &self,
        mut graph: LifeGraph,
        batches: &[ExtractionBatch],
        mut after_batch: impl FnMut(&LifeGraph, &StageReport),
    ) -> (LifeGraph, Vec<StageReport>) {
        let protected: BTreeSet<NodeId> = graph.nodes().map(|n| n.id.clone()).collect();
        let anchors: Vec<Candidate> = graph.nodes().map(|n| Candidate::new(n.label.clone(), n.kind)).collect();
        let mut reports = Vec::with_capacity(batches.len());
        for (index, batch) in batches.iter().enumerate() {
            let report = self.integrate_batch(&mut graph, index, batch, &anchors, &protected);
            after_batch(&graph, &report);
            reports.push(report);
        }
        (graph, reports)
    }

    fn integrate_batch(
        &self,
        graph: &mut LifeGraph,
        index: usize,
        batch: &ExtractionBatch,
        anchors: &[Candidate],
        protected: &BTreeSet<NodeId>,
    ) -> StageReport {
        let mut report = StageReport {
            batch: Some(index),
            dates: batch.events.iter().map(|e| e.date).collect(),
            ..Default::default()
        };
        let media_dates: BTreeMap<String, NaiveDate> = batch
            .events
            .iter()
            .flat_map(|e| e.images.iter().map(move |i| (i.clone(), e.date)))
            .collect();
        let media_ids: Vec<String> = batch.media_ids().map(str::to_string).collect();
        let source = batch
            .events
            .iter()
            .map(|e| format!("- {} [{}]: {}", e.date, e.images.join(", "), e.description))
            .collect::<Vec<_>>()
            .join("\n");
        let media = if self.config.attach_media {
            fetch_payloads(self.media, &media_ids, &mut report.diagnostics)
        } else {
            Vec::new()
        };
        let input = ExtractionInput {
            step: Step::History,
            context: graph_context(graph, self.config.context_budget),
            source,
            media_ids: media_ids.clone(),
            media,
            anchors: anchors.to_vec(),
        };
        let outcome = match two_turn_extract(self.model, &input) {
            Ok(o) => o,
            Err(e) => {
                warn!(batch = index, error = %e, "model failure; batch skipped");
                report.skipped = Some(e.to_string());
                return report;
            }
        };
        report.candidates = outcome.candidates.len();
        report.proposed = outcome.proposed;
        report.rejections = outcome.rejections.clone();
        report.diagnostics.extend(outcome.diagnostics.iter().cloned());

        let to_ref = |id: &String| MediaRef::new(id.clone(), media_dates.get(id).copied());
        let batch_refs: BTreeSet<MediaRef> = media_ids.iter().map(to_ref).collect();
        for draft in &outcome.drafts {
            if let Some(reason) = redundant_date_link(graph, draft) {
                report.rejections.push(Rejection { turn: 2, reason });
                continue;
            }
            let mut refs: BTreeSet<MediaRef> = draft.sources.iter().map(to_ref).collect();
            if refs.is_empty() {
                refs = batch_refs.clone();
            }
            match insert_draft(graph, draft, &refs, protected) {
                Ok((nodes, edge)) => {
                    report.touched_nodes.extend(nodes);
                    report.touched_edges.push(edge);
                }
                Err(reason) => report.rejections.push(Rejection { turn: 2, reason }),
            }
        }
        link_event_dates(graph, &batch_refs, &mut report);
        dedup(&mut report.touched_nodes);
        dedup_edges(&mut report.touched_edges);
        info!(
            batch = index,
            edges = report.touched_edges.len(),
            rejected = report.rejections.len(),
            "batch integrated"
        );
        report
    }
}

fn dedup(v: &mut Vec<NodeId>) {
    let mut seen = BTreeSet::new();
    v.retain(|x| seen.insert(x.clone()));
}

fn dedup_edges(v: &mut Vec<EdgeId>) {
    let mut seen = BTreeSet::new();
    v.retain(|x| seen.insert(x.clone()));
}

fn date_neighbor_count(graph: &LifeGraph, id: &NodeId) -> usize {
    graph
        .neighbors(id)
        .map(|ns| ns.iter().filter(|n| n.node.kind == EntityKind::Date).count())
        .unwrap_or(0)
}

/// An Event gets exactly one Date edge; later Event–Date drafts are dropped.
fn redundant_date_link(graph: &LifeGraph, draft: &TripleDraft) -> Option<String> {
    let event = match (draft.subject.kind, draft.object.kind) {
        (EntityKind::Event, EntityKind::Date) => &draft.subject,
        (EntityKind::Date, EntityKind::Event) => &draft.object,
        _ => return None,
    };
    let node = graph.find_node(EntityKind::Event, &event.name)?;
    (date_neighbor_count(graph, &node.id) > 0).then(|| format!("event {:?} already linked to a date", event.name))
}

/// Inserts a validated draft. Protected nodes are reused untouched; others
/// are created or merged with the draft's source refs.
fn insert_draft(
    graph: &mut LifeGraph,
    draft: &TripleDraft,
    refs: &BTreeSet<MediaRef>,
    protected: &BTreeSet<NodeId>,
) -> Result<(Vec<NodeId>, EdgeId), String> {
    let mut touched = Vec::new();
    let mut endpoint = |graph: &mut LifeGraph, c: &Candidate| -> Result<NodeId, String> {
        if let Some(existing) = graph.find_node(c.kind, &c.name) {
            if protected.contains(&existing.id) {
                return Ok(existing.id.clone());
            }
        }
        let id = graph
            .add_node(c.kind, &c.name, NodeAttrs::new(), refs.iter().cloned())
            .map_err(|e| format!("{} {:?}: {e}", c.kind, c.name))?;
        touched.push(id.clone());
        Ok(id)
    };
    let s = endpoint(graph, &draft.subject)?;
    let o = endpoint(graph, &draft.object)?;
    let mut attrs = EdgeAttrs::new();
    for (k, values) in &draft.attrs {
        let resolved = values
            .iter()
            .map(|v| match graph.find_by_label(v).first() {
                Some(n) => AttrValue::entity(n.id.clone()),
                None => AttrValue::text(v.clone()),
            })
            .collect();
        attrs.insert(k.clone(), resolved);
    }
    let edge = graph
        .add_edge(&s, &draft.relation, &o, attrs, refs.iter().cloned())
        .map_err(|e| e.to_string())?;
    Ok((touched, edge))
}

/// Links every Event touched in this batch that has no Date neighbor to the
/// Date of its earliest batch-local source.
fn link_event_dates(graph: &mut LifeGraph, batch_refs: &BTreeSet<MediaRef>, report: &mut StageReport) {
    let events: Vec<NodeId> = report
        .touched_nodes
        .iter()
        .filter(|id| graph.node(id).is_some_and(|n| n.kind == EntityKind::Event))
        .cloned()
        .collect();
    for event in events {
        if date_neighbor_count(graph, &event) > 0 {
            continue;
        }
        let node = graph.node(&event).expect("touched node exists");
        let Some(date) = node
            .source_refs
            .iter()
            .filter(|r| batch_refs.contains(r))
            .filter_map(|r| r.date)
            .min()
        else {
            report
                .diagnostics
                .push(format!("event {:?} has no dated source in this batch", node.label));
            continue;
        };
        let refs: Vec<MediaRef> = node
            .source_refs
            .iter()
            .filter(|r| batch_refs.contains(r) && r.date == Some(date))
            .cloned()
            .collect();
        let date_label = date.format("%Y-%m-%d").to_string();
        let linked = graph
            .add_node(EntityKind::Date, &date_label, NodeAttrs::new(), refs.iter().cloned())
            .and_then(|d| {
                let e = graph.add_edge(&event, EVENT_DATE_RELATION, &d, EdgeAttrs::new(), refs)?;
                Ok((d, e))
            });
        match linked {
            Ok((d, e)) => {
                report.touched_nodes.push(d);
                report.touched_edges.push(e);
            }
            Err(e) => report.diagnostics.push(format!("linking event date: {e}")),
        }
    }
}

/// Edges of an Event node that lead to Date nodes, with direction.
pub fn event_date_links(graph: &LifeGraph, event: &NodeId) -> Vec<(EdgeId, Direction)> {
    graph
        .neighbors(event)
        .map(|ns| {
            ns.into_iter()
                .filter(|n| n.node.kind == EntityKind::Date)
                .map(|n| (n.edge.id.clone(), n.direction))
                .collect()
        })
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Matcher, Responder, ScriptedMock};
    use crate::vaccount::{Concept, HistoryEvent};

    fn concept(name: &str, rel: &str) -> Concept {
        Concept {
            name: name.into(),
            persona: format!("{name}'s persona"),
            relation_to_owner: rel.into(),
            portrait: format!("{}.jpg", name.to_lowercase()),
        }
    }

    fn va(concepts: Vec<Concept>, history: Vec<HistoryEvent>) -> Vaccount {
        Vaccount {
            id: "va-test".into(),
            media_dir: None,
            concepts,
            history,
        }
    }

    #[test]
    fn single_concept_no_relations() {
        let mock = ScriptedMock::new()
            .when(
                "TASK: extract-entities",
                r#"{"entities": [{"name": "David", "type": "PersonAnimal"}]}"#,
            )
            .when("TASK: extract-triples", r#"{"triples": []}"#);
        let (g, report) = GraphBuilder::new(&mock)
            .build_scaffold(&va(vec![concept("David", "self")], vec![]))
            .unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(report.proposed, 0);
        let n = g.nodes().next().unwrap();
        assert_eq!(n.source_refs.iter().next().unwrap().media_id, "david.jpg");
        assert_eq!(n.attrs["relation_to_owner"], "self");
    }

    #[test]
    fn ghost_triple_dropped_and_all_dropped_is_error() {
        let v = va(vec![concept("David", "self"), concept("Mary", "aunt")], vec![]);
        let mock = ScriptedMock::new()
            .when("TASK: extract-entities", r#"{"entities": []}"#)
            .when(
                "TASK: extract-triples",
                r#"{"triples": [
                    {"subject": "David", "relation": "hasAunt", "object": "Mary"},
                    {"subject": "David", "relation": "knows", "object": "Ghost"}]}"#,
            );
        let (g, report) = GraphBuilder::new(&mock).build_scaffold(&v).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(report.rejections.len(), 1);
        assert!(g.find_by_label("Ghost").is_empty());
        let e = g.edges().next().unwrap();
        let refs: Vec<_> = e.source_refs.iter().map(|r| r.media_id.as_str()).collect();
        assert_eq!(refs, vec!["david.jpg", "mary.jpg"]);

        let all_bad = ScriptedMock::new()
            .when("TASK: extract-entities", r#"{"entities": []}"#)
            .when(
                "TASK: extract-triples",
                r#"{"triples": [{"subject": "David", "relation": "knows", "object": "Ghost"}]}"#,
            );
        assert!(matches!(
            GraphBuilder::new(&all_bad).build_scaffold(&v),
            Err(ConstructionError::AllTriplesRejected { proposed: 1 })
        ));
    }

    fn christmas_vaccount() -> Vaccount {
        va(
            vec![concept("David", "self"), concept("Rylen", "brother")],
            vec![
                HistoryEvent {
                    date: "2023-12-24".parse().unwrap(),
                    description: "Decorating the tree with Rylen".into(),
                    images: vec!["x1.jpg".into(), "x2.jpg".into()],
                },
                HistoryEvent {
                    date: "2024-01-01".parse().unwrap(),
                    description: "New year at the park".into(),
                    images: vec!["ny1.jpg".into()],
                },
            ],
        )
    }

    fn christmas_mock() -> ScriptedMock {
        ScriptedMock::new()
            .rule(
                Matcher::all_of(["TASK: extract-entities", "STEP: scaffold"]),
                Responder::text(r#"{"entities": []}"#),
            )
            .rule(
                Matcher::all_of(["TASK: extract-triples", "STEP: scaffold"]),
                Responder::text(r#"{"triples": [{"subject": "David", "relation": "hasBrother", "object": "Rylen"}]}"#),
            )
            .rule(
                Matcher::all_of(["TASK: extract-entities", "2023-12-24"]),
                Responder::text(
                    r#"{"entities": [
                        {"name": "Christmas Party", "type": "Event"},
                        {"name": "Decorate Christmas Tree", "type": "Activity"},
                        {"name": "red ornaments", "type": "Object"},
                        {"name": "Central Park", "type": "Location"},
                        {"name": "New Year Walk", "type": "Event"}]}"#,
                ),
            )
            .rule(
                Matcher::predicate(|c| {
                    c.last().is_some_and(|t| t.text.contains("TASK: extract-triples"))
                        && c.iter().any(|t| t.text.contains("2023-12-24"))
                }),
                Responder::text(
                    r#"```json
{"triples": [
 {"subject": "Christmas Party", "relation": "hasActivity", "object": "Decorate Christmas Tree",
  "attributes": {"attendee": ["David", "Rylen"], "object": ["red ornaments"]}, "sources": ["x1.jpg"]},
 {"subject": "Rylen", "relation": "attended", "object": "Christmas Party", "sources": ["x2.jpg"]},
 {"subject": "New Year Walk", "relation": "heldAt", "object": "Central Park", "sources": ["ny1.jpg"]},
 {"subject": "David", "relation": "visited", "object": "Central Park", "sources": ["ny1.jpg"]}
]}
```"#,
                ),
            )
    }

    #[test]
    fn christmas_nary_fact_and_date_links() {
        let v = christmas_vaccount();
        let mock = christmas_mock();
        let builder = GraphBuilder::new(&mock);
        let (g, report) = builder.build(&v).unwrap();
        assert_eq!(report.batches.len(), 1);
        g.check_invariants().unwrap();
        let party = g.find_node(EntityKind::Event, "christmas party").unwrap();
        let tree = g.find_node(EntityKind::Activity, "Decorate Christmas Tree").unwrap();
        let edge = g
            .edges()
            .find(|e| e.subject == party.id && e.object == tree.id)
            .unwrap();
        assert_eq!(edge.relation, "hasActivity");
        let david = g.find_node(EntityKind::PersonAnimal, "David").unwrap();
        assert_eq!(
            edge.attrs["attendee"],
            vec![
                AttrValue::entity(david.id.clone()),
                AttrValue::entity(g.find_node(EntityKind::PersonAnimal, "Rylen").unwrap().id.clone())
            ]
        );
        assert_eq!(edge.attrs["object"].len(), 1);
        for event in g.nodes().filter(|n| n.kind == EntityKind::Event) {
            assert_eq!(event_date_links(&g, &event.id).len(), 1, "{}", event.label);
        }
        assert!(g.find_node(EntityKind::Date, "2023-12-24").is_some());
        assert!(g.find_node(EntityKind::Date, "2024-01-01").is_some());
        // scaffold nodes keep only their portrait refs
        assert_eq!(david.source_refs.len(), 1);
    }

    #[test]
    fn empty_batch_list_leaves_graph_unchanged() {
        let v = christmas_vaccount();
        let mock = christmas_mock();
        let builder = GraphBuilder::new(&mock);
        let (scaffold, _) = builder.build_scaffold(&v).unwrap();
        let (after, reports) = builder.integrate_history(scaffold.clone(), &[]);
        assert_eq!(after, scaffold);
        assert!(reports.is_empty());
    }

    #[test]
    fn model_failure_skips_batch() {
        let v = christmas_vaccount();
        let mock = ScriptedMock::new()
            .when("STEP: scaffold", r#"{"entities": [], "triples": []}"#)
            .strict(true);
        let builder = GraphBuilder::new(&mock);
        let (g, report) = builder.build(&v).unwrap();
        assert_eq!(g.node_count(), 2);
        assert!(report.batches[0].skipped.is_some());
    }

    #[test]
    fn context_is_recency_ordered_and_budgeted() {
        let v = christmas_vaccount();
        let mock = christmas_mock();
        let (g, _) = GraphBuilder::new(&mock).build(&v).unwrap();
        let ctx = graph_context(&g, 10_000);
        let ny = ctx.find("New Year Walk").unwrap();
        let xmas = ctx.find("Christmas Party —hasActivity").unwrap();
        assert!(ny < xmas);
        assert!(ctx.contains(
            "Christmas Party —hasActivity<attendee: [David, Rylen], object: red ornaments>→ Decorate Christmas Tree"
        ));
        let short = graph_context(&g, 80);
        assert!(short.len() <= 80 + 40);
        assert!(short.contains("more facts omitted"));
    }
}
