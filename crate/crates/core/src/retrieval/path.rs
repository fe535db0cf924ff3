use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::graph::{Direction, EdgeId, LifeGraph, MediaRef, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Step {
    pub edge: EdgeId,
    pub node: NodeId,
    /// Direction of `edge` as seen from the node before this step.
    pub direction: Direction,
}

/// A simple path under the undirected view: a start node followed by
/// (edge, node) steps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Path {
    pub start: NodeId,
    pub steps: Vec<Step>,
}

impl Path {
    pub fn seed(start: NodeId) -> Self {
        Self {
            start,
            steps: Vec::new(),
        }
    }

    pub fn extended(&self, step: Step) -> Self {
        let mut p = self.clone();
        p.steps.push(step);
        p
    }

    /// Number of edges.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn tail(&self) -> &NodeId {
        self.steps.last().map_or(&self.start, |s| &s.node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        std::iter::once(&self.start).chain(self.steps.iter().map(|s| &s.node))
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.nodes().any(|n| n == node)
    }

    /// Adjacent in `graph` at every step and no repeated node.
    pub fn is_valid_in(&self, graph: &LifeGraph) -> bool {
        if !graph.contains_node(&self.start) {
            return false;
        }
        let mut seen = BTreeSet::new();
        seen.insert(&self.start);
        let mut prev = &self.start;
        for step in &self.steps {
            let Some(edge) = graph.edge(&step.edge) else {
                return false;
            };
            let ok = match step.direction {
                Direction::Outgoing => &edge.subject == prev && edge.object == step.node,
                Direction::Incoming => &edge.object == prev && edge.subject == step.node,
            };
            if !ok || !seen.insert(&step.node) {
                return false;
            }
            prev = &step.node;
        }
        true
    }

    /// Source refs of every element on the path, in path order, first
    /// occurrence of each media id only.
    pub fn source_refs<'g>(&self, graph: &'g LifeGraph) -> Vec<&'g MediaRef> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut push = |refs: &'g BTreeSet<MediaRef>| {
            for r in refs {
                if seen.insert(r.media_id.as_str()) {
                    out.push(r);
                }
            }
        };
        if let Some(n) = graph.node(&self.start) {
            push(&n.source_refs);
        }
        for s in &self.steps {
            if let Some(e) = graph.edge(&s.edge) {
                push(&e.source_refs);
            }
            if let Some(n) = graph.node(&s.node) {
                push(&n.source_refs);
            }
        }
        out
    }

    /// `David -[hasAunt]-> Mary <-[ownedBy]- Rex`
    pub fn render(&self, graph: &LifeGraph) -> String {
        let label = |id: &NodeId| graph.node(id).map_or_else(|| id.to_string(), |n| n.label.clone());
        let mut out = label(&self.start);
        for s in &self.steps {
            let rel = graph
                .edge(&s.edge)
                .map_or_else(|| s.edge.to_string(), |e| graph.render_relation(e));
            match s.direction {
                Direction::Outgoing => out.push_str(&format!(" -[{rel}]-> ")),
                Direction::Incoming => out.push_str(&format!(" <-[{rel}]- ")),
            }
            out.push_str(&label(&s.node));
        }
        out
    }
}

pub fn render_paths(graph: &LifeGraph, paths: &[Path]) -> String {
    if paths.is_empty() {
        return "(none)".to_string();
    }
    paths
        .iter()
        .map(|p| format!("- {}", p.render(graph)))
        .collect::<Vec<_>>()
        .join("\n")
}
