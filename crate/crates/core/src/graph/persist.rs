//! Line-oriented JSON persistence (`.lgr.jsonl`).
//!
//! One record per line, discriminated by `"type"`:
//!
//! ```text
//! {"type":"graph","format":1,"owner":"va-001"}
//! {"type":"node","id":"n…","kind":"PersonAnimal","label":"David","attrs":{…},"source_refs":[…]}
//! {"type":"edge","id":"e…","subject":"n…","relation":"hasAunt","object":"n…","attrs":{…},"source_refs":[…]}
//! ```
//!
//! Records may appear in any order; loading is two-pass.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{GraphError, HyperEdge, LifeGraph, Node, Result};

pub const GRAPH_FORMAT_VERSION: u32 = 1;
pub const GRAPH_FILE_EXTENSION: &str = "lgr.jsonl";

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Graph { format: u32, owner: String },
    Node(Node),
    Edge(HyperEdge),
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum RecordRef<'a> {
    Graph { format: u32, owner: &'a str },
    Node(&'a Node),
    Edge(&'a HyperEdge),
}

impl LifeGraph {
    pub fn persist<W: Write>(&self, mut sink: W) -> Result<()> {
        let mut write = |rec: RecordRef<'_>| -> Result<()> {
            serde_json::to_writer(&mut sink, &rec).map_err(std::io::Error::from)?;
            sink.write_all(b"\n")?;
            Ok(())
        };
        write(RecordRef::Graph {
            format: GRAPH_FORMAT_VERSION,
            owner: &self.owner,
        })?;
        for node in self.nodes.values() {
            write(RecordRef::Node(node))?;
        }
        for edge in self.edges.values() {
            write(RecordRef::Edge(edge))?;
        }
        sink.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(source: R) -> Result<LifeGraph> {
        let mut owner: Option<String> = None;
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (idx, line) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line).map_err(|e| GraphError::Malformed {
                line: line_no,
                reason: e.to_string(),
            })?;
            match record {
                Record::Graph { format, owner: o } => {
                    if format != GRAPH_FORMAT_VERSION {
                        return Err(GraphError::Malformed {
                            line: line_no,
                            reason: format!("unsupported format version {format}"),
                        });
                    }
                    if owner.replace(o).is_some() {
                        return Err(GraphError::Malformed {
                            line: line_no,
                            reason: "duplicate graph header".into(),
                        });
                    }
                }
                Record::Node(n) => nodes.push((line_no, n)),
                Record::Edge(e) => edges.push((line_no, e)),
            }
        }

        let mut graph = LifeGraph::new(owner.unwrap_or_default());
        let mut seen_nodes = BTreeSet::new();
        for (line, node) in nodes {
            if !seen_nodes.insert(node.id.clone()) {
                return Err(GraphError::Malformed {
                    line,
                    reason: format!("duplicate node id {}", node.id),
                });
            }
            graph.insert_loaded_node(node);
        }
        let mut seen_edges = BTreeSet::new();
        for (line, edge) in edges {
            if !seen_edges.insert(edge.id.clone()) {
                return Err(GraphError::Malformed {
                    line,
                    reason: format!("duplicate edge id {}", edge.id),
                });
            }
            if edge.subject == edge.object {
                return Err(GraphError::Malformed {
                    line,
                    reason: format!("self-loop on {}", edge.subject),
                });
            }
            graph.insert_loaded_edge(edge);
        }
        graph.check_invariants()?;
        Ok(graph)
    }

    pub fn save_to_path(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.persist(std::io::BufWriter::new(file))
    }

    pub fn load_from_path(path: impl AsRef<std::path::Path>) -> Result<LifeGraph> {
        let file = std::fs::File::open(path)?;
        LifeGraph::load(std::io::BufReader::new(file))
    }
}
