use std::io::Write;

use super::{LifeGraph, Result};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

impl LifeGraph {
    /// Graphviz export: one statement per node (`kind:label`) and one per
    /// edge (relation with inline hyper-edge attributes).
    pub fn export_dot<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "digraph lifegraph {{")?;
        for node in self.nodes.values() {
            writeln!(
                sink,
                "  \"{}\" [label=\"{}\"];",
                escape(node.id.as_str()),
                escape(&format!("{}:{}", node.kind, node.label))
            )?;
        }
        for edge in self.edges.values() {
            writeln!(
                sink,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                escape(edge.subject.as_str()),
                escape(edge.object.as_str()),
                escape(&self.render_relation(edge))
            )?;
        }
        writeln!(sink, "}}")?;
        sink.flush()?;
        Ok(())
    }
}
