//! Graphviz rendering: one cluster per layer, edges styled by type.

use std::fmt::Write;

use ssg_core::graph::{EdgeType, NodeType, SceneGraph, SceneNode};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn label(n: &SceneNode) -> String {
    let mut s = format!("{} {}", n.id, n.node_type.as_str());
    if let Some(c) = &n.concept {
        s = format!("{} {}", n.id, escape(c));
    }
    if let Some(l) = &n.class_label {
        let _ = write!(s, "\\n{}", escape(l));
    }
    if let Some(seg) = n.segment_id {
        let _ = write!(s, "\\nseg {seg}");
    }
    s
}

fn shape(t: NodeType) -> &'static str {
    match t {
        NodeType::LocalObject => "ellipse",
        NodeType::GlobalObject => "box",
        NodeType::Concept => "note",
        NodeType::VirtualGround => "underline",
    }
}

fn style(t: EdgeType) -> &'static str {
    match t {
        EdgeType::Proximal => "color=gray60, dir=none",
        EdgeType::Contact => "color=orange, dir=none",
        EdgeType::Supports => "color=black, penwidth=2",
        EdgeType::SameInstance => "color=blue, style=dashed",
        EdgeType::GroundedIn => "color=darkgreen, style=dotted",
        EdgeType::Related => "color=purple",
    }
}

pub fn to_dot(graph: &SceneGraph) -> String {
    let mut out = String::from("digraph scene {\n  rankdir=BT;\n  node [fontsize=10];\n");
    let layers = [
        ("local", &[NodeType::LocalObject][..]),
        (
            "global",
            &[NodeType::VirtualGround, NodeType::GlobalObject][..],
        ),
        ("knowledge", &[NodeType::Concept][..]),
    ];
    for (name, types) in layers {
        let _ = writeln!(out, "  subgraph cluster_{name} {{\n    label=\"{name}\";");
        for n in graph.nodes().filter(|n| types.contains(&n.node_type)) {
            let _ = writeln!(
                out,
                "    n{} [label=\"{}\", shape={}];",
                n.id.0,
                label(n),
                shape(n.node_type)
            );
        }
        out.push_str("  }\n");
    }
    for e in graph.edges() {
        let text = e
            .relation_label
            .as_deref()
            .or(e.kg_relation.as_deref())
            .unwrap_or(e.edge_type.as_str());
        let _ = writeln!(
            out,
            "  n{} -> n{} [label=\"{}\", {}];",
            e.src.0,
            e.dst.0,
            escape(text),
            style(e.edge_type)
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ssg_core::graph::{EdgeSpec, NodeSpec};

    #[test]
    fn renders_every_node_and_edge() {
        let mut g = SceneGraph::new();
        g.add_node(NodeSpec::new(NodeType::VirtualGround)).unwrap();
        let c = g.add_node(NodeSpec::concept("/c/en/cup")).unwrap();
        let d = g.add_node(NodeSpec::concept("/c/en/table")).unwrap();
        let mut e = EdgeSpec::new(c, d, EdgeType::Related);
        e.kg_relation = Some("AtLocation".into());
        g.add_edge(e).unwrap();
        let dot = to_dot(&g);
        assert!(dot.starts_with("digraph scene {"));
        assert!(dot.contains("n0 [label=\"n0 virtual_ground\""));
        assert!(dot.contains("n1 [label=\"n1 /c/en/cup\", shape=note]"));
        assert!(dot.contains("n1 -> n2 [label=\"AtLocation\", color=purple]"));
        assert!(dot.trim_end().ends_with('}'));
    }
}
