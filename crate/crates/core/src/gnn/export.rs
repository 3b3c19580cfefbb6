use std::fmt::Write;

use serde::Serialize;

/// `normalized[i][j]` is the weight of the edge from j into i.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightMatrices {
    pub raw: Vec<Vec<f64>>,
    pub normalized: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct StructureDoc<'a> {
    nodes: &'a [String],
    raw: &'a [Vec<f64>],
    normalized: &'a [Vec<f64>],
}

pub fn structure_json(labels: &[String], w: &WeightMatrices) -> String {
    let doc = StructureDoc {
        nodes: labels,
        raw: &w.raw,
        normalized: &w.normalized,
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes")
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

/// Directed graph with one edge per ordered pair; edge opacity tracks the
/// normalized weight.
pub fn structure_dot(labels: &[String], w: &WeightMatrices) -> String {
    let n = labels.len();
    let mut out = String::from("digraph dialog {\n  rankdir=LR;\n  node [shape=box];\n");
    for (i, l) in labels.iter().enumerate() {
        let style = if i + 1 == n { ", style=dashed" } else { "" };
        let _ = writeln!(out, "  n{i} [label=\"{}\"{style}];", escape(l));
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = w.normalized[i][j].clamp(0.0, 1.0);
            let alpha = (v * 255.0).round() as u8;
            let _ = writeln!(
                out,
                "  n{j} -> n{i} [color=\"#008000{alpha:02x}\", penwidth={:.3}, label=\"{:.3}\"];",
                0.5 + 3.0 * v,
                v
            );
        }
    }
    out.push_str("}\n");
    out
}
