//! Trace and interference-map exporters.
//!
//! Edge styling: solid for constructive coupling, dashed for destructive,
//! dotted hairline for zero; `|I| ≥ 0.5` is drawn strong, anything else medium.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::StepTrace;
use crate::model::{AbductiveState, Hypothesis, InterferenceMatrix, Provenance};

/// Coupling magnitude at and above which an edge is drawn strong.
pub const STRONG_COUPLING: f64 = 0.5;

/// One JSON object per line, newline-terminated.
pub fn traces_to_jsonl(traces: &[StepTrace]) -> String {
    let mut out = String::new();
    for t in traces {
        out.push_str(&serde_json::to_string(t).expect("trace serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeStyle {
    Solid,
    Dashed,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeStrength {
    Strong,
    Medium,
    Hairline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapNode {
    pub id: String,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEdge {
    pub source: String,
    pub target: String,
    /// 1-based hypothesis indices.
    pub i: usize,
    pub j: usize,
    pub value: f64,
    pub provenance: Provenance,
    pub style: EdgeStyle,
    pub strength: EdgeStrength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceMap {
    pub nodes: Vec<MapNode>,
    pub edges: Vec<MapEdge>,
}

fn classify(value: f64) -> (EdgeStyle, EdgeStrength) {
    if value == 0.0 {
        return (EdgeStyle::Neutral, EdgeStrength::Hairline);
    }
    let style = if value > 0.0 {
        EdgeStyle::Solid
    } else {
        EdgeStyle::Dashed
    };
    let strength = if value.abs() >= STRONG_COUPLING {
        EdgeStrength::Strong
    } else {
        EdgeStrength::Medium
    };
    (style, strength)
}

/// Nodes are hypotheses, one edge per unordered pair.
pub fn interference_map(
    hypotheses: &[Hypothesis],
    matrix: &InterferenceMatrix,
    state: Option<&AbductiveState>,
) -> InterferenceMap {
    let nodes = hypotheses
        .iter()
        .enumerate()
        .map(|(i, h)| MapNode {
            id: h.id.clone(),
            label: h.label.clone(),
            amplitude: state.map(|s| s.amplitudes()[i]),
            weight: state.map(|s| s.amplitudes()[i].powi(2)),
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..hypotheses.len() {
        for j in i + 1..hypotheses.len() {
            let value = matrix.get(i, j);
            let (style, strength) = classify(value);
            edges.push(MapEdge {
                source: hypotheses[i].id.clone(),
                target: hypotheses[j].id.clone(),
                i: i + 1,
                j: j + 1,
                value,
                provenance: matrix.provenance(i, j),
                style,
                strength,
            });
        }
    }
    InterferenceMap { nodes, edges }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz rendering of [`interference_map`].
pub fn interference_dot(
    hypotheses: &[Hypothesis],
    matrix: &InterferenceMatrix,
    state: Option<&AbductiveState>,
) -> String {
    let map = interference_map(hypotheses, matrix, state);
    let mut out = String::from("graph interference {\n  node [shape=box];\n");
    for n in &map.nodes {
        let label = match n.weight {
            Some(w) => format!("{}: {} (α²={w:.4})", n.id, n.label),
            None => format!("{}: {}", n.id, n.label),
        };
        let _ = writeln!(out, "  {} [label={}];", quote(&n.id), quote(&label));
    }
    for e in &map.edges {
        let (style, color) = match e.style {
            EdgeStyle::Solid => ("solid", "black"),
            EdgeStyle::Dashed => ("dashed", "red"),
            EdgeStyle::Neutral => ("dotted", "gray"),
        };
        let width = match e.strength {
            EdgeStrength::Strong => "2.5",
            EdgeStrength::Medium => "1.2",
            EdgeStrength::Hairline => "0.5",
        };
        let _ = writeln!(
            out,
            "  {} -- {} [label=\"{:.3}\", style={style}, color={color}, penwidth={width}];",
            quote(&e.source),
            quote(&e.target),
            e.value
        );
    }
    out.push_str("}\n");
    out
}
