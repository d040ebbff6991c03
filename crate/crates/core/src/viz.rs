//! Graph filters and DOT export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::dataset::{Slice, VariableId};
use crate::error::{Error, Result};
use crate::events::EventType;
use crate::network::{ancestors, NetworkSkeleton};

/// Nodes with a directed path to `sink`, plus `sink`, and the edges on those
/// paths.
pub fn ancestor_subgraph(skeleton: &NetworkSkeleton, sink: VariableId) -> Result<NetworkSkeleton> {
    if !skeleton.nodes.contains(&sink) {
        return Err(Error::UnknownVariable(sink.name()));
    }
    let mut keep = ancestors(skeleton, sink);
    keep.insert(sink);
    Ok(NetworkSkeleton {
        nodes: skeleton.nodes.iter().copied().filter(|v| keep.contains(v)).collect(),
        edges: skeleton.edges.iter().filter(|e| keep.contains(&e.to)).cloned().collect(),
    })
}

/// Edges with `chi2 >= min_chi2` and their endpoints.
pub fn filter_strong(skeleton: &NetworkSkeleton, min_chi2: f64) -> Result<NetworkSkeleton> {
    if !skeleton.is_annotated() {
        return Err(Error::NotAnnotated);
    }
    let edges: Vec<_> = skeleton
        .edges
        .iter()
        .filter(|e| e.chi2().is_some_and(|c| c >= min_chi2))
        .cloned()
        .collect();
    let ends: BTreeSet<VariableId> = edges.iter().flat_map(|e| [e.from, e.to]).collect();
    Ok(NetworkSkeleton { nodes: skeleton.nodes.iter().copied().filter(|v| ends.contains(v)).collect(), edges })
}

/// Display labels per event type; latter-slice nodes get a trailing `'`.
#[derive(Clone, Debug, PartialEq)]
pub struct AbbreviationMap(pub BTreeMap<EventType, String>);

impl Default for AbbreviationMap {
    fn default() -> Self {
        let mut m: BTreeMap<EventType, String> = EventType::all().map(|t| (t, t.name().to_string())).collect();
        for (t, a) in [
            (EventType::Accident, "Acci"),
            (EventType::Congestion, "Cong"),
            (EventType::FlowIncident, "Flow"),
            (EventType::Construction, "Cons"),
            (EventType::LaneBlocked, "Lane"),
            (EventType::BrokenVehicle, "Bro"),
            (EventType::Precipitation, "Pre"),
        ] {
            m.insert(t, a.to_string());
        }
        AbbreviationMap(m)
    }
}

impl AbbreviationMap {
    /// Override entries from `Type=Label` lines; blank lines and `#` comments
    /// are skipped.
    pub fn with_overrides(mut self, text: &str) -> Result<Self> {
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, val) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("expected Type=Label, got `{line}`")))?;
            let t = EventType::parse(k.trim()).ok_or_else(|| Error::UnknownVariable(k.trim().to_string()))?;
            self.0.insert(t, val.trim().to_string());
        }
        Ok(self)
    }

    pub fn label(&self, v: VariableId) -> String {
        let base = self.0.get(&v.event_type).cloned().unwrap_or_else(|| v.event_type.name().to_string());
        match v.slice {
            Slice::Former => base,
            Slice::Latter => format!("{base}'"),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// DOT digraph with the former and latter slices as separate clusters and
/// `penwidth = 1 + strength_class` on each edge. Nodes and edges are emitted
/// in variable-index order.
pub fn to_dot(skeleton: &NetworkSkeleton, labels: &AbbreviationMap) -> String {
    let mut out = String::from("digraph {\n");
    if skeleton.nodes.is_empty() && skeleton.edges.is_empty() {
        out.push_str("}\n");
        return out;
    }
    out.push_str("  rankdir=LR;\n");
    let mut nodes = skeleton.nodes.clone();
    nodes.sort_by_key(|v| v.index());
    for (slice, name, title) in [(Slice::Former, "former", "T"), (Slice::Latter, "latter", "T'")] {
        let members: Vec<_> = nodes.iter().filter(|v| v.slice == slice).collect();
        if members.is_empty() {
            continue;
        }
        let _ = writeln!(out, "  subgraph cluster_{name} {{");
        let _ = writeln!(out, "    label=\"{title}\";");
        out.push_str("    rank=same;\n");
        for v in members {
            let _ = writeln!(out, "    \"{}\" [label=\"{}\"];", v.name(), escape(&labels.label(*v)));
        }
        out.push_str("  }\n");
    }
    let mut edges: Vec<_> = skeleton.edges.iter().collect();
    edges.sort_by_key(|e| (e.from.index(), e.to.index()));
    for e in edges {
        let width = 1 + u32::from(e.strength_class.unwrap_or(0));
        let _ = write!(out, "  \"{}\" -> \"{}\" [penwidth={width}", e.from.name(), e.to.name());
        if let Some(c) = e.chi2() {
            let _ = write!(out, ", tooltip=\"chi2={c:.3}\"");
        }
        out.push_str("];\n");
    }
    out.push_str("}\n");
    out
}
