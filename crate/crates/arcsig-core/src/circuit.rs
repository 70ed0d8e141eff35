//! Circuit representation and structural facts.
//!
//! A circuit lives inside a model skeleton (layer/head grid). Nodes are
//! attention heads, MLP blocks, or the occasional untyped embed/logits
//! node; edges carry a non-negative attribution score. Structural facts are
//! the numeric layer of the representation: everything here is derived from
//! the graph alone and is invariant under renaming node ids.
//!
//! Conventions that matter elsewhere:
//!
//! * `size` counts typed components only (attention heads + MLP blocks);
//!   embed/logits nodes are part of the graph but not of the size or the
//!   component ratios.
//! * normalised depth of a node at layer `l` in an `L`-layer model is
//!   `l / L`, so depths live in `[0, 1)`.
//! * density uses ordered pairs: `|E| / (|V| * (|V| - 1))` over all nodes.
//! * a skip connection is an edge whose endpoint layers differ by more
//!   than one.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::motifs::Motif;

pub use crate::ingest::{
    parse_document, render_document, CfsEntry, CircuitDocument, Evaluations, ParseError,
    ParseMode,
};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash,
)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    AttnHead,
    MlpBlock,
    Embed,
    Logits,
}

impl NodeKind {
    pub fn is_typed(self) -> bool {
        matches!(self, NodeKind::AttnHead | NodeKind::MlpBlock)
    }

    /// Short name used as a clause constant.
    pub fn short(self) -> &'static str {
        match self {
            NodeKind::AttnHead => "attn",
            NodeKind::MlpBlock => "mlp",
            NodeKind::Embed => "embed",
            NodeKind::Logits => "logits",
        }
    }

    pub fn parse(s: &str) -> Option<NodeKind> {
        match s {
            "attn_head" => Some(NodeKind::AttnHead),
            "mlp_block" => Some(NodeKind::MlpBlock),
            "embed" => Some(NodeKind::Embed),
            "logits" => Some(NodeKind::Logits),
            _ => None,
        }
    }

    pub fn from_short(s: &str) -> Option<NodeKind> {
        match s {
            "attn" => Some(NodeKind::AttnHead),
            "mlp" => Some(NodeKind::MlpBlock),
            "embed" => Some(NodeKind::Embed),
            "logits" => Some(NodeKind::Logits),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::AttnHead => "attn_head",
            NodeKind::MlpBlock => "mlp_block",
            NodeKind::Embed => "embed",
            NodeKind::Logits => "logits",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub layer: u32,
    /// Present iff `kind == AttnHead`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub head: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSkeleton {
    pub model_id: String,
    pub num_layers: u32,
    pub heads_per_layer: u32,
    pub family: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub task: String,
    pub model_id: String,
    pub discovery_method: String,
    pub split: String,
}

/// A discovered subgraph, already checked for internal consistency: unique
/// node ids, resolving edge endpoints, layers inside the skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub id: String,
    pub provenance: Provenance,
    pub skeleton: ModelSkeleton,
    /// Sorted by id.
    pub nodes: Vec<Node>,
    /// Sorted by (src, dst).
    pub edges: Vec<Edge>,
}

impl Circuit {
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes
            .binary_search_by(|n| n.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn typed_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind.is_typed())
    }

    /// Kind of an edge endpoint. Endpoints always resolve once a circuit is
    /// constructed, so this panics on a foreign id.
    pub fn kind_of(&self, id: &str) -> NodeKind {
        self.node(id).unwrap_or_else(|| panic!("unknown node id {id}")).kind
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum DeriveError {
    #[error("layer {layer} out of range for a {num_layers}-layer skeleton")]
    LayerOutOfRange { layer: u32, num_layers: u32 },
    #[error("circuit {0} has no typed components")]
    NoTypedComponents(String),
    #[error("faithfulness undefined: full-model and ablated accuracy coincide")]
    FaithfulnessUndefined,
}

/// Map a layer index to a depth in `[0, 1)`.
pub fn normalised_depth(layer: u32, num_layers: u32) -> Result<f64, DeriveError> {
    if layer >= num_layers {
        return Err(DeriveError::LayerOutOfRange { layer, num_layers });
    }
    Ok(f64::from(layer) / f64::from(num_layers))
}

/// Fraction of behavioural recovery attributable to the circuit:
/// `(acc_circuit - acc_ablated) / (acc_model - acc_ablated)`.
pub fn faithfulness(
    acc_circuit: f64,
    acc_model: f64,
    acc_ablated: f64,
) -> Result<f64, DeriveError> {
    let denom = acc_model - acc_ablated;
    if denom == 0.0 {
        return Err(DeriveError::FaithfulnessUndefined);
    }
    Ok((acc_circuit - acc_ablated) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureConfig {
    /// Total degree at which a node counts as a hub.
    pub hub_degree: u32,
    /// Edges spanning more than this many layers are skip connections.
    pub skip_gap: u32,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig { hub_degree: 4, skip_gap: 1 }
    }
}

/// Numeric facts about one circuit. `motifs` starts empty and is filled by
/// the motif detector; `faithfulness` attaches once evaluations exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralFacts {
    /// Typed component count.
    pub size: u32,
    /// Share of each typed kind among typed components; sums to 1.
    pub component_ratio: BTreeMap<NodeKind, f64>,
    /// `size` relative to the skeleton's component capacity
    /// `num_layers * (heads_per_layer + 1)`.
    pub rel_size: f64,
    /// (min, max) normalised depth over typed nodes.
    pub layer_span: (f64, f64),
    /// Mean normalised depth over typed nodes.
    pub depth_mean: f64,
    pub density: f64,
    pub skip_connections: u32,
    pub hub_count: u32,
    /// Ordered kind pairs realised by some edge (short kind names).
    pub edge_kind_pairs: BTreeSet<(String, String)>,
    /// Kind triples realised by some directed 2-edge path over three
    /// distinct nodes.
    pub edge_kind_triples: BTreeSet<(String, String, String)>,
    pub motifs: BTreeSet<Motif>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub faithfulness: Option<f64>,
}

/// Derive the numeric layer of facts from the graph.
pub fn derive_structural_facts(
    circuit: &Circuit,
    config: &StructureConfig,
) -> Result<StructuralFacts, DeriveError> {
    let typed: Vec<&Node> = circuit.typed_nodes().collect();
    if typed.is_empty() {
        return Err(DeriveError::NoTypedComponents(circuit.id.clone()));
    }
    let size = typed.len() as u32;

    let mut counts: BTreeMap<NodeKind, u32> = BTreeMap::new();
    counts.insert(NodeKind::AttnHead, 0);
    counts.insert(NodeKind::MlpBlock, 0);
    for n in &typed {
        *counts.entry(n.kind).or_insert(0) += 1;
    }
    let component_ratio: BTreeMap<NodeKind, f64> = counts
        .into_iter()
        .map(|(k, c)| (k, f64::from(c) / f64::from(size)))
        .collect();

    let capacity =
        f64::from(circuit.skeleton.num_layers) * f64::from(circuit.skeleton.heads_per_layer + 1);
    let rel_size = f64::from(size) / capacity;

    let mut depth_min = f64::INFINITY;
    let mut depth_max = f64::NEG_INFINITY;
    let mut depth_sum = 0.0;
    for n in &typed {
        let d = normalised_depth(n.layer, circuit.skeleton.num_layers)?;
        depth_min = depth_min.min(d);
        depth_max = depth_max.max(d);
        depth_sum += d;
    }
    let depth_mean = depth_sum / f64::from(size);

    // Untyped nodes still need valid layers even though they do not enter
    // the span.
    for n in &circuit.nodes {
        normalised_depth(n.layer, circuit.skeleton.num_layers)?;
    }

    let v = circuit.nodes.len() as f64;
    let density = if circuit.nodes.len() > 1 {
        circuit.edges.len() as f64 / (v * (v - 1.0))
    } else {
        0.0
    };

    let mut skip_connections = 0;
    let mut degree: BTreeMap<&str, u32> = BTreeMap::new();
    let mut edge_kind_pairs = BTreeSet::new();
    for e in &circuit.edges {
        let src = circuit.node(&e.src).expect("edge endpoints resolve");
        let dst = circuit.node(&e.dst).expect("edge endpoints resolve");
        if src.layer.abs_diff(dst.layer) > config.skip_gap {
            skip_connections += 1;
        }
        *degree.entry(e.src.as_str()).or_insert(0) += 1;
        *degree.entry(e.dst.as_str()).or_insert(0) += 1;
        edge_kind_pairs.insert((src.kind.short().to_string(), dst.kind.short().to_string()));
    }
    let hub_count = degree.values().filter(|&&d| d >= config.hub_degree).count() as u32;

    let mut edge_kind_triples = BTreeSet::new();
    for (u, v, w) in two_edge_paths(circuit) {
        edge_kind_triples.insert((
            circuit.kind_of(u).short().to_string(),
            circuit.kind_of(v).short().to_string(),
            circuit.kind_of(w).short().to_string(),
        ));
    }

    Ok(StructuralFacts {
        size,
        component_ratio,
        rel_size,
        layer_span: (depth_min, depth_max),
        depth_mean,
        density,
        skip_connections,
        hub_count,
        edge_kind_pairs,
        edge_kind_triples,
        motifs: BTreeSet::new(),
        faithfulness: None,
    })
}

/// Directed two-edge paths `u -> v -> w` over three distinct nodes.
pub fn two_edge_paths(circuit: &Circuit) -> Vec<(&str, &str, &str)> {
    let mut out_edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &circuit.edges {
        out_edges.entry(e.src.as_str()).or_default().push(e.dst.as_str());
    }
    let mut paths = Vec::new();
    for e in &circuit.edges {
        if let Some(nexts) = out_edges.get(e.dst.as_str()) {
            for &w in nexts {
                if w != e.src.as_str() {
                    paths.push((e.src.as_str(), e.dst.as_str(), w));
                }
            }
        }
    }
    paths
}
