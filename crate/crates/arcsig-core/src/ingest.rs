//! Circuit document ingestion.
//!
//! One structured text document per circuit, TOML-shaped, with sections
//! `provenance`, `skeleton`, `nodes`, `edges` and optional `cfs` and
//! `evaluations`. Parsing validates referential integrity (unique node ids,
//! resolving edge endpoints, layers inside the skeleton) and reports every
//! problem with the field path that caused it, e.g. `edges[3].dst`.
//!
//! Unknown fields are errors in [`ParseMode::Strict`] and warnings in
//! [`ParseMode::Lenient`]. Rendering is canonical (sorted nodes and edges,
//! fixed section order), so render → parse → render is a fixed point.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use toml::Value;

use crate::circuit::{Circuit, Edge, ModelSkeleton, Node, NodeKind, Provenance};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("{path}: {msg}")]
pub struct ParseError {
    pub path: String,
    pub msg: String,
}

impl ParseError {
    fn new(path: impl Into<String>, msg: impl Into<String>) -> Self {
        ParseError { path: path.into(), msg: msg.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

/// Raw per-component functional data as ingested: a direct logit
/// attribution value and two role→mass profiles. Marginality and summaries
/// are derived downstream, never stored here.
#[derive(Debug, Clone, PartialEq)]
pub struct CfsEntry {
    pub dla: f64,
    pub linguistic: BTreeMap<String, f64>,
    pub task_specific: BTreeMap<String, f64>,
}

/// Replayed evaluation accuracies: named conditions plus an optional list
/// of ablated-random-subgraph accuracies, index-aligned with the sampler.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluations {
    pub conditions: BTreeMap<String, f64>,
    pub random_subgraph: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitDocument {
    pub circuit: Circuit,
    pub cfs: BTreeMap<String, CfsEntry>,
    pub evaluations: Option<Evaluations>,
}

const TOP_KEYS: &[&str] = &["provenance", "skeleton", "nodes", "edges", "cfs", "evaluations"];
const PROVENANCE_KEYS: &[&str] = &["task", "model_id", "discovery_method", "split"];
const SKELETON_KEYS: &[&str] = &["model_id", "num_layers", "heads_per_layer", "family"];
const NODE_KEYS: &[&str] = &["id", "kind", "layer", "head"];
const EDGE_KEYS: &[&str] = &["src", "dst", "score"];
const CFS_KEYS: &[&str] = &["dla", "linguistic", "task_specific"];

struct Walk {
    mode: ParseMode,
    warnings: Vec<String>,
}

impl Walk {
    fn unknown_fields(
        &mut self,
        table: &toml::Table,
        path: &str,
        allowed: &[&str],
    ) -> Result<(), ParseError> {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                let loc = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                match self.mode {
                    ParseMode::Strict => {
                        return Err(ParseError::new(loc, "unknown field"));
                    }
                    ParseMode::Lenient => {
                        self.warnings.push(format!("{loc}: unknown field ignored"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn want_table<'a>(v: &'a Value, path: &str) -> Result<&'a toml::Table, ParseError> {
    v.as_table().ok_or_else(|| ParseError::new(path, "expected a table"))
}

fn req<'a>(t: &'a toml::Table, path: &str, key: &str) -> Result<&'a Value, ParseError> {
    t.get(key).ok_or_else(|| ParseError::new(format!("{path}.{key}"), "missing field"))
}

fn as_str(v: &Value, path: &str) -> Result<String, ParseError> {
    v.as_str().map(str::to_string).ok_or_else(|| ParseError::new(path, "expected a string"))
}

fn as_u32(v: &Value, path: &str) -> Result<u32, ParseError> {
    v.as_integer()
        .and_then(|i| u32::try_from(i).ok())
        .ok_or_else(|| ParseError::new(path, "expected a non-negative integer"))
}

fn as_f64(v: &Value, path: &str) -> Result<f64, ParseError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(ParseError::new(path, "expected a number")),
    }
}

fn req_str(t: &toml::Table, path: &str, key: &str) -> Result<String, ParseError> {
    as_str(req(t, path, key)?, &format!("{path}.{key}"))
}

fn profile(
    t: &toml::Table,
    path: &str,
    key: &str,
) -> Result<BTreeMap<String, f64>, ParseError> {
    let mut out = BTreeMap::new();
    let Some(v) = t.get(key) else { return Ok(out) };
    let path = format!("{path}.{key}");
    let table = want_table(v, &path)?;
    for (role, mass) in table {
        let mpath = format!("{path}.{role}");
        let m = as_f64(mass, &mpath)?;
        if !(m >= 0.0) {
            return Err(ParseError::new(mpath, "mass must be non-negative"));
        }
        out.insert(role.clone(), m);
    }
    if !out.is_empty() {
        let sum: f64 = out.values().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(ParseError::new(path, format!("masses sum to {sum}, expected 1")));
        }
    }
    Ok(out)
}

/// Parse one circuit document. Returns the document plus any lenient-mode
/// warnings.
pub fn parse_document(
    text: &str,
    mode: ParseMode,
) -> Result<(CircuitDocument, Vec<String>), ParseError> {
    let root: toml::Table =
        text.parse().map_err(|e: toml::de::Error| ParseError::new("document", e.to_string()))?;
    let mut walk = Walk { mode, warnings: Vec::new() };
    walk.unknown_fields(&root, "", TOP_KEYS)?;

    let prov_table = want_table(req(&root, "document", "provenance")?, "provenance")?;
    walk.unknown_fields(prov_table, "provenance", PROVENANCE_KEYS)?;
    let provenance = Provenance {
        task: req_str(prov_table, "provenance", "task")?,
        model_id: req_str(prov_table, "provenance", "model_id")?,
        discovery_method: req_str(prov_table, "provenance", "discovery_method")?,
        split: req_str(prov_table, "provenance", "split")?,
    };

    let skel_table = want_table(req(&root, "document", "skeleton")?, "skeleton")?;
    walk.unknown_fields(skel_table, "skeleton", SKELETON_KEYS)?;
    let skeleton = ModelSkeleton {
        model_id: req_str(skel_table, "skeleton", "model_id")?,
        num_layers: as_u32(req(skel_table, "skeleton", "num_layers")?, "skeleton.num_layers")?,
        heads_per_layer: as_u32(
            req(skel_table, "skeleton", "heads_per_layer")?,
            "skeleton.heads_per_layer",
        )?,
        family: req_str(skel_table, "skeleton", "family")?,
    };
    if skeleton.num_layers == 0 {
        return Err(ParseError::new("skeleton.num_layers", "must be positive"));
    }

    let nodes_val = req(&root, "document", "nodes")?;
    let nodes_arr =
        nodes_val.as_array().ok_or_else(|| ParseError::new("nodes", "expected an array"))?;
    if nodes_arr.is_empty() {
        return Err(ParseError::new("nodes", "a circuit needs at least one node"));
    }
    let mut nodes = Vec::with_capacity(nodes_arr.len());
    let mut seen_ids = BTreeMap::new();
    for (i, nv) in nodes_arr.iter().enumerate() {
        let path = format!("nodes[{i}]");
        let nt = want_table(nv, &path)?;
        walk.unknown_fields(nt, &path, NODE_KEYS)?;
        let id = req_str(nt, &path, "id")?;
        if let Some(prev) = seen_ids.insert(id.clone(), i) {
            return Err(ParseError::new(
                format!("{path}.id"),
                format!("duplicate node id {id:?} (first at nodes[{prev}])"),
            ));
        }
        let kind_s = req_str(nt, &path, "kind")?;
        let kind = NodeKind::parse(&kind_s).ok_or_else(|| {
            ParseError::new(format!("{path}.kind"), format!("unknown kind {kind_s:?}"))
        })?;
        let layer = as_u32(req(nt, &path, "layer")?, &format!("{path}.layer"))?;
        if layer >= skeleton.num_layers {
            return Err(ParseError::new(
                format!("{path}.layer"),
                format!("layer {layer} out of range for {} layers", skeleton.num_layers),
            ));
        }
        let head = match nt.get("head") {
            Some(h) => Some(as_u32(h, &format!("{path}.head"))?),
            None => None,
        };
        match (kind, head) {
            (NodeKind::AttnHead, None) => {
                return Err(ParseError::new(
                    format!("{path}.head"),
                    "attention heads need a head index",
                ))
            }
            (NodeKind::AttnHead, Some(h)) if h >= skeleton.heads_per_layer => {
                return Err(ParseError::new(
                    format!("{path}.head"),
                    format!("head {h} out of range for {} heads", skeleton.heads_per_layer),
                ))
            }
            (k, Some(_)) if k != NodeKind::AttnHead => {
                return Err(ParseError::new(
                    format!("{path}.head"),
                    format!("{} nodes carry no head index", k.name()),
                ))
            }
            _ => {}
        }
        nodes.push(Node { id, kind, layer, head });
    }

    let mut edges = Vec::new();
    if let Some(ev) = root.get("edges") {
        let arr = ev.as_array().ok_or_else(|| ParseError::new("edges", "expected an array"))?;
        let mut seen_pairs = BTreeMap::new();
        for (i, v) in arr.iter().enumerate() {
            let path = format!("edges[{i}]");
            let et = want_table(v, &path)?;
            walk.unknown_fields(et, &path, EDGE_KEYS)?;
            let src = req_str(et, &path, "src")?;
            let dst = req_str(et, &path, "dst")?;
            for (key, id) in [("src", &src), ("dst", &dst)] {
                if !seen_ids.contains_key(id) {
                    return Err(ParseError::new(
                        format!("{path}.{key}"),
                        format!("dangling endpoint {id:?}"),
                    ));
                }
            }
            if src == dst {
                return Err(ParseError::new(format!("{path}.dst"), "self-loops are not allowed"));
            }
            let score = as_f64(req(et, &path, "score")?, &format!("{path}.score"))?;
            if !(score >= 0.0) || !score.is_finite() {
                return Err(ParseError::new(
                    format!("{path}.score"),
                    "score must be finite and non-negative",
                ));
            }
            if let Some(prev) = seen_pairs.insert((src.clone(), dst.clone()), i) {
                return Err(ParseError::new(
                    path,
                    format!("duplicate edge {src:?} -> {dst:?} (first at edges[{prev}])"),
                ));
            }
            edges.push(Edge { src, dst, score });
        }
    }

    let mut cfs = BTreeMap::new();
    if let Some(cv) = root.get("cfs") {
        let table = want_table(cv, "cfs")?;
        for (node_id, entry) in table {
            let path = format!("cfs.{node_id}");
            if !seen_ids.contains_key(node_id) {
                return Err(ParseError::new(path, "entry for a node that is not in the circuit"));
            }
            let et = want_table(entry, &path)?;
            walk.unknown_fields(et, &path, CFS_KEYS)?;
            let dla = as_f64(req(et, &path, "dla")?, &format!("{path}.dla"))?;
            let linguistic = profile(et, &path, "linguistic")?;
            let task_specific = profile(et, &path, "task_specific")?;
            cfs.insert(node_id.clone(), CfsEntry { dla, linguistic, task_specific });
        }
    }

    let mut evaluations = None;
    if let Some(ev) = root.get("evaluations") {
        let table = want_table(ev, "evaluations")?;
        let mut out = Evaluations::default();
        for (key, v) in table {
            let path = format!("evaluations.{key}");
            if key == "random_subgraph" {
                let arr =
                    v.as_array().ok_or_else(|| ParseError::new(&*path, "expected an array"))?;
                for (i, a) in arr.iter().enumerate() {
                    let apath = format!("{path}[{i}]");
                    let acc = as_f64(a, &apath)?;
                    check_accuracy(acc, &apath)?;
                    out.random_subgraph.push(acc);
                }
            } else {
                let acc = as_f64(v, &path)?;
                check_accuracy(acc, &path)?;
                out.conditions.insert(key.clone(), acc);
            }
        }
        evaluations = Some(out);
    }

    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    edges.sort_by(|a, b| (a.src.as_str(), a.dst.as_str()).cmp(&(b.src.as_str(), b.dst.as_str())));
    let id = format!("{}:{}:{}", provenance.model_id, provenance.task, provenance.split);
    let circuit = Circuit { id, provenance, skeleton, nodes, edges };
    Ok((CircuitDocument { circuit, cfs, evaluations }, walk.warnings))
}

fn check_accuracy(acc: f64, path: &str) -> Result<(), ParseError> {
    if !(0.0..=1.0).contains(&acc) {
        return Err(ParseError::new(path, format!("accuracy {acc} outside [0, 1]")));
    }
    Ok(())
}

// === rendering ===

fn toml_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn toml_key(s: &str) -> String {
    let bare = !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if bare {
        s.to_string()
    } else {
        toml_str(s)
    }
}

/// Keep every numeric value float-typed in the output so re-parsing sees
/// the same TOML types.
fn toml_float(f: f64) -> String {
    if f.fract() == 0.0 && f.is_finite() && f.abs() < 1e15 {
        format!("{f:.1}")
    } else {
        format!("{f}")
    }
}

fn render_profile(out: &mut String, key: &str, profile: &BTreeMap<String, f64>) {
    if profile.is_empty() {
        return;
    }
    let body: Vec<String> =
        profile.iter().map(|(role, mass)| format!("{} = {}", toml_key(role), toml_float(*mass))).collect();
    let _ = writeln!(out, "{key} = {{ {} }}", body.join(", "));
}

/// Canonical text form of a document; [`parse_document`] inverts it.
pub fn render_document(doc: &CircuitDocument) -> String {
    let mut out = String::new();
    let c = &doc.circuit;
    let _ = writeln!(out, "[provenance]");
    let _ = writeln!(out, "task = {}", toml_str(&c.provenance.task));
    let _ = writeln!(out, "model_id = {}", toml_str(&c.provenance.model_id));
    let _ = writeln!(out, "discovery_method = {}", toml_str(&c.provenance.discovery_method));
    let _ = writeln!(out, "split = {}", toml_str(&c.provenance.split));
    let _ = writeln!(out);
    let _ = writeln!(out, "[skeleton]");
    let _ = writeln!(out, "model_id = {}", toml_str(&c.skeleton.model_id));
    let _ = writeln!(out, "num_layers = {}", c.skeleton.num_layers);
    let _ = writeln!(out, "heads_per_layer = {}", c.skeleton.heads_per_layer);
    let _ = writeln!(out, "family = {}", toml_str(&c.skeleton.family));

    let mut nodes = c.nodes.clone();
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    for n in &nodes {
        let _ = writeln!(out);
        let _ = writeln!(out, "[[nodes]]");
        let _ = writeln!(out, "id = {}", toml_str(&n.id));
        let _ = writeln!(out, "kind = {}", toml_str(n.kind.name()));
        let _ = writeln!(out, "layer = {}", n.layer);
        if let Some(h) = n.head {
            let _ = writeln!(out, "head = {h}");
        }
    }

    let mut edges = c.edges.clone();
    edges.sort_by(|a, b| (a.src.clone(), a.dst.clone()).cmp(&(b.src.clone(), b.dst.clone())));
    for e in &edges {
        let _ = writeln!(out);
        let _ = writeln!(out, "[[edges]]");
        let _ = writeln!(out, "src = {}", toml_str(&e.src));
        let _ = writeln!(out, "dst = {}", toml_str(&e.dst));
        let _ = writeln!(out, "score = {}", toml_float(e.score));
    }

    for (node_id, entry) in &doc.cfs {
        let _ = writeln!(out);
        let _ = writeln!(out, "[cfs.{}]", toml_key(node_id));
        let _ = writeln!(out, "dla = {}", toml_float(entry.dla));
        render_profile(&mut out, "linguistic", &entry.linguistic);
        render_profile(&mut out, "task_specific", &entry.task_specific);
    }

    if let Some(ev) = &doc.evaluations {
        let _ = writeln!(out);
        let _ = writeln!(out, "[evaluations]");
        for (cond, acc) in &ev.conditions {
            let _ = writeln!(out, "{} = {}", toml_key(cond), toml_float(*acc));
        }
        if !ev.random_subgraph.is_empty() {
            let vals: Vec<String> = ev.random_subgraph.iter().map(|a| toml_float(*a)).collect();
            let _ = writeln!(out, "random_subgraph = [{}]", vals.join(", "));
        }
    }
    out
}

/// Builders shared by unit tests across the crate.
#[cfg(test)]
pub mod test_support {
    use super::*;

    pub fn node(id: &str, kind: NodeKind, layer: u32, head: Option<u32>) -> Node {
        Node { id: id.to_string(), kind, layer, head }
    }

    pub fn edge(src: &str, dst: &str, score: f64) -> Edge {
        Edge { src: src.to_string(), dst: dst.to_string(), score }
    }

    /// A circuit on the 16x8 skeleton used by most tests.
    pub fn circuit_with(mut nodes: Vec<Node>, mut edges: Vec<Edge>) -> Circuit {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        edges.sort_by(|a, b| (a.src.clone(), a.dst.clone()).cmp(&(b.src.clone(), b.dst.clone())));
        Circuit {
            id: "test:task:s0".into(),
            provenance: Provenance {
                task: "task".into(),
                model_id: "test".into(),
                discovery_method: "manual".into(),
                split: "s0".into(),
            },
            skeleton: ModelSkeleton {
                model_id: "test".into(),
                num_layers: 16,
                heads_per_layer: 8,
                family: "decoder".into(),
            },
            nodes,
            edges,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"
[provenance]
task = "ioi"
model_id = "py-1b"
discovery_method = "eap"
split = "s0"

[skeleton]
model_id = "py-1b"
num_layers = 16
heads_per_layer = 8
family = "decoder"

[[nodes]]
id = "a5.h3"
kind = "attn_head"
layer = 5
head = 3

[[nodes]]
id = "m7"
kind = "mlp_block"
layer = 7

[[edges]]
src = "a5.h3"
dst = "m7"
score = 0.42

[cfs."a5.h3"]
dla = 0.8
linguistic = { object = 0.7, function = 0.3 }

[evaluations]
full_model = 0.9
circuit_only = 0.85
circuit_ablated = 0.3
random_subgraph = [0.88, 0.91]
"#;

    #[test]
    fn parses_a_full_document() {
        let (doc, warnings) = parse_document(DOC, ParseMode::Strict).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(doc.circuit.id, "py-1b:ioi:s0");
        assert_eq!(doc.circuit.nodes.len(), 2);
        assert_eq!(doc.circuit.edges[0].score, 0.42);
        assert_eq!(doc.cfs["a5.h3"].dla, 0.8);
        let ev = doc.evaluations.as_ref().unwrap();
        assert_eq!(ev.conditions["full_model"], 0.9);
        assert_eq!(ev.random_subgraph, vec![0.88, 0.91]);
    }

    #[test]
    fn render_parse_round_trips() {
        let (doc, _) = parse_document(DOC, ParseMode::Strict).unwrap();
        let text = render_document(&doc);
        let (again, warnings) = parse_document(&text, ParseMode::Strict).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(doc, again);
        // Canonical output is a fixed point.
        assert_eq!(text, render_document(&again));
    }

    #[test]
    fn dangling_endpoint_is_reported_with_path() {
        let bad = DOC.replace("dst = \"m7\"", "dst = \"mX\"");
        let err = parse_document(&bad, ParseMode::Strict).unwrap_err();
        assert_eq!(err.path, "edges[0].dst");
        assert!(err.msg.contains("mX"));
    }

    #[test]
    fn unknown_field_strict_vs_lenient() {
        let extra = format!("{DOC}\n[provenance2]\nx = 1\n");
        let err = parse_document(&extra, ParseMode::Strict).unwrap_err();
        assert_eq!(err.path, "provenance2");
        let (_, warnings) = parse_document(&extra, ParseMode::Lenient).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("provenance2"));
    }

    #[test]
    fn head_index_required_exactly_for_attention() {
        let bad = DOC.replace("layer = 5\nhead = 3", "layer = 5");
        let err = parse_document(&bad, ParseMode::Strict).unwrap_err();
        assert_eq!(err.path, "nodes[0].head");

        let bad = DOC.replace("kind = \"mlp_block\"\nlayer = 7", "kind = \"mlp_block\"\nlayer = 7\nhead = 1");
        let err = parse_document(&bad, ParseMode::Strict).unwrap_err();
        assert_eq!(err.path, "nodes[1].head");
    }

    #[test]
    fn out_of_range_layer_is_rejected() {
        let bad = DOC.replace("layer = 7", "layer = 19");
        let err = parse_document(&bad, ParseMode::Strict).unwrap_err();
        assert_eq!(err.path, "nodes[1].layer");
    }

    #[test]
    fn profile_mass_sum_is_checked() {
        let bad = DOC.replace("object = 0.7", "object = 0.9");
        let err = parse_document(&bad, ParseMode::Strict).unwrap_err();
        assert_eq!(err.path, "cfs.a5.h3.linguistic");
    }

    #[test]
    fn duplicate_nodes_and_edges_are_rejected() {
        let dup = format!(
            "{DOC}\n[[nodes]]\nid = \"m7\"\nkind = \"mlp_block\"\nlayer = 7\n"
        );
        let err = parse_document(&dup, ParseMode::Strict).unwrap_err();
        assert_eq!(err.path, "nodes[2].id");

        let dup = format!("{DOC}\n[[edges]]\nsrc = \"a5.h3\"\ndst = \"m7\"\nscore = 0.1\n");
        let err = parse_document(&dup, ParseMode::Strict).unwrap_err();
        assert_eq!(err.path, "edges[1]");
    }

    #[test]
    fn accuracy_bounds_are_checked() {
        let bad = DOC.replace("full_model = 0.9", "full_model = 1.2");
        let err = parse_document(&bad, ParseMode::Strict).unwrap_err();
        assert_eq!(err.path, "evaluations.full_model");
    }
}
