//! Behavioural, causal, minimality and random-baseline checks behind an
//! evaluation oracle.
//!
//! Real task accuracy needs model inference, which lives outside this
//! crate. Everything above that line is pure: callers plug in an oracle
//! that answers accuracy queries, and this module turns the answers into
//! the validation stats attached to a mechanism record. A file-backed
//! oracle replays accuracies recorded in the ingestion document; tests use
//! synthetic oracles that compute accuracy from subgraph structure.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{faithfulness, Circuit, Edge, ModelSkeleton, Node, NodeKind};
use crate::ingest::Evaluations;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("oracle cannot answer this query: {0}")]
    Unsupported(String),
    #[error("no recorded evaluation for {0}")]
    Missing(String),
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ValidationError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("cannot size-match random subgraphs: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    FullModel,
    CircuitOnly,
    CircuitAblated,
    RandomSubgraph,
}

impl Condition {
    pub fn key(self) -> &'static str {
        match self {
            Condition::FullModel => "full_model",
            Condition::CircuitOnly => "circuit_only",
            Condition::CircuitAblated => "circuit_ablated",
            Condition::RandomSubgraph => "random_subgraph",
        }
    }
}

/// One accuracy request. When `nodes`/`edges` are absent the query refers
/// to the circuit as stored; otherwise to the given subgraph.
#[derive(Debug, Clone)]
pub struct OracleQuery<'a> {
    pub circuit_id: &'a str,
    pub condition: Condition,
    pub nodes: Option<&'a [Node]>,
    pub edges: Option<&'a [Edge]>,
    /// Which random draw this is, for replay from recorded scores.
    pub sample_index: Option<usize>,
}

impl<'a> OracleQuery<'a> {
    pub fn whole(circuit_id: &'a str, condition: Condition) -> Self {
        OracleQuery { circuit_id, condition, nodes: None, edges: None, sample_index: None }
    }
}

pub trait EvaluationOracle {
    fn evaluate(&self, query: &OracleQuery) -> Result<f64, OracleError>;
}

/// Replays accuracies recorded in a circuit document. Cannot evaluate
/// reduced subgraphs; random-subgraph queries are answered by draw index
/// from the recorded list.
#[derive(Debug, Clone)]
pub struct FileOracle {
    conditions: BTreeMap<String, f64>,
    random_scores: Vec<f64>,
}

impl FileOracle {
    pub fn new(evaluations: &Evaluations) -> Self {
        FileOracle {
            conditions: evaluations.conditions.clone(),
            random_scores: evaluations.random_subgraph.clone(),
        }
    }
}

impl EvaluationOracle for FileOracle {
    fn evaluate(&self, query: &OracleQuery) -> Result<f64, OracleError> {
        if query.condition == Condition::RandomSubgraph {
            let i = query.sample_index.ok_or_else(|| {
                OracleError::Unsupported("random query without a draw index".to_string())
            })?;
            return self
                .random_scores
                .get(i)
                .copied()
                .ok_or_else(|| OracleError::Missing(format!("random draw {i}")));
        }
        if query.nodes.is_some() || query.edges.is_some() {
            return Err(OracleError::Unsupported(
                "recorded evaluations cover the stored circuit only".to_string(),
            ));
        }
        self.conditions
            .get(query.condition.key())
            .copied()
            .ok_or_else(|| OracleError::Missing(query.condition.key().to_string()))
    }
}

/// Dispatches queries to per-circuit recorded evaluations by circuit id.
#[derive(Debug, Clone, Default)]
pub struct OracleSet {
    by_circuit: BTreeMap<String, FileOracle>,
}

impl OracleSet {
    pub fn new() -> Self {
        OracleSet::default()
    }

    pub fn insert(&mut self, circuit_id: impl Into<String>, evaluations: &Evaluations) {
        self.by_circuit.insert(circuit_id.into(), FileOracle::new(evaluations));
    }
}

impl EvaluationOracle for OracleSet {
    fn evaluate(&self, query: &OracleQuery) -> Result<f64, OracleError> {
        self.by_circuit
            .get(query.circuit_id)
            .ok_or_else(|| {
                OracleError::Missing(format!("no recorded evaluations for {}", query.circuit_id))
            })?
            .evaluate(query)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    /// Minimum circuit-only accuracy.
    pub theta_behav: f64,
    /// Minimum ablation drop.
    pub theta_causal: f64,
    /// Tolerated removable-edge fraction before a circuit counts as
    /// non-minimal.
    pub epsilon: f64,
    pub n_random: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            theta_behav: 0.50,
            theta_causal: 0.10,
            epsilon: 0.20,
            n_random: 50,
            seed: 0,
            alpha: 0.05,
        }
    }
}

/// Task-performance drop caused by ablating the circuit. May be negative.
pub fn causal_relevance(
    oracle: &dyn EvaluationOracle,
    circuit: &Circuit,
) -> Result<f64, OracleError> {
    let full = oracle.evaluate(&OracleQuery::whole(&circuit.id, Condition::FullModel))?;
    let ablated =
        oracle.evaluate(&OracleQuery::whole(&circuit.id, Condition::CircuitAblated))?;
    Ok(full - ablated)
}

/// Does the circuit alone reach the behavioural floor?
pub fn check_behavioural(
    oracle: &dyn EvaluationOracle,
    circuit: &Circuit,
    theta_behav: f64,
) -> Result<bool, OracleError> {
    let acc = oracle.evaluate(&OracleQuery::whole(&circuit.id, Condition::CircuitOnly))?;
    Ok(acc >= theta_behav)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalAttempt {
    pub src: String,
    pub dst: String,
    pub acc_after: f64,
    pub delta_t_after: f64,
    pub removed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalityReport {
    pub is_minimal: bool,
    pub removed: usize,
    pub initial_edges: usize,
    pub trace: Vec<RemovalAttempt>,
    /// Oracle failure that cut the loop short; the verdict then covers
    /// only the attempts made.
    pub aborted: Option<String>,
}

/// Greedy edge-ablation minimality check.
///
/// Repeatedly removes the lowest-score edge whose removal keeps both the
/// behavioural floor and the causal threshold, then rescans. The circuit
/// is minimal when the loop cannot shrink the edge set by more than an
/// epsilon fraction of its original size.
pub fn check_minimality(
    oracle: &dyn EvaluationOracle,
    circuit: &Circuit,
    config: &ValidationConfig,
) -> MinimalityReport {
    let initial_edges = circuit.edges.len();
    let allowance = config.epsilon * initial_edges as f64;
    let mut trace = Vec::new();
    let mut removed = 0usize;

    let full = match oracle.evaluate(&OracleQuery::whole(&circuit.id, Condition::FullModel))
    {
        Ok(v) => v,
        Err(e) => {
            return MinimalityReport {
                is_minimal: true,
                removed,
                initial_edges,
                trace,
                aborted: Some(e.to_string()),
            }
        }
    };

    let mut current: Vec<Edge> = circuit.edges.clone();
    let mut aborted = None;
    'outer: loop {
        let mut order: Vec<usize> = (0..current.len()).collect();
        order.sort_by(|&a, &b| {
            let ea = &current[a];
            let eb = &current[b];
            ea.score
                .partial_cmp(&eb.score)
                .expect("edge scores are finite")
                .then_with(|| (&ea.src, &ea.dst).cmp(&(&eb.src, &eb.dst)))
        });
        for idx in order {
            let candidate: Vec<Edge> = current
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != idx)
                .map(|(_, e)| e.clone())
                .collect();
            let reduced_query = |condition| OracleQuery {
                circuit_id: &circuit.id,
                condition,
                nodes: Some(&circuit.nodes),
                edges: Some(&candidate),
                sample_index: None,
            };
            let acc_after = match oracle.evaluate(&reduced_query(Condition::CircuitOnly)) {
                Ok(v) => v,
                Err(e) => {
                    aborted = Some(e.to_string());
                    break 'outer;
                }
            };
            let ablated = match oracle.evaluate(&reduced_query(Condition::CircuitAblated)) {
                Ok(v) => v,
                Err(e) => {
                    aborted = Some(e.to_string());
                    break 'outer;
                }
            };
            let delta_t_after = full - ablated;
            let keep = acc_after >= config.theta_behav && delta_t_after >= config.theta_causal;
            let edge = &current[idx];
            trace.push(RemovalAttempt {
                src: edge.src.clone(),
                dst: edge.dst.clone(),
                acc_after,
                delta_t_after,
                removed: keep,
            });
            if keep {
                current = candidate;
                removed += 1;
                continue 'outer;
            }
        }
        break;
    }

    MinimalityReport {
        is_minimal: removed as f64 <= allowance,
        removed,
        initial_edges,
        trace,
        aborted,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub n_random: usize,
    pub p_value: f64,
    pub random_mean: f64,
    pub real_delta: f64,
    pub deltas: Vec<f64>,
}

/// Sample a subgraph with the circuit's per-kind node counts and edge
/// count from the skeleton's component universe.
fn sample_matched_subgraph(
    rng: &mut ChaCha8Rng,
    circuit: &Circuit,
    skeleton: &ModelSkeleton,
) -> Result<(Vec<Node>, Vec<Edge>), ValidationError> {
    let mut counts: BTreeMap<NodeKind, usize> = BTreeMap::new();
    for n in &circuit.nodes {
        *counts.entry(n.kind).or_insert(0) += 1;
    }
    let mut nodes = Vec::new();
    for (&kind, &want) in &counts {
        let universe: Vec<Node> = match kind {
            NodeKind::AttnHead => (0..skeleton.num_layers)
                .flat_map(|layer| {
                    (0..skeleton.heads_per_layer).map(move |head| Node {
                        id: format!("rs_a{layer}_{head}"),
                        kind: NodeKind::AttnHead,
                        layer,
                        head: Some(head),
                    })
                })
                .collect(),
            NodeKind::MlpBlock => (0..skeleton.num_layers)
                .map(|layer| Node {
                    id: format!("rs_m{layer}"),
                    kind: NodeKind::MlpBlock,
                    layer,
                    head: None,
                })
                .collect(),
            NodeKind::Embed => vec![Node {
                id: "rs_embed".to_string(),
                kind: NodeKind::Embed,
                layer: 0,
                head: None,
            }],
            NodeKind::Logits => vec![Node {
                id: "rs_logits".to_string(),
                kind: NodeKind::Logits,
                layer: skeleton.num_layers.saturating_sub(1),
                head: None,
            }],
        };
        if want > universe.len() {
            return Err(ValidationError::Infeasible(format!(
                "{} of kind {} requested, skeleton holds {}",
                want,
                kind.name(),
                universe.len()
            )));
        }
        let picked = rand::seq::index::sample(rng, universe.len(), want);
        nodes.extend(picked.iter().map(|i| universe[i].clone()));
    }
    let m = nodes.len();
    let want_edges = circuit.edges.len();
    let possible = m * m.saturating_sub(1);
    if want_edges > possible {
        return Err(ValidationError::Infeasible(format!(
            "{want_edges} edges requested over {m} nodes"
        )));
    }
    let picked = rand::seq::index::sample(rng, possible, want_edges);
    let edges = picked
        .iter()
        .map(|flat| {
            let i = flat / (m - 1);
            let mut j = flat % (m - 1);
            if j >= i {
                j += 1;
            }
            Edge { src: nodes[i].id.clone(), dst: nodes[j].id.clone(), score: 0.0 }
        })
        .collect();
    Ok((nodes, edges))
}

/// One-sided significance of the real ablation drop against size-matched
/// random subgraphs: p = (1 + #{random >= real}) / (n + 1).
pub fn random_baseline(
    oracle: &dyn EvaluationOracle,
    circuit: &Circuit,
    skeleton: &ModelSkeleton,
    n: usize,
    seed: u64,
) -> Result<RandomBaseline, ValidationError> {
    let full = oracle.evaluate(&OracleQuery::whole(&circuit.id, Condition::FullModel))?;
    let real_delta = causal_relevance(oracle, circuit)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deltas = Vec::with_capacity(n);
    for i in 0..n {
        let (nodes, edges) = sample_matched_subgraph(&mut rng, circuit, skeleton)?;
        let acc = oracle.evaluate(&OracleQuery {
            circuit_id: &circuit.id,
            condition: Condition::RandomSubgraph,
            nodes: Some(&nodes),
            edges: Some(&edges),
            sample_index: Some(i),
        })?;
        deltas.push(full - acc);
    }
    let at_least = deltas.iter().filter(|&&d| d >= real_delta).count();
    let p_value = (1 + at_least) as f64 / (n + 1) as f64;
    let random_mean =
        if deltas.is_empty() { 0.0 } else { deltas.iter().sum::<f64>() / deltas.len() as f64 };
    Ok(RandomBaseline { n_random: n, p_value, random_mean, real_delta, deltas })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationStats {
    pub acc_t: f64,
    pub delta_t: f64,
    /// Share of the full model's headroom the circuit recovers; absent
    /// when ablation leaves accuracy unchanged.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub faithfulness: Option<f64>,
    pub behavioural_ok: bool,
    pub causal_ok: bool,
    /// Both screening criteria hold.
    pub is_valid: bool,
    pub is_minimal: bool,
    pub minimality_trace: Vec<RemovalAttempt>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub minimality_aborted: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub random: Option<RandomBaseline>,
}

/// Full validation pass: behavioural floor, ablation drop, faithfulness,
/// greedy minimality, and the random baseline when a skeleton is given.
pub fn validate(
    oracle: &dyn EvaluationOracle,
    circuit: &Circuit,
    skeleton: Option<&ModelSkeleton>,
    config: &ValidationConfig,
) -> Result<ValidationStats, ValidationError> {
    let acc_full = oracle.evaluate(&OracleQuery::whole(&circuit.id, Condition::FullModel))?;
    let acc_t = oracle.evaluate(&OracleQuery::whole(&circuit.id, Condition::CircuitOnly))?;
    let acc_ablated =
        oracle.evaluate(&OracleQuery::whole(&circuit.id, Condition::CircuitAblated))?;
    let delta_t = acc_full - acc_ablated;
    let faith = faithfulness(acc_t, acc_full, acc_ablated).ok();
    let behavioural_ok = acc_t >= config.theta_behav;
    let causal_ok = delta_t >= config.theta_causal;
    let minimality = check_minimality(oracle, circuit, config);
    let random = match skeleton {
        Some(sk) => {
            Some(random_baseline(oracle, circuit, sk, config.n_random, config.seed)?)
        }
        None => None,
    };
    Ok(ValidationStats {
        acc_t,
        delta_t,
        faithfulness: faith,
        behavioural_ok,
        causal_ok,
        is_valid: behavioural_ok && causal_ok,
        is_minimal: minimality.is_minimal,
        minimality_trace: minimality.trace,
        minimality_aborted: minimality.aborted,
        random,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Node;
    use crate::ingest::test_support::{circuit_with, edge, node};

    fn attn(id: &str, layer: u32) -> Node {
        node(id, NodeKind::AttnHead, layer, Some(0))
    }

    fn map_evals(pairs: &[(&str, f64)]) -> Evaluations {
        Evaluations {
            conditions: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            random_subgraph: Vec::new(),
        }
    }

    #[test]
    fn ablation_drop_is_a_plain_difference() {
        let c = circuit_with(vec![attn("a", 1)], vec![]);
        let oracle = FileOracle::new(&map_evals(&[
            ("full_model", 0.9),
            ("circuit_ablated", 0.4),
        ]));
        assert_eq!(causal_relevance(&oracle, &c).unwrap(), 0.5);
        let flat = FileOracle::new(&map_evals(&[
            ("full_model", 0.7),
            ("circuit_ablated", 0.7),
        ]));
        assert_eq!(causal_relevance(&flat, &c).unwrap(), 0.0);
    }

    #[test]
    fn negative_drops_pass_through() {
        let c = circuit_with(vec![attn("a", 1)], vec![]);
        let oracle = FileOracle::new(&map_evals(&[
            ("full_model", 0.09),
            ("circuit_ablated", 1.0),
        ]));
        assert!((causal_relevance(&oracle, &c).unwrap() - (-0.91)).abs() < 1e-12);
    }

    #[test]
    fn behavioural_floor_is_inclusive() {
        let c = circuit_with(vec![attn("a", 1)], vec![]);
        let at = FileOracle::new(&map_evals(&[("circuit_only", 0.50)]));
        assert!(check_behavioural(&at, &c, 0.50).unwrap());
        let below = FileOracle::new(&map_evals(&[("circuit_only", 0.49)]));
        assert!(!check_behavioural(&below, &c, 0.50).unwrap());
        let override_up = FileOracle::new(&map_evals(&[("circuit_only", 0.7)]));
        assert!(!check_behavioural(&override_up, &c, 0.8).unwrap());
    }

    #[test]
    fn missing_conditions_are_reported() {
        let c = circuit_with(vec![attn("a", 1)], vec![]);
        let oracle = FileOracle::new(&map_evals(&[]));
        let err = causal_relevance(&oracle, &c).unwrap_err();
        assert!(matches!(err, OracleError::Missing(_)));
    }

    /// Oracle over subgraph structure: accuracy falls with each missing
    /// load-bearing edge, padding edges are inert.
    struct PaddingOracle {
        load_bearing: Vec<(String, String)>,
    }

    impl EvaluationOracle for PaddingOracle {
        fn evaluate(&self, query: &OracleQuery) -> Result<f64, OracleError> {
            let kept = |edges: &[Edge]| {
                self.load_bearing
                    .iter()
                    .filter(|(s, d)| edges.iter().any(|e| &e.src == s && &e.dst == d))
                    .count() as f64
            };
            let total = self.load_bearing.len() as f64;
            Ok(match (query.condition, query.edges) {
                (Condition::FullModel, _) => 1.0,
                (Condition::CircuitOnly, Some(edges)) if total > 0.0 => {
                    // losing any load-bearing edge tanks the accuracy
                    if kept(edges) == total {
                        1.0
                    } else {
                        0.2
                    }
                }
                (Condition::CircuitOnly, _) => 1.0,
                (Condition::CircuitAblated, Some(edges)) if total > 0.0 => {
                    1.0 - kept(edges) / total
                }
                (Condition::CircuitAblated, Some(_)) => 1.0,
                (Condition::CircuitAblated, None) => 0.0,
                (Condition::RandomSubgraph, _) => 1.0,
            })
        }
    }

    #[test]
    fn padding_edges_make_a_circuit_non_minimal() {
        // 2 load-bearing edges, 3 inert padding edges: 60% removable
        let nodes = vec![
            attn("a", 1),
            attn("b", 2),
            attn("c", 3),
            attn("d", 4),
            attn("e", 5),
        ];
        let edges = vec![
            edge("a", "b", 0.9),
            edge("b", "c", 0.8),
            edge("c", "d", 0.01),
            edge("d", "e", 0.02),
            edge("a", "e", 0.03),
        ];
        let c = circuit_with(nodes, edges);
        let oracle = PaddingOracle {
            load_bearing: vec![
                ("a".to_string(), "b".to_string()),
                ("b".to_string(), "c".to_string()),
            ],
        };
        let report = check_minimality(&oracle, &c, &ValidationConfig::default());
        assert!(!report.is_minimal);
        assert_eq!(report.removed, 3);
        assert!(report.aborted.is_none());
        // trace audit: every removal kept both criteria
        for attempt in report.trace.iter().filter(|a| a.removed) {
            assert!(attempt.acc_after >= 0.5);
            assert!(attempt.delta_t_after >= 0.1);
        }
        // padding removals happened in ascending score order
        let removed: Vec<&str> = report
            .trace
            .iter()
            .filter(|a| a.removed)
            .map(|a| a.src.as_str())
            .collect();
        assert_eq!(removed, vec!["c", "d", "a"]);
    }

    #[test]
    fn tight_circuits_are_minimal_and_tolerance_one_is_vacuous() {
        let c = circuit_with(
            vec![attn("a", 1), attn("b", 2)],
            vec![edge("a", "b", 0.9)],
        );
        let oracle = PaddingOracle {
            load_bearing: vec![("a".to_string(), "b".to_string())],
        };
        let report = check_minimality(&oracle, &c, &ValidationConfig::default());
        assert!(report.is_minimal);
        assert_eq!(report.removed, 0);
        assert!(report.trace.iter().all(|a| !a.removed));

        // with epsilon = 1 even fully removable circuits count as minimal
        let padded = circuit_with(
            vec![attn("a", 1), attn("b", 2), attn("c", 3)],
            vec![edge("a", "b", 0.9), edge("b", "c", 0.1)],
        );
        let inert = PaddingOracle { load_bearing: vec![] };
        let vacuous = ValidationConfig {
            epsilon: 1.0,
            theta_behav: 0.0,
            theta_causal: -1.0,
            ..Default::default()
        };
        let report = check_minimality(&inert, &padded, &vacuous);
        assert_eq!(report.removed, 2);
        assert!(report.is_minimal);
    }

    #[test]
    fn file_oracle_aborts_minimality_with_partial_trace() {
        let c = circuit_with(
            vec![attn("a", 1), attn("b", 2)],
            vec![edge("a", "b", 0.9)],
        );
        let oracle = FileOracle::new(&map_evals(&[
            ("full_model", 0.9),
            ("circuit_only", 0.8),
            ("circuit_ablated", 0.2),
        ]));
        let report = check_minimality(&oracle, &c, &ValidationConfig::default());
        assert!(report.aborted.is_some());
        assert_eq!(report.removed, 0);
    }

    #[test]
    fn rank_p_value_matches_exhaustive_counting() {
        let c = circuit_with(
            vec![attn("a", 1), attn("b", 2)],
            vec![edge("a", "b", 0.9)],
        );
        let skeleton = ModelSkeleton {
            model_id: "test".to_string(),
            num_layers: 16,
            heads_per_layer: 8,
            family: "test".to_string(),
        };
        // real delta = 0.9 - 0.2 = 0.7; randoms all 0.9 - 0.85 = 0.05
        let oracle = FileOracle::new(&Evaluations {
            conditions: [
                ("full_model".to_string(), 0.9),
                ("circuit_only".to_string(), 0.8),
                ("circuit_ablated".to_string(), 0.2),
            ]
            .into_iter()
            .collect(),
            random_subgraph: vec![0.85; 8],
        });
        let rb = random_baseline(&oracle, &c, &skeleton, 8, 11).unwrap();
        assert_eq!(rb.p_value, 1.0 / 9.0);
        assert!((rb.random_mean - 0.05).abs() < 1e-12);
        // worst rank: real delta below every random
        let bad = FileOracle::new(&Evaluations {
            conditions: [
                ("full_model".to_string(), 0.9),
                ("circuit_only".to_string(), 0.8),
                ("circuit_ablated".to_string(), 0.89),
            ]
            .into_iter()
            .collect(),
            random_subgraph: vec![0.1; 8],
        });
        let rb = random_baseline(&bad, &c, &skeleton, 8, 11).unwrap();
        assert_eq!(rb.p_value, 1.0);
    }

    #[test]
    fn random_baseline_is_seed_reproducible() {
        let c = circuit_with(
            vec![attn("a", 1), attn("b", 2), node("m", NodeKind::MlpBlock, 3, None)],
            vec![edge("a", "b", 0.9), edge("b", "m", 0.5)],
        );
        let skeleton = ModelSkeleton {
            model_id: "test".to_string(),
            num_layers: 16,
            heads_per_layer: 8,
            family: "test".to_string(),
        };
        struct StructOracle;
        impl EvaluationOracle for StructOracle {
            fn evaluate(&self, query: &OracleQuery) -> Result<f64, OracleError> {
                Ok(match query.condition {
                    Condition::FullModel => 1.0,
                    Condition::CircuitOnly => 0.9,
                    Condition::CircuitAblated => 0.3,
                    Condition::RandomSubgraph => {
                        // depends on which nodes were drawn
                        let nodes = query.nodes.unwrap_or(&[]);
                        let mean_layer = nodes.iter().map(|n| f64::from(n.layer)).sum::<f64>()
                            / nodes.len().max(1) as f64;
                        0.9 - mean_layer / 100.0
                    }
                })
            }
        }
        let a = random_baseline(&StructOracle, &c, &skeleton, 20, 42).unwrap();
        let b = random_baseline(&StructOracle, &c, &skeleton, 20, 42).unwrap();
        assert_eq!(a, b);
        let other = random_baseline(&StructOracle, &c, &skeleton, 20, 43).unwrap();
        assert_ne!(a.deltas, other.deltas);
    }

    #[test]
    fn infeasible_size_match_is_an_error() {
        let c = circuit_with(
            (0..9).map(|i| attn(&format!("a{i}"), 1)).collect(),
            vec![],
        );
        let tiny = ModelSkeleton {
            model_id: "tiny".to_string(),
            num_layers: 2,
            heads_per_layer: 2,
            family: "test".to_string(),
        };
        struct Flat;
        impl EvaluationOracle for Flat {
            fn evaluate(&self, _q: &OracleQuery) -> Result<f64, OracleError> {
                Ok(0.5)
            }
        }
        let err = random_baseline(&Flat, &c, &tiny, 5, 1).unwrap_err();
        assert!(matches!(err, ValidationError::Infeasible(_)));
    }

    #[test]
    fn validate_assembles_all_verdicts() {
        let c = circuit_with(
            vec![attn("a", 1), attn("b", 2)],
            vec![edge("a", "b", 0.9)],
        );
        let oracle = FileOracle::new(&Evaluations {
            conditions: [
                ("full_model".to_string(), 0.9),
                ("circuit_only".to_string(), 0.8),
                ("circuit_ablated".to_string(), 0.2),
            ]
            .into_iter()
            .collect(),
            random_subgraph: vec![0.88; 50],
        });
        let skeleton = ModelSkeleton {
            model_id: "test".to_string(),
            num_layers: 16,
            heads_per_layer: 8,
            family: "test".to_string(),
        };
        let stats =
            validate(&oracle, &c, Some(&skeleton), &ValidationConfig::default()).unwrap();
        assert_eq!(stats.acc_t, 0.8);
        assert!((stats.delta_t - 0.7).abs() < 1e-12);
        assert!(stats.is_valid);
        let f = stats.faithfulness.unwrap();
        assert!((f - (0.8 - 0.2) / (0.9 - 0.2)).abs() < 1e-12);
        let rb = stats.random.unwrap();
        assert_eq!(rb.p_value, 1.0 / 51.0);
        assert!(rb.p_value < 0.05);
        // below the causal threshold the circuit is rejected
        let weak = FileOracle::new(&map_evals(&[
            ("full_model", 0.9),
            ("circuit_only", 0.8),
            ("circuit_ablated", 0.85),
        ]));
        let stats = validate(&weak, &c, None, &ValidationConfig::default()).unwrap();
        assert!(!stats.causal_ok);
        assert!(!stats.is_valid);
    }
}
