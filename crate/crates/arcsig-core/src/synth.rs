//! Seeded synthetic circuit pools built around a planted clause.
//!
//! Given a clause, the generator constructs positives that satisfy it and
//! negatives that each break one chosen body literal, cycling through the
//! literals so every one gets exercised as a discriminator. Everything not
//! pinned by the clause is kept deliberately boring and, crucially, the
//! same across both classes: incidental motifs appear on both sides, so
//! the planted clause is the only perfectly separating candidate.
//!
//! Violations are surgical. A missing-path negative keeps the path's first
//! edge as a decoy, a size negative sits exactly on the planted bound, a
//! ratio negative moves just across the threshold. A bundled oracle gives
//! positives a large ablation drop and random subgraphs none, and the pool
//! can be emitted as ordinary ingestion documents.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circuit::{
    CfsEntry, Circuit, CircuitDocument, Edge, Evaluations, ModelSkeleton, Node, NodeKind,
    Provenance, StructureConfig,
};
use crate::clause::{Comparator, HornClause, Term};
use crate::facts::{derive_facts, FactSet};
use crate::ilp::Example;
use crate::motifs::{Motif, MotifConfig};
use crate::validate::{Condition, EvaluationOracle, OracleError, OracleQuery};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("planted clause unsatisfiable: {0}")]
    Unsatisfiable(String),
    #[error("generator cannot realise literal: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub skeleton: ModelSkeleton,
    pub n_positives: usize,
    pub n_negatives: usize,
    pub planted_clause: HornClause,
    /// (fraction of edge scores perturbed, perturbation scale).
    pub noise: (f64, f64),
    pub seed: u64,
}

/// What one planted body literal asks of a circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Planted {
    Motif(Motif),
    Pair(NodeKind, NodeKind),
    Triple(NodeKind, NodeKind, NodeKind),
    SizeBelow(f64),
    SizeAbove(f64),
    RatioAbove(NodeKind, f64),
    RatioBelow(NodeKind, f64),
    /// Bare span literal; satisfied by construction, never violable.
    Span,
}

fn parse_kind(term: Option<&Term>) -> Option<NodeKind> {
    match term {
        Some(Term::Sym(s)) => NodeKind::from_short(s).or_else(|| NodeKind::parse(s)),
        _ => None,
    }
}

fn parse_planted(clause: &HornClause) -> Result<Vec<Planted>, SynthError> {
    let mut out = Vec::new();
    for lit in &clause.body {
        let unsupported = || SynthError::Unsupported(lit.to_string());
        match lit.predicate.as_str() {
            "has_motif" => match lit.args.get(1) {
                Some(Term::Sym(name)) => {
                    out.push(Planted::Motif(Motif::parse(name).ok_or_else(unsupported)?));
                }
                _ => return Err(unsupported()),
            },
            "size" => {
                let c = lit.constraint.as_ref().ok_or_else(unsupported)?;
                out.push(match c.cmp {
                    Comparator::Lt => Planted::SizeBelow(c.threshold),
                    Comparator::Gt => Planted::SizeAbove(c.threshold),
                });
            }
            "component_ratio" => {
                let kind = parse_kind(lit.args.get(1)).ok_or_else(unsupported)?;
                if !kind.is_typed() {
                    return Err(unsupported());
                }
                let c = lit.constraint.as_ref().ok_or_else(unsupported)?;
                out.push(match c.cmp {
                    Comparator::Gt => Planted::RatioAbove(kind, c.threshold),
                    Comparator::Lt => Planted::RatioBelow(kind, c.threshold),
                });
            }
            "edge_seq2" => {
                let a = parse_kind(lit.args.get(1)).ok_or_else(unsupported)?;
                let b = parse_kind(lit.args.get(2)).ok_or_else(unsupported)?;
                out.push(Planted::Pair(a, b));
            }
            "edge_seq3" => {
                let a = parse_kind(lit.args.get(1)).ok_or_else(unsupported)?;
                let b = parse_kind(lit.args.get(2)).ok_or_else(unsupported)?;
                let c = parse_kind(lit.args.get(3)).ok_or_else(unsupported)?;
                out.push(Planted::Triple(a, b, c));
            }
            "layer_span" if lit.constraint.is_none() => out.push(Planted::Span),
            _ => return Err(unsupported()),
        }
    }
    Ok(out)
}

/// A connected little subgraph dedicated to one planted pattern. Nodes are
/// never shared between gadgets, so dropping one gadget's edges cannot
/// disturb another pattern.
#[derive(Debug, Clone)]
struct Gadget {
    kinds: Vec<NodeKind>,
    edges: Vec<(usize, usize)>,
}

/// Assembled constraints for one circuit build.
#[derive(Debug, Clone)]
struct Build {
    attn_lo: f64,
    attn_hi: f64,
    n_lo: u32,
    n_hi: u32,
    /// (count, may grow to fit gadgets).
    n_exact: Option<(u32, bool)>,
    peak: Option<usize>,
    gadgets: Vec<Gadget>,
}

/// Keeps targets away from the exact thresholds so rounding of counts
/// cannot flip a comparison.
const RATIO_MARGIN: f64 = 0.06;

fn assemble(
    planted: &[Planted],
    violate: Option<usize>,
    skeleton: &ModelSkeleton,
) -> Result<Build, SynthError> {
    let capacity = skeleton.num_layers * (skeleton.heads_per_layer + 1);
    let mut b = Build {
        attn_lo: 0.0,
        attn_hi: 1.0,
        n_lo: 2,
        n_hi: capacity.min(64),
        n_exact: None,
        peak: None,
        gadgets: Vec::new(),
    };
    let attn_bound = |b: &mut Build, lo: Option<f64>, hi: Option<f64>| {
        if let Some(lo) = lo {
            b.attn_lo = b.attn_lo.max(lo);
        }
        if let Some(hi) = hi {
            b.attn_hi = b.attn_hi.min(hi);
        }
    };
    for (i, p) in planted.iter().enumerate() {
        let violated = violate == Some(i);
        match *p {
            Planted::Span => {}
            Planted::SizeBelow(t) => {
                if violated {
                    b.n_exact = Some((t.ceil() as u32, true));
                } else {
                    let max = if t.fract() == 0.0 { t as u32 - 1 } else { t.floor() as u32 };
                    b.n_hi = b.n_hi.min(max);
                }
            }
            Planted::SizeAbove(t) => {
                if violated {
                    b.n_exact = Some((t.floor() as u32, false));
                } else {
                    let min = if t.fract() == 0.0 { t as u32 + 1 } else { t.ceil() as u32 };
                    b.n_lo = b.n_lo.max(min);
                }
            }
            Planted::RatioAbove(kind, t) => {
                let (lo, hi) = if kind == NodeKind::AttnHead {
                    if violated { (None, Some(t)) } else { (Some(t + RATIO_MARGIN), None) }
                } else if violated {
                    (Some(1.0 - t), None)
                } else {
                    (None, Some(1.0 - t - RATIO_MARGIN))
                };
                attn_bound(&mut b, lo, hi);
            }
            Planted::RatioBelow(kind, t) => {
                let (lo, hi) = if kind == NodeKind::AttnHead {
                    if violated { (Some(t), None) } else { (None, Some(t - RATIO_MARGIN)) }
                } else if violated {
                    (None, Some(1.0 - t))
                } else {
                    (Some(1.0 - t + RATIO_MARGIN), None)
                };
                attn_bound(&mut b, lo, hi);
            }
            Planted::Pair(x, y) => b.gadgets.push(Gadget {
                kinds: vec![x, y],
                edges: if violated { vec![] } else { vec![(0, 1)] },
            }),
            Planted::Triple(x, y, z) => b.gadgets.push(Gadget {
                kinds: vec![x, y, z],
                edges: if violated { vec![(0, 1)] } else { vec![(0, 1), (1, 2)] },
            }),
            Planted::Motif(m) => {
                if let Some((x, y)) = m.pair_pattern() {
                    b.gadgets.push(Gadget {
                        kinds: vec![x, y],
                        edges: if violated { vec![] } else { vec![(0, 1)] },
                    });
                } else if let Some((x, y, z)) = m.path_pattern() {
                    b.gadgets.push(Gadget {
                        kinds: vec![x, y, z],
                        edges: if violated { vec![(0, 1)] } else { vec![(0, 1), (1, 2)] },
                    });
                } else {
                    match m {
                        Motif::MlpHeavy => {
                            if violated {
                                attn_bound(&mut b, Some(0.58), None);
                            } else {
                                attn_bound(&mut b, None, Some(0.42));
                            }
                        }
                        Motif::BalancedMix => {
                            if violated {
                                if b.attn_hi >= 0.58 {
                                    attn_bound(&mut b, Some(0.58), None);
                                } else {
                                    attn_bound(&mut b, None, Some(0.42));
                                }
                            } else {
                                attn_bound(&mut b, Some(0.46), Some(0.54));
                            }
                        }
                        Motif::EarlyAttnPeak | Motif::MidLayerAttnPeak | Motif::LateAttnPeak => {
                            let band = match m {
                                Motif::EarlyAttnPeak => 0,
                                Motif::MidLayerAttnPeak => 1,
                                _ => 2,
                            };
                            b.peak = Some(if violated { (band + 1) % 3 } else { band });
                        }
                        _ => unreachable!("pair/path motifs handled above"),
                    }
                }
            }
        }
    }
    if b.attn_lo > b.attn_hi {
        return Err(SynthError::Unsatisfiable(format!(
            "attention share bounds cross: {:.2} > {:.2}",
            b.attn_lo, b.attn_hi
        )));
    }
    Ok(b)
}

fn layers_of_band(band: usize, num_layers: u32) -> Vec<u32> {
    (0..num_layers).filter(|&l| crate::motifs::band(l, num_layers) == band).collect()
}

fn solve_counts(b: &Build, variety: u32) -> Result<(u32, u32), SynthError> {
    let min_attn: u32 = b
        .gadgets
        .iter()
        .flat_map(|g| &g.kinds)
        .filter(|&&k| k == NodeKind::AttnHead)
        .count() as u32;
    let min_mlp: u32 = b
        .gadgets
        .iter()
        .flat_map(|g| &g.kinds)
        .filter(|&&k| k == NodeKind::MlpBlock)
        .count() as u32;
    let n_lo = b.n_lo.max(min_attn + min_mlp).max(2);
    let n = match b.n_exact {
        Some((e, true)) => e.max(n_lo),
        Some((e, false)) => {
            if e < n_lo {
                return Err(SynthError::Unsatisfiable(
                    "cannot shrink below the planted floor".to_string(),
                ));
            }
            e
        }
        None => {
            if n_lo > b.n_hi {
                return Err(SynthError::Unsatisfiable(format!(
                    "size bounds cross: {} > {}",
                    n_lo, b.n_hi
                )));
            }
            (12 + variety).clamp(n_lo, b.n_hi)
        }
    };
    let mid = (b.attn_lo + b.attn_hi) / 2.0;
    let feasible = |a: u32| {
        let ratio = f64::from(a) / f64::from(n);
        a >= min_attn
            && n - a >= min_mlp
            && ratio >= b.attn_lo - 1e-9
            && ratio <= b.attn_hi + 1e-9
    };
    let pick = |skip_lone: bool| {
        (0..=n)
            .filter(|&a| feasible(a) && !(skip_lone && a == 1 && b.peak.is_none()))
            .min_by(|&x, &y| {
                let dx = (f64::from(x) - mid * f64::from(n)).abs();
                let dy = (f64::from(y) - mid * f64::from(n)).abs();
                dx.total_cmp(&dy).then(x.cmp(&y))
            })
    };
    let attn = pick(true).or_else(|| pick(false)).ok_or_else(|| {
        SynthError::Unsatisfiable(format!(
            "no attention count fits share [{:.2}, {:.2}] at size {n}",
            b.attn_lo, b.attn_hi
        ))
    })?;
    Ok((attn, n - attn))
}

/// Band quota per attention slot. With a peak the winning band gets a
/// strict majority; otherwise the first two bands tie so no peak appears.
fn band_plan(attn: u32, peak: Option<usize>) -> [u32; 3] {
    let mut counts = [0u32; 3];
    match peak {
        Some(p) => {
            let others = attn / 4;
            for i in 0..3 {
                counts[i] = if i == p { attn - 2 * others } else { others };
            }
        }
        None => {
            counts[0] = attn / 2;
            counts[1] = attn / 2;
            counts[2] = attn % 2;
        }
    }
    counts
}

fn build_circuit(
    spec: &SynthSpec,
    b: &Build,
    task: &str,
    label: &str,
    variety: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Circuit, SynthError> {
    let (attn, mlp) = solve_counts(b, variety)?;
    let skeleton = &spec.skeleton;

    // attention layers follow the band plan; gadget nodes take the first
    // slots of their kind so planted patterns live inside the plan too
    let counts = band_plan(attn, b.peak);
    let mut attn_layers = Vec::with_capacity(attn as usize);
    for (band, &count) in counts.iter().enumerate() {
        let mut pool = layers_of_band(band, skeleton.num_layers);
        if pool.is_empty() {
            pool = (0..skeleton.num_layers).collect();
        }
        for k in 0..count {
            attn_layers.push(pool[k as usize % pool.len()]);
        }
    }
    let mut mlp_layers = Vec::with_capacity(mlp as usize);
    for j in 0..mlp {
        mlp_layers.push((3 + 5 * j) % skeleton.num_layers);
    }

    let mut nodes = Vec::new();
    for (i, &layer) in attn_layers.iter().enumerate() {
        nodes.push(Node {
            id: format!("a{i:03}"),
            kind: NodeKind::AttnHead,
            layer,
            head: Some(i as u32 % skeleton.heads_per_layer),
        });
    }
    for (j, &layer) in mlp_layers.iter().enumerate() {
        nodes.push(Node { id: format!("m{j:03}"), kind: NodeKind::MlpBlock, layer, head: None });
    }

    // hand each gadget its dedicated nodes, in slot order per kind
    let mut next_attn = 0usize;
    let mut next_mlp = 0usize;
    let mut edges = Vec::new();
    for gadget in &b.gadgets {
        let ids: Vec<String> = gadget
            .kinds
            .iter()
            .map(|kind| match kind {
                NodeKind::AttnHead => {
                    let id = format!("a{next_attn:03}");
                    next_attn += 1;
                    id
                }
                NodeKind::MlpBlock => {
                    let id = format!("m{next_mlp:03}");
                    next_mlp += 1;
                    id
                }
                _ => unreachable!("gadgets are typed"),
            })
            .collect();
        for &(x, y) in &gadget.edges {
            let mut score = 0.5;
            if rng.gen::<f64>() < spec.noise.0 {
                score = (score + (rng.gen::<f64>() - 0.5) * 2.0 * spec.noise.1).clamp(0.05, 1.0);
            }
            edges.push(Edge { src: ids[x].clone(), dst: ids[y].clone(), score });
        }
    }

    nodes.sort_by(|a, z| a.id.cmp(&z.id));
    edges.sort_by(|a, z| (a.src.as_str(), a.dst.as_str()).cmp(&(z.src.as_str(), z.dst.as_str())));
    Ok(Circuit {
        id: format!("syn:{task}:{label}"),
        provenance: Provenance {
            task: task.to_string(),
            model_id: skeleton.model_id.clone(),
            discovery_method: "synthetic".to_string(),
            split: label.to_string(),
        },
        skeleton: skeleton.clone(),
        nodes,
        edges,
    })
}

fn circuit_rng(seed: u64, negative: bool, index: usize) -> ChaCha8Rng {
    let salt = if negative { 0x8000_0000_0000_0000u64 } else { 0 };
    ChaCha8Rng::seed_from_u64(
        seed ^ salt ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OracleProfile {
    positive: bool,
    nodes: usize,
    edges: usize,
}

/// Computes accuracies from the query alone. Positives carry a large
/// ablation drop, negatives almost none; any strict subgraph of a stored
/// circuit collapses behaviourally, so every edge is load-bearing; random
/// matched subgraphs ablate to within a hair of the full model.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOracle {
    profiles: BTreeMap<String, OracleProfile>,
    seed: u64,
}

pub const SYNTH_FULL_ACCURACY: f64 = 0.90;

impl SyntheticOracle {
    fn register(&mut self, circuit: &Circuit, positive: bool) {
        self.profiles.insert(
            circuit.id.clone(),
            OracleProfile { positive, nodes: circuit.nodes.len(), edges: circuit.edges.len() },
        );
    }
}

fn fnv1a(text: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EvaluationOracle for SyntheticOracle {
    fn evaluate(&self, query: &OracleQuery) -> Result<f64, OracleError> {
        let profile = self
            .profiles
            .get(query.circuit_id)
            .ok_or_else(|| OracleError::Missing(format!("unknown circuit {}", query.circuit_id)))?;
        if query.condition == Condition::RandomSubgraph {
            let i = query.sample_index.ok_or_else(|| {
                OracleError::Unsupported("random query without a draw index".to_string())
            })? as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(
                self.seed ^ fnv1a(query.circuit_id) ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            return Ok(SYNTH_FULL_ACCURACY - rng.gen::<f64>() * 0.01);
        }
        let reduced = query.nodes.map_or(false, |n| n.len() < profile.nodes)
            || query.edges.map_or(false, |e| e.len() < profile.edges);
        Ok(match query.condition {
            Condition::FullModel => SYNTH_FULL_ACCURACY,
            Condition::CircuitOnly => {
                if reduced {
                    0.20
                } else if profile.positive {
                    0.85
                } else {
                    0.30
                }
            }
            Condition::CircuitAblated => {
                if reduced {
                    0.88
                } else if profile.positive {
                    0.15
                } else {
                    0.88
                }
            }
            Condition::RandomSubgraph => unreachable!("handled above"),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPool {
    pub positives: Vec<(Circuit, FactSet)>,
    pub negatives: Vec<(Circuit, FactSet)>,
    pub oracle: SyntheticOracle,
}

impl SynthPool {
    pub fn positive_examples(&self) -> Vec<Example<'_>> {
        self.positives.iter().map(|(c, f)| Example { circuit: c, facts: f }).collect()
    }

    pub fn negative_examples(&self) -> Vec<Example<'_>> {
        self.negatives.iter().map(|(c, f)| Example { circuit: c, facts: f }).collect()
    }

    /// Ingestion documents for the whole pool, evaluations included, so a
    /// pipeline can be driven end to end from synthetic data.
    pub fn documents(&self, n_random: usize) -> Vec<CircuitDocument> {
        self.positives
            .iter()
            .chain(&self.negatives)
            .map(|(circuit, _)| {
                let score = |condition| {
                    self.oracle
                        .evaluate(&OracleQuery::whole(&circuit.id, condition))
                        .expect("pool circuits are registered")
                };
                let conditions: BTreeMap<String, f64> = [
                    Condition::FullModel,
                    Condition::CircuitOnly,
                    Condition::CircuitAblated,
                ]
                .into_iter()
                .map(|c| (c.key().to_string(), score(c)))
                .collect();
                let random_subgraph: Vec<f64> = (0..n_random)
                    .map(|i| {
                        self.oracle
                            .evaluate(&OracleQuery {
                                circuit_id: &circuit.id,
                                condition: Condition::RandomSubgraph,
                                nodes: None,
                                edges: None,
                                sample_index: Some(i),
                            })
                            .expect("registered")
                    })
                    .collect();
                let cfs: BTreeMap<String, CfsEntry> = circuit
                    .typed_nodes()
                    .map(|n| {
                        let dla = if n.kind == NodeKind::AttnHead { 0.6 } else { 0.4 };
                        let linguistic: BTreeMap<String, f64> =
                            [("object".to_string(), 0.6), ("other".to_string(), 0.4)]
                                .into_iter()
                                .collect();
                        (
                            n.id.clone(),
                            CfsEntry { dla, linguistic, task_specific: BTreeMap::new() },
                        )
                    })
                    .collect();
                CircuitDocument {
                    circuit: circuit.clone(),
                    cfs,
                    evaluations: Some(Evaluations { conditions, random_subgraph }),
                }
            })
            .collect()
    }
}

/// Build the pool. Positives are verified against the planted clause and
/// negatives verified to fail it; an impossible plant reports which part
/// could not be realised.
pub fn generate_pool(spec: &SynthSpec) -> Result<SynthPool, SynthError> {
    let planted = parse_planted(&spec.planted_clause)?;
    if planted.is_empty() {
        return Err(SynthError::Unsatisfiable("clause has an empty body".to_string()));
    }
    let task = spec.planted_clause.task_label().unwrap_or("synthetic").to_string();
    let structure = StructureConfig::default();
    let motif_config = MotifConfig::default();

    let mut oracle = SyntheticOracle { profiles: BTreeMap::new(), seed: spec.seed };
    let mut positives = Vec::with_capacity(spec.n_positives);
    for i in 0..spec.n_positives {
        let build = assemble(&planted, None, &spec.skeleton)?;
        let mut rng = circuit_rng(spec.seed, false, i);
        let circuit =
            build_circuit(spec, &build, &task, &format!("p{i}"), i as u32 % 5, &mut rng)?;
        let (_, facts) = derive_facts(&circuit, &structure, &motif_config)
            .map_err(|e| SynthError::Unsatisfiable(e.to_string()))?;
        if !facts.satisfies(&spec.planted_clause) {
            return Err(SynthError::Unsatisfiable(format!(
                "constructed positive {i} does not satisfy the plant"
            )));
        }
        oracle.register(&circuit, true);
        positives.push((circuit, facts));
    }

    let violable: Vec<usize> = planted
        .iter()
        .enumerate()
        .filter(|(_, p)| !matches!(p, Planted::Span))
        .map(|(i, _)| i)
        .collect();
    if violable.is_empty() {
        return Err(SynthError::Unsatisfiable(
            "every body literal holds vacuously; negatives are impossible".to_string(),
        ));
    }
    let mut negatives = Vec::with_capacity(spec.n_negatives);
    for j in 0..spec.n_negatives {
        let mut found = None;
        for k in 0..violable.len() {
            let target = violable[(j + k) % violable.len()];
            let Ok(build) = assemble(&planted, Some(target), &spec.skeleton) else {
                continue;
            };
            let mut rng = circuit_rng(spec.seed, true, j);
            let Ok(circuit) =
                build_circuit(spec, &build, &task, &format!("n{j}"), j as u32 % 5, &mut rng)
            else {
                continue;
            };
            let Ok((_, facts)) = derive_facts(&circuit, &structure, &motif_config) else {
                continue;
            };
            if !facts.satisfies(&spec.planted_clause) {
                found = Some((circuit, facts));
                break;
            }
        }
        let Some((circuit, facts)) = found else {
            return Err(SynthError::Unsatisfiable(format!(
                "no single-literal violation is feasible for negative {j}"
            )));
        };
        oracle.register(&circuit, false);
        negatives.push((circuit, facts));
    }
    Ok(SynthPool { positives, negatives, oracle })
}
