//! Clause learning: dual-pool bounded search with one-vs-rest F1 selection.
//!
//! Pool A builds candidates from named motif literals (taken in attribution
//! rank order) over a structural scaffold of layer_span, component_ratio
//! and size. Pool B is motif-blind: it enumerates raw edge-kind sequences
//! of length two and three seen in the positives, over the same scaffold.
//! Every candidate is scored one-vs-rest; ties prefer fewer body literals,
//! then pool A, then earlier enumeration.
//!
//! Numeric thresholds are fitted on a granularity grid before enumeration,
//! so candidate clauses carry concrete cutoffs rather than free parameters.

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, NodeKind};
use crate::clause::{Comparator, HornClause, Literal, Pool, Term};
use crate::facts::FactSet;
use crate::motifs::{rank_motifs, Motif, MotifConfig, ALL_MOTIFS};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum IlpError {
    #[error("cannot learn from an empty positive set")]
    EmptyPositives,
    #[error("cannot learn from an empty negative set")]
    EmptyNegatives,
    #[error("threshold fitting needs at least one positive value")]
    NoPositiveValues,
    #[error("clause construction failed: {0}")]
    Clause(#[from] crate::clause::ClauseError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    /// Most has_motif literals allowed in one clause body.
    pub max_motifs: usize,
    /// Motif ranking depth considered for combinations.
    pub top_k_motifs: usize,
    /// Grid step for ratio-valued thresholds. Sizes always use step 1.
    pub ratio_granularity: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig { max_motifs: 2, top_k_motifs: 6, ratio_granularity: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdKind {
    /// Fit a `>` cutoff below the positives.
    LowerBound,
    /// Fit a `<` cutoff above the positives.
    UpperBound,
}

/// Separating cutoff on the granularity grid.
///
/// Lower bound: one step above the closest negative under the positives,
/// clipped to stay below the smallest positive. Upper bound: the smallest
/// negative at or above the largest positive (strict `<` excludes it).
/// With no negative on the relevant side the cutoff sits one step inside
/// the positive extremum. Non-separating cutoffs are allowed; scoring
/// penalises them later.
pub fn fit_threshold(
    positives: &[f64],
    negatives: &[f64],
    kind: ThresholdKind,
    granularity: f64,
) -> Result<f64, IlpError> {
    if positives.is_empty() {
        return Err(IlpError::NoPositiveValues);
    }
    let scale = (1.0 / granularity).round();
    let grid = |v: f64| (v * scale).round() as i64;
    let pos: Vec<i64> = positives.iter().map(|&v| grid(v)).collect();
    let neg: Vec<i64> = negatives.iter().map(|&v| grid(v)).collect();
    let t = match kind {
        ThresholdKind::LowerBound => {
            let min_pos = *pos.iter().min().expect("nonempty");
            match neg.iter().filter(|&&g| g < min_pos).max() {
                Some(&below) => (below + 1).min(min_pos - 1),
                None => min_pos - 1,
            }
        }
        ThresholdKind::UpperBound => {
            let max_pos = *pos.iter().max().expect("nonempty");
            match neg.iter().filter(|&&g| g >= max_pos).min() {
                Some(&above) => above,
                None => max_pos + 1,
            }
        }
    };
    Ok(t as f64 / scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClauseScore {
    pub tp: usize,
    pub fp: usize,
    pub fneg: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// One-vs-rest F1 of a clause over fact sets. Zero coverage scores 0.
pub fn clause_f1(clause: &HornClause, positives: &[&FactSet], negatives: &[&FactSet]) -> ClauseScore {
    let tp = positives.iter().filter(|f| f.satisfies(clause)).count();
    let fp = negatives.iter().filter(|f| f.satisfies(clause)).count();
    let fneg = positives.len() - tp;
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if positives.is_empty() { 0.0 } else { tp as f64 / positives.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClauseScore { tp, fp, fneg, precision, recall, f1 }
}

/// The three scaffold literals with fitted cutoffs.
struct Scaffold {
    span: Literal,
    ratio: Literal,
    size: Literal,
}

fn attn_ratio(f: &FactSet) -> f64 {
    f.component_ratio.get(&NodeKind::AttnHead).copied().unwrap_or(0.0)
}

fn build_scaffold(
    positives: &[&FactSet],
    negatives: &[&FactSet],
    config: &LearnConfig,
) -> Result<Scaffold, IlpError> {
    let pos_ratio: Vec<f64> = positives.iter().map(|f| attn_ratio(f)).collect();
    let neg_ratio: Vec<f64> = negatives.iter().map(|f| attn_ratio(f)).collect();
    let pos_size: Vec<f64> = positives.iter().map(|f| f64::from(f.size)).collect();
    let neg_size: Vec<f64> = negatives.iter().map(|f| f64::from(f.size)).collect();
    let t_ratio = fit_threshold(
        &pos_ratio,
        &neg_ratio,
        ThresholdKind::LowerBound,
        config.ratio_granularity,
    )?;
    let t_size = fit_threshold(&pos_size, &neg_size, ThresholdKind::UpperBound, 1.0)?;
    let span = Literal::new(
        "layer_span",
        vec![Term::var("C"), Term::var("Lmin"), Term::var("Lmax")],
    );
    let ratio = Literal::new(
        "component_ratio",
        vec![Term::var("C"), Term::sym("attn"), Term::var("R")],
    )
    .with_constraint("R", Comparator::Gt, t_ratio);
    let size = Literal::new("size", vec![Term::var("C"), Term::var("N")])
        .with_constraint("N", Comparator::Lt, t_size);
    Ok(Scaffold { span, ratio, size })
}

/// Scaffold template variants, in enumeration order.
const SCAFFOLD_VARIANTS: [&[ScaffoldPart]; 4] = [
    &[ScaffoldPart::Span, ScaffoldPart::Ratio, ScaffoldPart::Size],
    &[ScaffoldPart::Ratio],
    &[ScaffoldPart::Size],
    &[],
];

#[derive(Clone, Copy)]
enum ScaffoldPart {
    Span,
    Ratio,
    Size,
}

impl Scaffold {
    fn literals(&self, parts: &[ScaffoldPart]) -> Vec<Literal> {
        parts
            .iter()
            .map(|p| match p {
                ScaffoldPart::Span => self.span.clone(),
                ScaffoldPart::Ratio => self.ratio.clone(),
                ScaffoldPart::Size => self.size.clone(),
            })
            .collect()
    }
}

fn motif_literal(motif: Motif) -> Literal {
    Literal::new("has_motif", vec![Term::var("C"), Term::sym(motif.name())])
}

/// Index subsets of sizes 0..=max in deterministic order: by size, then
/// lexicographically on indices.
fn index_combos(n: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    if max >= 1 {
        for i in 0..n {
            out.push(vec![i]);
        }
    }
    if max >= 2 {
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(vec![i, j]);
            }
        }
    }
    out
}

/// Named-motif candidates: motif combinations in rank order over scaffold
/// template variants.
pub fn enumerate_pool_a(
    task: &str,
    positives: &[&FactSet],
    negatives: &[&FactSet],
    ranked_motifs: &[Motif],
    config: &LearnConfig,
) -> Result<Vec<HornClause>, IlpError> {
    if positives.is_empty() {
        return Err(IlpError::EmptyPositives);
    }
    if negatives.is_empty() {
        return Err(IlpError::EmptyNegatives);
    }
    let scaffold = build_scaffold(positives, negatives, config)?;
    let motifs: Vec<Motif> =
        ranked_motifs.iter().copied().take(config.top_k_motifs).collect();
    let mut out = Vec::new();
    for combo in index_combos(motifs.len(), config.max_motifs) {
        for variant in SCAFFOLD_VARIANTS {
            let mut body: Vec<Literal> =
                combo.iter().map(|&i| motif_literal(motifs[i])).collect();
            body.extend(scaffold.literals(variant));
            if body.is_empty() {
                continue;
            }
            out.push(HornClause::for_task(task, body)?);
        }
    }
    Ok(out)
}

/// Motif-blind candidates: edge-kind sequences seen in the positives over
/// scaffold template variants, each marked confirmatory when the sequence
/// matches a named motif topology.
pub fn enumerate_pool_b(
    task: &str,
    positives: &[&FactSet],
    negatives: &[&FactSet],
    config: &LearnConfig,
) -> Result<Vec<HornClause>, IlpError> {
    if positives.is_empty() {
        return Err(IlpError::EmptyPositives);
    }
    if negatives.is_empty() {
        return Err(IlpError::EmptyNegatives);
    }
    let scaffold = build_scaffold(positives, negatives, config)?;
    let mut pairs = std::collections::BTreeSet::new();
    let mut triples = std::collections::BTreeSet::new();
    for f in positives {
        pairs.extend(f.edge_kind_pairs.iter().cloned());
        triples.extend(f.edge_kind_triples.iter().cloned());
    }
    let mut out = Vec::new();
    // scaffold-only fallbacks come first, carrying no pattern to confirm
    for variant in &SCAFFOLD_VARIANTS[..3] {
        let clause = HornClause::for_task(task, scaffold.literals(variant))?;
        out.push(clause.with_pool(Pool::BlindStructural, None));
    }
    for (a, b) in &pairs {
        let kinds = (NodeKind::from_short(a), NodeKind::from_short(b));
        let confirmed = match kinds {
            (Some(ka), Some(kb)) => {
                ALL_MOTIFS.iter().any(|m| m.pair_pattern() == Some((ka, kb)))
            }
            _ => false,
        };
        for variant in SCAFFOLD_VARIANTS {
            let mut body = vec![Literal::new(
                "edge_seq2",
                vec![Term::var("C"), Term::sym(a), Term::sym(b)],
            )];
            body.extend(scaffold.literals(variant));
            let clause = HornClause::for_task(task, body)?;
            out.push(clause.with_pool(Pool::BlindStructural, Some(confirmed)));
        }
    }
    for (a, b, c) in &triples {
        let kinds =
            (NodeKind::from_short(a), NodeKind::from_short(b), NodeKind::from_short(c));
        let confirmed = match kinds {
            (Some(ka), Some(kb), Some(kc)) => {
                ALL_MOTIFS.iter().any(|m| m.path_pattern() == Some((ka, kb, kc)))
            }
            _ => false,
        };
        for variant in SCAFFOLD_VARIANTS {
            let mut body = vec![Literal::new(
                "edge_seq3",
                vec![Term::var("C"), Term::sym(a), Term::sym(b), Term::sym(c)],
            )];
            body.extend(scaffold.literals(variant));
            let clause = HornClause::for_task(task, body)?;
            out.push(clause.with_pool(Pool::BlindStructural, Some(confirmed)));
        }
    }
    Ok(out)
}

/// One learning example: the circuit and its frozen fact set.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub circuit: &'a Circuit,
    pub facts: &'a FactSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnResult {
    pub clause: HornClause,
    pub score: ClauseScore,
    pub pool_a_best: HornClause,
    pub pool_a_f1: f64,
    pub pool_b_best: HornClause,
    pub pool_b_f1: f64,
    pub candidates_scored: usize,
}

impl LearnResult {
    pub fn f1(&self) -> f64 {
        self.score.f1
    }
}

struct Best {
    clause: HornClause,
    score: ClauseScore,
}

fn pick_best(
    candidates: Vec<HornClause>,
    positives: &[&FactSet],
    negatives: &[&FactSet],
) -> Option<Best> {
    let mut best: Option<Best> = None;
    for clause in candidates {
        let score = clause_f1(&clause, positives, negatives);
        let better = match &best {
            None => true,
            Some(b) => {
                score.f1 > b.score.f1
                    || (score.f1 == b.score.f1
                        && clause.literal_count() < b.clause.literal_count())
            }
        };
        if better {
            best = Some(Best { clause, score });
        }
    }
    best
}

/// Learn the signature clause for one task one-vs-rest. The winner is the
/// highest-F1 candidate across both pools; ties go to fewer body literals,
/// then pool A, then earlier enumeration.
pub fn learn_signature(
    task: &str,
    positives: &[Example],
    negatives: &[Example],
    config: &LearnConfig,
    motif_config: &MotifConfig,
) -> Result<LearnResult, IlpError> {
    if positives.is_empty() {
        return Err(IlpError::EmptyPositives);
    }
    if negatives.is_empty() {
        return Err(IlpError::EmptyNegatives);
    }
    let pos_circuits: Vec<&Circuit> = positives.iter().map(|e| e.circuit).collect();
    let neg_circuits: Vec<&Circuit> = negatives.iter().map(|e| e.circuit).collect();
    let pos_facts: Vec<&FactSet> = positives.iter().map(|e| e.facts).collect();
    let neg_facts: Vec<&FactSet> = negatives.iter().map(|e| e.facts).collect();

    let ranking = rank_motifs(&pos_circuits, &neg_circuits, motif_config);
    let ranked: Vec<Motif> = ranking.iter().map(|s| s.motif).collect();

    let pool_a = enumerate_pool_a(task, &pos_facts, &neg_facts, &ranked, config)?;
    let pool_b = enumerate_pool_b(task, &pos_facts, &neg_facts, config)?;
    let candidates_scored = pool_a.len() + pool_b.len();

    let best_a = pick_best(pool_a, &pos_facts, &neg_facts).expect("pool A nonempty");
    let best_b = pick_best(pool_b, &pos_facts, &neg_facts).expect("pool B nonempty");

    let a_wins = best_a.score.f1 > best_b.score.f1
        || (best_a.score.f1 == best_b.score.f1
            && best_a.clause.literal_count() <= best_b.clause.literal_count());
    let (clause, score) = if a_wins {
        (best_a.clause.clone(), best_a.score)
    } else {
        (best_b.clause.clone(), best_b.score)
    };
    Ok(LearnResult {
        clause,
        score,
        pool_a_f1: best_a.score.f1,
        pool_a_best: best_a.clause,
        pool_b_f1: best_b.score.f1,
        pool_b_best: best_b.clause,
        candidates_scored,
    })
}
