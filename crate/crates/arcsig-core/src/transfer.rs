//! Cross-model mechanism transfer.
//!
//! A learned clause from one model acts as a retrieval hypothesis over
//! another model's registry: generate scale-normalised structural
//! candidates, screen them behaviourally and causally on the target
//! evaluations, accept the passing candidate with the largest ablation
//! drop. When nothing passes, an optional rediscovery hook supplies a
//! freshly characterised target circuit, accepted only if its clause
//! summary lands within the signature-distance budget.
//!
//! Selection reads the source record's clause, clause summary, and scale
//! facts. It never reads the source's own accuracies: whether the source
//! mechanism scored well or badly at home has no bearing on what matches
//! in the target.

use serde::Serialize;

use crate::registry::{MechanismRecord, RecordFilter, Registry, RegistryError};
use crate::signature::{signature_distance, DistanceWeights, IlpSignature};
use crate::subsume::{compare, MatchMode, Relation};
use crate::validate::{Condition, EvaluationOracle, OracleError, OracleQuery};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferConfig {
    /// Depth-mean tolerance for candidate generation.
    pub delta_rho: f64,
    /// Relative-size tolerance.
    pub delta_size: f64,
    /// Signature-distance budget, for both candidate generation and the
    /// rediscovery fallback.
    pub delta_ilp: f64,
    pub theta_behav: f64,
    pub theta_causal: f64,
    pub weights: DistanceWeights,
}

impl TransferConfig {
    /// Defaults scaled to the target skeleton: the depth tolerance is one
    /// layer of the target model.
    pub fn for_target_layers(num_layers: u32) -> Self {
        TransferConfig {
            delta_rho: 1.0 / f64::from(num_layers.max(1)),
            delta_size: 0.10,
            delta_ilp: 0.30,
            theta_behav: 0.50,
            theta_causal: 0.10,
            weights: DistanceWeights::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferStatus {
    Accepted,
    FallbackAccepted,
    Incompatible,
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferOutcome {
    pub status: TransferStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accepted_id: Option<String>,
    pub candidates_considered: usize,
    pub candidates_passed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_delta_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One screening-table row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateAssessment {
    pub id: String,
    pub circuit_id: String,
    pub distance: f64,
    pub relaxed_equivalent: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
    pub passed: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferReport {
    pub outcome: TransferOutcome,
    pub candidates: Vec<CandidateAssessment>,
}

pub type RediscoveryHook = dyn Fn() -> Result<MechanismRecord, String>;

fn pair_distance(a: &IlpSignature, b: &IlpSignature, config: &TransferConfig) -> f64 {
    let n_max = a.n_clauses.max(b.n_clauses);
    signature_distance(a, b, config.weights, n_max)
}

/// Same mechanism family as the source? Relaxed-subsumption equivalence
/// decides when head labels agree; otherwise the clause summaries must sit
/// within the signature-distance budget.
pub fn arch_type_matches(
    source: &MechanismRecord,
    candidate: &MechanismRecord,
    config: &TransferConfig,
) -> bool {
    if compare(&source.clause, &candidate.clause, MatchMode::Relaxed).relation
        == Relation::Equivalent
    {
        return true;
    }
    pair_distance(&source.signature, &candidate.signature, config) < config.delta_ilp
}

/// Structural candidates in the target registry: same mechanism family,
/// mean depth within `delta_rho`, relative size within `delta_size`. The
/// list keeps the registry's deterministic order.
pub fn generate_candidates(
    source: &MechanismRecord,
    target: &Registry,
    config: &TransferConfig,
) -> Result<Vec<MechanismRecord>, RegistryError> {
    let pool = target.query(&RecordFilter::default())?;
    Ok(pool
        .into_iter()
        .filter(|cand| {
            arch_type_matches(source, cand, config)
                && (cand.structural_facts.depth_mean - source.structural_facts.depth_mean).abs()
                    <= config.delta_rho
                && (cand.structural_facts.rel_size - source.structural_facts.rel_size).abs()
                    <= config.delta_size
        })
        .collect())
}

fn candidate_performance(
    oracle: &dyn EvaluationOracle,
    circuit_id: &str,
) -> Result<(f64, f64), OracleError> {
    let acc = oracle.evaluate(&OracleQuery::whole(circuit_id, Condition::CircuitOnly))?;
    let full = oracle.evaluate(&OracleQuery::whole(circuit_id, Condition::FullModel))?;
    let ablated = oracle.evaluate(&OracleQuery::whole(circuit_id, Condition::CircuitAblated))?;
    Ok((acc, full - ablated))
}

/// Candidates whose target-suite accuracy and ablation drop clear both
/// thresholds, with their measured values. Oracle failures skip the
/// candidate.
pub fn screen<'a>(
    candidates: &'a [MechanismRecord],
    oracle: &dyn EvaluationOracle,
    config: &TransferConfig,
) -> Vec<(&'a MechanismRecord, f64, f64)> {
    candidates
        .iter()
        .filter_map(|record| {
            let (acc, delta) = candidate_performance(oracle, &record.circuit_id).ok()?;
            (acc >= config.theta_behav && delta >= config.theta_causal)
                .then_some((record, acc, delta))
        })
        .collect()
}

/// Full retrieval-and-screening run against a target registry.
pub fn transfer(
    source: &MechanismRecord,
    target: &Registry,
    oracle: &dyn EvaluationOracle,
    config: &TransferConfig,
    rediscovery: Option<&RediscoveryHook>,
) -> Result<TransferReport, RegistryError> {
    let candidates = generate_candidates(source, target, config)?;
    let mut rows = Vec::with_capacity(candidates.len());
    // index into `candidates` plus measured (acc, delta) for passing ones
    let mut passing: Vec<(usize, f64, f64)> = Vec::new();
    for (i, record) in candidates.iter().enumerate() {
        let id = record.content_id()?;
        let relaxed_equivalent =
            compare(&source.clause, &record.clause, MatchMode::Relaxed).relation
                == Relation::Equivalent;
        let distance = pair_distance(&source.signature, &record.signature, config);
        let (acc, delta) = match candidate_performance(oracle, &record.circuit_id) {
            Ok(pair) => pair,
            Err(e) => {
                rows.push(CandidateAssessment {
                    id,
                    circuit_id: record.circuit_id.clone(),
                    distance,
                    relaxed_equivalent,
                    acc_t: None,
                    delta_t: None,
                    passed: false,
                    reason: format!("skipped, oracle failure: {e}"),
                });
                continue;
            }
        };
        let mut failures = Vec::new();
        if acc < config.theta_behav {
            failures.push(format!("accuracy {acc:.2} below {:.2}", config.theta_behav));
        }
        if delta < config.theta_causal {
            failures.push(format!("ablation drop {delta:.2} below {:.2}", config.theta_causal));
        }
        let passed = failures.is_empty();
        if passed {
            passing.push((i, acc, delta));
        }
        rows.push(CandidateAssessment {
            id,
            circuit_id: record.circuit_id.clone(),
            distance,
            relaxed_equivalent,
            acc_t: Some(acc),
            delta_t: Some(delta),
            passed,
            reason: if passed { "ok".to_string() } else { failures.join("; ") },
        });
    }

    let outcome = if let Some(&(best, _, best_delta)) = passing
        .iter()
        .reduce(|best, cand| if cand.2 > best.2 { cand } else { best })
    {
        TransferOutcome {
            status: TransferStatus::Accepted,
            accepted_id: Some(candidates[best].content_id()?),
            candidates_considered: candidates.len(),
            candidates_passed: passing.len(),
            best_delta_t: Some(best_delta),
            note: None,
        }
    } else {
        fallback_outcome(source, candidates.len(), config, rediscovery)?
    };
    Ok(TransferReport { outcome, candidates: rows })
}

fn fallback_outcome(
    source: &MechanismRecord,
    considered: usize,
    config: &TransferConfig,
    rediscovery: Option<&RediscoveryHook>,
) -> Result<TransferOutcome, RegistryError> {
    let base = TransferOutcome {
        status: TransferStatus::NoCandidates,
        accepted_id: None,
        candidates_considered: considered,
        candidates_passed: 0,
        best_delta_t: None,
        note: None,
    };
    let Some(hook) = rediscovery else {
        return Ok(TransferOutcome {
            status: if considered == 0 {
                TransferStatus::NoCandidates
            } else {
                TransferStatus::Incompatible
            },
            ..base
        });
    };
    match hook() {
        Ok(record) => {
            let distance = pair_distance(&source.signature, &record.signature, config);
            if distance < config.delta_ilp {
                Ok(TransferOutcome {
                    status: TransferStatus::FallbackAccepted,
                    accepted_id: Some(record.content_id()?),
                    best_delta_t: Some(record.validation.delta_t),
                    note: Some(format!(
                        "rediscovered mechanism at signature distance {distance:.4}"
                    )),
                    ..base
                })
            } else {
                Ok(TransferOutcome {
                    status: TransferStatus::Incompatible,
                    note: Some(format!(
                        "rediscovered mechanism at signature distance {distance:.4}, budget {:.2}",
                        config.delta_ilp
                    )),
                    ..base
                })
            }
        }
        Err(msg) => Ok(TransferOutcome {
            status: TransferStatus::NoCandidates,
            note: Some(format!("rediscovery failed: {msg}")),
            ..base
        }),
    }
}

impl TransferReport {
    /// Candidate table plus outcome summary, one row per candidate.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let o = &self.outcome;
        out.push_str(&format!(
            "status: {:?}, considered {}, passed {}\n",
            o.status, o.candidates_considered, o.candidates_passed
        ));
        if let Some(id) = &o.accepted_id {
            out.push_str(&format!("accepted: {id}\n"));
        }
        if let Some(best) = o.best_delta_t {
            out.push_str(&format!("best ablation drop: {best:.4}\n"));
        }
        if let Some(note) = &o.note {
            out.push_str(&format!("note: {note}\n"));
        }
        if self.candidates.is_empty() {
            return out;
        }
        out.push_str("\nid           circuit                        dist    acc     drop    verdict  reason\n");
        for row in &self.candidates {
            let short: String = row.id.chars().take(12).collect();
            let fmt = |v: Option<f64>| match v {
                Some(v) => format!("{v:<7.2}"),
                None => "-      ".to_string(),
            };
            out.push_str(&format!(
                "{short}  {:<29}  {:<6.4}  {}  {}  {:<7}  {}\n",
                row.circuit_id,
                row.distance,
                fmt(row.acc_t),
                fmt(row.delta_t),
                if row.passed { "pass" } else { "fail" },
                row.reason
            ));
        }
        out
    }
}
