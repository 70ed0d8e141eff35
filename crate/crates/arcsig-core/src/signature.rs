//! Clause-shape summaries and the coarse distance between them.
//!
//! The summary deliberately forgets thresholds and variable names: it
//! keeps the clause count, the nesting depth, the body length, the
//! predicate vocabulary, and the motif constants. Distance compares those
//! sets, so it measures which structural commitments two clauses share,
//! not how tightly they are tuned.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::clause::HornClause;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum SignatureError {
    #[error("clause has an empty body")]
    EmptyBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlpSignature {
    pub n_clauses: u32,
    pub mean_depth: f64,
    pub mean_length: f64,
    pub complexity: f64,
    pub predicates: BTreeSet<String>,
    pub motif_constants: BTreeSet<String>,
}

/// Summarise a single learned clause.
///
/// Body length counts top-level items including constraints, so a lone
/// ratio literal with its threshold counts 2. Complexity is
/// (length x depth)/10; the factor keeps published values in [0, 1] for
/// realistic clause sizes.
pub fn extract_signature(clause: &HornClause) -> Result<IlpSignature, SignatureError> {
    if clause.body.is_empty() {
        return Err(SignatureError::EmptyBody);
    }
    let mean_length = clause.item_count() as f64;
    let mean_depth = clause.nesting_depth() as f64;
    Ok(IlpSignature {
        n_clauses: 1,
        mean_depth,
        mean_length,
        complexity: mean_length * mean_depth / 10.0,
        predicates: clause.body_predicates(),
        motif_constants: clause.motif_constants(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceWeights {
    /// Weight of the predicate-set term.
    pub lambda: f64,
    /// Weight of the motif-set term.
    pub mu: f64,
}

impl Default for DistanceWeights {
    fn default() -> Self {
        DistanceWeights { lambda: 0.5, mu: 0.5 }
    }
}

/// Jaccard similarity; two empty sets count as identical.
fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    inter / union
}

/// d = sqrt((dn/n_max)^2 + lambda(1-J(predicates)) + mu(1-J(motifs))).
pub fn signature_distance(
    a: &IlpSignature,
    b: &IlpSignature,
    weights: DistanceWeights,
    n_max: u32,
) -> f64 {
    let n_max = f64::from(n_max.max(1));
    let dn = (f64::from(a.n_clauses) - f64::from(b.n_clauses)) / n_max;
    let pred = 1.0 - jaccard(&a.predicates, &b.predicates);
    let motif = 1.0 - jaccard(&a.motif_constants, &b.motif_constants);
    (dn * dn + weights.lambda * pred + weights.mu * motif).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// Pairwise distances over named signatures. The clause-count normaliser
/// is the largest count present, at least 1.
pub fn distance_matrix(
    signatures: &[(String, IlpSignature)],
    weights: DistanceWeights,
) -> DistanceMatrix {
    let n_max = signatures.iter().map(|(_, s)| s.n_clauses).max().unwrap_or(1).max(1);
    let names = signatures.iter().map(|(n, _)| n.clone()).collect();
    let values = signatures
        .iter()
        .map(|(_, row)| {
            signatures
                .iter()
                .map(|(_, col)| signature_distance(row, col, weights, n_max))
                .collect()
        })
        .collect();
    DistanceMatrix { names, values }
}

impl DistanceMatrix {
    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == row)?;
        let j = self.names.iter().position(|n| n == col)?;
        Some(self.values[i][j])
    }

    /// Rectangular CSV: ids as header row and first column, 4 decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("id");
        for name in &self.names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in self.names.iter().zip(&self.values) {
            out.push_str(name);
            for v in row {
                out.push_str(&format!(",{v:.4}"));
            }
            out.push('\n');
        }
        out
    }
}
