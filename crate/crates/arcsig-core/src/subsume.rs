//! Theta-subsumption over learned clauses.
//!
//! A clause g subsumes a clause s when some substitution of g's variables
//! maps every body literal of g into s's body, treated as a set. Heads are
//! unified positionally and their predicate names are ignored, so clauses
//! learned for different task labels stay comparable.
//!
//! Two matching modes:
//! - strict: numeric constants (including constraint thresholds) must be
//!   equal;
//! - relaxed: numeric constants are wildcards, but the comparator of a
//!   constraint must still agree. Relaxed verdicts read as structural
//!   generalisation, not numeric entailment.
//!
//! A literal without a constraint matches one with a constraint: the bare
//! literal asks for less.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clause::{HornClause, Literal, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Strict,
    Relaxed,
}

/// Substitution witnessing a subsumption: variable of the more general
/// clause to the term it maps onto.
pub type Substitution = BTreeMap<String, Term>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Generalises,
    Specialises,
    Equivalent,
    Incomparable,
}

impl Relation {
    /// Matrix notation: row verdict against column.
    pub fn symbol(&self) -> &'static str {
        match self {
            Relation::Generalises => "\u{2292}",  // ⊒
            Relation::Specialises => "\u{2291}",  // ⊑
            Relation::Equivalent => "=",
            Relation::Incomparable => "\u{2225}", // ∥
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub relation: Relation,
    /// Substitution for the direction that holds; for equivalent clauses
    /// the left-to-right one.
    pub witness: Option<Substitution>,
}

fn term_matches(g: &Term, s: &Term, theta: &mut Substitution, mode: MatchMode) -> bool {
    match (g, s) {
        (Term::Var(v), t) => match theta.get(v) {
            Some(bound) => bound == t,
            None => {
                theta.insert(v.clone(), t.clone());
                true
            }
        },
        (Term::Sym(a), Term::Sym(b)) => a == b,
        (Term::Num(a), Term::Num(b)) => match mode {
            MatchMode::Strict => a == b,
            MatchMode::Relaxed => true,
        },
        _ => false,
    }
}

fn literal_matches(
    g: &Literal,
    s: &Literal,
    theta: &Substitution,
    mode: MatchMode,
) -> Option<Substitution> {
    if g.predicate != s.predicate || g.args.len() != s.args.len() {
        return None;
    }
    let mut out = theta.clone();
    for (ga, sa) in g.args.iter().zip(&s.args) {
        if !term_matches(ga, sa, &mut out, mode) {
            return None;
        }
    }
    match (&g.constraint, &s.constraint) {
        (None, _) => {}
        (Some(_), None) => return None,
        (Some(gc), Some(sc)) => {
            if gc.cmp != sc.cmp {
                return None;
            }
            if mode == MatchMode::Strict && gc.threshold != sc.threshold {
                return None;
            }
            // the constrained variables must correspond under theta
            if out.get(&gc.var) != Some(&Term::Var(sc.var.clone())) {
                return None;
            }
        }
    }
    Some(out)
}

fn match_body(
    remaining: &[&Literal],
    body: &[Literal],
    theta: Substitution,
    mode: MatchMode,
) -> Option<Substitution> {
    let Some((first, rest)) = remaining.split_first() else {
        return Some(theta);
    };
    for candidate in body {
        if let Some(extended) = literal_matches(first, candidate, &theta, mode) {
            if let Some(done) = match_body(rest, body, extended, mode) {
                return Some(done);
            }
        }
    }
    None
}

/// Does `general` theta-subsume `specific`? Returns the witnessing
/// substitution when it does.
pub fn subsumes(
    general: &HornClause,
    specific: &HornClause,
    mode: MatchMode,
) -> Option<Substitution> {
    if general.head.args.len() != specific.head.args.len() {
        return None;
    }
    // unify heads positionally; head predicates are task labels and do not
    // participate in the ordering
    let mut theta = Substitution::new();
    for (ga, sa) in general.head.args.iter().zip(&specific.head.args) {
        if !term_matches(ga, sa, &mut theta, mode) {
            return None;
        }
    }
    let literals: Vec<&Literal> = general.body.iter().collect();
    match_body(&literals, &specific.body, theta, mode)
}

pub fn theta_subsumes(general: &HornClause, specific: &HornClause, mode: MatchMode) -> bool {
    subsumes(general, specific, mode).is_some()
}

/// Pairwise verdict between two clauses.
pub fn compare(a: &HornClause, b: &HornClause, mode: MatchMode) -> Verdict {
    let forward = subsumes(a, b, mode);
    let backward = subsumes(b, a, mode);
    match (forward, backward) {
        (Some(w), Some(_)) => Verdict { relation: Relation::Equivalent, witness: Some(w) },
        (Some(w), None) => Verdict { relation: Relation::Generalises, witness: Some(w) },
        (None, Some(w)) => Verdict { relation: Relation::Specialises, witness: Some(w) },
        (None, None) => Verdict { relation: Relation::Incomparable, witness: None },
    }
}

/// Full pairwise ordering over a named clause set.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    pub names: Vec<String>,
    /// cells[i][j] relates clause i (row) to clause j (column)
    pub cells: Vec<Vec<Relation>>,
}

pub fn hierarchy(clauses: &[(String, HornClause)], mode: MatchMode) -> Hierarchy {
    let names: Vec<String> = clauses.iter().map(|(n, _)| n.clone()).collect();
    let cells = clauses
        .iter()
        .map(|(_, row)| {
            clauses.iter().map(|(_, col)| compare(row, col, mode).relation).collect()
        })
        .collect();
    Hierarchy { names, cells }
}

impl Hierarchy {
    pub fn relation(&self, row: &str, col: &str) -> Option<Relation> {
        let i = self.names.iter().position(|n| n == row)?;
        let j = self.names.iter().position(|n| n == col)?;
        Some(self.cells[i][j])
    }

    /// Text matrix with one row per clause and verdict symbols in cells.
    pub fn render(&self) -> String {
        let width = self.names.iter().map(|n| n.chars().count()).max().unwrap_or(0).max(4);
        let pad = |s: &str| {
            let n = s.chars().count();
            format!("{}{}", s, " ".repeat(width.saturating_sub(n) + 2))
        };
        let mut out = String::new();
        out.push_str(&pad(""));
        for name in &self.names {
            out.push_str(&pad(name));
        }
        out.push('\n');
        for (name, row) in self.names.iter().zip(&self.cells) {
            out.push_str(&pad(name));
            for cell in row {
                out.push_str(&pad(cell.symbol()));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> HornClause {
        HornClause::parse(text).unwrap()
    }

    /// The five clauses learned from the small task pool on the 1B model.
    pub fn five_task_clauses() -> Vec<(String, HornClause)> {
        let specs = [
            ("ioi", "arch_ioi(C) :- component_ratio(C, attn, R), R > 0.63."),
            (
                "loc",
                "arch_loc(C) :- has_motif(C, mlp_heavy), has_motif(C, mid_layer_attn_peak), \
                 layer_span(C, Lmin, Lmax), component_ratio(C, attn, R), R > 0.42, \
                 size(C, N), N < 44.",
            ),
            (
                "path",
                "arch_path(C) :- has_motif(C, early_attn_peak), has_motif(C, attn_chain_3), \
                 layer_span(C, Lmin, Lmax), component_ratio(C, attn, R), R > 0.44, \
                 size(C, N), N < 42.",
            ),
            (
                "time",
                "arch_time(C) :- has_motif(C, early_attn_peak), layer_span(C, Lmin, Lmax), \
                 component_ratio(C, attn, R), R > 0.35, size(C, N), N < 36.",
            ),
            ("gt", "arch_gt(C) :- has_motif(C, attn_to_attn), layer_span(C, Lmin, Lmax), \
                 component_ratio(C, attn, R), R > 0.50, size(C, N), N < 49."),
        ];
        specs.iter().map(|(n, t)| (n.to_string(), parse(t))).collect()
    }

    #[test]
    fn reflexive_with_identity_witness() {
        let c = parse("arch_t(C) :- has_motif(C, attn_chain_3), size(C, N), N < 10.");
        let w = subsumes(&c, &c, MatchMode::Strict).unwrap();
        assert_eq!(w.get("C"), Some(&Term::var("C")));
        assert_eq!(w.get("N"), Some(&Term::var("N")));
        assert!(theta_subsumes(&c, &c, MatchMode::Relaxed));
    }

    #[test]
    fn renamed_variant_is_equivalent() {
        let a = parse("arch_t(C) :- component_ratio(C, attn, R), R > 0.5.");
        let b = parse("arch_t(X) :- component_ratio(X, attn, Q), Q > 0.5.");
        assert_eq!(compare(&a, &b, MatchMode::Strict).relation, Relation::Equivalent);
    }

    #[test]
    fn single_ratio_clause_generalises_richer_clause_relaxed() {
        let clauses = five_task_clauses();
        let ioi = &clauses[0].1;
        let time = &clauses[3].1;
        assert!(theta_subsumes(ioi, time, MatchMode::Relaxed));
        assert!(!theta_subsumes(time, ioi, MatchMode::Relaxed));
        // strictly the thresholds differ, so neither direction holds
        assert!(!theta_subsumes(ioi, time, MatchMode::Strict));
        assert_eq!(compare(ioi, time, MatchMode::Strict).relation, Relation::Incomparable);
    }

    #[test]
    fn adding_a_motif_literal_specialises() {
        let clauses = five_task_clauses();
        let time = &clauses[3].1;
        let path = &clauses[2].1;
        let v = compare(time, path, MatchMode::Relaxed);
        assert_eq!(v.relation, Relation::Generalises);
        assert!(v.witness.is_some());
        assert_eq!(compare(path, time, MatchMode::Relaxed).relation, Relation::Specialises);
    }

    #[test]
    fn different_motifs_are_incomparable() {
        let clauses = five_task_clauses();
        let loc = &clauses[1].1;
        let time = &clauses[3].1;
        let v = compare(loc, time, MatchMode::Relaxed);
        assert_eq!(v.relation, Relation::Incomparable);
        assert!(v.witness.is_none());
    }

    #[test]
    fn five_task_matrix() {
        let h = hierarchy(&five_task_clauses(), MatchMode::Relaxed);
        use Relation::*;
        let expected = [
            [Equivalent, Generalises, Generalises, Generalises, Generalises],
            [Specialises, Equivalent, Incomparable, Incomparable, Incomparable],
            [Specialises, Incomparable, Equivalent, Specialises, Incomparable],
            [Specialises, Incomparable, Generalises, Equivalent, Incomparable],
            [Specialises, Incomparable, Incomparable, Incomparable, Equivalent],
        ];
        for (i, row) in expected.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                assert_eq!(
                    h.cells[i][j], *want,
                    "cell ({}, {})",
                    h.names[i], h.names[j]
                );
            }
        }
        let rendered = h.render();
        assert!(rendered.contains('\u{2292}'));
        assert!(rendered.contains('\u{2225}'));
    }

    #[test]
    fn family_relation_chain_clauses() {
        let general = parse("grandparent(X, Z) :- parent(X, Y), parent(Y, Z).");
        let special = parse("grandparent(X, Z) :- parent(X, Y), parent(Y, Z), female(X).");
        assert!(theta_subsumes(&general, &special, MatchMode::Strict));
        assert!(!theta_subsumes(&special, &general, MatchMode::Strict));
        let w = subsumes(&general, &special, MatchMode::Strict).unwrap();
        assert_eq!(w.get("Y"), Some(&Term::var("Y")));
    }

    #[test]
    fn bare_literal_matches_constrained_literal() {
        let bare = parse("arch_t(C) :- size(C, N).");
        let constrained = parse("arch_t(C) :- size(C, N), N < 36.");
        assert!(theta_subsumes(&bare, &constrained, MatchMode::Strict));
        assert!(!theta_subsumes(&constrained, &bare, MatchMode::Strict));
    }

    #[test]
    fn comparators_never_cross_match() {
        let gt = parse("arch_t(C) :- size(C, N), N > 10.");
        let lt = parse("arch_t(C) :- size(C, N), N < 10.");
        assert!(!theta_subsumes(&gt, &lt, MatchMode::Relaxed));
        assert!(!theta_subsumes(&lt, &gt, MatchMode::Relaxed));
    }

    #[test]
    fn shared_variables_constrain_the_mapping() {
        // the chain through Y must land on a real chain, not two loose edges
        let chain = parse("p(X, Z) :- parent(X, Y), parent(Y, Z).");
        let loose = parse("p(A, B) :- parent(A, M), parent(N, B).");
        assert!(!theta_subsumes(&chain, &loose, MatchMode::Strict));
        assert!(theta_subsumes(&loose, &chain, MatchMode::Strict));
    }

    #[test]
    fn transitive_nesting_chain() {
        let g1 = parse("arch_t(C) :- component_ratio(C, attn, R), R > 0.4.");
        let g2 =
            parse("arch_t(C) :- component_ratio(C, attn, R), R > 0.4, size(C, N), N < 30.");
        let g3 = parse(
            "arch_t(C) :- component_ratio(C, attn, R), R > 0.4, size(C, N), N < 30, \
             has_motif(C, attn_to_attn).",
        );
        for (a, b) in [(&g1, &g2), (&g2, &g3), (&g1, &g3)] {
            assert!(theta_subsumes(a, b, MatchMode::Strict));
            assert!(!theta_subsumes(b, a, MatchMode::Strict));
        }
    }
}
