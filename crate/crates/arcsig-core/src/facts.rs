//! Ground facts per circuit and the closed-world database over them.
//!
//! Clause evaluation never consults the raw graph: it runs against a
//! [`FactSet`], the frozen summary of everything the predicate vocabulary
//! can say about one circuit. Anything not derivable from the fact set is
//! false, which is what makes clause satisfaction closed-world.
//!
//! [`closed_world_completion`] materialises that convention for symbolic
//! predicates: given the atoms that hold and the admissible constant
//! domains, it produces an explicit true/false entry for every atom of the
//! universe and rejects facts that mention constants outside their domain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::circuit::{
    derive_structural_facts, Circuit, DeriveError, NodeKind, StructuralFacts, StructureConfig,
};
use crate::clause::{HornClause, Literal, Term};
use crate::motifs::{detect_motifs, Motif, MotifConfig, ALL_MOTIFS};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum FactError {
    #[error("predicate {0} is not part of the universe")]
    UnknownPredicate(String),
    #[error("atom {0} has constant {1} outside the domain of position {2}")]
    OutsideDomain(String, String, usize),
    #[error("atom {0} has arity {1}, universe expects {2}")]
    BadArity(String, usize, usize),
}

/// Everything clause literals can observe about one circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactSet {
    pub circuit_id: String,
    pub size: u32,
    pub component_ratio: BTreeMap<NodeKind, f64>,
    pub rel_size: f64,
    pub layer_span: (f64, f64),
    pub depth_mean: f64,
    pub density: f64,
    pub skip_connections: u32,
    pub hub_count: u32,
    pub motifs: BTreeSet<Motif>,
    pub edge_kind_pairs: BTreeSet<(String, String)>,
    pub edge_kind_triples: BTreeSet<(String, String, String)>,
}

impl FactSet {
    pub fn from_structural(circuit_id: &str, facts: &StructuralFacts) -> Self {
        FactSet {
            circuit_id: circuit_id.to_string(),
            size: facts.size,
            component_ratio: facts.component_ratio.clone(),
            rel_size: facts.rel_size,
            layer_span: facts.layer_span,
            depth_mean: facts.depth_mean,
            density: facts.density,
            skip_connections: facts.skip_connections,
            hub_count: facts.hub_count,
            motifs: facts.motifs.clone(),
            edge_kind_pairs: facts.edge_kind_pairs.clone(),
            edge_kind_triples: facts.edge_kind_triples.clone(),
        }
    }

    fn ratio(&self, kind_sym: &str) -> Option<f64> {
        let kind = parse_kind_sym(kind_sym)?;
        self.component_ratio.get(&kind).copied()
    }

    /// Value bound by a numeric predicate's output variable.
    fn numeric_value(&self, predicate: &str, args: &[Term]) -> Option<f64> {
        match predicate {
            "component_ratio" => match args.get(1) {
                Some(Term::Sym(kind)) => self.ratio(kind),
                _ => None,
            },
            "rel_size" => Some(self.rel_size),
            "size" => Some(f64::from(self.size)),
            "density" => Some(self.density),
            "skip_connections" => Some(f64::from(self.skip_connections)),
            "hub_count" => Some(f64::from(self.hub_count)),
            _ => None,
        }
    }

    /// Closed-world truth of one body literal (with its attached
    /// constraint, if any) against this circuit.
    pub fn literal_holds(&self, literal: &Literal) -> bool {
        match literal.predicate.as_str() {
            "has_motif" => {
                if literal.constraint.is_some() {
                    return false;
                }
                match literal.args.get(1) {
                    Some(Term::Sym(name)) => {
                        Motif::parse(name).is_some_and(|m| self.motifs.contains(&m))
                    }
                    Some(Term::Var(_)) => !self.motifs.is_empty(),
                    _ => false,
                }
            }
            "layer_span" => literal.constraint.is_none(),
            "edge_seq2" => match (&literal.args.get(1), &literal.args.get(2)) {
                (Some(Term::Sym(a)), Some(Term::Sym(b))) => {
                    let (Some(a), Some(b)) = (short_kind(a), short_kind(b)) else {
                        return false;
                    };
                    self.edge_kind_pairs.contains(&(a.to_string(), b.to_string()))
                }
                _ => false,
            },
            "edge_seq3" => {
                match (&literal.args.get(1), &literal.args.get(2), &literal.args.get(3)) {
                    (Some(Term::Sym(a)), Some(Term::Sym(b)), Some(Term::Sym(c))) => {
                        let (Some(a), Some(b), Some(c)) =
                            (short_kind(a), short_kind(b), short_kind(c))
                        else {
                            return false;
                        };
                        self.edge_kind_triples.contains(&(
                            a.to_string(),
                            b.to_string(),
                            c.to_string(),
                        ))
                    }
                    _ => false,
                }
            }
            _ => match self.numeric_value(&literal.predicate, &literal.args) {
                Some(value) => match &literal.constraint {
                    Some(c) => c.cmp.holds(value, c.threshold),
                    None => true,
                },
                None => false,
            },
        }
    }

    /// Whether this circuit satisfies the clause body. Numeric variables
    /// shared across literals must agree on their bound value.
    pub fn satisfies(&self, clause: &HornClause) -> bool {
        let mut env: BTreeMap<&str, f64> = BTreeMap::new();
        for literal in &clause.body {
            if !self.literal_holds(literal) {
                return false;
            }
            if let Some(value) = self.numeric_value(&literal.predicate, &literal.args) {
                if let Some(Term::Var(v)) = literal.args.last() {
                    if let Some(&bound) = env.get(v.as_str()) {
                        if bound != value {
                            return false;
                        }
                    }
                    env.insert(v, value);
                }
            }
        }
        true
    }

    /// Ground symbolic atoms of this circuit (motifs and edge-kind
    /// sequences), in universe form.
    pub fn symbolic_atoms(&self) -> Vec<Atom> {
        let c = self.circuit_id.as_str();
        let mut atoms = Vec::new();
        for m in &self.motifs {
            atoms.push(Atom::new("has_motif", &[c, m.name()]));
        }
        for (a, b) in &self.edge_kind_pairs {
            atoms.push(Atom::new("edge_seq2", &[c, a, b]));
        }
        for (a, b, d) in &self.edge_kind_triples {
            atoms.push(Atom::new("edge_seq3", &[c, a, b, d]));
        }
        atoms
    }
}

fn parse_kind_sym(sym: &str) -> Option<NodeKind> {
    match sym {
        "attn" | "attention" | "attn_head" => Some(NodeKind::AttnHead),
        "mlp" | "mlp_block" => Some(NodeKind::MlpBlock),
        _ => None,
    }
}

fn short_kind(sym: &str) -> Option<&'static str> {
    match sym {
        "attn" | "attention" | "attn_head" => Some("attn"),
        "mlp" | "mlp_block" => Some("mlp"),
        "embed" => Some("embed"),
        "logits" => Some("logits"),
        _ => None,
    }
}

/// Derive structural facts, detect motifs, and freeze the fact set in one
/// step.
pub fn derive_facts(
    circuit: &Circuit,
    structure: &StructureConfig,
    motifs: &MotifConfig,
) -> Result<(StructuralFacts, FactSet), DeriveError> {
    let mut sf = derive_structural_facts(circuit, structure)?;
    sf.motifs = detect_motifs(circuit, motifs);
    let fs = FactSet::from_structural(&circuit.id, &sf);
    Ok((sf, fs))
}

// === closed-world completion ===

/// A ground atom: predicate applied to constant names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new(predicate: &str, args: &[&str]) -> Self {
        Atom {
            predicate: predicate.to_string(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn render(&self) -> String {
        format!("{}({})", self.predicate, self.args.join(", "))
    }
}

/// Admissible constants per predicate argument position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredicateUniverse {
    domains: BTreeMap<String, Vec<Vec<String>>>,
}

impl PredicateUniverse {
    pub fn add(&mut self, predicate: &str, domains: &[&[&str]]) {
        self.domains.insert(
            predicate.to_string(),
            domains.iter().map(|d| d.iter().map(|s| s.to_string()).collect()).collect(),
        );
    }

    /// The symbolic universe for one circuit: every motif plus every
    /// edge-kind sequence over typed and untyped kinds.
    pub fn symbolic_for(circuit_id: &str) -> Self {
        let kinds: Vec<&str> = vec!["attn", "mlp", "embed", "logits"];
        let motif_names: Vec<&str> = ALL_MOTIFS.iter().map(|m| m.name()).collect();
        let mut u = PredicateUniverse::default();
        u.add("has_motif", &[&[circuit_id], &motif_names]);
        u.add("edge_seq2", &[&[circuit_id], &kinds, &kinds]);
        u.add("edge_seq3", &[&[circuit_id], &kinds, &kinds, &kinds]);
        u
    }

    /// Every atom of the universe, in sorted order.
    pub fn atoms(&self) -> Vec<Atom> {
        let mut out = Vec::new();
        for (predicate, domains) in &self.domains {
            let mut stack: Vec<Vec<String>> = vec![Vec::new()];
            for domain in domains {
                let mut next = Vec::new();
                for partial in &stack {
                    for constant in domain {
                        let mut args = partial.clone();
                        args.push(constant.clone());
                        next.push(args);
                    }
                }
                stack = next;
            }
            for args in stack {
                out.push(Atom { predicate: predicate.clone(), args });
            }
        }
        out.sort();
        out
    }

    fn check(&self, atom: &Atom) -> Result<(), FactError> {
        let domains = self
            .domains
            .get(&atom.predicate)
            .ok_or_else(|| FactError::UnknownPredicate(atom.predicate.clone()))?;
        if domains.len() != atom.args.len() {
            return Err(FactError::BadArity(atom.render(), atom.args.len(), domains.len()));
        }
        for (i, (arg, domain)) in atom.args.iter().zip(domains).enumerate() {
            if !domain.contains(arg) {
                return Err(FactError::OutsideDomain(atom.render(), arg.clone(), i));
            }
        }
        Ok(())
    }
}

/// Explicit truth value for every atom the universe admits: present facts
/// true, everything else false.
pub fn closed_world_completion(
    facts: &[Atom],
    universe: &PredicateUniverse,
) -> Result<BTreeMap<Atom, bool>, FactError> {
    for f in facts {
        universe.check(f)?;
    }
    let mut db: BTreeMap<Atom, bool> =
        universe.atoms().into_iter().map(|a| (a, false)).collect();
    for f in facts {
        db.insert(f.clone(), true);
    }
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Node;
    use crate::ingest::test_support::{circuit_with, edge, node};

    fn attn(id: &str, layer: u32) -> Node {
        node(id, NodeKind::AttnHead, layer, Some(0))
    }

    fn mlp(id: &str, layer: u32) -> Node {
        node(id, NodeKind::MlpBlock, layer, None)
    }

    fn sample_facts() -> FactSet {
        let c = circuit_with(
            vec![attn("a1", 2), attn("a2", 3), attn("a3", 4), mlp("m1", 9)],
            vec![edge("a1", "a2", 0.8), edge("a2", "a3", 0.7), edge("a3", "m1", 0.4)],
        );
        derive_facts(&c, &StructureConfig::default(), &MotifConfig::default()).unwrap().1
    }

    #[test]
    fn satisfaction_of_a_published_shape() {
        let facts = sample_facts();
        // attention ratio 3/4, size 4
        let yes = HornClause::parse(
            "arch_t(C) :- has_motif(C, attn_chain_3), component_ratio(C, attn, R), R > 0.63, size(C, N), N < 38.",
        )
        .unwrap();
        assert!(facts.satisfies(&yes));
        let no_ratio = HornClause::parse(
            "arch_t(C) :- component_ratio(C, attn, R), R > 0.80.",
        )
        .unwrap();
        assert!(!facts.satisfies(&no_ratio));
        let no_motif =
            HornClause::parse("arch_t(C) :- has_motif(C, mlp_heavy).").unwrap();
        assert!(!facts.satisfies(&no_motif));
    }

    #[test]
    fn attention_spelling_variants_agree() {
        let facts = sample_facts();
        let a = HornClause::parse("arch_t(C) :- component_ratio(C, attn, R), R > 0.5.").unwrap();
        let b =
            HornClause::parse("arch_t(C) :- component_ratio(C, attention, R), R > 0.5.").unwrap();
        assert_eq!(facts.satisfies(&a), facts.satisfies(&b));
    }

    #[test]
    fn edge_sequences_hold_closed_world() {
        let facts = sample_facts();
        let yes = HornClause::parse("arch_t(C) :- edge_seq3(C, attn, attn, attn).").unwrap();
        assert!(facts.satisfies(&yes));
        let also = HornClause::parse("arch_t(C) :- edge_seq2(C, attn, mlp).").unwrap();
        assert!(facts.satisfies(&also));
        let no = HornClause::parse("arch_t(C) :- edge_seq2(C, mlp, attn).").unwrap();
        assert!(!facts.satisfies(&no));
        let unknown = HornClause::parse("arch_t(C) :- edge_seq2(C, mlp, resid).").unwrap();
        assert!(!facts.satisfies(&unknown));
    }

    #[test]
    fn layer_span_always_binds() {
        let facts = sample_facts();
        let c = HornClause::parse("arch_t(C) :- layer_span(C, Lmin, Lmax).").unwrap();
        assert!(facts.satisfies(&c));
    }

    #[test]
    fn shared_numeric_variables_must_agree() {
        let facts = sample_facts(); // size 4, hub_count 0
        let consistent =
            HornClause::parse("arch_t(C) :- size(C, N), skip_connections(C, N).").unwrap();
        assert!(!facts.satisfies(&consistent));
        let same = HornClause::parse("arch_t(C) :- size(C, N), size(C, N).").unwrap();
        assert!(facts.satisfies(&same));
    }

    #[test]
    fn unknown_predicates_are_false() {
        let facts = sample_facts();
        let c = HornClause::parse("arch_t(C) :- faithful(C, F).").unwrap();
        assert!(!facts.satisfies(&c));
    }

    #[test]
    fn completion_marks_absent_atoms_false() {
        let mut universe = PredicateUniverse::default();
        universe.add("has_motif", &[&["c"], &["m1", "m2"]]);
        let facts = vec![Atom::new("has_motif", &["c", "m1"])];
        let db = closed_world_completion(&facts, &universe).unwrap();
        assert_eq!(db[&Atom::new("has_motif", &["c", "m1"])], true);
        assert_eq!(db[&Atom::new("has_motif", &["c", "m2"])], false);
        assert_eq!(db.len(), 2);
    }

    #[test]
    fn completion_rejects_out_of_domain_atoms() {
        let mut universe = PredicateUniverse::default();
        universe.add("has_motif", &[&["c"], &["m1"]]);
        let err = closed_world_completion(
            &[Atom::new("has_motif", &["c", "zzz"])],
            &universe,
        )
        .unwrap_err();
        assert!(matches!(err, FactError::OutsideDomain(_, arg, 1) if arg == "zzz"));
        let err = closed_world_completion(
            &[Atom::new("foreign", &["c"])],
            &universe,
        )
        .unwrap_err();
        assert!(matches!(err, FactError::UnknownPredicate(_)));
    }

    #[test]
    fn circuit_atoms_fit_their_universe() {
        let facts = sample_facts();
        let universe = PredicateUniverse::symbolic_for(&facts.circuit_id);
        let db = closed_world_completion(&facts.symbolic_atoms(), &universe).unwrap();
        let truths = db.values().filter(|&&t| t).count();
        assert_eq!(truths, facts.symbolic_atoms().len());
    }
}
