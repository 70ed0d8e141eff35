//! The Horn clause language.
//!
//! Learned characterisations are single definite clauses written in a small
//! Prolog-like syntax:
//!
//! ```text
//! arch_ioi(C) :- component_ratio(C, attn, R), R > 0.63, size(C, N), N < 38.
//! ```
//!
//! A body is a sequence of literals; a literal over a numeric predicate may
//! carry one comparison constraint on the variable it binds (`R > 0.63`
//! above). Constraints render as separate body items but travel attached to
//! their binding literal, which keeps matching rules local.
//!
//! Clauses are range-restricted (every head variable occurs in the body) and
//! bounded: at most [`MAX_BODY_LITERALS`] non-constraint literals. Both
//! invariants are enforced at construction, so downstream code can assume
//! them.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Upper bound on non-constraint body literals.
pub const MAX_BODY_LITERALS: usize = 5;

/// Fixed arities for the circuit predicate vocabulary. Predicates outside
/// this table (e.g. `parent/2` in tests) are accepted with any consistent
/// arity.
const KNOWN_ARITIES: &[(&str, usize)] = &[
    ("has_motif", 2),
    ("layer_span", 3),
    ("component_ratio", 3),
    ("rel_size", 2),
    ("size", 2),
    ("density", 2),
    ("skip_connections", 2),
    ("hub_count", 2),
    ("edge_seq2", 3),
    ("edge_seq3", 4),
];

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ClauseError {
    #[error("body has {0} literals, limit is {MAX_BODY_LITERALS}")]
    TooManyLiterals(usize),
    #[error("head variable {0} does not occur in the body")]
    NotRangeRestricted(String),
    #[error("predicate {0} used with arity {1}, expected {2}")]
    ArityMismatch(String, usize, usize),
    #[error("constraint on {0} does not reference a variable of its literal")]
    UnboundConstraint(String),
    #[error("parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

/// A first-order term. Terms are flat: no function symbols, so literal
/// nesting depth is always 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Sym(String),
    Num(f64),
}

impl Term {
    pub fn var(name: &str) -> Self {
        Term::Var(name.to_string())
    }

    pub fn sym(name: &str) -> Self {
        Term::Sym(name.to_string())
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Sym(s) => write!(f, "{s}"),
            Term::Num(n) => write!(f, "{}", format_number(*n)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    Gt,
    Lt,
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Comparator::Gt => write!(f, ">"),
            Comparator::Lt => write!(f, "<"),
        }
    }
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Gt => value > threshold,
            Comparator::Lt => value < threshold,
        }
    }
}

/// A numeric comparison on a variable bound by the owning literal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub var: String,
    pub cmp: Comparator,
    pub threshold: f64,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.var, self.cmp, format_number(self.threshold))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Literal {
    pub predicate: String,
    pub args: Vec<Term>,
    pub constraint: Option<Constraint>,
}

impl Literal {
    pub fn new(predicate: &str, args: Vec<Term>) -> Self {
        Literal { predicate: predicate.to_string(), args, constraint: None }
    }

    pub fn with_constraint(mut self, var: &str, cmp: Comparator, threshold: f64) -> Self {
        self.constraint = Some(Constraint { var: var.to_string(), cmp, threshold });
        self
    }

    /// Variables occurring in the argument list.
    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            _ => None,
        })
    }

    /// Body items this literal contributes: itself plus its constraint.
    pub fn item_count(&self) -> usize {
        1 + usize::from(self.constraint.is_some())
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")?;
        if let Some(c) = &self.constraint {
            write!(f, ", {c}")?;
        }
        Ok(())
    }
}

/// Which candidate pool a learned clause came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pool {
    NamedMotif,
    BlindStructural,
}

/// A definite clause `head :- body`. Learned clauses have heads of the form
/// `arch_<task>(C)`; the checker itself is generic over predicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HornClause {
    pub head: Literal,
    pub body: Vec<Literal>,
    pub pool: Pool,
    /// For blind-pool clauses: whether the edge-sequence pattern matches a
    /// named motif topology.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confirmatory: Option<bool>,
}

impl HornClause {
    pub fn new(head: Literal, body: Vec<Literal>) -> Result<Self, ClauseError> {
        let clause =
            HornClause { head, body, pool: Pool::NamedMotif, confirmatory: None };
        clause.check()?;
        Ok(clause)
    }

    /// Standard head for a task label: `arch_<task>(C)`.
    pub fn for_task(task: &str, body: Vec<Literal>) -> Result<Self, ClauseError> {
        let head = Literal::new(&format!("arch_{task}"), vec![Term::var("C")]);
        HornClause::new(head, body)
    }

    pub fn with_pool(mut self, pool: Pool, confirmatory: Option<bool>) -> Self {
        self.pool = pool;
        self.confirmatory = confirmatory;
        self
    }

    /// Task label for `arch_<task>` heads.
    pub fn task_label(&self) -> Option<&str> {
        self.head.predicate.strip_prefix("arch_")
    }

    fn check(&self) -> Result<(), ClauseError> {
        if self.body.len() > MAX_BODY_LITERALS {
            return Err(ClauseError::TooManyLiterals(self.body.len()));
        }
        let body_vars: BTreeSet<&str> = self.body.iter().flat_map(|l| l.vars()).collect();
        for v in self.head.vars() {
            if !body_vars.contains(v) {
                return Err(ClauseError::NotRangeRestricted(v.to_string()));
            }
        }
        for lit in std::iter::once(&self.head).chain(self.body.iter()) {
            if let Some(&(_, arity)) =
                KNOWN_ARITIES.iter().find(|(p, _)| *p == lit.predicate)
            {
                if lit.args.len() != arity {
                    return Err(ClauseError::ArityMismatch(
                        lit.predicate.clone(),
                        lit.args.len(),
                        arity,
                    ));
                }
            }
            if let Some(c) = &lit.constraint {
                if !lit.vars().any(|v| v == c.var) {
                    return Err(ClauseError::UnboundConstraint(lit.predicate.clone()));
                }
            }
        }
        Ok(())
    }

    /// Non-constraint body literals.
    pub fn literal_count(&self) -> usize {
        self.body.len()
    }

    /// Top-level body items: literals plus constraint items. This is the
    /// length that shows up in clause-shape summaries.
    pub fn item_count(&self) -> usize {
        self.body.iter().map(Literal::item_count).sum()
    }

    /// Maximum term nesting depth over all literals. Terms are flat, so this
    /// is 1 for every well-formed clause.
    pub fn nesting_depth(&self) -> usize {
        1
    }

    /// Predicate names of the non-constraint body literals.
    pub fn body_predicates(&self) -> BTreeSet<String> {
        self.body.iter().map(|l| l.predicate.clone()).collect()
    }

    /// Motif constants named by `has_motif` literals.
    pub fn motif_constants(&self) -> BTreeSet<String> {
        self.body
            .iter()
            .filter(|l| l.predicate == "has_motif")
            .filter_map(|l| match l.args.get(1) {
                Some(Term::Sym(s)) => Some(s.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn render(&self) -> String {
        self.to_string()
    }

    /// Parse one clause from its text form.
    pub fn parse(text: &str) -> Result<Self, ClauseError> {
        let mut clauses = parse_clauses(text)?;
        match clauses.len() {
            1 => Ok(clauses.remove(0)),
            n => Err(ClauseError::Parse {
                pos: 0,
                msg: format!("expected one clause, found {n}"),
            }),
        }
    }
}

impl fmt::Display for HornClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.head.predicate)?;
        for (i, a) in self.head.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ") :- ")?;
        for (i, lit) in self.body.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{lit}")?;
        }
        write!(f, ".")
    }
}

/// Render a threshold the way the clause tables do: integers bare, ratios
/// with their shortest decimal form.
pub fn format_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

// === text syntax ===

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    Comma,
    Turnstile,
    Gt,
    Lt,
    Period,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ClauseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\r' | '\n' => i += 1,
            '%' | '#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            '(' => {
                toks.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                toks.push((i, Tok::RParen));
                i += 1;
            }
            ',' => {
                toks.push((i, Tok::Comma));
                i += 1;
            }
            '>' => {
                toks.push((i, Tok::Gt));
                i += 1;
            }
            '<' => {
                toks.push((i, Tok::Lt));
                i += 1;
            }
            ':' => {
                if bytes.get(i + 1) == Some(&b'-') {
                    toks.push((i, Tok::Turnstile));
                    i += 2;
                } else {
                    return Err(ClauseError::Parse { pos: i, msg: "expected :-".into() });
                }
            }
            '.' => {
                // A dot is a clause terminator unless it continues a number,
                // which the number branch below consumes itself.
                toks.push((i, Tok::Period));
                i += 1;
            }
            _ if c.is_ascii_digit() => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || (bytes[i] == b'.'
                            && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)))
                {
                    i += 1;
                }
                let s = &text[start..i];
                let n = s.parse::<f64>().map_err(|e| ClauseError::Parse {
                    pos: start,
                    msg: format!("bad number {s}: {e}"),
                })?;
                toks.push((start, Tok::Num(n)));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric()
                        || bytes[i] == b'_'
                        || bytes[i] == b'\'')
                {
                    i += 1;
                }
                toks.push((start, Tok::Ident(text[start..i].to_string())));
            }
            _ => {
                return Err(ClauseError::Parse {
                    pos: i,
                    msg: format!("unexpected character {c:?}"),
                })
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(usize::MAX, |(p, _)| *p)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|(_, t)| t.clone());
        self.at += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ClauseError> {
        let pos = self.pos();
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(ClauseError::Parse {
                pos,
                msg: format!("expected {want:?}, found {other:?}"),
            }),
        }
    }

    fn term(&mut self) -> Result<Term, ClauseError> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Num(n)) => Ok(Term::Num(n)),
            Some(Tok::Ident(name)) => Ok(ident_term(&name)),
            other => Err(ClauseError::Parse {
                pos,
                msg: format!("expected term, found {other:?}"),
            }),
        }
    }

    fn literal(&mut self, name: String) -> Result<Literal, ClauseError> {
        self.expect(Tok::LParen)?;
        let mut args = vec![self.term()?];
        while self.peek() == Some(&Tok::Comma) {
            self.next();
            args.push(self.term()?);
        }
        self.expect(Tok::RParen)?;
        Ok(Literal { predicate: name, args, constraint: None })
    }

    /// One body item: either a literal or a constraint `V > n` attached to
    /// the most recent literal binding `V`.
    fn body_item(&mut self, body: &mut Vec<Literal>) -> Result<(), ClauseError> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Ident(name)) => match self.peek() {
                Some(Tok::LParen) => {
                    let lit = self.literal(name)?;
                    body.push(lit);
                    Ok(())
                }
                Some(Tok::Gt) | Some(Tok::Lt) => {
                    let cmp = match self.next() {
                        Some(Tok::Gt) => Comparator::Gt,
                        _ => Comparator::Lt,
                    };
                    let tpos = self.pos();
                    let threshold = match self.next() {
                        Some(Tok::Num(n)) => n,
                        other => {
                            return Err(ClauseError::Parse {
                                pos: tpos,
                                msg: format!("expected threshold, found {other:?}"),
                            })
                        }
                    };
                    let owner = body
                        .iter_mut()
                        .rev()
                        .find(|l| l.vars().any(|v| v == name))
                        .ok_or_else(|| ClauseError::Parse {
                            pos,
                            msg: format!("constraint on unbound variable {name}"),
                        })?;
                    if owner.constraint.is_some() {
                        return Err(ClauseError::Parse {
                            pos,
                            msg: format!("second constraint on variable {name}"),
                        });
                    }
                    owner.constraint = Some(Constraint { var: name, cmp, threshold });
                    Ok(())
                }
                other => Err(ClauseError::Parse {
                    pos,
                    msg: format!("expected ( or comparator after {name}, found {other:?}"),
                }),
            },
            other => Err(ClauseError::Parse {
                pos,
                msg: format!("expected body item, found {other:?}"),
            }),
        }
    }

    fn clause(&mut self) -> Result<HornClause, ClauseError> {
        let pos = self.pos();
        let head = match self.next() {
            Some(Tok::Ident(name)) => self.literal(name)?,
            other => {
                return Err(ClauseError::Parse {
                    pos,
                    msg: format!("expected head, found {other:?}"),
                })
            }
        };
        self.expect(Tok::Turnstile)?;
        let mut body = Vec::new();
        self.body_item(&mut body)?;
        while self.peek() == Some(&Tok::Comma) {
            self.next();
            self.body_item(&mut body)?;
        }
        self.expect(Tok::Period)?;
        HornClause::new(head, body)
    }
}

fn ident_term(name: &str) -> Term {
    let first = name.chars().next().unwrap_or('_');
    if first.is_ascii_uppercase() || first == '_' {
        Term::Var(name.to_string())
    } else {
        Term::Sym(name.to_string())
    }
}

/// Parse every clause in `text` (comments with `%` or `#`, clauses end with
/// a period).
pub fn parse_clauses(text: &str) -> Result<Vec<HornClause>, ClauseError> {
    let toks = tokenize(text)?;
    let mut parser = Parser { toks, at: 0 };
    let mut out = Vec::new();
    while parser.peek().is_some() {
        out.push(parser.clause()?);
    }
    if out.is_empty() {
        return Err(ClauseError::Parse { pos: 0, msg: "no clause found".into() });
    }
    Ok(out)
}
