//! Symbolic characterisation of neural-network circuits.
//!
//! A *circuit* is a small subgraph of a transformer (attention heads, MLP
//! blocks, the odd embed/logits node) that some discovery method claims is
//! responsible for a task. This crate turns such circuits into logic: it
//! derives structural facts, detects connectivity motifs, learns bounded
//! Horn clauses that separate one task's circuits from the rest, and then
//! compares, validates, stores and transfers those clauses.
//!
//! The layers build on each other:
//!
//! * [`circuit`] — parse/serialise circuit documents, derive structural
//!   facts (sizes, ratios, spans, density, hubs).
//! * [`cfs`] — summarise per-component functional data (direct logit
//!   attribution, role profiles) into a fixed-width vector.
//! * [`motifs`] — a closed vocabulary of connectivity/composition motifs
//!   plus discriminative scoring (information gain and friends).
//! * [`facts`] — ground atoms over a fixed predicate universe; the
//!   closed-world database clause evaluation runs against.
//! * [`clause`] — the Horn clause language: terms, literals, numeric
//!   constraints, a text syntax parser and renderer.
//! * [`ilp`] — bounded one-vs-rest clause search over two candidate pools
//!   (named motifs vs blind edge-type sequences).
//! * [`signature`] — clause-shape summaries and a distance metric on them.
//! * [`subsume`] — theta-subsumption (strict and relaxed) and the
//!   generality hierarchy it induces.
//! * [`validate`] — behavioural/causal/minimality checks and random
//!   baselines, driven by a pluggable evaluation oracle.
//! * [`registry`] — append-only, content-addressed persistence of
//!   characterised mechanism records.
//! * [`transfer`] — cross-model candidate filtering, screening and
//!   selection.
//! * [`baselines`] — graph-kernel, feature-space and decision-forest
//!   comparisons, plus permutation tests.
//! * [`synth`] — seeded generator of circuit pools with a planted clause,
//!   used for end-to-end exercises.
//! * [`pipeline`] — the ingest → characterise → validate → store run.

pub mod baselines;
pub mod cfs;
pub mod circuit;
pub mod clause;
pub mod facts;
pub mod ilp;
mod ingest;
pub mod motifs;
pub mod pipeline;
pub mod registry;
pub mod signature;
pub mod subsume;
pub mod synth;
pub mod transfer;
pub mod validate;

pub use circuit::{Circuit, CircuitDocument, Edge, ModelSkeleton, Node, NodeKind, StructuralFacts};
pub use clause::{Comparator, Constraint, HornClause, Literal, Pool, Term};
pub use motifs::Motif;
