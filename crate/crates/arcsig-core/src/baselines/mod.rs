//! Structural comparison baselines.
//!
//! The clause-based distance gets compared against three conventional
//! yardsticks computed from the same raw material: a Weisfeiler-Lehman
//! graph kernel over the circuit graphs, Euclidean distance over flat
//! structural feature vectors, and a small decision forest scored by
//! leave-one-out accuracy. Separation ratios and a label permutation test
//! quantify how well any of these keeps task families apart.

pub mod forest;
pub mod wl;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circuit::{NodeKind, StructuralFacts};
use crate::motifs::ALL_MOTIFS;
use crate::signature::DistanceMatrix;

pub use forest::forest_loo_accuracy;
pub use wl::{wl_distance, wl_distance_matrix, DEFAULT_WL_ITERATIONS};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum BaselineError {
    #[error("feature vectors must share a dimension, saw {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("{vectors} vectors against {labels} labels")]
    LengthMismatch { vectors: usize, labels: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("name {0} missing from the distance matrix")]
    UnknownName(String),
    #[error("separation sets must be disjoint and non-empty")]
    BadPartition,
    #[error("circuit {0} has no nodes")]
    EmptyCircuit(String),
}

/// Flat numeric view of one circuit's structural facts: component ratios,
/// relative size, density, span endpoints, skip/hub counts, then one 0/1
/// indicator per motif name. Fixed width for a fixed motif vocabulary.
pub fn structural_features(facts: &StructuralFacts) -> Vec<f64> {
    let ratio = |kind| facts.component_ratio.get(&kind).copied().unwrap_or(0.0);
    let mut v = vec![
        ratio(NodeKind::AttnHead),
        ratio(NodeKind::MlpBlock),
        facts.rel_size,
        facts.density,
        facts.layer_span.0,
        facts.layer_span.1,
        f64::from(facts.skip_connections),
        f64::from(facts.hub_count),
    ];
    for motif in ALL_MOTIFS {
        v.push(if facts.motifs.contains(&motif) { 1.0 } else { 0.0 });
    }
    v
}

pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = [
        "attn_ratio",
        "mlp_ratio",
        "rel_size",
        "density",
        "span_lo",
        "span_hi",
        "skip_connections",
        "hub_count",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    names.extend(ALL_MOTIFS.iter().map(|m| m.name().to_string()));
    names
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64, BaselineError> {
    if a.len() != b.len() {
        return Err(BaselineError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Pairwise Euclidean distances over named feature vectors.
pub fn euclidean_distance_matrix(
    vectors: &[(String, Vec<f64>)],
) -> Result<DistanceMatrix, BaselineError> {
    let names = vectors.iter().map(|(n, _)| n.clone()).collect();
    let mut values = Vec::with_capacity(vectors.len());
    for (_, row) in vectors {
        let mut out = Vec::with_capacity(vectors.len());
        for (_, col) in vectors {
            out.push(euclidean_distance(row, col)?);
        }
        values.push(out);
    }
    Ok(DistanceMatrix { names, values })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub value: f64,
    /// Within-set distances were all zero; `value` is infinite.
    pub degenerate: bool,
}

/// How far a target group sits from the rest, in units of the rest's own
/// spread: mean cross-group distance over mean within-`other` distance.
/// Scale-free, so any metric's matrix can be fed in.
pub fn separation_ratio(
    matrix: &DistanceMatrix,
    target: &[&str],
    other: &[&str],
) -> Result<Separation, BaselineError> {
    if target.is_empty() || other.is_empty() || target.iter().any(|t| other.contains(t)) {
        return Err(BaselineError::BadPartition);
    }
    if other.len() < 2 {
        return Err(BaselineError::Degenerate(
            "need two comparison circuits for a within-spread".to_string(),
        ));
    }
    let lookup = |name: &str| -> Result<usize, BaselineError> {
        matrix
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| BaselineError::UnknownName(name.to_string()))
    };
    let mut cross = 0.0;
    for t in target {
        let i = lookup(t)?;
        for o in other {
            cross += matrix.values[i][lookup(o)?];
        }
    }
    cross /= (target.len() * other.len()) as f64;
    let mut within = 0.0;
    let mut pairs = 0usize;
    for (a, oa) in other.iter().enumerate() {
        for ob in &other[a + 1..] {
            within += matrix.values[lookup(oa)?][lookup(ob)?];
            pairs += 1;
        }
    }
    within /= pairs as f64;
    if within == 0.0 {
        return Ok(Separation { value: f64::INFINITY, degenerate: true });
    }
    Ok(Separation { value: cross / within, degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterTest {
    /// Mean within-family distance minus mean between-family distance;
    /// negative when families clump.
    pub statistic: f64,
    pub p_value: f64,
    pub n_permutations: usize,
}

fn clustering_statistic(distances: &[Vec<f64>], classes: &[usize]) -> f64 {
    let mut within = (0.0, 0usize);
    let mut between = (0.0, 0usize);
    for i in 0..classes.len() {
        for j in i + 1..classes.len() {
            let bucket = if classes[i] == classes[j] { &mut within } else { &mut between };
            bucket.0 += distances[i][j];
            bucket.1 += 1;
        }
    }
    within.0 / within.1 as f64 - between.0 / between.1 as f64
}

/// Are same-family feature vectors closer together than chance? Labels are
/// shuffled `n_permutations` times; the add-one rank of the observed
/// statistic (ties counted) gives the p-value.
pub fn cfs_cluster_permutation_test(
    vectors: &[Vec<f64>],
    labels: &[&str],
    n_permutations: usize,
    seed: u64,
) -> Result<ClusterTest, BaselineError> {
    if vectors.len() != labels.len() {
        return Err(BaselineError::LengthMismatch {
            vectors: vectors.len(),
            labels: labels.len(),
        });
    }
    let mut families: BTreeMap<&str, usize> = BTreeMap::new();
    for label in labels {
        *families.entry(label).or_insert(0) += 1;
    }
    if families.len() < 2 {
        return Err(BaselineError::Degenerate("need at least two families".to_string()));
    }
    if families.values().any(|&c| c < 2) {
        return Err(BaselineError::Degenerate(
            "every family needs at least two members".to_string(),
        ));
    }
    let class_of: BTreeMap<&str, usize> =
        families.keys().enumerate().map(|(i, &k)| (k, i)).collect();
    let mut classes: Vec<usize> = labels.iter().map(|l| class_of[l]).collect();

    let n = vectors.len();
    let mut distances = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean_distance(&vectors[i], &vectors[j])?;
            distances[i][j] = d;
            distances[j][i] = d;
        }
    }

    let observed = clustering_statistic(&distances, &classes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut at_or_below = 0usize;
    for _ in 0..n_permutations {
        classes.shuffle(&mut rng);
        if clustering_statistic(&distances, &classes) <= observed {
            at_or_below += 1;
        }
    }
    Ok(ClusterTest {
        statistic: observed,
        p_value: (1 + at_or_below) as f64 / (n_permutations + 1) as f64,
        n_permutations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::StructureConfig;
    use crate::facts::derive_facts;
    use crate::ingest::test_support::{circuit_with, edge, node};
    use crate::motifs::MotifConfig;

    #[test]
    fn feature_vector_is_fixed_width_and_ordered() {
        let circuit = circuit_with(
            vec![
                node("a1", NodeKind::AttnHead, 2, Some(0)),
                node("a2", NodeKind::AttnHead, 3, Some(1)),
                node("m1", NodeKind::MlpBlock, 9, None),
            ],
            vec![edge("a1", "a2", 0.8), edge("a2", "m1", 0.4)],
        );
        let (facts, _) =
            derive_facts(&circuit, &StructureConfig::default(), &MotifConfig::default())
                .unwrap();
        let v = structural_features(&facts);
        assert_eq!(v.len(), feature_names().len());
        assert_eq!(v.len(), 8 + ALL_MOTIFS.len());
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-12); // attn ratio
        assert!((v[1] - 1.0 / 3.0).abs() < 1e-12); // mlp ratio
        assert!(v[8..].iter().all(|&x| x == 0.0 || x == 1.0));
    }

    #[test]
    fn euclidean_basics() {
        assert_eq!(euclidean_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(euclidean_distance(&[0.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        // manual sum of squares
        let d = euclidean_distance(&[0.3, -1.2, 4.0], &[1.3, 0.8, 3.5]).unwrap();
        assert!((d - (1.0f64 + 4.0 + 0.25).sqrt()).abs() < 1e-12);
        assert!(matches!(
            euclidean_distance(&[1.0], &[1.0, 2.0]),
            Err(BaselineError::DimensionMismatch(1, 2))
        ));
    }

    fn uniform_matrix(names: &[&str], value: f64) -> DistanceMatrix {
        let n = names.len();
        DistanceMatrix {
            names: names.iter().map(|s| s.to_string()).collect(),
            values: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 0.0 } else { value }).collect())
                .collect(),
        }
    }

    #[test]
    fn uniform_matrix_separates_at_one() {
        let m = uniform_matrix(&["a", "b", "c", "d"], 0.7);
        let s = separation_ratio(&m, &["a"], &["b", "c", "d"]).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!(!s.degenerate);
    }

    #[test]
    fn separation_is_scale_invariant() {
        let names = ["a", "b", "c", "d"];
        let mut m = uniform_matrix(&names, 1.0);
        m.values[0][1] = 4.0;
        m.values[1][0] = 4.0;
        m.values[2][3] = 0.5;
        m.values[3][2] = 0.5;
        let r1 = separation_ratio(&m, &["a"], &["b", "c", "d"]).unwrap().value;
        for row in &mut m.values {
            for v in row.iter_mut() {
                *v *= 17.0;
            }
        }
        let r2 = separation_ratio(&m, &["a"], &["b", "c", "d"]).unwrap().value;
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn zero_spread_flags_degenerate() {
        let m = uniform_matrix(&["a", "b", "c"], 0.0);
        let s = separation_ratio(&m, &["a"], &["b", "c"]).unwrap();
        assert!(s.degenerate);
        assert!(s.value.is_infinite());
    }

    #[test]
    fn separation_rejects_bad_partitions() {
        let m = uniform_matrix(&["a", "b", "c"], 1.0);
        assert_eq!(
            separation_ratio(&m, &["a"], &["a", "b"]),
            Err(BaselineError::BadPartition)
        );
        assert_eq!(separation_ratio(&m, &[], &["a", "b"]), Err(BaselineError::BadPartition));
        assert!(matches!(
            separation_ratio(&m, &["a"], &["b", "x"]),
            Err(BaselineError::UnknownName(_))
        ));
        assert!(matches!(
            separation_ratio(&m, &["a"], &["b"]),
            Err(BaselineError::Degenerate(_))
        ));
    }

    #[test]
    fn identical_vectors_give_null_statistic_and_p_one() {
        let vectors = vec![vec![0.5, 0.5]; 6];
        let labels = ["x", "x", "x", "y", "y", "y"];
        let t = cfs_cluster_permutation_test(&vectors, &labels, 200, 7).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn tight_separated_families_reach_the_floor() {
        // two blobs of six, far apart; no shuffle can do as well
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for i in 0..6 {
            vectors.push(vec![0.0 + 0.01 * i as f64, 0.0]);
            labels.push("x");
        }
        for i in 0..6 {
            vectors.push(vec![10.0 + 0.01 * i as f64, 0.0]);
            labels.push("y");
        }
        let t = cfs_cluster_permutation_test(&vectors, &labels, 99, 11).unwrap();
        assert!(t.statistic < 0.0);
        assert_eq!(t.p_value, 1.0 / 100.0);
    }

    #[test]
    fn anti_clustered_labels_score_high_p() {
        // opposite square corners share a label: within > between
        let vectors = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ];
        let labels = ["x", "y", "x", "y"];
        let t = cfs_cluster_permutation_test(&vectors, &labels, 200, 3).unwrap();
        assert!(t.statistic > 0.0);
        assert!(t.p_value > 0.5);
    }

    #[test]
    fn degenerate_groupings_are_rejected() {
        let vectors = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            cfs_cluster_permutation_test(&vectors, &["x", "x", "x"], 10, 0),
            Err(BaselineError::Degenerate(_))
        ));
        assert!(matches!(
            cfs_cluster_permutation_test(&vectors, &["x", "x", "y"], 10, 0),
            Err(BaselineError::Degenerate(_))
        ));
        assert!(matches!(
            cfs_cluster_permutation_test(&vectors, &["x", "x"], 10, 0),
            Err(BaselineError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn permutation_test_is_seed_reproducible() {
        let vectors: Vec<Vec<f64>> =
            (0..8).map(|i| vec![f64::from(i % 3), f64::from(i / 3)]).collect();
        let labels = ["x", "y", "x", "y", "x", "y", "x", "y"];
        let a = cfs_cluster_permutation_test(&vectors, &labels, 500, 42).unwrap();
        let b = cfs_cluster_permutation_test(&vectors, &labels, 500, 42).unwrap();
        assert_eq!(a, b);
    }
}
