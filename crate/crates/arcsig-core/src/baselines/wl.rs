//! Weisfeiler-Lehman subtree kernel over circuit graphs.
//!
//! Nodes start from a coarse label (kind plus depth third) and are refined
//! by folding in the sorted labels of in- and out-neighbours; one histogram
//! per refinement round, kernel = summed histogram dot products, distance =
//! 1 - normalised kernel. Labels never look at node ids, so isomorphic
//! relabelings are at distance zero by construction.

use std::collections::BTreeMap;

use crate::circuit::Circuit;
use crate::motifs::band;
use crate::signature::DistanceMatrix;

use super::BaselineError;

pub const DEFAULT_WL_ITERATIONS: usize = 3;

fn initial_labels(circuit: &Circuit) -> Vec<String> {
    circuit
        .nodes
        .iter()
        .map(|n| format!("{}|{}", n.kind.short(), band(n.layer, circuit.skeleton.num_layers)))
        .collect()
}

fn refine(circuit: &Circuit, labels: &[String]) -> Vec<String> {
    let index: BTreeMap<&str, usize> =
        circuit.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut ins: Vec<Vec<&str>> = vec![Vec::new(); labels.len()];
    let mut outs: Vec<Vec<&str>> = vec![Vec::new(); labels.len()];
    for e in &circuit.edges {
        let s = index[e.src.as_str()];
        let d = index[e.dst.as_str()];
        outs[s].push(labels[d].as_str());
        ins[d].push(labels[s].as_str());
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            ins[i].sort_unstable();
            outs[i].sort_unstable();
            format!("{label}<{}|{}>", ins[i].join(","), outs[i].join(","))
        })
        .collect()
}

fn histogram(labels: &[String]) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for label in labels {
        *h.entry(label.clone()).or_insert(0) += 1;
    }
    h
}

fn histograms(circuit: &Circuit, iterations: usize) -> Vec<BTreeMap<String, usize>> {
    let mut labels = initial_labels(circuit);
    let mut out = vec![histogram(&labels)];
    for _ in 0..iterations {
        labels = refine(circuit, &labels);
        out.push(histogram(&labels));
    }
    out
}

fn dot(a: &[BTreeMap<String, usize>], b: &[BTreeMap<String, usize>]) -> f64 {
    let mut k = 0.0;
    for (ha, hb) in a.iter().zip(b) {
        for (label, ca) in ha {
            if let Some(cb) = hb.get(label) {
                k += (ca * cb) as f64;
            }
        }
    }
    k
}

/// Unnormalised subtree kernel value.
pub fn wl_kernel(c1: &Circuit, c2: &Circuit, iterations: usize) -> f64 {
    dot(&histograms(c1, iterations), &histograms(c2, iterations))
}

/// `1 - k(c1,c2) / sqrt(k(c1,c1) k(c2,c2))`; 1.0 when no label is shared
/// at any refinement round.
pub fn wl_distance(
    c1: &Circuit,
    c2: &Circuit,
    iterations: usize,
) -> Result<f64, BaselineError> {
    for c in [c1, c2] {
        if c.nodes.is_empty() {
            return Err(BaselineError::EmptyCircuit(c.id.clone()));
        }
    }
    let k12 = wl_kernel(c1, c2, iterations);
    if k12 == 0.0 {
        return Ok(1.0);
    }
    let k11 = wl_kernel(c1, c1, iterations);
    let k22 = wl_kernel(c2, c2, iterations);
    Ok((1.0 - k12 / (k11 * k22).sqrt()).max(0.0))
}

/// Pairwise kernel distances over named circuits; histograms are computed
/// once per circuit.
pub fn wl_distance_matrix(
    circuits: &[(String, &Circuit)],
    iterations: usize,
) -> Result<DistanceMatrix, BaselineError> {
    for (_, c) in circuits {
        if c.nodes.is_empty() {
            return Err(BaselineError::EmptyCircuit(c.id.clone()));
        }
    }
    let hists: Vec<_> = circuits.iter().map(|(_, c)| histograms(c, iterations)).collect();
    let self_k: Vec<f64> = hists.iter().map(|h| dot(h, h)).collect();
    let names = circuits.iter().map(|(n, _)| n.clone()).collect();
    let n = circuits.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let k12 = dot(&hists[i], &hists[j]);
            let d = if k12 == 0.0 {
                1.0
            } else {
                (1.0 - k12 / (self_k[i] * self_k[j]).sqrt()).max(0.0)
            };
            values[i][j] = d;
            values[j][i] = d;
        }
    }
    Ok(DistanceMatrix { names, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::NodeKind;
    use crate::ingest::test_support::{circuit_with, edge, node};

    #[test]
    fn isomorphic_relabelings_are_at_zero() {
        let c1 = circuit_with(
            vec![
                node("a1", NodeKind::AttnHead, 2, Some(0)),
                node("m1", NodeKind::MlpBlock, 9, None),
            ],
            vec![edge("a1", "m1", 0.8)],
        );
        // different ids, different sort order, different head index
        let c2 = circuit_with(
            vec![
                node("zz", NodeKind::AttnHead, 2, Some(3)),
                node("qq", NodeKind::MlpBlock, 9, None),
            ],
            vec![edge("zz", "qq", 0.1)],
        );
        assert_eq!(wl_distance(&c1, &c2, DEFAULT_WL_ITERATIONS).unwrap(), 0.0);
        assert_eq!(wl_distance(&c1, &c1, DEFAULT_WL_ITERATIONS).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_label_sets_are_at_one() {
        let early_attn = circuit_with(
            vec![
                node("a1", NodeKind::AttnHead, 0, Some(0)),
                node("a2", NodeKind::AttnHead, 1, Some(0)),
            ],
            vec![edge("a1", "a2", 0.5)],
        );
        let late_mlp = circuit_with(
            vec![
                node("m1", NodeKind::MlpBlock, 14, None),
                node("m2", NodeKind::MlpBlock, 15, None),
            ],
            vec![edge("m1", "m2", 0.5)],
        );
        assert_eq!(wl_distance(&early_attn, &late_mlp, 3).unwrap(), 1.0);
    }

    #[test]
    fn small_pair_matches_hand_computed_histograms() {
        // one edge between two band-0 heads, against a lone band-0 head
        let pair = circuit_with(
            vec![
                node("a", NodeKind::AttnHead, 2, Some(0)),
                node("b", NodeKind::AttnHead, 3, Some(1)),
            ],
            vec![edge("a", "b", 0.9)],
        );
        let lone = circuit_with(vec![node("x", NodeKind::AttnHead, 4, Some(0))], vec![]);
        // round 0: {attn|0: 2} vs {attn|0: 1} -> 2; round 1 shares nothing
        assert_eq!(wl_kernel(&pair, &lone, 1), 2.0);
        // k11 = 2^2 + (1 + 1) = 6, k22 = 1 + 1 = 2
        assert_eq!(wl_kernel(&pair, &pair, 1), 6.0);
        assert_eq!(wl_kernel(&lone, &lone, 1), 2.0);
        let d = wl_distance(&pair, &lone, 1).unwrap();
        assert!((d - (1.0 - 2.0 / 12.0f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn direction_matters() {
        let fwd = circuit_with(
            vec![
                node("a", NodeKind::AttnHead, 2, Some(0)),
                node("m", NodeKind::MlpBlock, 3, None),
            ],
            vec![edge("a", "m", 0.9)],
        );
        let rev = circuit_with(
            vec![
                node("a", NodeKind::AttnHead, 2, Some(0)),
                node("m", NodeKind::MlpBlock, 3, None),
            ],
            vec![edge("m", "a", 0.9)],
        );
        let d = wl_distance(&fwd, &rev, 3).unwrap();
        assert!(d > 0.0);
    }

    #[test]
    fn empty_circuits_are_rejected() {
        let ok = circuit_with(vec![node("a", NodeKind::AttnHead, 2, Some(0))], vec![]);
        let empty = circuit_with(vec![], vec![]);
        assert!(matches!(
            wl_distance(&ok, &empty, 3),
            Err(BaselineError::EmptyCircuit(_))
        ));
    }

    #[test]
    fn matrix_agrees_with_pairwise_calls() {
        let c1 = circuit_with(
            vec![
                node("a", NodeKind::AttnHead, 2, Some(0)),
                node("b", NodeKind::AttnHead, 3, Some(1)),
            ],
            vec![edge("a", "b", 0.9)],
        );
        let c2 = circuit_with(vec![node("x", NodeKind::AttnHead, 4, Some(0))], vec![]);
        let c3 = circuit_with(vec![node("m", NodeKind::MlpBlock, 14, None)], vec![]);
        let named = vec![
            ("one".to_string(), &c1),
            ("two".to_string(), &c2),
            ("three".to_string(), &c3),
        ];
        let m = wl_distance_matrix(&named, 3).unwrap();
        for (i, (_, ci)) in named.iter().enumerate() {
            for (j, (_, cj)) in named.iter().enumerate() {
                let expect = if i == j { 0.0 } else { wl_distance(ci, cj, 3).unwrap() };
                assert_eq!(m.values[i][j], expect);
            }
        }
    }
}
