//! A small decision forest, scored by leave-one-out accuracy.
//!
//! Fifty Gini-split trees on bootstrap samples, each split drawn from a
//! sqrt-sized random feature subset, majority vote across trees. Everything
//! downstream of the seed is deterministic: ties in split quality keep the
//! first candidate in draw order, ties in votes and leaf majorities keep
//! the smallest class index.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::BaselineError;

pub const DEFAULT_N_TREES: usize = 50;

enum Tree {
    Leaf(usize),
    Split { feature: usize, threshold: f64, below: Box<Tree>, above: Box<Tree> },
}

fn gini(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t) * (c as f64 / t)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (class, &count) in counts.iter().enumerate() {
        if count > counts[best] {
            best = class;
        }
    }
    best
}

fn class_counts(rows: &[usize], classes: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &r in rows {
        counts[classes[r]] += 1;
    }
    counts
}

fn build_tree(
    rows: &[usize],
    vectors: &[Vec<f64>],
    classes: &[usize],
    n_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let counts = class_counts(rows, classes, n_classes);
    let parent = gini(&counts);
    if parent == 0.0 {
        return Tree::Leaf(majority(&counts));
    }
    let d = vectors[0].len();
    let k = ((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1));
    let mut best: Option<(f64, usize, f64)> = None;
    for feature in rand::seq::index::sample(rng, d, k.min(d)) {
        let mut values: Vec<f64> = rows.iter().map(|&r| vectors[r][feature]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let threshold = (pair[0] + pair[1]) / 2.0;
            let mut lo = vec![0; n_classes];
            let mut hi = vec![0; n_classes];
            for &r in rows {
                if vectors[r][feature] <= threshold {
                    lo[classes[r]] += 1;
                } else {
                    hi[classes[r]] += 1;
                }
            }
            let n_lo: usize = lo.iter().sum();
            let n_hi: usize = hi.iter().sum();
            let weighted = (n_lo as f64 * gini(&lo) + n_hi as f64 * gini(&hi))
                / rows.len() as f64;
            if best.is_none_or(|(s, _, _)| weighted < s) {
                best = Some((weighted, feature, threshold));
            }
        }
    }
    match best {
        Some((score, feature, threshold)) if score < parent => {
            let (lo, hi): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| vectors[r][feature] <= threshold);
            Tree::Split {
                feature,
                threshold,
                below: Box::new(build_tree(&lo, vectors, classes, n_classes, rng)),
                above: Box::new(build_tree(&hi, vectors, classes, n_classes, rng)),
            }
        }
        _ => Tree::Leaf(majority(&counts)),
    }
}

fn predict(tree: &Tree, x: &[f64]) -> usize {
    match tree {
        Tree::Leaf(class) => *class,
        Tree::Split { feature, threshold, below, above } => {
            if x[*feature] <= *threshold {
                predict(below, x)
            } else {
                predict(above, x)
            }
        }
    }
}

fn forest_vote(
    train: &[usize],
    vectors: &[Vec<f64>],
    classes: &[usize],
    n_classes: usize,
    x: &[f64],
    n_trees: usize,
    seed: u64,
) -> usize {
    let mut votes = vec![0usize; n_classes];
    for t in 0..n_trees {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_add((t as u64).wrapping_mul(0x9e3779b97f4a7c15)));
        let sample: Vec<usize> =
            (0..train.len()).map(|_| train[rng.gen_range(0..train.len())]).collect();
        let tree = build_tree(&sample, vectors, classes, n_classes, &mut rng);
        votes[predict(&tree, x)] += 1;
    }
    majority(&votes)
}

/// Leave-one-out accuracy of a seeded forest over labelled feature
/// vectors. Bit-reproducible for a fixed seed.
pub fn forest_loo_accuracy(
    vectors: &[Vec<f64>],
    labels: &[&str],
    n_trees: usize,
    seed: u64,
) -> Result<f64, BaselineError> {
    if vectors.len() != labels.len() {
        return Err(BaselineError::LengthMismatch {
            vectors: vectors.len(),
            labels: labels.len(),
        });
    }
    if vectors.is_empty() || n_trees == 0 {
        return Err(BaselineError::Degenerate("nothing to score".to_string()));
    }
    let dim = vectors[0].len();
    for v in vectors {
        if v.len() != dim {
            return Err(BaselineError::DimensionMismatch(dim, v.len()));
        }
    }
    let mut names: Vec<&str> = labels.to_vec();
    names.sort_unstable();
    names.dedup();
    if names.len() < 2 {
        return Err(BaselineError::Degenerate(
            "need at least two classes".to_string(),
        ));
    }
    let classes: Vec<usize> =
        labels.iter().map(|l| names.iter().position(|n| n == l).unwrap()).collect();

    let mut correct = 0usize;
    for held in 0..vectors.len() {
        let train: Vec<usize> = (0..vectors.len()).filter(|&r| r != held).collect();
        let fold_seed = seed.wrapping_add((held as u64).wrapping_mul(0x517cc1b727220a95));
        let vote = forest_vote(
            &train,
            vectors,
            &classes,
            names.len(),
            &vectors[held],
            n_trees,
            fold_seed,
        );
        if vote == classes[held] {
            correct += 1;
        }
    }
    Ok(correct as f64 / vectors.len() as f64)
}
