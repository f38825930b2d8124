mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use spanparse::parser::{cky_decode, independent_decode, loss_augmented_decode, GoldLabels, SpanScores};
use spanparse::tensor::Rng;
use spanparse::treebank::{binarize_with_empty, check_valid_bracketing, BinaryTree, LabeledSpan, EMPTY};

use common::{brute_force_max, shapes};

fn random_scores(n: usize, labels: usize, seed: u64) -> SpanScores {
    let mut rng = Rng::new(seed);
    SpanScores::from_fn(n, labels, |_, _, _| rng.uniform_range(-2.0, 2.0)).unwrap()
}

/// A random gold tree over `n` words as labeled binary nodes, drawn from the
/// enumerated shapes; labels may be empty below the root.
fn random_gold(n: usize, labels: usize, rng: &mut Rng) -> Vec<(usize, usize, usize)> {
    let all = shapes(n);
    let shape = &all[rng.below(all.len())];
    let root = shape.nodes.len() - 1;
    shape
        .nodes
        .iter()
        .enumerate()
        .map(|(idx, &(i, j, _))| {
            let l = if idx == root { 1 + rng.below(labels) } else { rng.below(labels + 1) };
            (i, j, l)
        })
        .collect()
}

fn spans_of(nodes: &[(usize, usize, usize)]) -> Vec<LabeledSpan> {
    nodes
        .iter()
        .map(|&(i, j, l)| if l == EMPTY { LabeledSpan::empty(i, j) } else { LabeledSpan::new(i, j, &l.to_string()) })
        .collect()
}

#[test]
fn shape_counts_are_catalan() {
    let catalan = [1, 1, 2, 5, 14, 42];
    for n in 1..=6 {
        assert_eq!(shapes(n).len(), catalan[n - 1]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cky_matches_enumeration(n in 1usize..=4, labels in 1usize..=3, seed in any::<u64>()) {
        let s = random_scores(n, labels, seed);
        let d = cky_decode(&s);
        let (best, _) = brute_force_max(n, labels, |i, j, l| s.get(i, j, l));
        prop_assert_eq!(d.score, best);
    }

    #[test]
    fn augmented_matches_enumeration(n in 1usize..=4, labels in 1usize..=3, seed in any::<u64>()) {
        let s = random_scores(n, labels, seed);
        let mut rng = Rng::new(seed ^ 0x5eed);
        let gold_nodes = random_gold(n, labels, &mut rng);
        let gold = GoldLabels::new(gold_nodes.iter().filter(|g| g.2 != EMPTY).map(|&(i, j, l)| (i, j, Some(l))));
        let d = loss_augmented_decode(&s, &gold);
        let (best, _) = brute_force_max(n, labels, |i, j, l| s.get(i, j, l) + gold.cost(i, j, l));
        prop_assert_eq!(d.score, best);
        let gold_raw: f64 = gold_nodes.iter().map(|&(i, j, l)| s.get(i, j, l)).sum();
        prop_assert!(d.score >= gold_raw - 1e-9);
        let delta = d.nodes.iter().filter(|&&(i, j, l)| gold.get(i, j) != l).count();
        prop_assert_eq!(delta, d.delta);
        prop_assert!((d.raw_score + d.delta as f64 - d.score).abs() < 1e-9);
    }

    #[test]
    fn decoded_trees_are_valid_and_rescore(n in 1usize..=12, labels in 1usize..=5, seed in any::<u64>()) {
        let s = random_scores(n, labels, seed);
        let d = cky_decode(&s);
        prop_assert_eq!(d.nodes.len(), 2 * n - 1);
        prop_assert_eq!(d.nodes[0], (0, n, d.nodes[0].2));
        prop_assert_ne!(d.nodes[0].2, EMPTY);
        let spans = spans_of(&d.nodes);
        prop_assert!(check_valid_bracketing(&spans, n));
        prop_assert!((d.raw_score - d.score).abs() < 1e-9);

        // every binarization of the n-ary tree has the same score
        let tree = rebuild(&d.nodes).debinarize().unwrap();
        let rebinarized = binarize_with_empty(&tree);
        let rescored: f64 = rebinarized
            .spans()
            .iter()
            .filter_map(|sp| sp.label.as_ref().map(|l| s.get(sp.start, sp.end, l.parse().unwrap())))
            .sum();
        prop_assert!((rescored - d.raw_score).abs() < 1e-9);
        let labeled: HashSet<_> = spans.into_iter().filter(|x| !x.is_empty_label()).collect();
        let from_tree: HashSet<_> = tree.spans().into_iter().collect();
        prop_assert_eq!(labeled, from_tree);
    }

    #[test]
    fn independent_spans_score_above_zero(n in 1usize..=10, labels in 1usize..=4, seed in any::<u64>()) {
        let s = random_scores(n, labels, seed);
        let d = independent_decode(&s);
        for &(i, j, l) in &d.nodes {
            prop_assert!(s.get(i, j, l) > 0.0);
            for other in 1..=labels {
                prop_assert!(s.get(i, j, other) <= s.get(i, j, l));
            }
        }
        let chosen: HashSet<_> = d.nodes.iter().map(|&(i, j, _)| (i, j)).collect();
        for i in 0..n {
            for j in i + 1..=n {
                let any_positive = (1..=labels).any(|l| s.get(i, j, l) > 0.0);
                prop_assert_eq!(chosen.contains(&(i, j)), any_positive);
            }
        }
    }
}

fn rebuild(nodes: &[(usize, usize, usize)]) -> BinaryTree {
    fn go(nodes: &[(usize, usize, usize)], pos: &mut usize) -> BinaryTree {
        let (i, j, l) = nodes[*pos];
        *pos += 1;
        let label = (l != EMPTY).then(|| l.to_string());
        if j - i == 1 {
            BinaryTree::leaf(i, label)
        } else {
            let left = go(nodes, pos);
            let right = go(nodes, pos);
            BinaryTree::join(label, left, right)
        }
    }
    go(nodes, &mut 0)
}

#[test]
fn zero_scores_augmented_value_is_max_delta() {
    // with all scores zero the best augmented tree mislabels every node it
    // can: each of the 2n-1 nodes can take a label other than its gold one
    for n in 1..=5 {
        let s = SpanScores::from_fn(n, 2, |_, _, _| 0.0).unwrap();
        let gold = GoldLabels::new([(0, n, Some(1))]);
        let d = loss_augmented_decode(&s, &gold);
        let (best, _) = brute_force_max(n, 2, |i, j, l| gold.cost(i, j, l));
        assert_eq!(d.score, best);
        assert_eq!(d.delta, 2 * n - 1);
    }
}
