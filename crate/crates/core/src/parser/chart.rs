use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::treebank::{LabelId, EMPTY};

/// Position of span `(i, j)` in the row order shared by [`SpanScores`] and
/// [`all_spans`]: grouped by start, then by end.
pub fn span_index(n: usize, i: usize, j: usize) -> usize {
    i * n - i * i.saturating_sub(1) / 2 + (j - i - 1)
}

/// Every span of an `n`-word sentence in [`span_index`] order.
pub fn all_spans(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..=n).map(move |j| (i, j))).collect()
}

/// Label scores for every span `0 <= i < j <= n`. Label ids run from 1 to
/// `labels`; the empty label is implicit with score 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanScores {
    n: usize,
    labels: usize,
    data: Vec<f64>,
}

impl SpanScores {
    /// `data` holds one row of `labels` scores per span in [`span_index`]
    /// order.
    pub fn new(n: usize, labels: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::usage("score table for an empty sentence"));
        }
        let expected = n * (n + 1) / 2 * labels;
        if data.len() != expected {
            return Err(Error::shape(format!(
                "{} scores for {} spans of {} labels",
                data.len(),
                n * (n + 1) / 2,
                labels
            )));
        }
        Ok(SpanScores { n, labels, data })
    }

    pub fn from_fn(n: usize, labels: usize, mut f: impl FnMut(usize, usize, LabelId) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(n * (n + 1) / 2 * labels);
        for (i, j) in all_spans(n) {
            for l in 1..=labels {
                data.push(f(i, j, l));
            }
        }
        SpanScores::new(n, labels, data)
    }

    pub fn words(&self) -> usize {
        self.n
    }

    /// Number of explicit labels.
    pub fn labels(&self) -> usize {
        self.labels
    }

    /// Score of label `l` on span `(i, j)`; 0 for the empty label.
    pub fn get(&self, i: usize, j: usize, l: LabelId) -> f64 {
        if l == EMPTY {
            0.0
        } else {
            self.data[span_index(self.n, i, j) * self.labels + l - 1]
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Gold labels of the constituents of a tree. Spans absent from the map are
/// non-constituents whose gold label is empty.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GoldLabels {
    labels: HashMap<(usize, usize), LabelId>,
}

impl GoldLabels {
    /// Gold label ids by span. A label id of `None` marks a constituent whose
    /// label is outside the inventory; no candidate label matches it.
    pub fn new(spans: impl IntoIterator<Item = (usize, usize, Option<LabelId>)>) -> Self {
        GoldLabels {
            labels: spans
                .into_iter()
                .map(|(i, j, l)| ((i, j), l.unwrap_or(usize::MAX)))
                .collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> LabelId {
        self.labels.get(&(i, j)).copied().unwrap_or(EMPTY)
    }

    /// `1[l != gold(i, j)]`.
    pub fn cost(&self, i: usize, j: usize, l: LabelId) -> f64 {
        if self.get(i, j) == l {
            0.0
        } else {
            1.0
        }
    }
}

/// The best-subtree table with label and split backpointers.
#[derive(Clone, Debug)]
pub struct Chart {
    n: usize,
    best: Vec<f64>,
    label: Vec<LabelId>,
    split: Vec<usize>,
}

impl Chart {
    /// Fills the chart bottom-up:
    /// `best(i,j) = max_l s(i,j,l) + max_k [best(i,k) + best(k,j)]`, the
    /// label maximum including the empty label except at the root. Ties go to
    /// the lowest label, then the lowest split.
    pub fn build(n: usize, labels: usize, score: impl Fn(usize, usize, LabelId) -> f64) -> Self {
        let size = n * (n + 1) / 2;
        let mut chart = Chart {
            n,
            best: vec![0.0; size],
            label: vec![EMPTY; size],
            split: vec![0; size],
        };
        for len in 1..=n {
            for i in 0..=n - len {
                let j = i + len;
                let first = if len == n { 1 } else { 0 };
                let mut best_label = first;
                let mut best_label_score = score(i, j, first);
                for l in first + 1..=labels {
                    let s = score(i, j, l);
                    if s > best_label_score {
                        best_label = l;
                        best_label_score = s;
                    }
                }
                let idx = span_index(n, i, j);
                chart.label[idx] = best_label;
                if len == 1 {
                    chart.best[idx] = best_label_score;
                    continue;
                }
                let mut best_k = i + 1;
                let mut best_split = f64::NEG_INFINITY;
                for k in i + 1..j {
                    let s = chart.best[span_index(n, i, k)] + chart.best[span_index(n, k, j)];
                    if s > best_split {
                        best_k = k;
                        best_split = s;
                    }
                }
                chart.split[idx] = best_k;
                chart.best[idx] = best_label_score + best_split;
            }
        }
        chart
    }

    /// `s_best(i, j)`.
    pub fn best(&self, i: usize, j: usize) -> f64 {
        self.best[span_index(self.n, i, j)]
    }

    /// Binary nodes of the best tree over `(0, n)` in preorder, empty-labeled
    /// nodes included.
    pub fn backtrack(&self) -> Vec<(usize, usize, LabelId)> {
        let mut out = Vec::with_capacity(2 * self.n - 1);
        let mut stack = vec![(0, self.n)];
        while let Some((i, j)) = stack.pop() {
            let idx = span_index(self.n, i, j);
            out.push((i, j, self.label[idx]));
            if j - i > 1 {
                let k = self.split[idx];
                stack.push((k, j));
                stack.push((i, k));
            }
        }
        out
    }
}

/// A decoded span set with label ids. Tree decoders return every binary node,
/// empty-labeled ones included; independent decoding returns only the chosen
/// spans.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub nodes: Vec<(usize, usize, LabelId)>,
    /// Objective value: the augmented score for loss-augmented decoding,
    /// otherwise the model score.
    pub score: f64,
    /// Sum of the unaugmented scores of the nodes.
    pub raw_score: f64,
    /// Hamming loss against the gold tree; 0 without one.
    pub delta: usize,
}

fn raw_score(scores: &SpanScores, nodes: &[(usize, usize, LabelId)]) -> f64 {
    nodes.iter().map(|&(i, j, l)| scores.get(i, j, l)).sum()
}

/// The highest-scoring tree.
pub fn cky_decode(scores: &SpanScores) -> Decoded {
    let chart = Chart::build(scores.n, scores.labels, |i, j, l| scores.get(i, j, l));
    let nodes = chart.backtrack();
    Decoded {
        score: chart.best(0, scores.n),
        raw_score: raw_score(scores, &nodes),
        nodes,
        delta: 0,
    }
}

/// The tree maximizing `s(T) + Δ(T, T*)`, where every label (the empty one
/// included) other than the gold label of a span earns one extra point.
pub fn loss_augmented_decode(scores: &SpanScores, gold: &GoldLabels) -> Decoded {
    let chart = Chart::build(scores.n, scores.labels, |i, j, l| scores.get(i, j, l) + gold.cost(i, j, l));
    let nodes = chart.backtrack();
    let delta = nodes.iter().filter(|&&(i, j, l)| gold.get(i, j) != l).count();
    Decoded {
        score: chart.best(0, scores.n),
        raw_score: raw_score(scores, &nodes),
        nodes,
        delta,
    }
}

/// Each span independently takes its best label when that label scores
/// above the empty label's 0. No tree constraint is applied.
pub fn independent_decode(scores: &SpanScores) -> Decoded {
    let mut nodes = Vec::new();
    for (i, j) in all_spans(scores.n) {
        let mut best = EMPTY;
        let mut best_score = 0.0;
        for l in 1..=scores.labels {
            let s = scores.get(i, j, l);
            if s > best_score {
                best = l;
                best_score = s;
            }
        }
        if best != EMPTY {
            nodes.push((i, j, best));
        }
    }
    let score = raw_score(scores, &nodes);
    Decoded {
        nodes,
        score,
        raw_score: score,
        delta: 0,
    }
}
