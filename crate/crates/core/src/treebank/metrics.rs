use std::collections::{HashMap, HashSet};

use super::{LabeledSpan, ParseTree, CHAIN_SEPARATOR};
use crate::error::{Error, Result};

/// Micro-averaged labeled-bracket scores, as fractions in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BracketScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub gold_total: usize,
    pub predicted_total: usize,
}

impl BracketScore {
    /// `"P R F1"` with two decimals.
    pub fn summary(&self) -> String {
        format!("{:.2} {:.2} {:.2}", self.precision, self.recall, self.f1)
    }
}

fn expanded(spans: &[LabeledSpan]) -> HashMap<(usize, usize, &str), usize> {
    let mut out = HashMap::new();
    for s in spans {
        if let Some(label) = &s.label {
            for part in label.split(CHAIN_SEPARATOR) {
                *out.entry((s.start, s.end, part)).or_insert(0) += 1;
            }
        }
    }
    out
}

/// Labeled-bracket precision, recall and F1 over a corpus. Chain labels are
/// expanded into one bracket per component and empty-labeled spans ignored.
pub fn bracket_f1(gold: &[ParseTree], predicted: &[Vec<LabeledSpan>]) -> Result<BracketScore> {
    if gold.len() != predicted.len() {
        return Err(Error::usage(format!(
            "{} gold trees but {} predictions",
            gold.len(),
            predicted.len()
        )));
    }
    let (mut matched, mut gold_total, mut predicted_total) = (0, 0, 0);
    for (n, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if let Some(bad) = p.iter().find(|s| s.start >= s.end || s.end > g.end) {
            return Err(Error::usage(format!(
                "sentence {}: predicted span {} outside a {}-word sentence",
                n + 1,
                bad,
                g.end
            )));
        }
        let gold_spans = g.spans();
        let gs = expanded(&gold_spans);
        let ps = expanded(p);
        gold_total += gs.values().sum::<usize>();
        predicted_total += ps.values().sum::<usize>();
        matched += ps
            .iter()
            .map(|(k, &c)| c.min(gs.get(k).copied().unwrap_or(0)))
            .sum::<usize>();
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(matched, predicted_total);
    let recall = ratio(matched, gold_total);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BracketScore {
        precision,
        recall,
        f1,
        matched,
        gold_total,
        predicted_total,
    })
}

/// Number of candidate spans whose label differs from the gold label of the
/// same span, the gold label being empty for non-constituents.
pub fn hamming_delta(candidate: &[LabeledSpan], gold: &ParseTree) -> usize {
    let spans = gold.spans();
    let labels: HashMap<(usize, usize), &str> = spans
        .iter()
        .map(|s| ((s.start, s.end), s.label.as_deref().unwrap_or_default()))
        .collect();
    candidate
        .iter()
        .filter(|c| labels.get(&(c.start, c.end)).copied() != c.label.as_deref())
        .count()
}

/// True iff no two spans cross and all lie within `0..=n`.
pub fn check_valid_bracketing(spans: &[LabeledSpan], n: usize) -> bool {
    let unique: HashSet<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
    let mut list: Vec<(usize, usize)> = unique.into_iter().collect();
    list.sort_unstable();
    if list.iter().any(|&(i, j)| i >= j || j > n) {
        return false;
    }
    for (a, &(i1, j1)) in list.iter().enumerate() {
        for &(i2, j2) in &list[a + 1..] {
            // sorted by start, so i1 <= i2
            if i2 < j1 && j1 < j2 && i1 < i2 {
                return false;
            }
        }
    }
    true
}
