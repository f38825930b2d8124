use std::collections::{BTreeMap, BTreeSet};

use super::head::{argmax, multiclass_margin, ProbeHead};
use crate::error::{Error, Result};
use crate::parser::ParserModel;
use crate::tensor::{Adam, Graph, Rng, Tensor};
use crate::treebank::TreebankEntry;

/// Parent target of root spans.
pub const TOP: &str = "TOP";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParentProbeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub adam: Adam,
    pub seed: u64,
}

impl Default for ParentProbeConfig {
    fn default() -> Self {
        ParentProbeConfig {
            hidden: 250,
            epochs: 10,
            adam: Adam::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParentProbeReport {
    /// Held-out accuracy of the probe.
    pub accuracy: f64,
    /// Held-out accuracy of the majority parent given the span's own label.
    pub majority_baseline: f64,
    pub train_examples: usize,
    pub test_examples: usize,
    /// Parent classes in probe output order.
    pub classes: Vec<String>,
    pub warnings: Vec<String>,
}

impl ParentProbeReport {
    pub const CSV_HEADER: &'static str = "metric,value";

    pub fn csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        out += &format!("probe_accuracy,{:.6}\n", self.accuracy);
        out += &format!("majority_baseline,{:.6}\n", self.majority_baseline);
        out += &format!("train_examples,{}\n", self.train_examples);
        out += &format!("test_examples,{}\n", self.test_examples);
        out
    }
}

/// `(child label, parent label)` for every constituent, the root's parent
/// being [`TOP`].
pub fn parent_examples(entry: &TreebankEntry) -> Vec<(usize, usize, String, String)> {
    entry
        .tree
        .parent_pairs()
        .into_iter()
        .map(|(span, parent)| {
            (
                span.start,
                span.end,
                span.label.expect("tree spans are labeled"),
                parent.unwrap_or_else(|| TOP.to_string()),
            )
        })
        .collect()
}

/// Accuracy on `test` of predicting, for each constituent, the parent label
/// seen most often with its label in `train`. Ties go to the alphabetically
/// first parent; unseen labels get the overall most frequent parent.
pub fn majority_baseline(train: &[TreebankEntry], test: &[TreebankEntry]) -> f64 {
    let mut by_child: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut overall: BTreeMap<String, usize> = BTreeMap::new();
    for e in train {
        for (_, _, child, parent) in parent_examples(e) {
            *by_child.entry(child).or_default().entry(parent.clone()).or_default() += 1;
            *overall.entry(parent).or_default() += 1;
        }
    }
    let pick = |counts: &BTreeMap<String, usize>| -> Option<String> {
        let mut best: Option<(&String, usize)> = None;
        for (p, &c) in counts {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((p, c));
            }
        }
        best.map(|(p, _)| p.clone())
    };
    let fallback = pick(&overall);
    let (mut correct, mut total) = (0usize, 0usize);
    for e in test {
        for (_, _, child, parent) in parent_examples(e) {
            let guess = by_child.get(&child).and_then(pick).or_else(|| fallback.clone());
            total += 1;
            if guess.as_deref() == Some(parent.as_str()) {
                correct += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

struct SpanBatch {
    reprs: Tensor,
    targets: Vec<Option<usize>>,
}

fn span_batches(
    model: &ParserModel,
    corpus: &[TreebankEntry],
    classes: &BTreeMap<String, usize>,
) -> Result<Vec<SpanBatch>> {
    let mut out = Vec::with_capacity(corpus.len());
    for e in corpus {
        let examples = parent_examples(e);
        let mut g = Graph::new(&model.params);
        let enc = model.encode(&mut g, &e.words, Some(&e.tags), false, &mut Rng::new(0))?;
        let r = enc.span_reprs(&mut g, examples.iter().map(|x| (x.0, x.1)).collect())?;
        out.push(SpanBatch {
            reprs: g.value(r).clone(),
            targets: examples.iter().map(|x| classes.get(&x.3).copied()).collect(),
        });
    }
    Ok(out)
}

/// Trains a fresh label scorer on the frozen span representations of `model`
/// to predict each gold constituent's parent label, and reports its accuracy
/// on `test` next to [`majority_baseline`].
pub fn parent_probe(
    model: &ParserModel,
    train: &[TreebankEntry],
    test: &[TreebankEntry],
    config: &ParentProbeConfig,
) -> Result<ParentProbeReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::usage("the parent probe needs nonempty training and test corpora"));
    }
    let mut warnings = Vec::new();
    if model.updates == 0 {
        warnings.push("the base model has not been trained; its representations are random".to_string());
    }
    let names: BTreeSet<String> = train.iter().flat_map(parent_examples).map(|x| x.3).collect();
    let classes: BTreeMap<String, usize> = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    let train_batches = span_batches(model, train, &classes)?;
    let test_batches = span_batches(model, test, &classes)?;

    let mut rng = Rng::new(config.seed);
    let mut head = ProbeHead::new(model.encoder.span_dim(), config.hidden, classes.len(), &mut rng)?;
    let mut order: Vec<usize> = (0..train_batches.len()).collect();
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        for &b in &order {
            let batch = &train_batches[b];
            let targets: Vec<usize> = batch.targets.iter().map(|t| t.expect("training parents are classes")).collect();
            head.step(&batch.reprs, &config.adam, |g, s| multiclass_margin(g, s, &targets))?;
        }
    }

    let (mut correct, mut total) = (0usize, 0usize);
    for batch in &test_batches {
        let scores = head.scores(&batch.reprs)?;
        for (r, target) in batch.targets.iter().enumerate() {
            total += 1;
            if *target == Some(argmax(scores.row(r))) {
                correct += 1;
            }
        }
    }
    Ok(ParentProbeReport {
        accuracy: correct as f64 / total as f64,
        majority_baseline: majority_baseline(train, test),
        train_examples: train_batches.iter().map(|b| b.targets.len()).sum(),
        test_examples: total,
        classes: names.into_iter().collect(),
        warnings,
    })
}
