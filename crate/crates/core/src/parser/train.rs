use rayon::prelude::*;

use super::model::ParserModel;
use crate::error::{Error, Result};
use crate::tensor::{Adam, Graph, Rng, Tensor};
use crate::treebank::{bracket_f1, BracketScore, LabeledSpan, TreebankEntry};

/// What training optimizes, and how development sentences are decoded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Objective {
    /// Structured hinge loss over trees; evaluation decodes trees.
    #[default]
    Tree,
    /// One margin loss per span; evaluation keeps every positive span.
    Independent,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Tree => "tree",
            Objective::Independent => "independent",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(Objective::Tree),
            "independent" => Ok(Objective::Independent),
            _ => Err(Error::config(format!("unknown objective {s:?} (expected tree or independent)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub epochs: usize,
    pub evals_per_epoch: usize,
    pub adam: Adam,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Tree,
            epochs: 40,
            evals_per_epoch: 4,
            adam: Adam::default(),
            seed: 1,
        }
    }
}

/// One development evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEntry {
    /// Epochs completed, fractional between evaluations.
    pub epoch: f64,
    /// Mean hinge loss over the updates since the previous evaluation.
    pub train_loss: f64,
    pub dev: BracketScore,
}

impl LogEntry {
    pub const HEADER: &'static str = "epoch\ttrain_loss\tdev_p\tdev_r\tdev_f1";

    pub fn tsv(&self) -> String {
        format!(
            "{:.2}\t{:.6}\t{:.4}\t{:.4}\t{:.4}",
            self.epoch, self.train_loss, self.dev.precision, self.dev.recall, self.dev.f1
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub log: Vec<LogEntry>,
    pub best_f1: f64,
    pub best_epoch: f64,
    /// Parameter values after the last update, in [`ParamSet`] order.
    ///
    /// [`ParamSet`]: crate::tensor::ParamSet
    pub final_params: Vec<Tensor>,
}

/// Tree-constrained decodes of every sentence, in parallel.
pub fn decode_corpus(model: &ParserModel, corpus: &[TreebankEntry]) -> Result<Vec<Vec<LabeledSpan>>> {
    corpus
        .par_iter()
        .map(|e| model.parse(&e.words, Some(&e.tags)).map(|d| d.spans))
        .collect()
}

/// Independent span decisions for every sentence, in parallel.
pub fn decode_corpus_independent(model: &ParserModel, corpus: &[TreebankEntry]) -> Result<Vec<Vec<LabeledSpan>>> {
    corpus
        .par_iter()
        .map(|e| model.parse_independent(&e.words, Some(&e.tags)).map(|d| d.spans))
        .collect()
}

/// Labeled-bracket scores of tree-constrained decoding on `corpus`.
pub fn evaluate(model: &ParserModel, corpus: &[TreebankEntry]) -> Result<BracketScore> {
    evaluate_with(model, corpus, Objective::Tree)
}

/// Labeled-bracket scores under the decoding that matches `objective`.
pub fn evaluate_with(model: &ParserModel, corpus: &[TreebankEntry], objective: Objective) -> Result<BracketScore> {
    let predicted = match objective {
        Objective::Tree => decode_corpus(model, corpus)?,
        Objective::Independent => decode_corpus_independent(model, corpus)?,
    };
    let gold: Vec<_> = corpus.iter().map(|e| e.tree.clone()).collect();
    bracket_f1(&gold, &predicted)
}

/// One Adam update on the loss of a single sentence; returns the loss.
pub fn train_step(
    model: &mut ParserModel,
    entry: &TreebankEntry,
    objective: Objective,
    adam: &Adam,
    rng: &mut Rng,
) -> Result<f64> {
    let grads = {
        let mut g = Graph::new(&model.params);
        let (loss, value) = match objective {
            Objective::Tree => model.hinge_loss(&mut g, entry, true, rng)?,
            Objective::Independent => model.independent_hinge_loss(&mut g, entry, true, rng)?,
        };
        match loss {
            Some(l) => Some((g.backward(l)?, value)),
            None => None,
        }
    };
    match grads {
        Some((grads, value)) => {
            model.params.accumulate(&grads);
            adam.step(&mut model.params)?;
            model.updates += 1;
            Ok(value)
        }
        None => Ok(0.0),
    }
}

/// Trains with per-sentence Adam updates on the configured loss, shuffling the
/// training sentences every epoch and evaluating on `dev` several times per
/// epoch. On return the model holds the parameters of the best evaluation.
/// `on_eval` sees each log entry as it is produced.
pub fn train(
    model: &mut ParserModel,
    train: &[TreebankEntry],
    dev: &[TreebankEntry],
    config: &TrainConfig,
    mut on_eval: impl FnMut(&LogEntry),
) -> Result<TrainReport> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::usage("training needs nonempty training and development corpora"));
    }
    if config.epochs == 0 || config.evals_per_epoch == 0 {
        return Err(Error::config("epochs and evaluations per epoch must be positive"));
    }
    let root = Rng::new(config.seed);
    let mut order_rng = root.derive(1);
    let mut noise_rng = root.derive(2);
    let n = train.len();
    let checkpoints: Vec<usize> = (1..=config.evals_per_epoch)
        .map(|q| (q * n / config.evals_per_epoch).max(1))
        .collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, f64, Vec<Tensor>)> = None;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order_rng.shuffle(&mut order);
        let (mut loss_sum, mut updates) = (0.0, 0usize);
        for (step, &idx) in order.iter().enumerate() {
            loss_sum += train_step(model, &train[idx], config.objective, &config.adam, &mut noise_rng)?;
            updates += 1;
            if checkpoints.contains(&(step + 1)) {
                let dev_score = evaluate_with(model, dev, config.objective)?;
                let entry = LogEntry {
                    epoch: epoch as f64 + (step + 1) as f64 / n as f64,
                    train_loss: loss_sum / updates as f64,
                    dev: dev_score,
                };
                on_eval(&entry);
                log.push(entry);
                (loss_sum, updates) = (0.0, 0);
                if best.as_ref().is_none_or(|b| dev_score.f1 > b.0) {
                    best = Some((dev_score.f1, entry.epoch, model.params.snapshot()));
                }
            }
        }
    }
    let final_params = model.params.snapshot();
    let (best_f1, best_epoch, values) = best.expect("at least one evaluation");
    model.params.restore(&values)?;
    Ok(TrainReport {
        log,
        best_f1,
        best_epoch,
        final_params,
    })
}
