use std::collections::BTreeSet;

use super::head::{binary_hinge, ProbeHead};
use crate::error::{Error, Result};
use crate::parser::ParserModel;
use crate::tensor::{Adam, Graph, Rng, Tensor};
use crate::treebank::synthetic::SyntheticGrammar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureTest {
    AllLetters,
    HasLetter,
    AllLowercase,
    HasLowercase,
    AllUppercase,
    HasUppercase,
    AllDigits,
    HasDigit,
    AllPunctuation,
    HasPunctuation,
    HasDash,
    HasPeriod,
    HasComma,
    Suffix(&'static str),
}

/// A binary property of word strings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordFeature {
    pub name: &'static str,
    pub test: FeatureTest,
}

impl WordFeature {
    pub fn is_shape(&self) -> bool {
        !matches!(self.test, FeatureTest::Suffix(_))
    }

    pub fn holds(&self, word: &str) -> bool {
        let all = |f: fn(&char) -> bool| word.chars().all(|c| f(&c));
        let any = |f: fn(&char) -> bool| word.chars().any(|c| f(&c));
        match self.test {
            FeatureTest::AllLetters => all(|c| c.is_alphabetic()),
            FeatureTest::HasLetter => any(|c| c.is_alphabetic()),
            FeatureTest::AllLowercase => all(|c| c.is_lowercase()),
            FeatureTest::HasLowercase => any(|c| c.is_lowercase()),
            FeatureTest::AllUppercase => all(|c| c.is_uppercase()),
            FeatureTest::HasUppercase => any(|c| c.is_uppercase()),
            FeatureTest::AllDigits => all(char::is_ascii_digit),
            FeatureTest::HasDigit => any(char::is_ascii_digit),
            FeatureTest::AllPunctuation => all(char::is_ascii_punctuation),
            FeatureTest::HasPunctuation => any(char::is_ascii_punctuation),
            FeatureTest::HasDash => word.contains('-'),
            FeatureTest::HasPeriod => word.contains('.'),
            FeatureTest::HasComma => word.contains(','),
            FeatureTest::Suffix(s) => word.ends_with(s),
        }
    }
}

/// The 13 shape features followed by the 12 suffix features.
pub fn word_features() -> Vec<WordFeature> {
    use FeatureTest::*;
    let f = |name, test| WordFeature { name, test };
    vec![
        f("all-letters", AllLetters),
        f("has-letter", HasLetter),
        f("all-lowercase", AllLowercase),
        f("has-lowercase", HasLowercase),
        f("all-uppercase", AllUppercase),
        f("has-uppercase", HasUppercase),
        f("all-digits", AllDigits),
        f("has-digit", HasDigit),
        f("all-punctuation", AllPunctuation),
        f("has-punctuation", HasPunctuation),
        f("has-dash", HasDash),
        f("has-period", HasPeriod),
        f("has-comma", HasComma),
        f("suffix-s", Suffix("s")),
        f("suffix-ed", Suffix("ed")),
        f("suffix-ing", Suffix("ing")),
        f("suffix-ion", Suffix("ion")),
        f("suffix-er", Suffix("er")),
        f("suffix-est", Suffix("est")),
        f("suffix-ly", Suffix("ly")),
        f("suffix-ity", Suffix("ity")),
        f("suffix-y", Suffix("y")),
        f("suffix-al", Suffix("al")),
        f("suffix-ble", Suffix("ble")),
        f("suffix-e", Suffix("e")),
    ]
}

/// The first `count` distinct word types, in order of appearance, of
/// sentences drawn from the synthetic grammar fixed by `grammar_seed`. Fewer
/// types come back only if the grammar cannot produce `count` of them.
pub fn probe_vocabulary(grammar_seed: u64, count: usize, rng: &mut Rng) -> Vec<String> {
    let grammar = SyntheticGrammar::new(grammar_seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let mut stale = 0;
    while out.len() < count && stale < 50 {
        let before = out.len();
        for entry in grammar.generate(100, rng) {
            for w in entry.words {
                if out.len() < count && seen.insert(w.clone()) {
                    out.push(w);
                }
            }
        }
        stale = if out.len() == before { stale + 1 } else { 0 };
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureProbeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    /// Share of word types held out for testing.
    pub test_fraction: f64,
    pub adam: Adam,
    pub seed: u64,
}

impl Default for FeatureProbeConfig {
    fn default() -> Self {
        FeatureProbeConfig {
            hidden: 64,
            epochs: 30,
            batch: 32,
            test_fraction: 0.2,
            adam: Adam::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureResult {
    pub name: &'static str,
    pub shape: bool,
    pub accuracy: f64,
    /// Accuracy of always predicting the training split's majority value.
    pub majority: f64,
    /// Share of test types for which the feature holds.
    pub positive_rate: f64,
}

pub const FEATURE_CSV_HEADER: &str = "feature,kind,probe_accuracy,majority_accuracy,positive_rate";

pub fn feature_csv(results: &[FeatureResult]) -> String {
    let mut out = format!("{FEATURE_CSV_HEADER}\n");
    for r in results {
        out += &format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            r.name,
            if r.shape { "shape" } else { "suffix" },
            r.accuracy,
            r.majority,
            r.positive_rate
        );
    }
    out
}

fn encode_words(model: &ParserModel, words: &[&String]) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut dim = 0;
    for w in words {
        let mut g = Graph::new(&model.params);
        let v = model.lexicon.char_encode(&mut g, w)?;
        let t = g.value(v);
        dim = t.len();
        data.extend_from_slice(t.data());
    }
    Tensor::matrix(words.len(), dim, data)
}

fn gather(x: &Tensor, rows: &[usize]) -> Tensor {
    let c = x.cols();
    let mut data = Vec::with_capacity(rows.len() * c);
    for &r in rows {
        data.extend_from_slice(x.row(r));
    }
    Tensor::matrix(rows.len(), c, data).expect("row gather")
}

/// Splits `vocabulary` by type, encodes every word with the model's frozen
/// character LSTM, and trains one small binary classifier per feature.
pub fn word_feature_probe(
    model: &ParserModel,
    vocabulary: &[String],
    config: &FeatureProbeConfig,
) -> Result<Vec<FeatureResult>> {
    if !model.config.lexical.mode.uses_chars() {
        return Err(Error::config(format!(
            "the word-feature probe needs a character LSTM, but the model uses lexical mode {}",
            model.config.lexical.mode
        )));
    }
    let types: Vec<&String> = vocabulary.iter().filter(|w| !w.is_empty()).collect::<BTreeSet<_>>().into_iter().collect();
    if types.len() < 2 {
        return Err(Error::usage("the word-feature probe needs at least two word types"));
    }
    let mut rng = Rng::new(config.seed);
    let mut order: Vec<usize> = (0..types.len()).collect();
    rng.shuffle(&mut order);
    let test_count = ((types.len() as f64 * config.test_fraction).round() as usize).clamp(1, types.len() - 1);
    let (test_idx, train_idx) = order.split_at(test_count);
    let x = encode_words(model, &types)?;
    let x_train = gather(&x, train_idx);
    let x_test = gather(&x, test_idx);

    let mut results = Vec::new();
    for feature in word_features() {
        let y_train: Vec<bool> = train_idx.iter().map(|&i| feature.holds(types[i])).collect();
        let y_test: Vec<bool> = test_idx.iter().map(|&i| feature.holds(types[i])).collect();
        let positives = y_train.iter().filter(|&&y| y).count();
        let majority_value = positives * 2 > y_train.len();
        let accuracy_of = |pred: &dyn Fn(usize) -> bool| {
            y_test.iter().enumerate().filter(|&(r, &y)| pred(r) == y).count() as f64 / y_test.len() as f64
        };
        let majority = accuracy_of(&|_| majority_value);
        let accuracy = if positives == 0 || positives == y_train.len() {
            majority
        } else {
            let mut head = ProbeHead::new(x.cols(), config.hidden, 1, &mut rng)?;
            let mut batch_order: Vec<usize> = (0..y_train.len()).collect();
            for _ in 0..config.epochs {
                rng.shuffle(&mut batch_order);
                for chunk in batch_order.chunks(config.batch.max(1)) {
                    let xb = gather(&x_train, chunk);
                    let yb: Vec<bool> = chunk.iter().map(|&r| y_train[r]).collect();
                    head.step(&xb, &config.adam, |g, s| binary_hinge(g, s, &yb))?;
                }
            }
            let scores = head.scores(&x_test)?;
            accuracy_of(&|r| scores.data()[r] > 0.0)
        };
        results.push(FeatureResult {
            name: feature.name,
            shape: feature.is_shape(),
            accuracy,
            majority,
            positive_rate: y_test.iter().filter(|&&y| y).count() as f64 / y_test.len() as f64,
        });
    }
    Ok(results)
}
