use crate::error::{Error, Result};
use crate::parser::ParserModel;
use crate::span_encoder::EncoderVariant;
use crate::tensor::{Graph, Rng};
use crate::treebank::TreebankEntry;

/// Gradient norms grouped by the distance between output and input
/// positions.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeBuckets {
    pub sums: Vec<f64>,
    pub counts: Vec<u64>,
}

impl DerivativeBuckets {
    pub fn new(max_distance: usize) -> Self {
        DerivativeBuckets {
            sums: vec![0.0; max_distance + 1],
            counts: vec![0; max_distance + 1],
        }
    }

    pub fn max_distance(&self) -> usize {
        self.sums.len() - 1
    }

    /// Mean norm at `distance`, `None` for empty or out-of-range buckets.
    pub fn average(&self, distance: usize) -> Option<f64> {
        match self.counts.get(distance) {
            Some(&c) if c > 0 => Some(self.sums[distance] / c as f64),
            _ => None,
        }
    }

    pub const CSV_HEADER: &'static str = "distance,average_norm,count";

    /// One row per distance from 1 to the maximum; empty buckets leave the
    /// average blank.
    pub fn csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for d in 1..=self.max_distance() {
            let avg = self.average(d).map(|a| format!("{a:.8}")).unwrap_or_default();
            out += &format!("{d},{avg},{}\n", self.counts[d]);
        }
        out
    }
}

/// For every word position of every sentence, samples one component of the
/// top-layer bi-LSTM output (forward and backward halves concatenated),
/// backpropagates it to the encoder's input word vectors, and adds the ℓ2
/// norm of each word's gradient to the bucket of its distance from the
/// output position.
pub fn derivative_by_distance(
    model: &ParserModel,
    corpus: &[TreebankEntry],
    max_distance: usize,
    rng: &mut Rng,
) -> Result<DerivativeBuckets> {
    if model.encoder.config.variant != EncoderVariant::Full {
        return Err(Error::config(format!(
            "derivative analysis needs the full bi-LSTM encoder, not {}",
            model.encoder.config.variant
        )));
    }
    let mut buckets = DerivativeBuckets::new(max_distance);
    let hidden = model.encoder.config.hidden;
    for e in corpus {
        let n = e.words.len();
        let words = {
            let mut g = Graph::new(&model.params);
            let tags = model.config.lexical.mode.uses_tags().then_some(&e.tags[..]);
            let x = model.lexicon.represent_sentence(&mut g, &e.words, tags, false, &mut Rng::new(0))?;
            g.value(x).clone()
        };
        let dim = words.cols();
        let mut g = Graph::new(&model.params);
        let x = g.constant(words);
        let (fo, bo) = model.encoder.lstm_outputs(&mut g, x, false, &mut Rng::new(0))?;
        for t in 1..=n {
            let c = rng.below(2 * hidden);
            let (out, col) = if c < hidden { (fo, c) } else { (bo, c - hidden) };
            let y = g.gather_sum(out, vec![(t * hidden + col, 1.0)])?;
            let grads = g.backward(y)?;
            let Some(dx) = grads.wrt(x) else { continue };
            for p in 1..=n {
                let d = t.abs_diff(p);
                if d > max_distance {
                    continue;
                }
                let norm = dx[p * dim..(p + 1) * dim].iter().map(|v| v * v).sum::<f64>().sqrt();
                buckets.sums[d] += norm;
                buckets.counts[d] += 1;
            }
        }
    }
    Ok(buckets)
}
