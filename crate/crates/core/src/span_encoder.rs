//! Sentence encoders producing forward and backward fencepost vectors, and
//! the span representation `r_ij = [f_j - f_i, b_i - b_j]`.
//!
//! The input is the `(n+2) × D` matrix of word vectors for
//! `<START> w_1 .. w_n <STOP>`, so word `i` sits at padded position `i`.
//! Fencepost `p` lies between padded positions `p` and `p+1`: `f_p` is the
//! forward output at position `p` and `b_p` the backward output at `p+1`.
//! The forward and backward directions are independent stacks of LSTM
//! layers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, LstmWeights, ParamId, ParamSet, Rng, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncoderVariant {
    Full,
    Truncated { k: usize },
    Shuffled { k: usize },
    Feedforward { k: usize, layers: usize, mult: usize },
}

impl EncoderVariant {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EncoderVariant::Full => Ok(()),
            EncoderVariant::Truncated { k } | EncoderVariant::Shuffled { k } if k == 0 => {
                Err(Error::config("encoder window k must be at least 1"))
            }
            EncoderVariant::Truncated { .. } | EncoderVariant::Shuffled { .. } => Ok(()),
            EncoderVariant::Feedforward { k, layers, mult } => {
                if k == 0 {
                    Err(Error::config("encoder window k must be at least 1"))
                } else if !(1..=3).contains(&layers) {
                    Err(Error::config(format!("feedforward layers must be 1, 2 or 3, got {layers}")))
                } else if ![1, 2, 4].contains(&mult) {
                    Err(Error::config(format!("feedforward width multiplier must be 1, 2 or 4, got {mult}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EncoderVariant::Full => "full",
            EncoderVariant::Truncated { .. } => "truncated",
            EncoderVariant::Shuffled { .. } => "shuffled",
            EncoderVariant::Feedforward { .. } => "feedforward",
        }
    }

    pub fn window(&self) -> Option<usize> {
        match *self {
            EncoderVariant::Full => None,
            EncoderVariant::Truncated { k } | EncoderVariant::Shuffled { k } | EncoderVariant::Feedforward { k, .. } => Some(k),
        }
    }
}

impl fmt::Display for EncoderVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            EncoderVariant::Full => write!(f, "full"),
            EncoderVariant::Truncated { k } => write!(f, "truncated(k={k})"),
            EncoderVariant::Shuffled { k } => write!(f, "shuffled(k={k})"),
            EncoderVariant::Feedforward { k, layers, mult } => {
                write!(f, "feedforward(k={k}, layers={layers}, mult={mult})")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub variant: EncoderVariant,
    /// Output size per direction.
    pub hidden: usize,
    /// LSTM layers per direction.
    pub layers: usize,
    /// Dropout on the input of every layer.
    pub dropout: f64,
    /// Dropout on the hidden state fed back into each LSTM, one mask per
    /// sentence.
    pub recurrent_dropout: f64,
    /// Fencepost position embedding size of the feedforward variant.
    pub position_dim: usize,
    /// Largest position index with its own learned embedding; larger
    /// positions share the last one.
    pub max_position: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            variant: EncoderVariant::Full,
            hidden: 250,
            layers: 2,
            dropout: 0.4,
            recurrent_dropout: 0.4,
            position_dim: 50,
            max_position: 60,
        }
    }
}

/// Forward and backward vectors for fenceposts `0..=n`, one row each.
#[derive(Clone, Copy, Debug)]
pub struct FencepostEncoding {
    pub f: Var,
    pub b: Var,
    pub fenceposts: usize,
}

impl FencepostEncoding {
    /// Number of words covered, `fenceposts - 1`.
    pub fn words(&self) -> usize {
        self.fenceposts - 1
    }

    /// `[f_j - f_i, b_i - b_j]` as a vector.
    pub fn span_repr(&self, g: &mut Graph<'_>, i: usize, j: usize) -> Result<Var> {
        let m = self.span_reprs(g, vec![(i, j)])?;
        g.row(m, 0)
    }

    /// Span representations stacked as rows, in the order given.
    pub fn span_reprs(&self, g: &mut Graph<'_>, spans: Vec<(usize, usize)>) -> Result<Var> {
        if let Some(&(i, j)) = spans.iter().find(|&&(i, j)| i >= j || j >= self.fenceposts) {
            return Err(Error::usage(format!(
                "span ({i}, {j}) is not a nonempty span of a {}-word sentence",
                self.words()
            )));
        }
        g.span_differences(self.f, self.b, spans)
    }
}

struct FeedforwardWeights {
    hidden: Vec<(ParamId, ParamId)>,
    out: (ParamId, ParamId),
    position: ParamId,
}

/// Encoder parameters for one variant.
pub struct SpanEncoder {
    pub config: EncoderConfig,
    pub input_dim: usize,
    fwd: Vec<LstmWeights>,
    bwd: Vec<LstmWeights>,
    init_fwd: Vec<ParamId>,
    init_bwd: Vec<ParamId>,
    ff: Option<FeedforwardWeights>,
}

fn dense(params: &mut ParamSet, name: &str, out: usize, input: usize, rng: &mut Rng) -> Result<(ParamId, ParamId)> {
    let w = params.add_uniform(&format!("{name}.w"), &[out, input], (6.0 / (input + out) as f64).sqrt(), rng)?;
    let b = params.add_zeros(&format!("{name}.b"), &[out])?;
    Ok((w, b))
}

impl SpanEncoder {
    /// Registers the variant's parameters under the `encoder.` prefix.
    pub fn new(config: EncoderConfig, input_dim: usize, params: &mut ParamSet, rng: &mut Rng) -> Result<Self> {
        config.variant.validate()?;
        if config.layers == 0 || config.hidden == 0 {
            return Err(Error::config("encoder needs at least one layer of nonzero width"));
        }
        let h = config.hidden;
        let mut enc = SpanEncoder {
            config,
            input_dim,
            fwd: Vec::new(),
            bwd: Vec::new(),
            init_fwd: Vec::new(),
            init_bwd: Vec::new(),
            ff: None,
        };
        if let EncoderVariant::Feedforward { k, layers, mult } = config.variant {
            let position = params.add_uniform(
                "encoder.position",
                &[config.max_position + 1, config.position_dim],
                0.1,
                rng,
            )?;
            let mut width = 2 * k * input_dim + config.position_dim;
            let mut hidden = Vec::new();
            for l in 0..layers {
                hidden.push(dense(params, &format!("encoder.ff{l}"), mult * h, width, rng)?);
                width = mult * h;
            }
            let out = dense(params, "encoder.ff_out", 2 * h, width, rng)?;
            enc.ff = Some(FeedforwardWeights { hidden, out, position });
            return Ok(enc);
        }
        for l in 0..config.layers {
            let in_dim = if l == 0 { input_dim } else { h };
            enc.fwd.push(LstmWeights::new(params, &format!("encoder.fwd{l}"), in_dim, h, rng)?);
            enc.bwd.push(LstmWeights::new(params, &format!("encoder.bwd{l}"), in_dim, h, rng)?);
        }
        if let EncoderVariant::Truncated { .. } = config.variant {
            for l in 0..config.layers {
                enc.init_fwd
                    .push(params.add_zeros(&format!("encoder.init_fwd{l}"), &[config.max_position + 1, h])?);
                enc.init_bwd
                    .push(params.add_zeros(&format!("encoder.init_bwd{l}"), &[config.max_position + 1, h])?);
            }
        }
        Ok(enc)
    }

    /// Size of a span representation.
    pub fn span_dim(&self) -> usize {
        2 * self.config.hidden
    }

    fn recurrent_masks(&self, training: bool, rng: &mut Rng) -> Vec<Option<Vec<f64>>> {
        let p = self.config.recurrent_dropout;
        (0..2 * self.config.layers)
            .map(|_| {
                if training && p > 0.0 {
                    let keep = 1.0 / (1.0 - p);
                    Some((0..self.config.hidden).map(|_| if rng.bernoulli(p) { 0.0 } else { keep }).collect())
                } else {
                    None
                }
            })
            .collect()
    }

    /// Runs one direction's stack over the rows of `x` (already dropped
    /// out) and returns the top layer's outputs.
    #[allow(clippy::too_many_arguments)]
    fn run_stack(
        &self,
        g: &mut Graph<'_>,
        x: Var,
        reverse: bool,
        init_row: Option<usize>,
        masks: &[Option<Vec<f64>>],
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var> {
        let (cells, inits) = if reverse {
            (&self.bwd, &self.init_bwd)
        } else {
            (&self.fwd, &self.init_fwd)
        };
        let mut input = x;
        let mut out = x;
        for (l, cell) in cells.iter().enumerate() {
            if l > 0 {
                input = g.dropout(out, self.config.dropout, rng, training)?;
            }
            let c0 = match init_row {
                Some(r) => {
                    let table = g.param(inits[l]);
                    Some(g.row(table, r.min(self.config.max_position))?)
                }
                None => None,
            };
            let mask = masks[2 * l + usize::from(reverse)].clone();
            out = cell.run(g, input, c0, mask, reverse)?;
        }
        Ok(out)
    }

    /// Top-layer forward and backward outputs of the full bidirectional
    /// stacks, one row per padded position.
    pub fn lstm_outputs(&self, g: &mut Graph<'_>, words: Var, training: bool, rng: &mut Rng) -> Result<(Var, Var)> {
        if self.fwd.is_empty() {
            return Err(Error::config("the feedforward encoder has no LSTM outputs"));
        }
        let masks = self.recurrent_masks(training, rng);
        let x = g.dropout(words, self.config.dropout, rng, training)?;
        let fo = self.run_stack(g, x, false, None, &masks, training, rng)?;
        let bo = self.run_stack(g, x, true, None, &masks, training, rng)?;
        Ok((fo, bo))
    }

    /// Encodes the padded word matrix into fencepost vectors.
    pub fn encode(&self, g: &mut Graph<'_>, words: Var, training: bool, rng: &mut Rng) -> Result<FencepostEncoding> {
        let shape = g.shape(words).to_vec();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::shape(format!(
                "encoder expects a (n+2) × {} matrix, got {:?}",
                self.input_dim, shape
            )));
        }
        if shape[0] < 3 {
            return Err(Error::usage("cannot encode an empty sentence"));
        }
        let fenceposts = shape[0] - 1;
        let (f, b) = match self.config.variant {
            EncoderVariant::Full => {
                let (fo, bo) = self.lstm_outputs(g, words, training, rng)?;
                (g.slice_rows(fo, 0, fenceposts)?, g.slice_rows(bo, 1, fenceposts)?)
            }
            EncoderVariant::Truncated { k } => self.encode_truncated(g, words, k, training, rng)?,
            EncoderVariant::Shuffled { k } => self.encode_shuffled(g, words, k, training, rng)?,
            EncoderVariant::Feedforward { k, .. } => self.encode_feedforward(g, words, k, training, rng)?,
        };
        Ok(FencepostEncoding { f, b, fenceposts })
    }

    fn encode_truncated(
        &self,
        g: &mut Graph<'_>,
        words: Var,
        k: usize,
        training: bool,
        rng: &mut Rng,
    ) -> Result<(Var, Var)> {
        let positions = g.shape(words)[0];
        let masks = self.recurrent_masks(training, rng);
        let x = g.dropout(words, self.config.dropout, rng, training)?;
        let mut fs = Vec::with_capacity(positions - 1);
        let mut bs = Vec::with_capacity(positions - 1);
        for p in 0..positions - 1 {
            let start = (p + 1).saturating_sub(k);
            let len = p + 1 - start;
            let window = g.slice_rows(x, start, len)?;
            let out = self.run_stack(g, window, false, Some(start), &masks, training, rng)?;
            fs.push(g.row(out, len - 1)?);

            let end = (p + k).min(positions - 1);
            let window = g.slice_rows(x, p + 1, end - p)?;
            let out = self.run_stack(g, window, true, Some(p + 1), &masks, training, rng)?;
            bs.push(g.row(out, 0)?);
        }
        Ok((g.stack_rows(&fs)?, g.stack_rows(&bs)?))
    }

    fn encode_shuffled(
        &self,
        g: &mut Graph<'_>,
        words: Var,
        k: usize,
        training: bool,
        rng: &mut Rng,
    ) -> Result<(Var, Var)> {
        let positions = g.shape(words)[0];
        let last = positions - 1;
        let masks = self.recurrent_masks(training, rng);
        let x = g.dropout(words, self.config.dropout, rng, training)?;
        let mut fs = Vec::with_capacity(last);
        let mut bs = Vec::with_capacity(last);
        for p in 0..last {
            let order = forward_order(p, k, rng);
            let seq = g.gather_rows(x, &order)?;
            let out = self.run_stack(g, seq, false, None, &masks, training, rng)?;
            fs.push(g.row(out, p)?);

            let order = backward_order(p, k, last, rng);
            let seq = g.gather_rows(x, &order)?;
            let out = self.run_stack(g, seq, true, None, &masks, training, rng)?;
            bs.push(g.row(out, 0)?);
        }
        Ok((g.stack_rows(&fs)?, g.stack_rows(&bs)?))
    }

    fn encode_feedforward(
        &self,
        g: &mut Graph<'_>,
        words: Var,
        k: usize,
        training: bool,
        rng: &mut Rng,
    ) -> Result<(Var, Var)> {
        let ff = self.ff.as_ref().expect("feedforward weights");
        let positions = g.shape(words)[0];
        let last = positions - 1;
        let fenceposts = last;
        let x = g.dropout(words, self.config.dropout, rng, training)?;
        let mut idx = Vec::with_capacity(fenceposts * 2 * k);
        for p in 0..fenceposts {
            // slots beyond the padded sentence repeat START or STOP
            for d in (0..k).rev() {
                idx.push(p.saturating_sub(d));
            }
            for d in 1..=k {
                idx.push((p + d).min(last));
            }
        }
        let windows = g.gather_rows(x, &idx)?;
        let windows = g.reshape(windows, &[fenceposts, 2 * k * self.input_dim])?;
        let table = g.param(ff.position);
        let pos: Vec<usize> = (0..fenceposts).map(|p| p.min(self.config.max_position)).collect();
        let pos = g.gather_rows(table, &pos)?;
        let mut h = g.concat_cols(&[windows, pos])?;
        for &(w, b) in &ff.hidden {
            let (w, b) = (g.param(w), g.param(b));
            let z = g.matmul_nt(h, w)?;
            let z = g.add_bias(z, b)?;
            let a = g.relu(z);
            h = g.dropout(a, self.config.dropout, rng, training)?;
        }
        let (w, b) = (g.param(ff.out.0), g.param(ff.out.1));
        let z = g.matmul_nt(h, w)?;
        let out = g.add_bias(z, b)?;
        let hd = self.config.hidden;
        // columns 0..H stand in for f, H..2H for -b
        let f = split_cols(g, out, 0, hd)?;
        let right = split_cols(g, out, hd, hd)?;
        Ok((f, g.neg(right)))
    }
}

/// Padded positions read by the forward LSTM of fencepost `p`: `<START>`,
/// the words before the window in random order, then the window
/// `p-k+1..=p` in order.
pub(crate) fn forward_order(p: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..=p).collect();
    if p > k {
        rng.shuffle(&mut order[1..=p - k]);
    }
    order
}

/// Padded positions read by the backward LSTM of fencepost `p`, in reading
/// order reversed: the window `p+1..=p+k`, the words after it in random
/// order, then `<STOP>` at `last`.
pub(crate) fn backward_order(p: usize, k: usize, last: usize, rng: &mut Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (p + 1..=last).collect();
    if p + k + 1 < last {
        let len = order.len();
        rng.shuffle(&mut order[k..len - 1]);
    }
    order
}

/// Columns `start..start+len` of a matrix.
fn split_cols(g: &mut Graph<'_>, m: Var, start: usize, len: usize) -> Result<Var> {
    let (rows, cols) = (g.shape(m)[0], g.shape(m)[1]);
    let idx: Vec<usize> = (0..rows)
        .flat_map(|r| (start..start + len).map(move |c| r * cols + c))
        .collect();
    let flat = g.reshape(m, &[rows * cols, 1])?;
    let picked = g.gather_rows(flat, &idx)?;
    g.reshape(picked, &[rows, len])
}
