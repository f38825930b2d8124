//! Finite-difference checks over every graph operation and the model's
//! composite pieces, shared by the gradient tests and the acceptance run.

use spanparse::lexical::{LexicalConfig, LexicalMode};
use spanparse::parser::{loss_augmented_decode, ParserConfig, ParserModel};
use spanparse::span_encoder::{EncoderConfig, EncoderVariant};
use spanparse::tensor::{grad_check, grad_check_sampled, Graph, LstmWeights, ParamSet, Rng, Tensor, Var};
use spanparse::treebank::synthetic::generate_synthetic;
use spanparse::Result;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

type Op = fn(&mut Graph<'_>, &Inputs) -> Result<Var>;

/// Parameter handles used as op inputs.
pub struct Inputs {
    pub a: Var,
    pub b: Var,
    pub c: Var,
    pub d: Var,
    pub v: Var,
    pub u: Var,
}

/// Values bounded away from zero so kinks stay outside the stencil.
fn away_from_zero(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.uniform_range(0.2, 1.0);
            if rng.bernoulli(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn input_params() -> ParamSet {
    let mut rng = Rng::new(17);
    let mut p = ParamSet::new();
    p.add("a", away_from_zero(3, 4, &mut rng)).unwrap();
    p.add("b", away_from_zero(4, 3, &mut rng)).unwrap();
    p.add("c", away_from_zero(3, 4, &mut rng)).unwrap();
    p.add("d", away_from_zero(3, 2, &mut rng)).unwrap();
    let v = away_from_zero(1, 4, &mut rng).data().to_vec();
    p.add("v", Tensor::vector(v)).unwrap();
    let u = away_from_zero(1, 3, &mut rng).data().to_vec();
    p.add("u", Tensor::vector(u)).unwrap();
    p
}

fn bind(g: &mut Graph<'_>) -> Inputs {
    let ps = g.params();
    let id = |n| ps.id(n).unwrap();
    Inputs {
        a: g.param(id("a")),
        b: g.param(id("b")),
        c: g.param(id("c")),
        d: g.param(id("d")),
        v: g.param(id("v")),
        u: g.param(id("u")),
    }
}

/// Reduces any output to a scalar with fixed, uneven weights.
pub fn weighted_sum(g: &mut Graph<'_>, out: Var) -> Result<Var> {
    let n = g.value(out).len();
    let entries = (0..n).map(|i| (i, 0.3 + 0.7 * ((i * 7919) % 13) as f64 / 13.0)).collect();
    g.gather_sum(out, entries)
}

pub fn ops() -> Vec<(&'static str, Op)> {
    vec![
        ("matmul", |g, x| g.matmul(x.a, x.b)),
        ("matmul_nt", |g, x| g.matmul_nt(x.a, x.c)),
        ("matvec", |g, x| g.matmul(x.a, x.v)),
        ("add", |g, x| g.add(x.a, x.c)),
        ("sub", |g, x| g.sub(x.a, x.c)),
        ("mul", |g, x| g.mul(x.a, x.c)),
        ("add_bias", |g, x| g.add_bias(x.a, x.v)),
        ("scale", |g, x| Ok(g.scale(x.a, 1.7))),
        ("neg", |g, x| Ok(g.neg(x.a))),
        ("add_scalar", |g, x| Ok(g.add_scalar(x.a, 0.3))),
        ("relu", |g, x| Ok(g.relu(x.a))),
        ("tanh", |g, x| Ok(g.tanh(x.a))),
        ("sigmoid", |g, x| Ok(g.sigmoid(x.a))),
        ("pointwise", |g, x| Ok(g.pointwise(x.a, |t| t * t * t, |t| 3.0 * t * t))),
        ("dropout", |g, x| g.dropout(x.a, 0.5, &mut Rng::new(3), true)),
        ("concat", |g, x| g.concat(&[x.v, x.u])),
        ("concat_cols", |g, x| g.concat_cols(&[x.a, x.d])),
        ("slice", |g, x| g.slice(x.v, 1, 2)),
        ("slice_rows", |g, x| g.slice_rows(x.a, 1, 2)),
        ("row", |g, x| g.row(x.a, 2)),
        ("gather_rows", |g, x| g.gather_rows(x.a, &[2, 0, 2])),
        ("reshape", |g, x| g.reshape(x.a, &[4, 3])),
        ("stack_rows", |g, x| {
            let r = g.row(x.c, 1)?;
            g.stack_rows(&[x.v, r])
        }),
        ("sum", |g, x| Ok(g.sum(x.a))),
        ("gather_sum", |g, x| g.gather_sum(x.a, vec![(0, 1.0), (5, -2.0), (5, 0.5), (11, 3.0)])),
        ("pick", |g, x| g.pick(x.v, 2)),
        ("span_differences", |g, x| {
            let f = g.matmul(x.b, x.d)?;
            let b = g.tanh(f);
            g.span_differences(f, b, vec![(0, 2), (1, 3), (0, 3), (2, 3)])
        }),
        ("lstm_step", |g, x| {
            let ps = g.params();
            let w = LstmWeights::find(ps, "cell")?;
            let h0 = g.slice(x.v, 0, 3)?;
            let h = g.tanh(h0);
            let (h1, c1) = spanparse::tensor::lstm_step(g, &w, x.v, h, x.u)?;
            g.concat(&[h1, c1])
        }),
    ]
}

/// One report per op, as `(name, max relative error)`.
pub fn check_ops() -> Vec<(&'static str, f64)> {
    let mut params = input_params();
    LstmWeights::new(&mut params, "cell", 4, 3, &mut Rng::new(5)).unwrap();
    ops()
        .into_iter()
        .map(|(name, op)| {
            let report = grad_check(
                |g| {
                    let x = bind(g);
                    let out = op(g, &x)?;
                    weighted_sum(g, out)
                },
                &params,
                STEP,
            )
            .unwrap();
            (name, report.max_relative_error)
        })
        .collect()
}

fn small_model(seed: u64) -> (ParserModel, Vec<spanparse::treebank::TreebankEntry>) {
    let data = generate_synthetic(1, 12, &mut Rng::new(seed));
    let config = ParserConfig {
        lexical: LexicalConfig {
            mode: LexicalMode::WordTagChar,
            word_dim: 5,
            char_dim: 4,
            char_hidden: Some(3),
            tag_dim: 3,
        },
        encoder: EncoderConfig {
            variant: EncoderVariant::Full,
            hidden: 4,
            layers: 2,
            ..EncoderConfig::default()
        },
        label_hidden: 6,
    };
    let model = ParserModel::for_corpus(config, &data, &mut Rng::new(seed)).unwrap();
    (model, data)
}

fn ids_with(model: &ParserModel, prefix: &str) -> Vec<spanparse::tensor::ParamId> {
    model.params.ids().filter(|&id| model.params.get(id).name().starts_with(prefix)).collect()
}

/// Character LSTM, two-layer sentence bi-LSTM, label scorer and the
/// structure-frozen hinge loss, as `(name, max relative error)`.
pub fn check_components() -> Vec<(&'static str, f64)> {
    let (model, data) = small_model(21);
    let e = data.iter().find(|e| (4..=8).contains(&e.words.len())).unwrap();
    let mut out = Vec::new();
    let max_entries = 40;

    let char_ids = ids_with(&model, "lexical.char");
    let r = grad_check_sampled(
        |g| {
            let v = model.lexicon.char_encode(g, "Quickly-3")?;
            weighted_sum(g, v)
        },
        &model.params,
        STEP,
        &char_ids,
        max_entries,
        &mut Rng::new(1),
    )
    .unwrap();
    out.push(("char LSTM", r.max_relative_error));

    let enc_ids = ids_with(&model, "encoder.");
    let r = grad_check_sampled(
        |g| {
            let enc = model.encode(g, &e.words, Some(&e.tags), false, &mut Rng::new(0))?;
            let both = g.concat_cols(&[enc.f, enc.b])?;
            weighted_sum(g, both)
        },
        &model.params,
        STEP,
        &enc_ids,
        max_entries,
        &mut Rng::new(2),
    )
    .unwrap();
    out.push(("sentence bi-LSTM", r.max_relative_error));

    let scorer_ids = ids_with(&model, "scorer.");
    let r = grad_check_sampled(
        |g| {
            let enc = model.encode(g, &e.words, Some(&e.tags), false, &mut Rng::new(0))?;
            let s = model.score_all_spans(g, &enc)?;
            weighted_sum(g, s)
        },
        &model.params,
        STEP,
        &scorer_ids,
        max_entries,
        &mut Rng::new(3),
    )
    .unwrap();
    out.push(("label scorer", r.max_relative_error));

    let scores = model.span_scores(&e.words, Some(&e.tags)).unwrap();
    let predicted = loss_augmented_decode(&scores, &model.gold_labels(&e.tree));
    let all: Vec<_> = model.params.ids().collect();
    let r = grad_check_sampled(
        |g| {
            let enc = model.encode(g, &e.words, Some(&e.tags), false, &mut Rng::new(0))?;
            let s = model.score_all_spans(g, &enc)?;
            model.margin(g, s, e, &predicted)
        },
        &model.params,
        STEP,
        &all,
        max_entries,
        &mut Rng::new(4),
    )
    .unwrap();
    out.push(("frozen hinge loss", r.max_relative_error));
    out
}
