use serde::{Deserialize, Serialize};

use super::chart::{all_spans, span_index, cky_decode, independent_decode, loss_augmented_decode, Decoded, GoldLabels, SpanScores};
use crate::error::{Error, Result};
use crate::lexical::{CharVocab, LexicalConfig, Lexicon};
use crate::span_encoder::{EncoderConfig, FencepostEncoding, SpanEncoder};
use crate::tensor::{Graph, ParamId, ParamSet, Rng, Var};
use crate::treebank::{LabelInventory, LabeledSpan, ParseTree, TreebankEntry, Vocabulary, EMPTY};

/// Architecture hyperparameters of a parser.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParserConfig {
    pub lexical: LexicalConfig,
    pub encoder: EncoderConfig,
    /// Hidden size of the label scorer.
    pub label_hidden: usize,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            lexical: LexicalConfig::default(),
            encoder: EncoderConfig::default(),
            label_hidden: 250,
        }
    }
}

/// A parser's output for one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    /// The n-ary tree, or `None` for independent decoding.
    pub tree: Option<ParseTree>,
    /// Non-empty labeled spans.
    pub spans: Vec<LabeledSpan>,
    pub score: f64,
    pub raw_score: f64,
    pub delta: usize,
}

/// A span-based constituency parser: lexical layer, sentence encoder and
/// label scorer `s(i,j,·) = W2 relu(W1 r_ij + z1) + z2`.
pub struct ParserModel {
    pub config: ParserConfig,
    pub labels: LabelInventory,
    pub lexicon: Lexicon,
    pub encoder: SpanEncoder,
    pub params: ParamSet,
    /// Optimizer updates applied so far.
    pub updates: u64,
    w1: ParamId,
    z1: ParamId,
    w2: ParamId,
    z2: ParamId,
}

impl std::fmt::Debug for ParserModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParserModel")
            .field("config", &self.config)
            .field("labels", &self.labels.len())
            .field("parameters", &self.params.num_values())
            .finish()
    }
}

impl ParserModel {
    pub fn new(
        config: ParserConfig,
        labels: LabelInventory,
        words: Vocabulary,
        chars: CharVocab,
        tags: Vocabulary,
        rng: &mut Rng,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::config("a parser needs at least one label"));
        }
        let mut params = ParamSet::new();
        let lexicon = Lexicon::new(config.lexical, words, chars, tags, &mut params, rng)?;
        let encoder = SpanEncoder::new(config.encoder, lexicon.output_dim(), &mut params, rng)?;
        let (d, h, l) = (encoder.span_dim(), config.label_hidden, labels.len());
        let w1 = params.add_uniform("scorer.w1", &[h, d], (6.0 / (h + d) as f64).sqrt(), rng)?;
        let z1 = params.add_zeros("scorer.z1", &[h])?;
        let w2 = params.add_uniform("scorer.w2", &[l, h], (6.0 / (l + h) as f64).sqrt(), rng)?;
        let z2 = params.add_zeros("scorer.z2", &[l])?;
        Ok(ParserModel {
            config,
            labels,
            lexicon,
            encoder,
            params,
            updates: 0,
            w1,
            z1,
            w2,
            z2,
        })
    }

    /// Builds vocabularies and the label inventory from training data.
    pub fn for_corpus(config: ParserConfig, train: &[TreebankEntry], rng: &mut Rng) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::usage("empty training corpus"));
        }
        let labels = LabelInventory::from_trees(train.iter().map(|e| &e.tree));
        let words = Vocabulary::from_sentences(train.iter().map(|e| &e.words));
        let chars = CharVocab::from_words(words.types());
        let tags = Vocabulary::from_sentences(train.iter().map(|e| &e.tags));
        ParserModel::new(config, labels, words, chars, tags, rng)
    }

    /// Encodes a sentence into fencepost vectors.
    pub fn encode(
        &self,
        g: &mut Graph<'_>,
        words: &[String],
        tags: Option<&[String]>,
        training: bool,
        rng: &mut Rng,
    ) -> Result<FencepostEncoding> {
        let tags = if self.config.lexical.mode.uses_tags() { tags } else { None };
        let x = self.lexicon.represent_sentence(g, words, tags, training, rng)?;
        self.encoder.encode(g, x, training, rng)
    }

    fn score_reprs(&self, g: &mut Graph<'_>, r: Var) -> Result<Var> {
        let (w1, z1, w2, z2) = (g.param(self.w1), g.param(self.z1), g.param(self.w2), g.param(self.z2));
        let h = g.matmul_nt(r, w1)?;
        let h = g.add_bias(h, z1)?;
        let h = g.relu(h);
        let s = g.matmul_nt(h, w2)?;
        g.add_bias(s, z2)
    }

    /// The `L` label scores of span `(i, j)`.
    pub fn score_span_labels(&self, g: &mut Graph<'_>, enc: &FencepostEncoding, i: usize, j: usize) -> Result<Var> {
        let r = enc.span_reprs(g, vec![(i, j)])?;
        let s = self.score_reprs(g, r)?;
        g.row(s, 0)
    }

    /// Label scores of every span as a `spans × L` matrix in
    /// [`span_index`](super::span_index) order.
    pub fn score_all_spans(&self, g: &mut Graph<'_>, enc: &FencepostEncoding) -> Result<Var> {
        let r = enc.span_reprs(g, all_spans(enc.words()))?;
        self.score_reprs(g, r)
    }

    /// Evaluation-mode score table for a sentence.
    pub fn span_scores(&self, words: &[String], tags: Option<&[String]>) -> Result<SpanScores> {
        let mut g = Graph::new(&self.params);
        let mut rng = Rng::new(0);
        let enc = self.encode(&mut g, words, tags, false, &mut rng)?;
        let s = self.score_all_spans(&mut g, &enc)?;
        SpanScores::new(words.len(), self.labels.len(), g.value(s).data().to_vec())
    }

    /// Gold label ids of the constituents of `tree`.
    pub fn gold_labels(&self, tree: &ParseTree) -> GoldLabels {
        GoldLabels::new(tree.spans().into_iter().map(|s| {
            let id = s.label.as_deref().and_then(|l| self.labels.id(l));
            (s.start, s.end, id)
        }))
    }

    pub fn to_result(&self, d: Decoded, tree_mode: bool) -> DecodeResult {
        let spans: Vec<LabeledSpan> = d
            .nodes
            .iter()
            .filter(|&&(_, _, l)| l != EMPTY)
            .map(|&(i, j, l)| LabeledSpan::new(i, j, self.labels.name(l).expect("decoded label in inventory")))
            .collect();
        let tree = if tree_mode { Some(nodes_to_tree(&d.nodes, &self.labels)) } else { None };
        DecodeResult {
            tree,
            spans,
            score: d.score,
            raw_score: d.raw_score,
            delta: d.delta,
        }
    }

    /// The highest-scoring tree.
    pub fn parse(&self, words: &[String], tags: Option<&[String]>) -> Result<DecodeResult> {
        let scores = self.span_scores(words, tags)?;
        Ok(self.to_result(cky_decode(&scores), true))
    }

    /// Spans chosen independently, without a tree constraint.
    pub fn parse_independent(&self, words: &[String], tags: Option<&[String]>) -> Result<DecodeResult> {
        let scores = self.span_scores(words, tags)?;
        Ok(self.to_result(independent_decode(&scores), false))
    }

    /// The loss-augmented argmax against the entry's gold tree.
    pub fn loss_augmented_parse(&self, entry: &TreebankEntry) -> Result<DecodeResult> {
        let scores = self.span_scores(&entry.words, Some(&entry.tags))?;
        Ok(self.to_result(loss_augmented_decode(&scores, &self.gold_labels(&entry.tree)), true))
    }

    /// Builds the structured hinge loss
    /// `max(0, max_T [s(T) + Δ(T, T*)] - s(T*))` on the tape. The argmax tree
    /// is found on the current scores and held fixed, so gradients flow only
    /// through the span scores of the two trees. Returns `None` when the loss
    /// is zero, together with the loss value.
    pub fn hinge_loss(
        &self,
        g: &mut Graph<'_>,
        entry: &TreebankEntry,
        training: bool,
        rng: &mut Rng,
    ) -> Result<(Option<Var>, f64)> {
        let enc = self.encode(g, &entry.words, Some(&entry.tags), training, rng)?;
        let s = self.score_all_spans(g, &enc)?;
        let scores = SpanScores::new(entry.words.len(), self.labels.len(), g.value(s).data().to_vec())?;
        let predicted = loss_augmented_decode(&scores, &self.gold_labels(&entry.tree));
        let gold_score: f64 = self
            .gold_label_ids(&entry.tree)?
            .iter()
            .map(|&(i, j, l)| scores.get(i, j, l))
            .sum();
        if predicted.score - gold_score <= 0.0 {
            return Ok((None, 0.0));
        }
        let out = self.margin(g, s, entry, &predicted)?;
        let value = g.value(out).item();
        Ok((Some(out), value))
    }

    /// Sum over every span of the per-span margin loss
    /// `max(0, max_ℓ [s(i,j,ℓ) + 1[ℓ ≠ ℓ*]] - s(i,j,ℓ*))`, where `ℓ*` is the
    /// gold label or empty and the empty label scores zero. No tree
    /// constraint is involved.
    pub fn independent_hinge_loss(
        &self,
        g: &mut Graph<'_>,
        entry: &TreebankEntry,
        training: bool,
        rng: &mut Rng,
    ) -> Result<(Option<Var>, f64)> {
        self.gold_label_ids(&entry.tree)?;
        let enc = self.encode(g, &entry.words, Some(&entry.tags), training, rng)?;
        let s = self.score_all_spans(g, &enc)?;
        let n = entry.words.len();
        let l = self.labels.len();
        let gold = self.gold_labels(&entry.tree);
        let values = g.value(s).data().to_vec();
        let (mut entries, mut violated, mut total) = (Vec::new(), 0usize, 0.0);
        for (i, j) in all_spans(n) {
            let row = span_index(n, i, j) * l;
            let score = |label: usize| if label == EMPTY { 0.0 } else { values[row + label - 1] };
            let star = gold.get(i, j);
            let mut best = (EMPTY, gold.cost(i, j, EMPTY));
            for label in 1..=l {
                let v = score(label) + gold.cost(i, j, label);
                if v > best.1 {
                    best = (label, v);
                }
            }
            let violation = best.1 - score(star);
            if violation > 0.0 {
                total += violation;
                violated += 1;
                if best.0 != EMPTY {
                    entries.push((row + best.0 - 1, 1.0));
                }
                if star != EMPTY {
                    entries.push((row + star - 1, -1.0));
                }
            }
        }
        if violated == 0 {
            return Ok((None, 0.0));
        }
        let sum = g.gather_sum(s, entries)?;
        let out = g.add_scalar(sum, violated as f64);
        Ok((Some(out), total))
    }

    /// `s(T) + Δ - s(T*)` for a fixed candidate `T` given by `predicted`,
    /// over a score matrix from [`score_all_spans`](Self::score_all_spans).
    pub fn margin(&self, g: &mut Graph<'_>, scores: Var, entry: &TreebankEntry, predicted: &Decoded) -> Result<Var> {
        let n = entry.words.len();
        let l = self.labels.len();
        let mut entries = Vec::new();
        for &(i, j, label) in &predicted.nodes {
            if label != EMPTY {
                entries.push((span_index(n, i, j) * l + label - 1, 1.0));
            }
        }
        for (i, j, label) in self.gold_label_ids(&entry.tree)? {
            entries.push((span_index(n, i, j) * l + label - 1, -1.0));
        }
        let sum = g.gather_sum(scores, entries)?;
        Ok(g.add_scalar(sum, predicted.delta as f64))
    }

    fn gold_label_ids(&self, tree: &ParseTree) -> Result<Vec<(usize, usize, usize)>> {
        tree.spans()
            .into_iter()
            .map(|s| {
                let label = s.label.expect("tree spans are labeled");
                let id = self
                    .labels
                    .id(&label)
                    .ok_or_else(|| Error::usage(format!("gold label {label} is not in the parser's inventory")))?;
                Ok((s.start, s.end, id))
            })
            .collect()
    }
}

/// Rebuilds the n-ary tree from preorder binary nodes, splicing out
/// empty-labeled nodes.
fn nodes_to_tree(nodes: &[(usize, usize, usize)], labels: &LabelInventory) -> ParseTree {
    use crate::treebank::BinaryTree;
    fn build(nodes: &[(usize, usize, usize)], pos: &mut usize, labels: &LabelInventory) -> BinaryTree {
        let (i, j, l) = nodes[*pos];
        *pos += 1;
        let label = labels.name(l).map(str::to_string);
        if j - i == 1 {
            BinaryTree::leaf(i, label)
        } else {
            let left = build(nodes, pos, labels);
            let right = build(nodes, pos, labels);
            BinaryTree::join(label, left, right)
        }
    }
    let mut pos = 0;
    build(nodes, &mut pos, labels)
        .debinarize()
        .expect("the root label is never empty")
}
