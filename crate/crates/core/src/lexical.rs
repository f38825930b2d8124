//! Per-word input vectors: word embeddings, a character bi-LSTM and tag
//! embeddings, combined according to a [`LexicalMode`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, LstmWeights, ParamId, ParamSet, Rng, Tensor, Var};
use crate::treebank::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LexicalMode {
    WordOnly,
    WordChar,
    WordTag,
    WordTagChar,
    CharOnly,
}

impl LexicalMode {
    pub const ALL: [LexicalMode; 5] = [
        LexicalMode::WordOnly,
        LexicalMode::WordChar,
        LexicalMode::WordTag,
        LexicalMode::WordTagChar,
        LexicalMode::CharOnly,
    ];

    pub fn uses_words(self) -> bool {
        self != LexicalMode::CharOnly
    }

    pub fn uses_chars(self) -> bool {
        matches!(self, LexicalMode::WordChar | LexicalMode::WordTagChar | LexicalMode::CharOnly)
    }

    pub fn uses_tags(self) -> bool {
        matches!(self, LexicalMode::WordTag | LexicalMode::WordTagChar)
    }

    pub fn name(self) -> &'static str {
        match self {
            LexicalMode::WordOnly => "word",
            LexicalMode::WordChar => "word-char",
            LexicalMode::WordTag => "word-tag",
            LexicalMode::WordTagChar => "word-tag-char",
            LexicalMode::CharOnly => "char",
        }
    }
}

impl fmt::Display for LexicalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LexicalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LexicalMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown lexical mode {s:?} (expected one of word, word-char, word-tag, word-tag-char, char)"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexicalConfig {
    pub mode: LexicalMode,
    pub word_dim: usize,
    pub char_dim: usize,
    /// Character LSTM size per direction; `None` picks 100, or 125 for
    /// `CharOnly`.
    pub char_hidden: Option<usize>,
    pub tag_dim: usize,
}

impl Default for LexicalConfig {
    fn default() -> Self {
        LexicalConfig {
            mode: LexicalMode::WordChar,
            word_dim: 100,
            char_dim: 50,
            char_hidden: None,
            tag_dim: 50,
        }
    }
}

impl LexicalConfig {
    pub fn char_hidden(&self) -> usize {
        self.char_hidden.unwrap_or(if self.mode == LexicalMode::CharOnly { 125 } else { 100 })
    }

    /// Size of a word vector under this configuration.
    pub fn output_dim(&self) -> usize {
        let mut d = 0;
        if self.mode.uses_words() {
            d += self.word_dim;
        }
        if self.mode.uses_chars() {
            d += 2 * self.char_hidden();
        }
        if self.mode.uses_tags() {
            d += self.tag_dim;
        }
        d
    }
}

/// Characters seen in training words; index 0 stands for any other character.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<char>", into = "Vec<char>")]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl From<Vec<char>> for CharVocab {
    fn from(chars: Vec<char>) -> Self {
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i + 1)).collect();
        CharVocab { chars, index }
    }
}

impl From<CharVocab> for Vec<char> {
    fn from(v: CharVocab) -> Self {
        v.chars
    }
}

impl CharVocab {
    pub const UNKNOWN: usize = 0;

    /// Sorted distinct characters of `words`.
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set: Vec<char> = words.into_iter().flat_map(str::chars).collect();
        set.sort_unstable();
        set.dedup();
        CharVocab::from(set)
    }

    /// Table size including the unknown slot.
    pub fn len(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn lookup(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(Self::UNKNOWN)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

/// The lexical layer's parameters together with the vocabularies they index.
#[derive(Clone, Debug)]
pub struct Lexicon {
    pub config: LexicalConfig,
    pub words: Vocabulary,
    pub chars: CharVocab,
    pub tags: Vocabulary,
    word_emb: Option<ParamId>,
    char_emb: Option<ParamId>,
    char_fwd: Option<LstmWeights>,
    char_bwd: Option<LstmWeights>,
    char_pad: Option<ParamId>,
    tag_emb: Option<ParamId>,
}

impl Lexicon {
    /// Registers the parameters the mode needs under the `lexical.` prefix.
    pub fn new(
        config: LexicalConfig,
        words: Vocabulary,
        chars: CharVocab,
        tags: Vocabulary,
        params: &mut ParamSet,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mode = config.mode;
        let word_emb = if mode.uses_words() {
            Some(params.add_uniform("lexical.word_emb", &[words.len(), config.word_dim], 0.1, rng)?)
        } else {
            None
        };
        let (char_emb, char_fwd, char_bwd, char_pad) = if mode.uses_chars() {
            let h = config.char_hidden();
            (
                Some(params.add_uniform("lexical.char_emb", &[chars.len(), config.char_dim], 0.1, rng)?),
                Some(LstmWeights::new(params, "lexical.char_fwd", config.char_dim, h, rng)?),
                Some(LstmWeights::new(params, "lexical.char_bwd", config.char_dim, h, rng)?),
                Some(params.add_uniform("lexical.char_pad", &[2, 2 * h], 0.1, rng)?),
            )
        } else {
            (None, None, None, None)
        };
        let tag_emb = if mode.uses_tags() {
            Some(params.add_uniform("lexical.tag_emb", &[tags.len(), config.tag_dim], 0.1, rng)?)
        } else {
            None
        };
        Ok(Lexicon {
            config,
            words,
            chars,
            tags,
            word_emb,
            char_emb,
            char_fwd,
            char_bwd,
            char_pad,
            tag_emb,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    /// Probability that a training occurrence of `word` is looked up as
    /// `<UNK>`: `1 / (1 + freq)`.
    pub fn unk_probability(&self, word: &str) -> f64 {
        1.0 / (1.0 + self.words.freq(word) as f64)
    }

    fn word_index(&self, word: &str, training: bool, rng: &mut Rng) -> usize {
        let idx = self.words.lookup(word);
        if training && idx != Vocabulary::UNK && rng.bernoulli(self.unk_probability(word)) {
            Vocabulary::UNK
        } else {
            idx
        }
    }

    /// Concatenated final outputs of the forward and backward character
    /// LSTMs over `word`.
    pub fn char_encode(&self, g: &mut Graph<'_>, word: &str) -> Result<Var> {
        let (Some(emb), Some(fwd), Some(bwd)) = (self.char_emb, &self.char_fwd, &self.char_bwd) else {
            return Err(Error::config(format!("lexical mode {} has no character LSTM", self.config.mode)));
        };
        if word.is_empty() {
            return Err(Error::usage("char_encode of an empty word"));
        }
        let table = g.param(emb);
        let ids: Vec<usize> = word.chars().map(|c| self.chars.lookup(c)).collect();
        let len = ids.len();
        let xs = g.gather_rows(table, &ids)?;
        let f = fwd.run(g, xs, None, None, false)?;
        let b = bwd.run(g, xs, None, None, true)?;
        let f_last = g.row(f, len - 1)?;
        let b_first = g.row(b, 0)?;
        g.concat(&[f_last, b_first])
    }

    /// The input vector for one word. `tag` is required when the mode uses
    /// tags and ignored otherwise. In training mode the word lookup (not the
    /// character channel) is replaced by `<UNK>` with probability
    /// [`unk_probability`](Self::unk_probability).
    pub fn represent_word(
        &self,
        g: &mut Graph<'_>,
        word: &str,
        tag: Option<&str>,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var> {
        let mut parts = Vec::with_capacity(3);
        if let Some(emb) = self.word_emb {
            let table = g.param(emb);
            let idx = self.word_index(word, training, rng);
            parts.push(g.row(table, idx)?);
        }
        if self.config.mode.uses_chars() {
            parts.push(self.char_encode(g, word)?);
        }
        if let Some(emb) = self.tag_emb {
            let tag = tag.ok_or_else(|| {
                Error::config(format!("lexical mode {} needs part-of-speech tags", self.config.mode))
            })?;
            let table = g.param(emb);
            parts.push(g.row(table, self.tags.lookup(tag))?);
        }
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            g.concat(&parts)
        }
    }

    fn padding(&self, g: &mut Graph<'_>, which: usize) -> Result<Var> {
        let mut parts = Vec::with_capacity(3);
        if let Some(emb) = self.word_emb {
            let table = g.param(emb);
            parts.push(g.row(table, which)?);
        }
        if let Some(pad) = self.char_pad {
            let table = g.param(pad);
            parts.push(g.row(table, which - Vocabulary::START)?);
        }
        if let Some(emb) = self.tag_emb {
            let table = g.param(emb);
            parts.push(g.row(table, which)?);
        }
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            g.concat(&parts)
        }
    }

    /// Word vectors for `<START> w_1 .. w_n <STOP>` as an `(n+2) × D`
    /// matrix.
    pub fn represent_sentence(
        &self,
        g: &mut Graph<'_>,
        words: &[String],
        tags: Option<&[String]>,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var> {
        if words.is_empty() {
            return Err(Error::usage("cannot represent an empty sentence"));
        }
        if let Some(t) = tags {
            if t.len() != words.len() {
                return Err(Error::usage(format!("{} tags for {} words", t.len(), words.len())));
            }
        }
        let mut rows = Vec::with_capacity(words.len() + 2);
        rows.push(self.padding(g, Vocabulary::START)?);
        for (i, w) in words.iter().enumerate() {
            let tag = tags.map(|t| t[i].as_str());
            rows.push(self.represent_word(g, w, tag, training, rng)?);
        }
        rows.push(self.padding(g, Vocabulary::STOP)?);
        g.stack_rows(&rows)
    }

    /// Evaluation-mode representation of a single word as a plain tensor.
    pub fn word_vector(&self, params: &ParamSet, word: &str, tag: Option<&str>) -> Result<Tensor> {
        let mut g = Graph::new(params);
        let v = self.represent_word(&mut g, word, tag, false, &mut Rng::new(0))?;
        Ok(g.value(v).clone())
    }
}
