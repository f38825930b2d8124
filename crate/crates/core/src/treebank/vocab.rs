use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::ParseTree;

/// Index into the label scorer's output, offset by one: 0 is the empty label.
pub type LabelId = usize;

/// The implicit empty label.
pub const EMPTY: LabelId = 0;

/// Atomic labels (nonterminals and collapsed chains) seen in training trees.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct LabelInventory {
    labels: Vec<String>,
    index: HashMap<String, LabelId>,
}

impl From<Vec<String>> for LabelInventory {
    fn from(labels: Vec<String>) -> Self {
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i + 1)).collect();
        LabelInventory { labels, index }
    }
}

impl From<LabelInventory> for Vec<String> {
    fn from(inv: LabelInventory) -> Self {
        inv.labels
    }
}

impl LabelInventory {
    /// Sorted, deduplicated labels of all nodes in `trees`.
    pub fn from_trees<'a>(trees: impl IntoIterator<Item = &'a ParseTree>) -> Self {
        let mut set = BTreeSet::new();
        for t in trees {
            for s in t.spans() {
                set.insert(s.label.expect("tree spans are labeled"));
            }
        }
        LabelInventory::from(set.into_iter().collect::<Vec<_>>())
    }

    /// Number of explicit labels, i.e. the scorer's output size.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<LabelId> {
        self.index.get(label).copied()
    }

    /// `None` for the empty label.
    pub fn name(&self, id: LabelId) -> Option<&str> {
        if id == EMPTY {
            None
        } else {
            self.labels.get(id - 1).map(String::as_str)
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Word types with training frequencies. Indices 0, 1 and 2 are reserved
/// for `<UNK>`, `<START>` and `<STOP>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    words: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    words: Vec<String>,
    freqs: Vec<u64>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let index = r.words.iter().enumerate().skip(3).map(|(i, w)| (w.clone(), i)).collect();
        Vocabulary {
            words: r.words,
            freqs: r.freqs,
            index,
        }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            words: v.words,
            freqs: v.freqs,
        }
    }
}

impl Vocabulary {
    pub const UNK: usize = 0;
    pub const START: usize = 1;
    pub const STOP: usize = 2;

    /// Builds the vocabulary in order of first occurrence.
    pub fn from_sentences<'a, S, W>(sentences: S) -> Self
    where
        S: IntoIterator<Item = &'a W>,
        W: AsRef<[String]> + 'a + ?Sized,
    {
        let mut v = Vocabulary {
            words: vec!["<UNK>".into(), "<START>".into(), "<STOP>".into()],
            freqs: vec![0, 0, 0],
            index: HashMap::new(),
        };
        for s in sentences {
            for w in s.as_ref() {
                match v.index.get(w) {
                    Some(&i) => v.freqs[i] += 1,
                    None => {
                        v.index.insert(w.clone(), v.words.len());
                        v.words.push(w.clone());
                        v.freqs.push(1);
                    }
                }
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 3
    }

    /// Index of `word`, or `<UNK>` for unseen words.
    pub fn lookup(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(Self::UNK)
    }

    /// Training frequency; 0 for unseen words.
    pub fn freq(&self, word: &str) -> u64 {
        self.index.get(word).map_or(0, |&i| self.freqs[i])
    }

    pub fn freq_of(&self, index: usize) -> u64 {
        self.freqs.get(index).copied().unwrap_or(0)
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    /// The training word types, reserved tokens excluded.
    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.words[3..].iter().map(String::as_str)
    }
}
