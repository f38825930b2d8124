//! A built-in probabilistic grammar producing PTB-style trees.
//!
//! Besides ordinary recursion (clausal complements, relative clauses,
//! coordination) the grammar has two properties the context and lexical
//! experiments rely on:
//!
//! * A sentence-initial adverb decides prepositional-phrase attachment far to
//!   its right: after `so` the PP attaches to the verb, after `thus` it
//!   attaches to the object noun phrase. Everywhere else a verb never takes
//!   both an object and a PP, so the marker is the only cue.
//! * Predicates after linking verbs are single open-class words whose phrase
//!   label (NP, ADJP, ADVP) is signalled only by the word's suffix. Open-class
//!   words are drawn from a large Zipfian pool, so many of them are unseen at
//!   test time.

use super::io::{normalize, Raw, TreebankEntry};
use crate::tensor::Rng;

type Alternatives = &'static [(f64, &'static [&'static str])];

// Symbol conventions: `@X` is spliced into its parent, `#TAG` or `#TAG_cls`
// is a preterminal, anything else is a node labeled by the part before `_`.
const RULES: &[(&str, Alternatives)] = &[
    (
        "S_TOP",
        &[
            (4.0, &["@SUBJ", "VP", "#END"]),
            (1.5, &["ADVP_HI", "@SUBJ", "VP_HI", "#END"]),
            (1.5, &["ADVP_LO", "@SUBJ", "VP_LO", "#END"]),
            (1.0, &["SBAR_ADV", "#COMMA", "@SUBJ", "VP", "#END"]),
            (0.6, &["@SUBJ", "VP", "#COMMA", "#CC", "S_CONJ", "#END"]),
            (0.3, &["@SUBJ", "VP", "#COLON", "S_CONJ", "#END"]),
            (0.3, &["VP_B"]),
        ],
    ),
    ("S_CONJ", &[(1.0, &["@SUBJ", "VP"])]),
    (
        "@SUBJ",
        &[
            (4.0, &["NP_S"]),
            (1.2, &["NP_PP"]),
            (1.2, &["NP_REL"]),
            (0.4, &["NP_APP"]),
            (0.3, &["NP_PRN"]),
            (0.4, &["NP_CC"]),
        ],
    ),
    (
        "NP_S",
        &[
            (3.0, &["#DT", "#NN"]),
            (2.0, &["#DT", "#JJ", "#NN"]),
            (1.5, &["#PRP"]),
            (1.5, &["#NNP"]),
            (0.5, &["#NNP", "#NNP"]),
            (1.0, &["#NNS"]),
            (0.7, &["#CD", "#NNS"]),
            (0.8, &["#DT", "#NN", "#NN"]),
            (0.4, &["QP"]),
            (0.3, &["#CD", "#NN_PCT"]),
            (0.5, &["#NN"]),
        ],
    ),
    ("QP", &[(1.0, &["#$", "#CD"])]),
    ("NP_PP", &[(1.0, &["NP_S", "PP"])]),
    ("NP_REL", &[(1.0, &["NP_S", "SBAR_REL"])]),
    ("NP_APP", &[(1.0, &["NP_S", "#COMMA", "NP_S", "#COMMA"])]),
    ("NP_PRN", &[(1.0, &["NP_S", "PRN"])]),
    ("PRN", &[(1.0, &["#LRB", "NP_S", "#RRB"])]),
    ("NP_CC", &[(1.0, &["NP_S", "#CC", "NP_S"])]),
    ("PP", &[(1.0, &["#IN_P", "NP_S"])]),
    (
        "VP",
        &[
            (3.0, &["#VBD_T", "NP_S"]),
            (1.5, &["#VBD_I"]),
            (1.5, &["#VBD_I", "PP"]),
            (1.0, &["#VBD_I", "ADVP_1"]),
            (1.2, &["#VBD_S", "SBAR_C"]),
            (1.0, &["#MD", "VP_B"]),
            (1.5, &["#VBD_L", "@PRED"]),
            (0.5, &["#VBD_T", "NP_S", "ADVP_1"]),
            (0.8, &["#VBD_BE", "VP_G"]),
        ],
    ),
    ("VP_G", &[(2.0, &["#VBG"]), (1.0, &["#VBG", "NP_S"])]),
    (
        "@PRED",
        &[(1.0, &["ADJP_PRED"]), (1.0, &["NP_PRED"]), (0.6, &["ADVP_PRED"])],
    ),
    ("ADJP_PRED", &[(1.0, &["#JJ_O"])]),
    ("NP_PRED", &[(1.0, &["#NN_O"])]),
    ("ADVP_PRED", &[(1.0, &["#RB_O"])]),
    ("ADVP_1", &[(1.0, &["#RB"])]),
    (
        "VP_B",
        &[(2.0, &["#VB", "NP_S"]), (1.0, &["#VB"]), (1.0, &["#VB", "PP"])],
    ),
    ("VP_HI", &[(1.0, &["#VBD_T", "NP_S", "PP"])]),
    ("VP_LO", &[(1.0, &["#VBD_T", "NP_AT"])]),
    ("NP_AT", &[(1.0, &["NP_S", "PP"])]),
    ("ADVP_HI", &[(1.0, &["#RB_HI"])]),
    ("ADVP_LO", &[(1.0, &["#RB_LO"])]),
    ("SBAR_C", &[(1.0, &["#IN_C", "S_E"])]),
    ("S_E", &[(1.0, &["@SUBJ", "VP"])]),
    ("SBAR_REL", &[(1.0, &["WHNP", "S_R"])]),
    ("WHNP", &[(1.0, &["#WDT"])]),
    ("S_R", &[(1.0, &["VP_R"])]),
    (
        "VP_R",
        &[(2.0, &["#VBD_T", "NP_S"]), (1.0, &["#VBD_I"]), (0.5, &["#VBD_I", "ADVP_1"])],
    ),
    ("SBAR_ADV", &[(1.0, &["#IN_S", "S_A"])]),
    ("S_A", &[(1.0, &["NP_S", "VP_A"])]),
    ("VP_A", &[(1.0, &["#VBD_I"]), (1.0, &["#VBD_T", "NP_S"])]),
];

/// Closed word lists, the probability of drawing an open-class word instead,
/// and the part-of-speech tag.
struct WordClass {
    name: &'static str,
    tag: &'static str,
    closed: &'static [&'static str],
    open: f64,
}

const CLASSES: &[WordClass] = &[
    WordClass { name: "DT", tag: "DT", closed: &["the", "a", "this", "every", "some", "no"], open: 0.0 },
    WordClass {
        name: "NN",
        tag: "NN",
        closed: &["dog", "cat", "man", "park", "house", "book", "plan", "car", "river", "garden"],
        open: 0.4,
    },
    WordClass { name: "NN_O", tag: "NN", closed: &["idea", "report"], open: 0.85 },
    WordClass { name: "NN_PCT", tag: "NN", closed: &["%"], open: 0.0 },
    WordClass { name: "NNS", tag: "NNS", closed: &["dogs", "cats", "men", "books", "plans", "cars"], open: 0.4 },
    WordClass {
        name: "NNP",
        tag: "NNP",
        closed: &["Alice", "Bob", "Carol", "Dave", "IBM", "NASA", "Paris"],
        open: 0.35,
    },
    WordClass { name: "PRP", tag: "PRP", closed: &["she", "he", "they", "it", "we"], open: 0.0 },
    WordClass { name: "CD", tag: "CD", closed: &[], open: 1.0 },
    WordClass { name: "$", tag: "$", closed: &["$"], open: 0.0 },
    WordClass {
        name: "VBD_T",
        tag: "VBD",
        closed: &["saw", "found", "liked", "took", "chased", "met"],
        open: 0.3,
    },
    WordClass { name: "VBD_I", tag: "VBD", closed: &["slept", "left", "arrived", "laughed", "waited"], open: 0.3 },
    WordClass { name: "VBD_S", tag: "VBD", closed: &["said", "thought", "claimed", "knew"], open: 0.0 },
    WordClass { name: "VBD_L", tag: "VBD", closed: &["seemed", "became", "remained", "looked"], open: 0.0 },
    WordClass { name: "VBD_BE", tag: "VBD", closed: &["was", "were"], open: 0.0 },
    WordClass { name: "VBG", tag: "VBG", closed: &["running", "sleeping", "waiting"], open: 0.5 },
    WordClass { name: "VB", tag: "VB", closed: &["see", "find", "leave", "take", "meet"], open: 0.0 },
    WordClass { name: "MD", tag: "MD", closed: &["will", "could", "might"], open: 0.0 },
    WordClass { name: "IN_P", tag: "IN", closed: &["in", "on", "with", "near", "under", "behind"], open: 0.0 },
    WordClass { name: "IN_C", tag: "IN", closed: &["that"], open: 0.0 },
    WordClass { name: "IN_S", tag: "IN", closed: &["because", "although", "while"], open: 0.0 },
    WordClass { name: "WDT", tag: "WDT", closed: &["which", "who"], open: 0.0 },
    WordClass {
        name: "JJ",
        tag: "JJ",
        closed: &["big", "small", "red", "old", "happy", "well-known", "long-term"],
        open: 0.3,
    },
    WordClass { name: "JJ_O", tag: "JJ", closed: &["big", "happy"], open: 0.85 },
    WordClass { name: "RB", tag: "RB", closed: &["quickly", "slowly", "often"], open: 0.4 },
    WordClass { name: "RB_O", tag: "RB", closed: &["quickly", "often"], open: 0.85 },
    WordClass { name: "RB_HI", tag: "RB", closed: &["so"], open: 0.0 },
    WordClass { name: "RB_LO", tag: "RB", closed: &["thus"], open: 0.0 },
    WordClass { name: "CC", tag: "CC", closed: &["and", "or", "but"], open: 0.0 },
    WordClass { name: "COMMA", tag: ",", closed: &[","], open: 0.0 },
    WordClass { name: "COLON", tag: ":", closed: &[":", ";", "--", "..."], open: 0.0 },
    WordClass { name: "LRB", tag: "-LRB-", closed: &["("], open: 0.0 },
    WordClass { name: "RRB", tag: "-RRB-", closed: &[")"], open: 0.0 },
];

const CONSONANTS: &[u8] = b"bcdfghjklmnpqrstvwxz";
const VOWELS: &[u8] = b"aeiou";
const STEMS: usize = 600;
const MAX_DEPTH: usize = 14;

/// Sentence lengths outside this range are resampled.
pub const MIN_LENGTH: usize = 3;
pub const MAX_LENGTH: usize = 40;

/// The shipped grammar with an open-class lexicon fixed by a seed.
#[derive(Clone, Debug)]
pub struct SyntheticGrammar {
    stems: Vec<String>,
    stem_weights: Vec<f64>,
}

impl SyntheticGrammar {
    pub fn new(grammar_seed: u64) -> Self {
        let mut rng = Rng::new(grammar_seed).derive(0x6772_616d);
        let mut stems = Vec::with_capacity(STEMS);
        let mut seen = std::collections::HashSet::new();
        while stems.len() < STEMS {
            let syllables = 1 + rng.below(2);
            let mut s = String::new();
            for _ in 0..syllables {
                s.push(CONSONANTS[rng.below(CONSONANTS.len())] as char);
                s.push(VOWELS[rng.below(VOWELS.len())] as char);
            }
            s.push(CONSONANTS[rng.below(CONSONANTS.len())] as char);
            if seen.insert(s.clone()) {
                stems.push(s);
            }
        }
        let stem_weights = (0..STEMS).map(|r| 1.0 / (r as f64 + 2.0)).collect();
        SyntheticGrammar { stems, stem_weights }
    }

    /// Draws `count` sentences with lengths in `MIN_LENGTH..=MAX_LENGTH`.
    pub fn generate(&self, count: usize, rng: &mut Rng) -> Vec<TreebankEntry> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let Some(mut raws) = self.expand("S_TOP", rng, 0) else { continue };
            let raw = raws.pop().expect("S_TOP is a node");
            let entry = normalize(raw, 1).expect("grammar produces well-formed trees");
            if (MIN_LENGTH..=MAX_LENGTH).contains(&entry.words.len()) {
                out.push(entry);
            }
        }
        out
    }

    fn expand(&self, symbol: &str, rng: &mut Rng, depth: usize) -> Option<Vec<Raw>> {
        if depth > MAX_DEPTH {
            return None;
        }
        if let Some(class) = symbol.strip_prefix('#') {
            let (tag, word) = self.word(class, rng);
            return Some(vec![Raw::Node {
                label: tag.to_string(),
                children: vec![Raw::Word(word)],
            }]);
        }
        let alts = RULES
            .iter()
            .find(|(lhs, _)| *lhs == symbol)
            .unwrap_or_else(|| panic!("no rule for {symbol}"))
            .1;
        let weights: Vec<f64> = alts.iter().map(|a| a.0).collect();
        let rhs = alts[rng.weighted(&weights)].1;
        let mut children = Vec::new();
        for s in rhs {
            children.extend(self.expand(s, rng, depth + 1)?);
        }
        if symbol.starts_with('@') {
            return Some(children);
        }
        let label = symbol.split('_').next().expect("nonempty symbol").to_string();
        Some(vec![Raw::Node { label, children }])
    }

    fn stem(&self, rng: &mut Rng) -> &str {
        &self.stems[rng.weighted(&self.stem_weights)]
    }

    fn word(&self, class: &str, rng: &mut Rng) -> (&'static str, String) {
        match class {
            "END" => {
                let w = [".", "?", "!"][rng.weighted(&[0.85, 0.08, 0.07])];
                return (".", w.to_string());
            }
            "CD" => return ("CD", number(rng)),
            _ => {}
        }
        let c = CLASSES
            .iter()
            .find(|c| c.name == class)
            .unwrap_or_else(|| panic!("no word class {class}"));
        if c.closed.is_empty() || rng.bernoulli(c.open) {
            (c.tag, self.open_word(c.tag, rng))
        } else {
            (c.tag, c.closed[rng.below(c.closed.len())].to_string())
        }
    }

    fn open_word(&self, tag: &str, rng: &mut Rng) -> String {
        let pick = |rng: &mut Rng, options: &[&str]| options[rng.below(options.len())].to_string();
        match tag {
            "NN" => format!("{}{}", self.stem(rng), pick(rng, &["ion", "ity", "ment", "er"])),
            "NNS" => format!("{}{}", self.stem(rng), pick(rng, &["ions", "ities", "ments", "ers"])),
            "VBD" => format!("{}ed", self.stem(rng)),
            "VBG" => format!("{}ing", self.stem(rng)),
            "JJ" => {
                let suffix = pick(rng, &["al", "ble", "ous", "est"]);
                if rng.bernoulli(0.2) {
                    format!("{}-{}{}", self.stem(rng), self.stem(rng), suffix)
                } else {
                    format!("{}{}", self.stem(rng), suffix)
                }
            }
            "RB" => format!("{}ly", self.stem(rng)),
            "NNP" => {
                if rng.bernoulli(0.3) {
                    let len = 2 + rng.below(3);
                    (0..len).map(|_| (b'A' + rng.below(26) as u8) as char).collect()
                } else {
                    let s = self.stem(rng);
                    let mut cs = s.chars();
                    let first = cs.next().expect("nonempty stem").to_ascii_uppercase();
                    std::iter::once(first).chain(cs).collect()
                }
            }
            other => panic!("no open class for tag {other}"),
        }
    }
}

fn number(rng: &mut Rng) -> String {
    match rng.weighted(&[3.0, 1.0, 1.0, 1.0, 0.4]) {
        0 => (1 + rng.below(99)).to_string(),
        1 => format!("{}.{}", rng.below(10), 1 + rng.below(99)),
        2 => format!("{},{:03}", 1 + rng.below(99), rng.below(1000)),
        3 => (1900 + rng.below(120)).to_string(),
        _ => {
            let y = 1900 + rng.below(119);
            format!("{y}-{:02}", (y + 1) % 100)
        }
    }
}

/// `count` sentences from the grammar fixed by `grammar_seed`.
pub fn generate_synthetic(grammar_seed: u64, count: usize, rng: &mut Rng) -> Vec<TreebankEntry> {
    SyntheticGrammar::new(grammar_seed).generate(count, rng)
}
