//! Phrase-structure trees in the parser's label space.
//!
//! Trees carry phrasal nodes only: part-of-speech preterminals are stripped
//! into a separate tag sequence, and unary chains are collapsed into a single
//! node whose label joins the chain with `+` (outermost first).

mod binarize;
mod io;
mod metrics;
pub mod synthetic;
mod vocab;

pub use binarize::{binarize_with_empty, BinaryTree};
pub use io::{escape_word, read_bracketed, read_tag_file, unescape_word, write_tree, TreebankEntry};
pub use metrics::{bracket_f1, check_valid_bracketing, hamming_delta, BracketScore};
pub use vocab::{LabelId, LabelInventory, Vocabulary, EMPTY};

use std::fmt;

/// Separator between the components of a collapsed unary chain.
pub const CHAIN_SEPARATOR: char = '+';

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Child {
    Word(usize),
    Tree(ParseTree),
}

/// An n-ary labeled tree over fenceposts `start..end`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ParseTree {
    pub label: String,
    pub start: usize,
    pub end: usize,
    pub children: Vec<Child>,
}

/// A labeled span `(start, end)`; `label == None` is the empty label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub label: Option<String>,
}

impl LabeledSpan {
    pub fn new(start: usize, end: usize, label: &str) -> Self {
        LabeledSpan {
            start,
            end,
            label: Some(label.to_string()),
        }
    }

    pub fn empty(start: usize, end: usize) -> Self {
        LabeledSpan {
            start,
            end,
            label: None,
        }
    }

    pub fn is_empty_label(&self) -> bool {
        self.label.is_none()
    }
}

impl fmt::Display for LabeledSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.start, self.end, self.label.as_deref().unwrap_or("∅"))
    }
}

impl ParseTree {
    /// A phrase directly over one word.
    pub fn leaf(label: &str, index: usize) -> Self {
        ParseTree {
            label: label.to_string(),
            start: index,
            end: index + 1,
            children: vec![Child::Word(index)],
        }
    }

    /// Builds a node from its children, computing the span and collapsing a
    /// lone tree child into a chain label.
    pub fn node(label: &str, children: Vec<Child>) -> Self {
        assert!(!children.is_empty(), "tree node without children");
        if let [Child::Tree(only)] = children.as_slice() {
            return ParseTree {
                label: format!("{}{}{}", label, CHAIN_SEPARATOR, only.label),
                start: only.start,
                end: only.end,
                children: only.children.clone(),
            };
        }
        let start = match &children[0] {
            Child::Word(i) => *i,
            Child::Tree(t) => t.start,
        };
        let end = match children.last().expect("nonempty") {
            Child::Word(i) => i + 1,
            Child::Tree(t) => t.end,
        };
        ParseTree {
            label: label.to_string(),
            start,
            end,
            children,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// One labeled span per node, preorder.
    pub fn spans(&self) -> Vec<LabeledSpan> {
        let mut out = Vec::new();
        self.collect_spans(&mut out);
        out
    }

    fn collect_spans(&self, out: &mut Vec<LabeledSpan>) {
        out.push(LabeledSpan::new(self.start, self.end, &self.label));
        for c in &self.children {
            if let Child::Tree(t) = c {
                t.collect_spans(out);
            }
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|c| match c {
                Child::Tree(t) => t.node_count(),
                Child::Word(_) => 0,
            })
            .sum::<usize>()
    }

    /// Pairs of (child span, parent label) for every node; the root's parent
    /// is `None`.
    pub fn parent_pairs(&self) -> Vec<(LabeledSpan, Option<String>)> {
        let mut out = vec![(LabeledSpan::new(self.start, self.end, &self.label), None)];
        self.collect_parents(&mut out);
        out
    }

    fn collect_parents(&self, out: &mut Vec<(LabeledSpan, Option<String>)>) {
        for c in &self.children {
            if let Child::Tree(t) = c {
                out.push((LabeledSpan::new(t.start, t.end, &t.label), Some(self.label.clone())));
                t.collect_parents(out);
            }
        }
    }

    /// Checks the structural invariants: contiguous ordered children, no
    /// unary chains left uncollapsed, and words `0..n` covered exactly once.
    pub fn validate(&self) -> Result<(), String> {
        if self.start != 0 {
            return Err(format!("root starts at {}", self.start));
        }
        let mut next = 0;
        self.validate_node(&mut next)?;
        if next != self.end {
            return Err(format!("words cover 0..{}, root ends at {}", next, self.end));
        }
        Ok(())
    }

    fn validate_node(&self, next: &mut usize) -> Result<(), String> {
        if self.children.is_empty() {
            return Err(format!("node {} has no children", self.label));
        }
        if self.label.is_empty() || self.label.split(CHAIN_SEPARATOR).any(str::is_empty) {
            return Err(format!("bad label {:?}", self.label));
        }
        if let [Child::Tree(_)] = self.children.as_slice() {
            return Err(format!("uncollapsed unary chain under {}", self.label));
        }
        if *next != self.start {
            return Err(format!("node {} starts at {} but expected {}", self.label, self.start, next));
        }
        for c in &self.children {
            match c {
                Child::Word(i) => {
                    if *i != *next {
                        return Err(format!("word {} out of order (expected {})", i, next));
                    }
                    *next += 1;
                }
                Child::Tree(t) => t.validate_node(next)?,
            }
        }
        if *next != self.end {
            return Err(format!("node {} ends at {} but children end at {}", self.label, self.end, next));
        }
        Ok(())
    }
}
