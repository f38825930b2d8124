use super::{Child, ParseTree, CHAIN_SEPARATOR};
use crate::error::{Error, Result};

/// One sentence of a treebank: the normalized tree, its words and the
/// part-of-speech tags that were stripped from the preterminal level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreebankEntry {
    pub tree: ParseTree,
    pub words: Vec<String>,
    pub tags: Vec<String>,
}

const ESCAPES: [(&str, &str); 6] = [
    ("-LRB-", "("),
    ("-RRB-", ")"),
    ("-LCB-", "{"),
    ("-RCB-", "}"),
    ("-LSB-", "["),
    ("-RSB-", "]"),
];

pub fn unescape_word(token: &str) -> String {
    ESCAPES
        .iter()
        .find(|(esc, _)| *esc == token)
        .map_or_else(|| token.to_string(), |(_, lit)| lit.to_string())
}

pub fn escape_word(word: &str) -> String {
    ESCAPES
        .iter()
        .find(|(_, lit)| *lit == word)
        .map_or_else(|| word.to_string(), |(esc, _)| esc.to_string())
}

#[derive(Debug, PartialEq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn tokenize(text: &str) -> Vec<(Token, usize)> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut atom = String::new();
        let flush = |atom: &mut String, out: &mut Vec<(Token, usize)>| {
            if !atom.is_empty() {
                out.push((Token::Atom(std::mem::take(atom)), lineno + 1));
            }
        };
        for ch in line.chars() {
            match ch {
                '(' => {
                    flush(&mut atom, &mut out);
                    out.push((Token::Open, lineno + 1));
                }
                ')' => {
                    flush(&mut atom, &mut out);
                    out.push((Token::Close, lineno + 1));
                }
                c if c.is_whitespace() => flush(&mut atom, &mut out),
                c => atom.push(c),
            }
        }
        flush(&mut atom, &mut out);
    }
    out
}

/// A bracketed expression before normalization.
#[derive(Clone, Debug)]
pub(crate) enum Raw {
    Node { label: String, children: Vec<Raw> },
    Word(String),
}

struct Reader {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Reader {
    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map_or(1, |t| t.1)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line(),
            message: message.into(),
        }
    }

    fn node(&mut self) -> Result<Raw> {
        // caller has consumed the opening bracket
        let label = match self.tokens.get(self.pos) {
            Some((Token::Atom(a), _)) => {
                self.pos += 1;
                a.clone()
            }
            Some(_) => String::new(),
            None => return Err(self.err("unbalanced brackets: input ends inside a tree")),
        };
        let mut children = Vec::new();
        loop {
            match self.tokens.get(self.pos) {
                None => return Err(self.err("unbalanced brackets: input ends inside a tree")),
                Some((Token::Close, _)) => {
                    self.pos += 1;
                    break;
                }
                Some((Token::Open, _)) => {
                    self.pos += 1;
                    children.push(self.node()?);
                }
                Some((Token::Atom(a), _)) => {
                    children.push(Raw::Word(a.clone()));
                    self.pos += 1;
                }
            }
        }
        if children.is_empty() {
            return Err(self.err(format!("empty tree node {label:?}")));
        }
        Ok(Raw::Node { label, children })
    }
}

fn parse_raw(text: &str) -> Result<Vec<(Raw, usize)>> {
    let mut reader = Reader {
        tokens: tokenize(text),
        pos: 0,
    };
    let mut out = Vec::new();
    while reader.pos < reader.tokens.len() {
        let line = reader.line();
        match &reader.tokens[reader.pos].0 {
            Token::Open => {
                reader.pos += 1;
                out.push((reader.node()?, line));
            }
            Token::Close => return Err(reader.err("unbalanced brackets: unexpected ')'")),
            Token::Atom(a) => return Err(reader.err(format!("text outside a tree: {a:?}"))),
        }
    }
    Ok(out)
}

fn strip_function_tags(label: &str) -> &str {
    if label.starts_with('-') {
        return label;
    }
    label.split(['-', '=']).next().unwrap_or(label)
}

/// Removes traces and nodes left empty by their removal.
fn drop_empty_elements(raw: Raw) -> Option<Raw> {
    match raw {
        Raw::Word(w) => Some(Raw::Word(w)),
        Raw::Node { label, children } => {
            if label == "-NONE-" {
                return None;
            }
            let children: Vec<Raw> = children.into_iter().filter_map(drop_empty_elements).collect();
            if children.is_empty() {
                None
            } else {
                Some(Raw::Node { label, children })
            }
        }
    }
}

fn is_preterminal(children: &[Raw]) -> bool {
    matches!(children, [Raw::Word(_)])
}

struct Builder {
    words: Vec<String>,
    tags: Vec<String>,
}

impl Builder {
    fn child(&mut self, raw: Raw, line: usize) -> Result<Child> {
        match raw {
            Raw::Word(w) => Err(Error::Parse {
                line,
                message: format!("word {w:?} is not under a preterminal"),
            }),
            Raw::Node { label, mut children } => {
                if is_preterminal(&children) {
                    let Some(Raw::Word(w)) = children.pop() else { unreachable!() };
                    self.words.push(unescape_word(&w));
                    self.tags.push(label);
                    return Ok(Child::Word(self.words.len() - 1));
                }
                let label = strip_function_tags(&label);
                if label.is_empty() {
                    return Err(Error::Parse {
                        line,
                        message: "unlabeled interior node".into(),
                    });
                }
                if label.contains(CHAIN_SEPARATOR) {
                    return Err(Error::Parse {
                        line,
                        message: format!("label {label:?} contains reserved '{CHAIN_SEPARATOR}'"),
                    });
                }
                let label = label.to_string();
                let kids = children
                    .into_iter()
                    .map(|c| self.child(c, line))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Child::Tree(ParseTree::node(&label, kids)))
            }
        }
    }
}

pub(crate) fn normalize(raw: Raw, line: usize) -> Result<TreebankEntry> {
    let mut raw = drop_empty_elements(raw).ok_or(Error::Parse {
        line,
        message: "tree contains only empty elements".into(),
    })?;
    // unwrap "( (S ...) )" style root wrappers
    loop {
        match raw {
            Raw::Node { ref label, ref mut children } if label.is_empty() => {
                if children.len() != 1 {
                    return Err(Error::Parse {
                        line,
                        message: "unlabeled root with several children".into(),
                    });
                }
                raw = children.pop().expect("one child");
            }
            _ => break,
        }
    }
    if let Raw::Node { children, .. } = &raw {
        if is_preterminal(children) {
            return Err(Error::Parse {
                line,
                message: "tree has no phrasal nodes".into(),
            });
        }
    }
    let mut b = Builder {
        words: Vec::new(),
        tags: Vec::new(),
    };
    let tree = match b.child(raw, line)? {
        Child::Tree(t) => t,
        Child::Word(_) => unreachable!("preterminal root rejected above"),
    };
    Ok(TreebankEntry {
        tree,
        words: b.words,
        tags: b.tags,
    })
}

/// Reads every bracketed tree in `text` and normalizes it: function tags
/// and `-NONE-` elements are removed, preterminals become the tag sequence,
/// and unary chains are collapsed.
pub fn read_bracketed(text: &str) -> Result<Vec<TreebankEntry>> {
    parse_raw(text)?
        .into_iter()
        .map(|(raw, line)| normalize(raw, line))
        .collect()
}

/// One whitespace-separated tag sequence per nonblank line.
pub fn read_tag_file(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect()
}

/// Serializes a tree on one line, expanding chain labels into nested nodes.
/// Words without a tag are written under the placeholder tag `XX`.
pub fn write_tree(tree: &ParseTree, words: &[String], tags: Option<&[String]>) -> String {
    let mut out = String::new();
    write_node(tree, words, tags, &mut out);
    out
}

fn write_node(tree: &ParseTree, words: &[String], tags: Option<&[String]>, out: &mut String) {
    let parts: Vec<&str> = tree.label.split(CHAIN_SEPARATOR).collect();
    for p in &parts {
        out.push('(');
        out.push_str(p);
        out.push(' ');
    }
    for (n, c) in tree.children.iter().enumerate() {
        if n > 0 {
            out.push(' ');
        }
        match c {
            Child::Word(i) => {
                let tag = tags.and_then(|t| t.get(*i)).map_or("XX", String::as_str);
                let word = words.get(*i).map_or("<?>", String::as_str);
                out.push('(');
                out.push_str(tag);
                out.push(' ');
                out.push_str(&escape_word(word));
                out.push(')');
            }
            Child::Tree(t) => write_node(t, words, tags, out),
        }
    }
    for _ in &parts {
        out.push(')');
    }
}
