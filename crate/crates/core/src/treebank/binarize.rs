use super::{Child, LabeledSpan, ParseTree};

/// A binary tree whose nodes may carry the empty label (`None`). Leaves span
/// exactly one word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryTree {
    pub start: usize,
    pub end: usize,
    pub label: Option<String>,
    pub children: Option<Box<(BinaryTree, BinaryTree)>>,
}

impl BinaryTree {
    pub fn leaf(index: usize, label: Option<String>) -> Self {
        BinaryTree {
            start: index,
            end: index + 1,
            label,
            children: None,
        }
    }

    pub fn join(label: Option<String>, left: BinaryTree, right: BinaryTree) -> Self {
        debug_assert_eq!(left.end, right.start);
        BinaryTree {
            start: left.start,
            end: right.end,
            label,
            children: Some(Box::new((left, right))),
        }
    }

    /// Every node's span, empty-labeled ones included, preorder.
    pub fn spans(&self) -> Vec<LabeledSpan> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<LabeledSpan>) {
        out.push(LabeledSpan {
            start: self.start,
            end: self.end,
            label: self.label.clone(),
        });
        if let Some(kids) = &self.children {
            kids.0.collect(out);
            kids.1.collect(out);
        }
    }

    /// Removes empty-labeled nodes, splicing their children into the nearest
    /// labeled ancestor. Returns `None` when the root itself is empty.
    pub fn debinarize(&self) -> Option<ParseTree> {
        let label = self.label.as_deref()?;
        let mut children = Vec::new();
        match &self.children {
            None => children.push(Child::Word(self.start)),
            Some(kids) => {
                kids.0.splice_into(&mut children);
                kids.1.splice_into(&mut children);
            }
        }
        Some(ParseTree::node(label, children))
    }

    fn splice_into(&self, out: &mut Vec<Child>) {
        if self.label.is_some() {
            out.push(Child::Tree(self.debinarize().expect("labeled")));
            return;
        }
        match &self.children {
            None => out.push(Child::Word(self.start)),
            Some(kids) => {
                kids.0.splice_into(out);
                kids.1.splice_into(out);
            }
        }
    }
}

/// Left-branching binarization: the children `c1 .. cm` of an n-ary node
/// become `(((c1 c2) c3) .. cm)` with empty-labeled intermediate nodes, and
/// words directly under a phrase become empty-labeled leaves.
pub fn binarize_with_empty(tree: &ParseTree) -> BinaryTree {
    let label = Some(tree.label.clone());
    if tree.len() == 1 {
        return BinaryTree::leaf(tree.start, label);
    }
    let mut units: Vec<BinaryTree> = tree
        .children
        .iter()
        .map(|c| match c {
            Child::Word(i) => BinaryTree::leaf(*i, None),
            Child::Tree(t) => binarize_with_empty(t),
        })
        .collect();
    debug_assert!(units.len() >= 2, "uncollapsed unary node {}", tree.label);
    let last = units.pop().expect("at least two children");
    let mut iter = units.into_iter();
    let mut acc = iter.next().expect("at least two children");
    for u in iter {
        acc = BinaryTree::join(None, acc, u);
    }
    BinaryTree::join(label, acc, last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::read_bracketed;

    fn tree(text: &str) -> ParseTree {
        read_bracketed(text).unwrap().remove(0).tree
    }

    #[test]
    fn binary_tree_is_fixed_point() {
        let t = tree("(S (NP (PRP She)) (VP (VBD slept)))");
        let b = binarize_with_empty(&t);
        let labeled: Vec<_> = b.spans().into_iter().filter(|s| !s.is_empty_label()).collect();
        assert_eq!(labeled, t.spans());
        assert_eq!(b.spans().len(), 3);
    }

    #[test]
    fn ternary_gets_left_dummy() {
        let t = tree("(S (NP (A a)) (VP (B b)) (C c))");
        let b = binarize_with_empty(&t);
        assert!(b.spans().contains(&LabeledSpan::empty(0, 2)));
        assert!(b.spans().contains(&LabeledSpan::empty(2, 3)));
        assert_eq!(b.debinarize().unwrap(), t);
    }

    #[test]
    fn chain_leaf_survives() {
        let t = tree("(S (NP (NNP X)))");
        let b = binarize_with_empty(&t);
        assert_eq!(b, BinaryTree::leaf(0, Some("S+NP".into())));
        assert_eq!(b.debinarize().unwrap(), t);
    }

    #[test]
    fn empty_root_has_no_tree() {
        let b = BinaryTree::join(None, BinaryTree::leaf(0, None), BinaryTree::leaf(1, None));
        assert!(b.debinarize().is_none());
    }
}
