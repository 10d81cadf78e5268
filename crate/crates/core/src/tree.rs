//! Constituency trees, sentences and their PTB-style bracketed form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Label given to every internal node of an unlabeled tree.
pub const UNLABELED: &str = "_X";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("malformed tree at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("node {label} is not binary ({arity} children)")]
    NotBinary { label: String, arity: usize },
}

/// A whitespace-free token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sentence(Vec<String>);

impl Sentence {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Sentence(tokens.into_iter().map(Into::into).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn reversed(&self) -> Sentence {
        Sentence(self.0.iter().rev().cloned().collect())
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

impl FromStr for Sentence {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Sentence::new(s.split_whitespace()))
    }
}

impl From<Vec<String>> for Sentence {
    fn from(tokens: Vec<String>) -> Self {
        Sentence(tokens)
    }
}

/// A constituency tree whose leaves are terminals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParseTree {
    Leaf(String),
    Node { label: String, children: Vec<ParseTree> },
}

impl ParseTree {
    pub fn leaf(token: impl Into<String>) -> Self {
        ParseTree::Leaf(token.into())
    }

    pub fn node(label: impl Into<String>, children: Vec<ParseTree>) -> Self {
        debug_assert!(!children.is_empty());
        ParseTree::Node { label: label.into(), children }
    }

    /// Unlabeled binary node.
    pub fn join(left: ParseTree, right: ParseTree) -> Self {
        ParseTree::node(UNLABELED, vec![left, right])
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ParseTree::Leaf(_))
    }

    pub fn label(&self) -> &str {
        match self {
            ParseTree::Leaf(t) => t,
            ParseTree::Node { label, .. } => label,
        }
    }

    pub fn children(&self) -> &[ParseTree] {
        match self {
            ParseTree::Leaf(_) => &[],
            ParseTree::Node { children, .. } => children,
        }
    }

    /// The left-to-right leaf sequence.
    pub fn yield_of(&self) -> Sentence {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        Sentence(out)
    }

    fn collect_leaves(&self, out: &mut Vec<String>) {
        match self {
            ParseTree::Leaf(t) => out.push(t.clone()),
            ParseTree::Node { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            ParseTree::Leaf(_) => 1,
            ParseTree::Node { children, .. } => children.iter().map(ParseTree::num_leaves).sum(),
        }
    }

    pub fn num_internal(&self) -> usize {
        match self {
            ParseTree::Leaf(_) => 0,
            ParseTree::Node { children, .. } => {
                1 + children.iter().map(ParseTree::num_internal).sum::<usize>()
            }
        }
    }

    /// Bracketing shape: labels replaced by `_X`, unary chains collapsed.
    ///
    /// CNF preterminals vanish, so a CKY tree and a distance-induced tree over
    /// the same bracketing compare equal.
    pub fn unlabeled(&self) -> ParseTree {
        match self {
            ParseTree::Leaf(t) => ParseTree::Leaf(t.clone()),
            ParseTree::Node { children, .. } if children.len() == 1 => children[0].unlabeled(),
            ParseTree::Node { children, .. } => {
                ParseTree::node(UNLABELED, children.iter().map(ParseTree::unlabeled).collect())
            }
        }
    }

    pub fn same_shape(&self, other: &ParseTree) -> bool {
        self.unlabeled() == other.unlabeled()
    }

    /// Left-right mirror image: children reversed at every node.
    pub fn mirrored(&self) -> ParseTree {
        match self {
            ParseTree::Leaf(t) => ParseTree::Leaf(t.clone()),
            ParseTree::Node { label, children } => ParseTree::Node {
                label: label.clone(),
                children: children.iter().rev().map(ParseTree::mirrored).collect(),
            },
        }
    }

    /// Checks that the unlabeled shape is a full binary tree.
    pub fn check_binary(&self) -> Result<(), TreeError> {
        fn walk(t: &ParseTree) -> Result<(), TreeError> {
            match t {
                ParseTree::Leaf(_) => Ok(()),
                ParseTree::Node { label, children } => {
                    if children.len() != 2 {
                        return Err(TreeError::NotBinary { label: label.clone(), arity: children.len() });
                    }
                    children.iter().try_for_each(walk)
                }
            }
        }
        walk(&self.unlabeled())
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseTree::Leaf(t) => f.write_str(t),
            ParseTree::Node { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for ParseTree {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parser = SexprParser { src: s, pos: 0 };
        let tree = parser.tree()?;
        parser.skip_ws();
        if parser.pos != s.len() {
            return Err(parser.error("trailing input"));
        }
        Ok(tree)
    }
}

impl Serialize for ParseTree {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParseTree {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

struct SexprParser<'a> {
    src: &'a str,
    pos: usize,
}

impl SexprParser<'_> {
    fn error(&self, msg: &str) -> TreeError {
        TreeError::Syntax { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn atom(&mut self) -> Result<String, TreeError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let end = rest
            .find(|c: char| c.is_whitespace() || c == '(' || c == ')')
            .unwrap_or(rest.len());
        if end == 0 {
            return Err(self.error("expected a label or token"));
        }
        self.pos += end;
        Ok(rest[..end].to_string())
    }

    fn tree(&mut self) -> Result<ParseTree, TreeError> {
        self.skip_ws();
        if !self.src[self.pos..].starts_with('(') {
            return self.atom().map(ParseTree::Leaf);
        }
        self.pos += 1;
        let label = self.atom()?;
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.src[self.pos..].chars().next() {
                None => return Err(self.error("unclosed bracket")),
                Some(')') => {
                    self.pos += 1;
                    break;
                }
                Some(_) => children.push(self.tree()?),
            }
        }
        if children.is_empty() {
            return Err(self.error("node without children"));
        }
        Ok(ParseTree::Node { label, children })
    }
}
