use std::fmt;

use crate::error::{Error, Result};

/// A rooted ordered constituency tree.
///
/// Internal nodes carry constituent or tag labels; leaves carry tokens. A
/// preterminal is a node whose children are all leaves.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tree {
    Leaf(String),
    Node { label: String, children: Vec<Tree> },
}

impl Tree {
    pub fn node(label: impl Into<String>, children: Vec<Tree>) -> Self {
        Tree::Node {
            label: label.into(),
            children,
        }
    }

    pub fn leaf(token: impl Into<String>) -> Self {
        Tree::Leaf(token.into())
    }

    pub fn preterminal(label: impl Into<String>, token: &str) -> Self {
        Tree::node(label, vec![Tree::leaf(token)])
    }

    /// Node label; `None` for leaves.
    pub fn label(&self) -> Option<&str> {
        match self {
            Tree::Node { label, .. } => Some(label),
            Tree::Leaf(_) => None,
        }
    }

    pub fn children(&self) -> &[Tree] {
        match self {
            Tree::Node { children, .. } => children,
            Tree::Leaf(_) => &[],
        }
    }

    pub fn token(&self) -> Option<&str> {
        match self {
            Tree::Leaf(t) => Some(t),
            Tree::Node { .. } => None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Tree::Leaf(_))
    }

    pub fn is_preterminal(&self) -> bool {
        match self {
            Tree::Node { children, .. } => !children.is_empty() && children.iter().all(Tree::is_leaf),
            Tree::Leaf(_) => false,
        }
    }

    /// Leaf tokens in order.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |t| {
            if let Tree::Leaf(tok) = t {
                out.push(tok.as_str());
            }
        });
        out
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Tree::Leaf(_) => 1,
            Tree::Node { children, .. } => children.iter().map(Tree::leaf_count).sum(),
        }
    }

    /// Number of internal nodes, the root included.
    pub fn node_count(&self) -> usize {
        match self {
            Tree::Leaf(_) => 0,
            Tree::Node { children, .. } => 1 + children.iter().map(Tree::node_count).sum::<usize>(),
        }
    }

    /// `(label, token)` of every preterminal with a single leaf, in order.
    pub fn preterminals(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        self.walk(&mut |t| {
            if let Tree::Node { label, children } = t {
                if let [Tree::Leaf(tok)] = children.as_slice() {
                    out.push((label.as_str(), tok.as_str()));
                }
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Tree)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    /// Checks the well-formedness conditions: labels are non-empty and free
    /// of whitespace, internal nodes have children, and every leaf sits
    /// alone under a preterminal.
    pub fn check_well_formed(&self) -> Result<()> {
        match self {
            Tree::Leaf(tok) => Err(Error::MalformedTree(format!("bare leaf {tok:?} at root"))),
            Tree::Node { .. } => self.check_node(),
        }
    }

    fn check_node(&self) -> Result<()> {
        let Tree::Node { label, children } = self else {
            return Ok(());
        };
        if label.is_empty() || label.chars().any(char::is_whitespace) {
            return Err(Error::MalformedTree(format!("invalid label {label:?}")));
        }
        if children.is_empty() {
            return Err(Error::MalformedTree(format!("node {label} has no children")));
        }
        let leaf_children = children.iter().filter(|c| c.is_leaf()).count();
        if leaf_children > 0 && children.len() != 1 {
            return Err(Error::MalformedTree(format!(
                "node {label} mixes leaves with other children"
            )));
        }
        for c in children {
            match c {
                Tree::Leaf(tok) if tok.is_empty() || tok.chars().any(char::is_whitespace) => {
                    return Err(Error::MalformedTree(format!("invalid token {tok:?}")))
                }
                Tree::Leaf(_) => {}
                node => node.check_node()?,
            }
        }
        Ok(())
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::serialize_tree(self))
    }
}
