use std::borrow::Cow;

use super::Tree;
use crate::error::{Error, Result};

/// Deeper nesting is rejected so that the recursive tree algorithms stay
/// within the default thread stack.
const MAX_DEPTH: usize = 1024;

/// A non-fatal irregularity noticed while reading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub offset: usize,
    pub message: String,
}

/// Reads all top-level trees from `text`.
pub fn parse_bracketed(text: &str) -> Result<Vec<Tree>> {
    parse_bracketed_with_diagnostics(text).map(|(trees, _)| trees)
}

struct Frame {
    label: Option<String>,
    children: Vec<Tree>,
    offset: usize,
}

/// Like [`parse_bracketed`], also returning diagnostics for flat nodes
/// (leaves with siblings), which are accepted.
pub fn parse_bracketed_with_diagnostics(text: &str) -> Result<(Vec<Tree>, Vec<Diagnostic>)> {
    let mut trees = Vec::new();
    let mut diagnostics = Vec::new();
    let mut stack: Vec<Frame> = Vec::new();

    for (offset, token) in Tokens::new(text) {
        match token {
            Token::Open => {
                if let Some(top) = stack.last() {
                    if top.label.is_none() {
                        return Err(bracket_err(offset, "empty label"));
                    }
                }
                if stack.len() >= MAX_DEPTH {
                    return Err(bracket_err(offset, "nesting too deep"));
                }
                stack.push(Frame {
                    label: None,
                    children: Vec::new(),
                    offset,
                });
            }
            Token::Close => {
                let Some(frame) = stack.pop() else {
                    return Err(bracket_err(offset, "unbalanced parentheses: unexpected ')'"));
                };
                let Some(label) = frame.label else {
                    return Err(bracket_err(offset, "empty label"));
                };
                if frame.children.is_empty() {
                    return Err(bracket_err(frame.offset, format!("node {label} has no children")));
                }
                let leaves = frame.children.iter().filter(|c| c.is_leaf()).count();
                if leaves > 0 && frame.children.len() > 1 {
                    let message = if leaves == frame.children.len() {
                        format!("node {label} has {leaves} leaf children")
                    } else {
                        format!("leaf with siblings under non-preterminal {label}")
                    };
                    diagnostics.push(Diagnostic {
                        offset: frame.offset,
                        message,
                    });
                }
                let node = Tree::Node {
                    label,
                    children: frame.children,
                };
                match stack.last_mut() {
                    Some(parent) => parent.children.push(node),
                    None => trees.push(node),
                }
            }
            Token::Atom(atom) => match stack.last_mut() {
                None => return Err(bracket_err(offset, format!("token {atom:?} outside of a tree"))),
                Some(frame) if frame.label.is_none() => frame.label = Some(unescape(atom).into_owned()),
                Some(frame) => frame.children.push(Tree::Leaf(unescape(atom).into_owned())),
            },
        }
    }

    if !stack.is_empty() {
        return Err(bracket_err(
            text.len(),
            format!("unbalanced parentheses: {} unclosed", stack.len()),
        ));
    }
    Ok((trees, diagnostics))
}

/// Reads trees from raw bytes; invalid UTF-8 is reported at its offset.
pub fn parse_bracketed_bytes(bytes: &[u8]) -> Result<Vec<Tree>> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_bracketed(text),
        Err(e) => Err(bracket_err(e.valid_up_to(), "invalid UTF-8")),
    }
}

/// Single-line bracketed form of `tree`.
pub fn serialize_tree(tree: &Tree) -> String {
    let mut out = String::new();
    write_into(tree, &mut out);
    out
}

/// One tree per line, each line terminated by `\n`.
pub fn write_treebank(trees: &[Tree]) -> String {
    let mut out = String::new();
    for t in trees {
        write_into(t, &mut out);
        out.push('\n');
    }
    out
}

fn write_into(tree: &Tree, out: &mut String) {
    match tree {
        Tree::Leaf(tok) => out.push_str(&escape(tok)),
        Tree::Node { label, children } => {
            out.push('(');
            out.push_str(&escape(label));
            for c in children {
                out.push(' ');
                write_into(c, out);
            }
            out.push(')');
        }
    }
}

fn bracket_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Bracket {
        offset,
        message: message.into(),
    }
}

fn escape(s: &str) -> Cow<'_, str> {
    if s.contains(['(', ')']) {
        Cow::Owned(s.replace('(', "-LRB-").replace(')', "-RRB-"))
    } else {
        Cow::Borrowed(s)
    }
}

fn unescape(s: &str) -> Cow<'_, str> {
    if s.contains("-LRB-") || s.contains("-RRB-") {
        Cow::Owned(s.replace("-LRB-", "(").replace("-RRB-", ")"))
    } else {
        Cow::Borrowed(s)
    }
}

enum Token<'a> {
    Open,
    Close,
    Atom(&'a str),
}

struct Tokens<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Tokens { text, pos: 0 }
    }
}

impl<'a> Iterator for Tokens<'a> {
    type Item = (usize, Token<'a>);

    fn next(&mut self) -> Option<Self::Item> {
        let rest = &self.text[self.pos..];
        let skip = rest.find(|c: char| !c.is_whitespace())?;
        let start = self.pos + skip;
        let rest = &self.text[start..];
        let mut chars = rest.chars();
        let token = match chars.next()? {
            '(' => {
                self.pos = start + 1;
                Token::Open
            }
            ')' => {
                self.pos = start + 1;
                Token::Close
            }
            _ => {
                let len = rest
                    .find(|c: char| c.is_whitespace() || c == '(' || c == ')')
                    .unwrap_or(rest.len());
                self.pos = start + len;
                Token::Atom(&rest[..len])
            }
        };
        Some((start, token))
    }
}
