use std::fmt;

use crate::error::{Error, Result};

pub const DEFAULT_MORPH_SEPARATOR: char = '.';

/// A part-of-speech tag together with its ordered morphological features,
/// written `POS.Feat.Feat` (e.g. `ART.Nom.Pl.Fem`).
///
/// Punctuation tags of the form `$x` (`$.`, `$,`, `$(`) keep their second
/// character as part of the tag even when it is the separator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtendedTag {
    pub pos: String,
    pub features: Vec<String>,
}

impl ExtendedTag {
    pub fn new(pos: impl Into<String>, features: Vec<String>) -> Result<Self> {
        let tag = ExtendedTag {
            pos: pos.into(),
            features,
        };
        tag.validate(DEFAULT_MORPH_SEPARATOR)?;
        Ok(tag)
    }

    /// A featureless tag whose `pos` is taken verbatim. Used for word
    /// inputs in lexicalized mode, where the separator carries no meaning.
    pub fn word(token: impl Into<String>) -> Self {
        ExtendedTag {
            pos: token.into(),
            features: Vec::new(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::parse_with(s, DEFAULT_MORPH_SEPARATOR)
    }

    pub fn parse_with(s: &str, separator: char) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::invalid_tag(s, "empty tag"));
        }
        if s.chars().any(char::is_whitespace) {
            return Err(Error::invalid_tag(s, "tag contains whitespace"));
        }
        let (pos, rest) = match s.strip_prefix('$').and_then(|r| r.chars().next()) {
            Some(c) => s.split_at(1 + c.len_utf8()),
            None => match s.find(separator) {
                Some(i) => s.split_at(i),
                None => (s, ""),
            },
        };
        if pos.is_empty() {
            return Err(Error::invalid_tag(s, "empty part-of-speech"));
        }
        let features = if rest.is_empty() {
            Vec::new()
        } else {
            let Some(rest) = rest.strip_prefix(separator) else {
                return Err(Error::invalid_tag(s, "features must follow the separator"));
            };
            let features: Vec<String> = rest.split(separator).map(str::to_string).collect();
            if features.iter().any(String::is_empty) {
                return Err(Error::invalid_tag(s, "empty feature"));
            }
            features
        };
        Ok(ExtendedTag {
            pos: pos.to_string(),
            features,
        })
    }

    pub fn validate(&self, separator: char) -> Result<()> {
        let shown = self.to_string_with(separator);
        let reparsed = Self::parse_with(&shown, separator)?;
        if &reparsed != self {
            return Err(Error::invalid_tag(&shown, "separator inside tag or feature"));
        }
        Ok(())
    }

    pub fn to_string_with(&self, separator: char) -> String {
        let mut s = self.pos.clone();
        for f in &self.features {
            s.push(separator);
            s.push_str(f);
        }
        s
    }

    pub fn without_features(&self) -> Self {
        ExtendedTag {
            pos: self.pos.clone(),
            features: Vec::new(),
        }
    }
}

impl fmt::Display for ExtendedTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_string_with(DEFAULT_MORPH_SEPARATOR))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<ExtendedTag>,
}

impl TaggedSentence {
    pub fn new(tokens: Vec<String>, tags: Vec<ExtendedTag>) -> Result<Self> {
        if tokens.is_empty() || tokens.len() != tags.len() {
            return Err(Error::InvalidArgument(format!(
                "tagged sentence needs equal non-zero lengths, got {} tokens and {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        Ok(TaggedSentence { tokens, tags })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Reads `token<TAB>tag` lines; blank lines end sentences.
pub fn read_tagged_corpus(text: &str) -> Result<Vec<TaggedSentence>> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut seen_content = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            if tokens.is_empty() {
                if seen_content {
                    log::warn!("line {line_no}: empty sentence skipped");
                }
                continue;
            }
            sentences.push(TaggedSentence {
                tokens: std::mem::take(&mut tokens),
                tags: std::mem::take(&mut tags),
            });
            continue;
        }
        let Some((token, tag)) = line.split_once('\t') else {
            return Err(Error::format(line_no, "expected token<TAB>tag"));
        };
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(Error::format(line_no, format!("invalid token {token:?}")));
        }
        let tag = ExtendedTag::parse(tag).map_err(|e| Error::format(line_no, e.to_string()))?;
        tokens.push(token.to_string());
        tags.push(tag);
        seen_content = true;
    }
    if !tokens.is_empty() {
        sentences.push(TaggedSentence { tokens, tags });
    }
    Ok(sentences)
}

pub fn write_tagged_corpus(sentences: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            out.push_str(tok);
            out.push('\t');
            out.push_str(&tag.to_string());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
