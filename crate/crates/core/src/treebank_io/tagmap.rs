use std::collections::BTreeMap;

use super::ExtendedTag;
use crate::error::{Error, Result};

/// Source-to-target correspondences for tags and morphological features.
/// Lookups that miss fall through to the identity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagMapTable {
    pub pos_map: BTreeMap<String, ExtendedTag>,
    pub feature_map: BTreeMap<String, String>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Pos,
    Features,
}

/// Reads a `.tagmap` table:
///
/// ```text
/// [pos]
/// DDART	ART
/// VAPS	ADJD.Pos
/// [features]
/// Akk	Acc
/// ```
///
/// Blank lines and lines starting with `#` are ignored.
pub fn read_tag_map(text: &str) -> Result<TagMapTable> {
    let mut table = TagMapTable::default();
    let mut section = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "[pos]" => {
                section = Some(Section::Pos);
                continue;
            }
            "[features]" => {
                section = Some(Section::Features);
                continue;
            }
            _ if line.starts_with('[') => {
                return Err(Error::format(line_no, format!("unknown section {line}")));
            }
            _ => {}
        }
        let Some(section) = section else {
            return Err(Error::format(line_no, "entry before any section header"));
        };
        let Some((source, target)) = line.split_once('\t') else {
            return Err(Error::format(line_no, "expected source<TAB>target"));
        };
        let (source, target) = (source.trim(), target.trim());
        if source.is_empty() || source.chars().any(char::is_whitespace) {
            return Err(Error::format(line_no, format!("invalid source key {source:?}")));
        }
        match section {
            Section::Pos => {
                let tag = ExtendedTag::parse(target)
                    .map_err(|e| Error::format(line_no, format!("malformed target: {e}")))?;
                if table.pos_map.insert(source.to_string(), tag).is_some() {
                    return Err(Error::format(line_no, format!("duplicate source key {source}")));
                }
            }
            Section::Features => {
                if target.is_empty() || target.contains('.') || target.chars().any(char::is_whitespace) {
                    return Err(Error::format(line_no, format!("malformed target feature {target:?}")));
                }
                if table
                    .feature_map
                    .insert(source.to_string(), target.to_string())
                    .is_some()
                {
                    return Err(Error::format(line_no, format!("duplicate source key {source}")));
                }
            }
        }
    }
    Ok(table)
}

pub fn write_tag_map(table: &TagMapTable) -> String {
    let mut out = String::from("[pos]\n");
    for (src, tgt) in &table.pos_map {
        out.push_str(&format!("{src}\t{tgt}\n"));
    }
    out.push_str("[features]\n");
    for (src, tgt) in &table.feature_map {
        out.push_str(&format!("{src}\t{tgt}\n"));
    }
    out
}
