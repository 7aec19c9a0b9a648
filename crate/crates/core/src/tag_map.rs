//! Mapping of target-language tags onto the source tag inventory.

use crate::treebank_io::{ExtendedTag, TagMapTable, TaggedSentence};

pub const DEFAULT_COMPOSITE_SEPARATOR: char = '|';

/// The known historical-to-modern pairs. Every other tag maps to itself.
pub const DEFAULT_PAIRS: [(&str, &str); 8] = [
    ("CARDD", "CARD"),
    ("DDA", "PDAT"),
    ("DDART", "ART"),
    ("DIA", "PIAT"),
    ("DIART", "ART"),
    ("DID", "PDAT"),
    ("NA", "NN"),
    ("VAPS", "ADJD.Pos"),
];

pub fn default_table() -> TagMapTable {
    let mut table = TagMapTable::default();
    for (src, tgt) in DEFAULT_PAIRS {
        let tgt = ExtendedTag::parse(tgt).expect("bundled tag map entry");
        table.pos_map.insert(src.to_string(), tgt);
    }
    table
}

/// Maps one tag.
///
/// Composite tags (`APPR|NA`) are reduced to their first part. A mapped tag
/// that carries features of its own (`VAPS → ADJD.Pos`) contributes them
/// before the mapped source features. Unknown tags and features pass
/// through unchanged.
pub fn map_extended_tag(tag: &ExtendedTag, table: &TagMapTable, composite_separator: char) -> ExtendedTag {
    let pos = tag
        .pos
        .split(composite_separator)
        .find(|p| !p.is_empty())
        .unwrap_or(&tag.pos);
    let (pos, mut features) = match table.pos_map.get(pos) {
        Some(target) => (target.pos.clone(), target.features.clone()),
        None => {
            log::debug!("no mapping for tag {pos}");
            (pos.to_string(), Vec::new())
        }
    };
    features.extend(tag.features.iter().map(|f| match table.feature_map.get(f) {
        Some(target) => target.clone(),
        None => f.clone(),
    }));
    ExtendedTag { pos, features }
}

pub fn map_sentence(sentence: &TaggedSentence, table: &TagMapTable, composite_separator: char) -> TaggedSentence {
    TaggedSentence {
        tokens: sentence.tokens.clone(),
        tags: sentence
            .tags
            .iter()
            .map(|t| map_extended_tag(t, table, composite_separator))
            .collect(),
    }
}
