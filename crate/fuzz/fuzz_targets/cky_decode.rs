#![no_main]

use dexparse::chart::{cky_decode, loss_augmented_decode};
use dexparse::model::SpanScores;
use dexparse::transform::EMPTY_LABEL;
use dexparse::ExtendedTag;
use libfuzzer_sys::fuzz_target;

// Byte 0 picks the length, byte 1 the label count; the rest fill the chart.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let n = 1 + data[0] as usize % 8;
    let l = 1 + data[1] as usize % 5;
    let labels: Vec<String> = std::iter::once(EMPTY_LABEL.to_string()).chain((1..l).map(|i| format!("L{i}"))).collect();
    let tags: Vec<ExtendedTag> = (0..n).map(|i| ExtendedTag::parse(&format!("T{i}")).unwrap()).collect();
    let mut scores = SpanScores::zeros(n, l);
    let mut bytes = data[2..].iter().cycle();
    for i in 0..n {
        for j in i + 1..=n {
            for k in 1..l {
                let b = if data.len() > 2 { *bytes.next().unwrap() } else { 0 };
                scores.set(i, j, k, (b as f64 - 128.0) / 16.0);
            }
        }
    }
    let Ok(decoded) = cky_decode(&scores, &labels, &tags) else { return };
    assert_eq!(decoded.tree.leaf_count(), n);
    let aug = loss_augmented_decode(&scores, &decoded.spans, &labels, &tags).unwrap();
    assert!(aug.score + 1e-9 >= decoded.score);
});
