//! Deterministic synthetic manifests for tests and offline demos.
//!
//! [`evaluation_manifest`] builds a 1,010-record manifest whose type
//! composition matches the default sampling plan and whose labels and flags
//! are arranged so that every per-question applicability subset and majority
//! class hits the sizes the evaluation protocol expects (950 records with
//! axes, 920 without surface plots, 915 color-count candidates, 461 legend
//! groups, 300 line charts, and so on). A serialized copy ships in
//! `fixtures/evaluation_manifest.json`; a test keeps the two in sync.
//!
//! [`sampling_pool`] builds a 22,923-record ingestion pool mirroring the
//! UB PMC training-set type distribution, for exercising the stratified
//! sampler at full scale.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::PathBuf;

use crate::catalog::{consolidate_type, QuestionId};

use super::{AnnotationRecord, Flags, LabelValue};

/// Raw types and counts of the evaluation manifest, in image-id order.
const EVAL_GROUPS: [(&str, usize); 13] = [
    ("area", 30),
    ("heatmap", 30),
    ("horizontal bar", 100),
    ("line", 200),
    ("manhattan", 30),
    ("pie", 30),
    ("scatter", 100),
    ("scatter-line", 100),
    ("surface", 30),
    ("venn", 30),
    ("vertical bar", 200),
    ("vertical box", 100),
    ("vertical interval", 30),
];

/// Raw types and counts of the full training pool.
const POOL_GROUPS: [(&str, usize); 15] = [
    ("area", 172),
    ("line", 10_556),
    ("manhattan", 176),
    ("scatter", 1_350),
    ("scatter-line", 1_818),
    ("pie", 242),
    ("vertical box", 763),
    ("horizontal bar", 787),
    ("vertical bar", 5_454),
    ("horizontal interval", 156),
    ("vertical interval", 489),
    ("map", 533),
    ("heatmap", 197),
    ("surface", 155),
    ("venn", 75),
];

fn group_range(name: &str) -> Range<usize> {
    let mut start = 0;
    for (group, count) in EVAL_GROUPS {
        if group == name {
            return start..start + count;
        }
        start += count;
    }
    unreachable!("unknown fixture group {name}");
}

fn q(n: u8) -> QuestionId {
    QuestionId::new(n).expect("fixture uses valid question ids")
}

/// Assign `false` to the first `false_count` applicable records (by index
/// order) and `true` to the rest.
struct BoolAssigner {
    false_count: usize,
    seen: usize,
}

impl BoolAssigner {
    fn new(false_count: usize) -> BoolAssigner {
        BoolAssigner {
            false_count,
            seen: 0,
        }
    }

    fn next(&mut self) -> bool {
        let value = self.seen >= self.false_count;
        self.seen += 1;
        value
    }
}

/// Build the 1,010-record evaluation manifest.
///
/// Pure and deterministic: no RNG, stable image ids (`ref_0000`..`ref_1009`)
/// already in sorted order.
pub fn evaluation_manifest() -> Vec<AnnotationRecord> {
    let surface = group_range("surface");
    let heatmap = group_range("heatmap");
    let venn = group_range("venn");
    let pie = group_range("pie");
    let line = group_range("line");

    let three_d_pies = pie.start..pie.start + 5;
    let gradient_heatmaps = heatmap.start..heatmap.start + 10;
    let gradient_lines = line.start..line.start + 5;
    let multi_legend_lines = line.start + 5..line.start + 8;
    // 100 horizontal bar + 61 line + 100 scatter + 100 scatter-line
    // + 100 vertical box + the 18 flagged records above = 479 legends
    let legend_lines = line.start..line.start + 69;
    let legend_groups = [
        group_range("horizontal bar"),
        group_range("scatter"),
        group_range("scatter-line"),
        group_range("vertical box"),
    ];

    // missing-label/tick counts per question, applied first-come over each
    // question's applicable subset
    let mut q3_missing = BoolAssigner::new(283);
    let mut q4_missing = BoolAssigner::new(234);
    let mut q5_missing = BoolAssigner::new(123);
    let mut q6_missing = BoolAssigner::new(218);
    let mut q7_missing = BoolAssigner::new(169);
    let mut q8_missing = BoolAssigner::new(127);
    let artifact_count = 270;

    let mut records = Vec::with_capacity(1010);
    let mut index = 0usize;
    for (raw_type, count) in EVAL_GROUPS {
        let diagram_type = consolidate_type(raw_type).expect("fixture types consolidate");
        for _ in 0..count {
            let i = index;
            index += 1;

            let has_gradient = gradient_heatmaps.contains(&i) || gradient_lines.contains(&i);
            let multiple_legends = multi_legend_lines.contains(&i);
            let has_legend = has_gradient && !gradient_lines.contains(&i)
                || legend_lines.contains(&i)
                || legend_groups.iter().any(|g| g.contains(&i));

            let mut labels: BTreeMap<QuestionId, LabelValue> = BTreeMap::new();
            labels.insert(q(1), LabelValue::Type(diagram_type));
            labels.insert(
                q(2),
                LabelValue::Bool(surface.contains(&i) || three_d_pies.contains(&i)),
            );
            labels.insert(q(11), LabelValue::Bool(has_legend));
            labels.insert(q(13), LabelValue::Bool(i < artifact_count));

            let has_axes = !pie.contains(&i) && !venn.contains(&i);
            if has_axes {
                labels.insert(q(3), LabelValue::Bool(q3_missing.next()));
                labels.insert(q(6), LabelValue::Bool(q6_missing.next()));
                if !surface.contains(&i) {
                    labels.insert(q(4), LabelValue::Bool(q4_missing.next()));
                    labels.insert(q(5), LabelValue::Bool(q5_missing.next()));
                    labels.insert(q(7), LabelValue::Bool(q7_missing.next()));
                    labels.insert(q(8), LabelValue::Bool(q8_missing.next()));
                }
            }
            if matches!(raw_type, "line" | "scatter-line") {
                labels.insert(q(9), LabelValue::Count((i % 6 + 1) as u32));
            }
            let countable_colors = !surface.contains(&i)
                && !heatmap.contains(&i)
                && !venn.contains(&i)
                && !has_gradient;
            if countable_colors {
                labels.insert(q(10), LabelValue::Count((i % 7) as u32));
            }
            if has_legend && !multiple_legends && !has_gradient {
                labels.insert(q(12), LabelValue::Count((i % 5 + 1) as u32));
            }

            let image_id = format!("ref_{i:04}");
            records.push(AnnotationRecord {
                path: PathBuf::from(format!("images/{image_id}.jpg")),
                image_id,
                raw_type: raw_type.to_string(),
                diagram_type: Some(diagram_type),
                labels,
                flags: Flags {
                    has_gradient,
                    multiple_legends,
                },
            });
        }
    }
    records
}

/// Build the full-size ingestion pool (unlabeled records, including the
/// pool-only "map" type).
pub fn sampling_pool() -> Vec<AnnotationRecord> {
    let total: usize = POOL_GROUPS.iter().map(|(_, c)| c).sum();
    let mut records = Vec::with_capacity(total);
    let mut index = 0usize;
    for (raw_type, count) in POOL_GROUPS {
        let diagram_type = consolidate_type(raw_type).ok();
        for _ in 0..count {
            let image_id = format!("pool_{index:05}");
            records.push(AnnotationRecord {
                path: PathBuf::from(format!("pool/{image_id}.jpg")),
                image_id,
                raw_type: raw_type.to_string(),
                diagram_type,
                labels: BTreeMap::new(),
                flags: Flags::default(),
            });
            index += 1;
        }
    }
    records
}
