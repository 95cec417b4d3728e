//! Diagram-type catalog, the 13 guideline questions, and the rules deciding
//! which questions apply to which diagrams.
//!
//! The catalog is embedded and immutable: diagram types, question texts, and
//! applicability predicates are compile-time constants, safe for unrestricted
//! concurrent reads.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by catalog lookups.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    /// The label is not a recognized raw diagram-type name, or it has no
    /// consolidated variant ("map" is a known dataset label but never
    /// consolidates; see [`consolidate_type`]).
    #[error("unknown diagram type label: {0:?}")]
    UnknownType(String),
    /// Question ids run from 1 to 13.
    #[error("question id must be in 1..=13, got {0}")]
    InvalidQuestionId(u8),
}

/// The twelve consolidated diagram types.
///
/// Horizontal and vertical variants of bar, box, and interval charts are
/// merged; the variant names below appear verbatim in question 1's option
/// list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagramType {
    Surface,
    Box,
    Pie,
    ScatterLine,
    Area,
    Scatter,
    Bar,
    Interval,
    Venn,
    Line,
    Heatmap,
    Manhattan,
}

impl DiagramType {
    /// All variants, in the order they are listed in question 1.
    pub const ALL: [DiagramType; 12] = [
        DiagramType::Surface,
        DiagramType::Box,
        DiagramType::Pie,
        DiagramType::ScatterLine,
        DiagramType::Area,
        DiagramType::Scatter,
        DiagramType::Bar,
        DiagramType::Interval,
        DiagramType::Venn,
        DiagramType::Line,
        DiagramType::Heatmap,
        DiagramType::Manhattan,
    ];

    /// Canonical lower-case name, as used in question 1 and in answer matching.
    pub fn name(self) -> &'static str {
        match self {
            DiagramType::Surface => "surface",
            DiagramType::Box => "box",
            DiagramType::Pie => "pie",
            DiagramType::ScatterLine => "scatter-line",
            DiagramType::Area => "area",
            DiagramType::Scatter => "scatter",
            DiagramType::Bar => "bar",
            DiagramType::Interval => "interval",
            DiagramType::Venn => "venn",
            DiagramType::Line => "line",
            DiagramType::Heatmap => "heatmap",
            DiagramType::Manhattan => "manhattan",
        }
    }

    /// Parse a canonical consolidated name ("bar", "scatter-line", ...).
    pub fn from_name(name: &str) -> Option<DiagramType> {
        DiagramType::ALL.iter().copied().find(|t| t.name() == name)
    }
}

impl fmt::Display for DiagramType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What shape of answer a question expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    YesNo,
    Count,
    TypeChoice,
}

/// Identifier of one of the 13 guideline questions. Always in `1..=13`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct QuestionId(u8);

impl QuestionId {
    pub fn new(id: u8) -> Result<QuestionId, CatalogError> {
        if (1..=13).contains(&id) {
            Ok(QuestionId(id))
        } else {
            Err(CatalogError::InvalidQuestionId(id))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// All 13 ids in catalog order.
    pub fn all() -> impl Iterator<Item = QuestionId> {
        (1..=13).map(QuestionId)
    }
}

impl TryFrom<u8> for QuestionId {
    type Error = CatalogError;
    fn try_from(id: u8) -> Result<Self, Self::Error> {
        QuestionId::new(id)
    }
}

impl From<QuestionId> for u8 {
    fn from(id: QuestionId) -> u8 {
        id.0
    }
}

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One of the 13 catalog questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GuidelineQuestion {
    pub id: QuestionId,
    pub text: &'static str,
    pub kind: AnswerKind,
}

const QUESTIONS: [GuidelineQuestion; 13] = [
    GuidelineQuestion {
        id: QuestionId(1),
        text: "Which of the following categories best describes the diagram type? \
                surface, box, pie, scatter-line, area, scatter, bar, interval, venn, \
                line, heatmap, manhattan.",
        kind: AnswerKind::TypeChoice,
    },
    GuidelineQuestion {
        id: QuestionId(2),
        text: "Does the diagram visually appear to have a 3D effect?",
        kind: AnswerKind::YesNo,
    },
    GuidelineQuestion {
        id: QuestionId(3),
        text: "Do all the axes have labels?",
        kind: AnswerKind::YesNo,
    },
    GuidelineQuestion {
        id: QuestionId(4),
        text: "Does the horizontal axis contain an axis label?",
        kind: AnswerKind::YesNo,
    },
    GuidelineQuestion {
        id: QuestionId(5),
        text: "Does the vertical axis contain an axis label?",
        kind: AnswerKind::YesNo,
    },
    GuidelineQuestion {
        id: QuestionId(6),
        text: "Do all axes have tick marks and tick labels?",
        kind: AnswerKind::YesNo,
    },
    GuidelineQuestion {
        id: QuestionId(7),
        text: "Does the horizontal axis have tick marks and tick labels?",
        kind: AnswerKind::YesNo,
    },
    GuidelineQuestion {
        id: QuestionId(8),
        text: "Does the vertical axis have tick marks and tick labels?",
        kind: AnswerKind::YesNo,
    },
    GuidelineQuestion {
        id: QuestionId(9),
        text: "How many lines does the diagram contain? Do not count the axes.",
        kind: AnswerKind::Count,
    },
    GuidelineQuestion {
        id: QuestionId(10),
        text: "How many colors are used in the diagram? Do not count black as a color.",
        kind: AnswerKind::Count,
    },
    GuidelineQuestion {
        id: QuestionId(11),
        text: "Does the diagram contain a legend?",
        kind: AnswerKind::YesNo,
    },
    GuidelineQuestion {
        id: QuestionId(12),
        text: "How many groups are used in the legend of the diagram?",
        kind: AnswerKind::Count,
    },
    GuidelineQuestion {
        id: QuestionId(13),
        text: "Does the image contain any compression artifacts (such as visible block \
                structures and halos around edges or general loss of sharpness and \
                oscillations around high-contrast edges)?",
        kind: AnswerKind::YesNo,
    },
];

/// The full catalog, in id order.
pub fn questions() -> &'static [GuidelineQuestion; 13] {
    &QUESTIONS
}

/// Look up one question by id.
pub fn question(id: QuestionId) -> &'static GuidelineQuestion {
    &QUESTIONS[(id.0 - 1) as usize]
}

/// Per-record facts that gate question applicability beyond the diagram type.
///
/// `has_gradient` and `multiple_legends` come from manual annotation (they are
/// never inferred from pixels). `legend_present` is the ground-truth legend
/// label when evaluating against a manifest, or the parsed verdict of
/// question 11 when linting an unannotated image; `None` means unknown, which
/// makes question 12 inapplicable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicabilityFlags {
    pub has_gradient: bool,
    pub multiple_legends: bool,
    pub legend_present: Option<bool>,
}

/// Whether a single question is meaningful for a diagram of type `ty` with
/// the given flags.
///
/// The rules: questions 1, 2, 11, and 13 apply everywhere; 3 and 6 to
/// everything with axes (all but pie and venn); 4, 5, 7, and 8 additionally
/// exclude surface plots (a single horizontal/vertical axis is not well
/// defined there); 9 only to line and scatter-line diagrams; 10 excludes
/// surface, heatmap, venn, and gradient-colored images; 12 requires a legend
/// to exist and excludes multi-legend and gradient-legend images.
pub fn is_applicable(id: QuestionId, ty: DiagramType, flags: &ApplicabilityFlags) -> bool {
    use DiagramType::*;
    match id.0 {
        1 | 2 | 11 | 13 => true,
        3 | 6 => !matches!(ty, Pie | Venn),
        4 | 5 | 7 | 8 => !matches!(ty, Pie | Venn | Surface),
        9 => matches!(ty, Line | ScatterLine),
        10 => !matches!(ty, Surface | Heatmap | Venn) && !flags.has_gradient,
        12 => flags.legend_present == Some(true) && !flags.multiple_legends && !flags.has_gradient,
        _ => unreachable!("question ids are validated on construction"),
    }
}

/// The set of question ids applicable to a diagram of type `ty`.
///
/// Pure function of its inputs.
pub fn applicable_questions(ty: DiagramType, flags: &ApplicabilityFlags) -> BTreeSet<QuestionId> {
    QuestionId::all()
        .filter(|id| is_applicable(*id, ty, flags))
        .collect()
}

/// Lower-case a raw label and strip an optional trailing "chart"/"plot"/"diagram".
fn normalize_label(raw: &str) -> String {
    let lower = raw.trim().to_ascii_lowercase();
    let mut words: Vec<&str> = lower.split_whitespace().collect();
    if words.len() > 1 && matches!(words[words.len() - 1], "chart" | "plot" | "diagram") {
        words.pop();
    }
    words.join(" ")
}

/// Map a raw dataset type label onto its consolidated [`DiagramType`].
///
/// Accepts the UB PMC label set case-insensitively, with an optional
/// "chart"/"plot"/"diagram" suffix; horizontal and vertical variants collapse
/// onto the merged variant, and already-consolidated names map to themselves.
///
/// "map" is a recognized dataset label but has no consolidated variant, so it
/// is rejected here like any unknown label; manifest loading in pool mode is
/// the one place such records are accepted (see [`crate::dataset`]).
pub fn consolidate_type(raw: &str) -> Result<DiagramType, CatalogError> {
    use DiagramType::*;
    let ty = match normalize_label(raw).as_str() {
        "area" => Area,
        "line" => Line,
        "manhattan" => Manhattan,
        "scatter" => Scatter,
        "scatter-line" => ScatterLine,
        "pie" => Pie,
        "heatmap" => Heatmap,
        "surface" => Surface,
        "venn" => Venn,
        "box" | "vertical box" | "horizontal box" => Box,
        "bar" | "vertical bar" | "horizontal bar" => Bar,
        "interval" | "vertical interval" | "horizontal interval" => Interval,
        _ => return Err(CatalogError::UnknownType(raw.to_string())),
    };
    Ok(ty)
}

/// Raw labels that may appear in an ingestion pool but can never be sampled
/// into the evaluation set (no consolidated variant exists for them).
pub const POOL_ONLY_LABELS: [&str; 1] = ["map"];

/// Normalize a raw type label to its canonical form ("Vertical Bar Chart" ->
/// "vertical bar"), keeping the orientation prefix. Sampling plans are keyed
/// by these canonical labels. Pool-only labels ("map") are accepted.
pub fn canonical_raw_label(raw: &str) -> Result<String, CatalogError> {
    let norm = normalize_label(raw);
    if POOL_ONLY_LABELS.contains(&norm.as_str()) {
        return Ok(norm);
    }
    consolidate_type(&norm)?;
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_variants_all_named_in_question_one() {
        let q1 = question(QuestionId::new(1).unwrap());
        assert_eq!(DiagramType::ALL.len(), 12);
        for ty in DiagramType::ALL {
            assert!(
                q1.text.contains(ty.name()),
                "question 1 must list {:?} verbatim",
                ty.name()
            );
        }
    }

    #[test]
    fn question_ids_dense_and_kinds_fixed() {
        for (i, q) in questions().iter().enumerate() {
            assert_eq!(q.id.get() as usize, i + 1);
        }
        let kind_of = |n: u8| question(QuestionId::new(n).unwrap()).kind;
        assert_eq!(kind_of(1), AnswerKind::TypeChoice);
        for n in [2, 3, 4, 5, 6, 7, 8, 11, 13] {
            assert_eq!(kind_of(n), AnswerKind::YesNo, "q{n}");
        }
        for n in [9, 10, 12] {
            assert_eq!(kind_of(n), AnswerKind::Count, "q{n}");
        }
    }

    #[test]
    fn question_13_keeps_parenthetical() {
        let q13 = question(QuestionId::new(13).unwrap());
        assert!(q13.text.contains("visible block structures and halos"));
    }

    #[test]
    fn consolidate_orientation_variants() {
        assert_eq!(
            consolidate_type("vertical bar chart").unwrap(),
            DiagramType::Bar
        );
        assert_eq!(consolidate_type("heatmap").unwrap(), DiagramType::Heatmap);
        assert_eq!(
            consolidate_type("horizontal box chart").unwrap(),
            DiagramType::Box
        );
        assert_eq!(
            consolidate_type("Scatter-line plot").unwrap(),
            DiagramType::ScatterLine
        );
        assert_eq!(
            consolidate_type("Horizontal interval chart").unwrap(),
            DiagramType::Interval
        );
    }

    #[test]
    fn map_and_junk_are_rejected() {
        assert!(matches!(
            consolidate_type("map"),
            Err(CatalogError::UnknownType(_))
        ));
        assert!(matches!(
            consolidate_type("photograph"),
            Err(CatalogError::UnknownType(_))
        ));
        // but map is still canonicalizable for pool ingestion
        assert_eq!(canonical_raw_label("Map").unwrap(), "map");
        assert_eq!(
            canonical_raw_label("Vertical Bar Chart").unwrap(),
            "vertical bar"
        );
        assert!(canonical_raw_label("hologram").is_err());
    }

    #[test]
    fn pie_excludes_axis_and_line_questions() {
        let flags = ApplicabilityFlags::default();
        let qs = applicable_questions(DiagramType::Pie, &flags);
        let got: Vec<u8> = qs.iter().map(|q| q.get()).collect();
        // axis questions 3-8 and the line count 9 are out; 12 needs a known legend
        assert_eq!(got, vec![1, 2, 10, 11, 13]);
    }

    #[test]
    fn surface_keeps_all_axes_questions_only() {
        let flags = ApplicabilityFlags::default();
        let qs = applicable_questions(DiagramType::Surface, &flags);
        let got: Vec<u8> = qs.iter().map(|q| q.get()).collect();
        assert_eq!(got, vec![1, 2, 3, 6, 11, 13]);
    }

    #[test]
    fn gradient_flag_drops_color_count_but_not_lines() {
        let flags = ApplicabilityFlags {
            has_gradient: true,
            ..Default::default()
        };
        assert!(is_applicable(
            QuestionId::new(9).unwrap(),
            DiagramType::Line,
            &flags
        ));
        assert!(!is_applicable(
            QuestionId::new(10).unwrap(),
            DiagramType::Line,
            &flags
        ));
    }

    #[test]
    fn legend_group_question_needs_known_legend() {
        let q12 = QuestionId::new(12).unwrap();
        let mut flags = ApplicabilityFlags::default();
        assert!(!is_applicable(q12, DiagramType::Bar, &flags));
        flags.legend_present = Some(true);
        assert!(is_applicable(q12, DiagramType::Bar, &flags));
        flags.multiple_legends = true;
        assert!(!is_applicable(q12, DiagramType::Bar, &flags));
        flags.multiple_legends = false;
        flags.has_gradient = true;
        assert!(!is_applicable(q12, DiagramType::Bar, &flags));
    }

    #[test]
    fn every_question_applies_somewhere() {
        let flags = ApplicabilityFlags {
            legend_present: Some(true),
            ..Default::default()
        };
        for id in QuestionId::all() {
            assert!(
                DiagramType::ALL
                    .iter()
                    .any(|t| is_applicable(id, *t, &flags)),
                "q{id} applies to no type"
            );
        }
    }

    #[test]
    fn applicability_is_pure() {
        let flags = ApplicabilityFlags {
            legend_present: Some(true),
            has_gradient: true,
            multiple_legends: false,
        };
        for ty in DiagramType::ALL {
            assert_eq!(
                applicable_questions(ty, &flags),
                applicable_questions(ty, &flags)
            );
        }
    }

    #[test]
    fn question_id_range_enforced() {
        assert!(QuestionId::new(0).is_err());
        assert!(QuestionId::new(14).is_err());
        assert!(serde_json::from_str::<QuestionId>("14").is_err());
        assert_eq!(
            serde_json::from_str::<QuestionId>("13").unwrap(),
            QuestionId::new(13).unwrap()
        );
    }
}
