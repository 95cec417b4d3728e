//! Findings derived from parsed answers, and aggregation of per-image
//! reports into per-question metric tables.
//!
//! A [`Finding`] grades one question's verdict against the guideline it
//! checks: hard guideline breaches are violations, discouraged-but-legal
//! patterns are advisories, compliant answers are recorded as info, and
//! unparseable answers surface as unknown rather than being guessed at.
//! [`aggregate`] pairs verdicts with manifest ground truth per question and
//! emits classification or regression metric bundles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{self, AnswerKind, ApplicabilityFlags, DiagramType, QuestionId};
use crate::dataset::{filter_applicable, AnnotationRecord, LabelValue};
use crate::metrics::{
    classification_report_with_policy, regression_report, ClassLabel, ClassificationReport,
    InvalidPolicy, MetricsError, RegressionReport,
};
use crate::parse::{ParsedAnswer, RawAnswer};
use crate::prompt::Strategy;

/// Version tag written into every serialized report.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no ground truth for image(s): {}", .0.join(", "))]
    MissingGroundTruth(Vec<String>),
    #[error("answers do not cover exactly the applicable questions (missing {missing:?}, unexpected {unexpected:?})")]
    AnswersMismatch {
        missing: Vec<u8>,
        unexpected: Vec<u8>,
    },
    #[error("question {question_id} expects a {expected:?} answer, got {got:?}")]
    KindMismatch {
        question_id: QuestionId,
        expected: AnswerKind,
        got: ParsedAnswer,
    },
    #[error("record {image_id} is missing the ground-truth label for question {question_id}")]
    MissingLabel {
        image_id: String,
        question_id: QuestionId,
    },
    #[error("reports mix strategies or models; aggregate one run at a time")]
    MixedRuns,
    #[error("cannot aggregate zero reports")]
    NoReports,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Violation,
    Advisory,
    Info,
    Unknown,
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Severity::Violation => "violation",
            Severity::Advisory => "advisory",
            Severity::Info => "info",
            Severity::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// One graded verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub question_id: QuestionId,
    pub rule: String,
    pub severity: Severity,
    pub verdict: ParsedAnswer,
    /// Set on rules the underlying models are known to answer unreliably
    /// (compression artifacts); such findings must not be read as definitive.
    #[serde(default)]
    pub low_confidence: bool,
    /// The raw model turns behind the verdict.
    #[serde(default)]
    pub evidence: Vec<RawAnswer>,
}

/// Numeric limits for the counting rules. All overridable via config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub max_lines: u32,
    pub max_colors: u32,
    pub max_legend_groups: u32,
}

impl Default for Thresholds {
    fn default() -> Thresholds {
        Thresholds {
            max_lines: 5,
            max_colors: 7,
            max_legend_groups: 7,
        }
    }
}

/// All findings for one image under one run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LintReport {
    pub schema_version: u32,
    pub image_id: String,
    /// From the manifest when evaluating, from the question-1 verdict when
    /// linting an unannotated image; `None` when neither knows it.
    pub diagram_type: Option<DiagramType>,
    pub strategy: Strategy,
    pub model: String,
    pub findings: Vec<Finding>,
}

impl LintReport {
    pub fn finding(&self, id: QuestionId) -> Option<&Finding> {
        self.findings.iter().find(|f| f.question_id == id)
    }

    pub fn has_violations(&self) -> bool {
        self.findings
            .iter()
            .any(|f| f.severity == Severity::Violation)
    }
}

/// Metric bundle for one question inside an aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum QuestionScores {
    Classification(ClassificationReport),
    Regression(RegressionReport),
}

/// Per-question metric tables for one (strategy, model) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub strategy: Strategy,
    pub model: String,
    pub questions: BTreeMap<QuestionId, QuestionScores>,
    /// Questions whose subset had zero scoreable pairs (every prediction
    /// invalid under a dropping policy), mapped to their subset size.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub unscored: BTreeMap<QuestionId, usize>,
}

fn applicable_set(
    diagram_type: Option<DiagramType>,
    flags: &ApplicabilityFlags,
) -> Vec<QuestionId> {
    match diagram_type {
        Some(ty) => catalog::applicable_questions(ty, flags)
            .into_iter()
            .collect(),
        // unknown type: only the type-independent questions can be judged
        None => QuestionId::all()
            .filter(|q| match q.get() {
                1 | 2 | 11 | 13 => true,
                12 => {
                    flags.legend_present == Some(true)
                        && !flags.multiple_legends
                        && !flags.has_gradient
                }
                _ => false,
            })
            .collect(),
    }
}

fn expect_yes_no(id: QuestionId, v: ParsedAnswer) -> Result<Option<bool>, ReportError> {
    match v {
        ParsedAnswer::YesNo(b) => Ok(Some(b)),
        ParsedAnswer::Invalid => Ok(None),
        other => Err(ReportError::KindMismatch {
            question_id: id,
            expected: AnswerKind::YesNo,
            got: other,
        }),
    }
}

fn expect_count(id: QuestionId, v: ParsedAnswer) -> Result<Option<u32>, ReportError> {
    match v {
        ParsedAnswer::Number(n) => Ok(Some(n)),
        ParsedAnswer::Invalid => Ok(None),
        other => Err(ReportError::KindMismatch {
            question_id: id,
            expected: AnswerKind::Count,
            got: other,
        }),
    }
}

/// Grade verdicts into findings.
///
/// `answers` must cover exactly the questions applicable to the image; junk
/// answers for inapplicable questions are rejected rather than silently
/// influencing the outcome. When `flags.legend_present` is unset it is taken
/// from the question-11 verdict, which is what linting without a manifest
/// does.
///
/// Severity is `Unknown` for invalid verdicts, and also for type-conditional
/// rules (the 3D check) when the diagram type itself is unknown; cascading
/// an unknown beats reporting a false violation.
pub fn derive_findings(
    answers: &BTreeMap<QuestionId, ParsedAnswer>,
    diagram_type: Option<DiagramType>,
    flags: &ApplicabilityFlags,
    thresholds: &Thresholds,
) -> Result<Vec<Finding>, ReportError> {
    let mut flags = *flags;
    if flags.legend_present.is_none() {
        flags.legend_present = answers
            .get(&QuestionId::new(11).expect("11 is valid"))
            .and_then(|v| match v {
                ParsedAnswer::YesNo(b) => Some(*b),
                _ => None,
            });
    }

    let applicable = applicable_set(diagram_type, &flags);
    let missing: Vec<u8> = applicable
        .iter()
        .filter(|q| !answers.contains_key(q))
        .map(|q| q.get())
        .collect();
    let unexpected: Vec<u8> = answers
        .keys()
        .filter(|q| !applicable.contains(q))
        .map(|q| q.get())
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(ReportError::AnswersMismatch {
            missing,
            unexpected,
        });
    }

    let mut findings = Vec::with_capacity(applicable.len());
    for id in applicable {
        let verdict = answers[&id];
        let finding = grade(id, verdict, diagram_type, thresholds)?;
        findings.push(finding);
    }
    Ok(findings)
}

fn grade(
    id: QuestionId,
    verdict: ParsedAnswer,
    diagram_type: Option<DiagramType>,
    thresholds: &Thresholds,
) -> Result<Finding, ReportError> {
    let mut low_confidence = false;
    let (rule, severity) = match id.get() {
        1 => {
            let severity = match verdict {
                ParsedAnswer::TypeChoice(DiagramType::Pie) => Severity::Advisory,
                ParsedAnswer::TypeChoice(_) => Severity::Info,
                ParsedAnswer::Invalid => Severity::Unknown,
                other => {
                    return Err(ReportError::KindMismatch {
                        question_id: id,
                        expected: AnswerKind::TypeChoice,
                        got: other,
                    })
                }
            };
            ("pie-discouraged", severity)
        }
        2 => {
            let severity = match expect_yes_no(id, verdict)? {
                // a 3D effect is expected on surface plots and a defect elsewhere
                Some(true) => match diagram_type {
                    Some(DiagramType::Surface) => Severity::Info,
                    Some(_) => Severity::Violation,
                    None => Severity::Unknown,
                },
                Some(false) => Severity::Info,
                None => Severity::Unknown,
            };
            ("unnecessary-3D", severity)
        }
        n @ 3..=5 => {
            let rule = match n {
                3 => "missing-axis-labels",
                4 => "missing-horizontal-axis-label",
                _ => "missing-vertical-axis-label",
            };
            let severity = match expect_yes_no(id, verdict)? {
                Some(false) => Severity::Violation,
                Some(true) => Severity::Info,
                None => Severity::Unknown,
            };
            (rule, severity)
        }
        n @ 6..=8 => {
            let rule = match n {
                6 => "missing-ticks",
                7 => "missing-horizontal-ticks",
                _ => "missing-vertical-ticks",
            };
            let severity = match expect_yes_no(id, verdict)? {
                Some(false) => Severity::Violation,
                Some(true) => Severity::Info,
                None => Severity::Unknown,
            };
            (rule, severity)
        }
        9 => {
            let severity = match expect_count(id, verdict)? {
                Some(n) if n > thresholds.max_lines => Severity::Advisory,
                Some(_) => Severity::Info,
                None => Severity::Unknown,
            };
            ("too-many-lines", severity)
        }
        10 => {
            let severity = match expect_count(id, verdict)? {
                Some(n) if n > thresholds.max_colors => Severity::Advisory,
                Some(_) => Severity::Info,
                None => Severity::Unknown,
            };
            ("too-many-colors", severity)
        }
        11 => {
            let severity = match expect_yes_no(id, verdict)? {
                Some(false) => Severity::Violation,
                Some(true) => Severity::Info,
                None => Severity::Unknown,
            };
            ("missing-legend", severity)
        }
        12 => {
            let severity = match expect_count(id, verdict)? {
                Some(n) if n > thresholds.max_legend_groups => Severity::Advisory,
                Some(_) => Severity::Info,
                None => Severity::Unknown,
            };
            ("too-many-legend-groups", severity)
        }
        13 => {
            // models answer this question close to chance
            low_confidence = true;
            let severity = match expect_yes_no(id, verdict)? {
                Some(true) => Severity::Advisory,
                Some(false) => Severity::Info,
                None => Severity::Unknown,
            };
            ("compression-artifacts", severity)
        }
        _ => unreachable!("question ids are validated on construction"),
    };
    Ok(Finding {
        question_id: id,
        rule: rule.to_string(),
        severity,
        verdict,
        low_confidence,
        evidence: Vec::new(),
    })
}

/// Pair each report's verdicts with ground truth and score every question
/// over its applicability subset.
///
/// Reports must all come from the same (strategy, model) run and every report
/// needs a matching record. Records without a report score as all-invalid
/// (that is what a failed image degrades to). Deterministic given the record
/// ordering.
pub fn aggregate(
    reports: &[LintReport],
    records: &[AnnotationRecord],
    policy: InvalidPolicy,
) -> Result<AggregateReport, ReportError> {
    let first = reports.first().ok_or(ReportError::NoReports)?;
    if reports
        .iter()
        .any(|r| r.strategy != first.strategy || r.model != first.model)
    {
        return Err(ReportError::MixedRuns);
    }

    let by_id: BTreeMap<&str, &AnnotationRecord> =
        records.iter().map(|r| (r.image_id.as_str(), r)).collect();
    let unmatched: Vec<String> = reports
        .iter()
        .filter(|r| !by_id.contains_key(r.image_id.as_str()))
        .map(|r| r.image_id.clone())
        .collect();
    if !unmatched.is_empty() {
        return Err(ReportError::MissingGroundTruth(unmatched));
    }
    let report_by_id: BTreeMap<&str, &LintReport> =
        reports.iter().map(|r| (r.image_id.as_str(), r)).collect();

    let mut questions = BTreeMap::new();
    let mut unscored = BTreeMap::new();
    for id in QuestionId::all() {
        let subset = filter_applicable(records, id);
        if subset.n == 0 {
            continue;
        }
        let verdicts: Vec<ParsedAnswer> = subset
            .records
            .iter()
            .map(|record| {
                report_by_id
                    .get(record.image_id.as_str())
                    .and_then(|rep| rep.finding(id))
                    .map(|f| f.verdict)
                    .unwrap_or(ParsedAnswer::Invalid)
            })
            .collect();

        let kind = catalog::question(id).kind;
        let scored = match kind {
            AnswerKind::TypeChoice => {
                let truths: Vec<ClassLabel> = subset
                    .records
                    .iter()
                    .map(|r| {
                        r.diagram_type.map(ClassLabel::Type).ok_or_else(|| {
                            ReportError::MissingLabel {
                                image_id: r.image_id.clone(),
                                question_id: id,
                            }
                        })
                    })
                    .collect::<Result<_, _>>()?;
                classification_report_with_policy(&verdicts, &truths, policy)
                    .map(QuestionScores::Classification)
            }
            AnswerKind::YesNo => {
                let truths: Vec<ClassLabel> = subset
                    .records
                    .iter()
                    .map(|r| {
                        r.label(id)
                            .and_then(LabelValue::as_bool)
                            .map(ClassLabel::YesNo)
                            .ok_or_else(|| ReportError::MissingLabel {
                                image_id: r.image_id.clone(),
                                question_id: id,
                            })
                    })
                    .collect::<Result<_, _>>()?;
                classification_report_with_policy(&verdicts, &truths, policy)
                    .map(QuestionScores::Classification)
            }
            AnswerKind::Count => {
                let truths: Vec<u32> = subset
                    .records
                    .iter()
                    .map(|r| {
                        r.label(id).and_then(LabelValue::as_count).ok_or_else(|| {
                            ReportError::MissingLabel {
                                image_id: r.image_id.clone(),
                                question_id: id,
                            }
                        })
                    })
                    .collect::<Result<_, _>>()?;
                regression_report(&verdicts, &truths).map(QuestionScores::Regression)
            }
        };
        match scored {
            Ok(scores) => {
                questions.insert(id, scores);
            }
            // every prediction invalid and dropped: disclose, do not crash
            Err(MetricsError::EmptyInput) => {
                unscored.insert(id, subset.n);
            }
            Err(e) => return Err(e.into()),
        }
    }

    Ok(AggregateReport {
        schema_version: SCHEMA_VERSION,
        strategy: first.strategy,
        model: first.model.clone(),
        questions,
        unscored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Json,
    Markdown,
}

fn verdict_text(v: &ParsedAnswer) -> String {
    match v {
        ParsedAnswer::YesNo(true) => "yes".into(),
        ParsedAnswer::YesNo(false) => "no".into(),
        ParsedAnswer::Number(n) => n.to_string(),
        ParsedAnswer::TypeChoice(t) => t.name().into(),
        ParsedAnswer::Invalid => "invalid".into(),
    }
}

fn pct(v: f64) -> String {
    format!("{:.2} %", v * 100.0)
}

impl LintReport {
    /// Stable JSON (round-trippable) or a human-oriented Markdown table.
    pub fn render(&self, format: RenderFormat) -> String {
        match format {
            RenderFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
                s.push('\n');
                s
            }
            RenderFormat::Markdown => {
                let mut out = String::new();
                out.push_str(&format!("# Lint report: {}\n\n", self.image_id));
                out.push_str(&format!(
                    "Diagram type: {} | model: {} | strategy: {}\n\n",
                    self.diagram_type
                        .map(|t| t.name().to_string())
                        .unwrap_or_else(|| "unknown".into()),
                    self.model,
                    self.strategy,
                ));
                out.push_str("| Question | Rule | Severity | Verdict |\n");
                out.push_str("|---|---|---|---|\n");
                for f in &self.findings {
                    let mut severity = f.severity.to_string();
                    if f.low_confidence {
                        severity.push_str(" (low confidence)");
                    }
                    out.push_str(&format!(
                        "| {} | {} | {} | {} |\n",
                        f.question_id,
                        f.rule,
                        severity,
                        verdict_text(&f.verdict),
                    ));
                }
                out
            }
        }
    }
}

impl AggregateReport {
    /// Stable JSON (round-trippable) or Markdown tables with the metric
    /// columns in the conventional order.
    pub fn render(&self, format: RenderFormat) -> String {
        match format {
            RenderFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
                s.push('\n');
                s
            }
            RenderFormat::Markdown => {
                let mut out = String::new();
                out.push_str(&format!(
                    "# Evaluation: model `{}`, strategy `{}`\n\n",
                    self.model, self.strategy
                ));
                let classification: Vec<(&QuestionId, &ClassificationReport)> = self
                    .questions
                    .iter()
                    .filter_map(|(id, s)| match s {
                        QuestionScores::Classification(c) => Some((id, c)),
                        _ => None,
                    })
                    .collect();
                if !classification.is_empty() {
                    out.push_str("## Classification questions\n\n");
                    out.push_str("| Question | n | Invalid | No-information rate | Precision | Recall | F1-score | Accuracy | Balanced accuracy |\n");
                    out.push_str("|---|---|---|---|---|---|---|---|---|\n");
                    for (id, c) in classification {
                        out.push_str(&format!(
                            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
                            id,
                            c.n,
                            c.invalid_count,
                            pct(c.no_information_rate),
                            pct(c.macro_precision),
                            pct(c.macro_recall),
                            pct(c.macro_f1),
                            pct(c.accuracy),
                            pct(c.balanced_accuracy),
                        ));
                    }
                    out.push('\n');
                }
                let regression: Vec<(&QuestionId, &RegressionReport)> = self
                    .questions
                    .iter()
                    .filter_map(|(id, s)| match s {
                        QuestionScores::Regression(r) => Some((id, r)),
                        _ => None,
                    })
                    .collect();
                if !regression.is_empty() {
                    out.push_str("## Counting questions\n\n");
                    out.push_str("| Question | n | Invalid | RMSE | MAE | Pearson's R |\n");
                    out.push_str("|---|---|---|---|---|---|\n");
                    for (id, r) in regression {
                        out.push_str(&format!(
                            "| {} | {} | {} | {:.2} | {:.2} | {} |\n",
                            id,
                            r.n,
                            r.invalid_count,
                            r.rmse,
                            r.mae,
                            r.pearson_r
                                .map(|v| format!("{v:.2}"))
                                .unwrap_or_else(|| "n/a".into()),
                        ));
                    }
                    out.push('\n');
                }
                if !self.unscored.is_empty() {
                    for (id, n) in &self.unscored {
                        out.push_str(&format!(
                            "Question {id}: unscored, all {n} predictions invalid\n"
                        ));
                    }
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixture;

    fn q(n: u8) -> QuestionId {
        QuestionId::new(n).unwrap()
    }

    fn answers(entries: &[(u8, ParsedAnswer)]) -> BTreeMap<QuestionId, ParsedAnswer> {
        entries.iter().map(|(n, v)| (q(*n), *v)).collect()
    }

    fn pie_answers(three_d: bool) -> BTreeMap<QuestionId, ParsedAnswer> {
        answers(&[
            (1, ParsedAnswer::TypeChoice(DiagramType::Pie)),
            (2, ParsedAnswer::YesNo(three_d)),
            (10, ParsedAnswer::Number(3)),
            (11, ParsedAnswer::YesNo(false)),
            (13, ParsedAnswer::YesNo(false)),
        ])
    }

    #[test]
    fn pie_with_3d_is_a_violation() {
        let findings = derive_findings(
            &pie_answers(true),
            Some(DiagramType::Pie),
            &ApplicabilityFlags::default(),
            &Thresholds::default(),
        )
        .unwrap();
        let f2 = findings.iter().find(|f| f.question_id == q(2)).unwrap();
        assert_eq!(f2.severity, Severity::Violation);
        assert_eq!(f2.rule, "unnecessary-3D");
        let f1 = findings.iter().find(|f| f.question_id == q(1)).unwrap();
        assert_eq!(f1.severity, Severity::Advisory);
        assert_eq!(f1.rule, "pie-discouraged");
    }

    #[test]
    fn surface_3d_is_expected() {
        let a = answers(&[
            (1, ParsedAnswer::TypeChoice(DiagramType::Surface)),
            (2, ParsedAnswer::YesNo(true)),
            (3, ParsedAnswer::YesNo(true)),
            (6, ParsedAnswer::YesNo(true)),
            (11, ParsedAnswer::YesNo(false)),
            (13, ParsedAnswer::YesNo(false)),
        ]);
        let findings = derive_findings(
            &a,
            Some(DiagramType::Surface),
            &ApplicabilityFlags::default(),
            &Thresholds::default(),
        )
        .unwrap();
        let f2 = findings.iter().find(|f| f.question_id == q(2)).unwrap();
        assert_eq!(f2.severity, Severity::Info);
    }

    #[test]
    fn thresholds_gate_count_advisories() {
        let base = answers(&[
            (1, ParsedAnswer::TypeChoice(DiagramType::Line)),
            (2, ParsedAnswer::YesNo(false)),
            (3, ParsedAnswer::YesNo(true)),
            (4, ParsedAnswer::YesNo(true)),
            (5, ParsedAnswer::YesNo(true)),
            (6, ParsedAnswer::YesNo(true)),
            (7, ParsedAnswer::YesNo(true)),
            (8, ParsedAnswer::YesNo(true)),
            (9, ParsedAnswer::Number(8)),
            (10, ParsedAnswer::Number(2)),
            (11, ParsedAnswer::YesNo(false)),
            (13, ParsedAnswer::YesNo(false)),
        ]);
        let findings = derive_findings(
            &base,
            Some(DiagramType::Line),
            &ApplicabilityFlags::default(),
            &Thresholds::default(),
        )
        .unwrap();
        let f9 = findings.iter().find(|f| f.question_id == q(9)).unwrap();
        assert_eq!(f9.severity, Severity::Advisory, "8 lines > default 5");
        let f10 = findings.iter().find(|f| f.question_id == q(10)).unwrap();
        assert_eq!(f10.severity, Severity::Info);
        let f11 = findings.iter().find(|f| f.question_id == q(11)).unwrap();
        assert_eq!(f11.severity, Severity::Violation);
        assert_eq!(f11.rule, "missing-legend");
    }

    #[test]
    fn q12_follows_parsed_legend_verdict() {
        let mut a = answers(&[
            (1, ParsedAnswer::TypeChoice(DiagramType::Pie)),
            (2, ParsedAnswer::YesNo(false)),
            (10, ParsedAnswer::Number(1)),
            (11, ParsedAnswer::YesNo(true)),
            (13, ParsedAnswer::YesNo(false)),
        ]);
        // legend said yes, so q12 becomes applicable and must be answered
        let err = derive_findings(
            &a,
            Some(DiagramType::Pie),
            &ApplicabilityFlags::default(),
            &Thresholds::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ReportError::AnswersMismatch { missing, .. } if missing == vec![12]));

        a.insert(q(12), ParsedAnswer::Number(9));
        let findings = derive_findings(
            &a,
            Some(DiagramType::Pie),
            &ApplicabilityFlags::default(),
            &Thresholds::default(),
        )
        .unwrap();
        let f12 = findings.iter().find(|f| f.question_id == q(12)).unwrap();
        assert_eq!(f12.severity, Severity::Advisory, "9 groups > default 7");
    }

    #[test]
    fn junk_answers_for_inapplicable_questions_are_rejected() {
        let mut a = pie_answers(false);
        a.insert(q(9), ParsedAnswer::Number(3)); // pies have no lines to count
        let err = derive_findings(
            &a,
            Some(DiagramType::Pie),
            &ApplicabilityFlags::default(),
            &Thresholds::default(),
        )
        .unwrap_err();
        assert!(
            matches!(err, ReportError::AnswersMismatch { unexpected, .. } if unexpected == vec![9])
        );
    }

    #[test]
    fn isolation_junk_never_changes_findings() {
        // adding answers for inapplicable questions can only error, never
        // alter the graded findings
        let good = derive_findings(
            &pie_answers(true),
            Some(DiagramType::Pie),
            &ApplicabilityFlags::default(),
            &Thresholds::default(),
        )
        .unwrap();
        for junk_q in [3u8, 4, 5, 6, 7, 8, 9] {
            let mut a = pie_answers(true);
            a.insert(q(junk_q), ParsedAnswer::YesNo(false));
            assert!(derive_findings(
                &a,
                Some(DiagramType::Pie),
                &ApplicabilityFlags::default(),
                &Thresholds::default(),
            )
            .is_err());
        }
        let again = derive_findings(
            &pie_answers(true),
            Some(DiagramType::Pie),
            &ApplicabilityFlags::default(),
            &Thresholds::default(),
        )
        .unwrap();
        assert_eq!(good, again);
    }

    #[test]
    fn unknown_type_downgrades_3d_rule() {
        let a = answers(&[
            (1, ParsedAnswer::Invalid),
            (2, ParsedAnswer::YesNo(true)),
            (11, ParsedAnswer::Invalid),
            (13, ParsedAnswer::YesNo(false)),
        ]);
        let findings = derive_findings(
            &a,
            None,
            &ApplicabilityFlags::default(),
            &Thresholds::default(),
        )
        .unwrap();
        let f2 = findings.iter().find(|f| f.question_id == q(2)).unwrap();
        assert_eq!(f2.severity, Severity::Unknown);
        let f1 = findings.iter().find(|f| f.question_id == q(1)).unwrap();
        assert_eq!(f1.severity, Severity::Unknown);
    }

    #[test]
    fn severity_unknown_iff_invalid_when_type_is_known() {
        let records = fixture::evaluation_manifest();
        for record in records.iter().take(100) {
            let mut a = BTreeMap::new();
            for id in QuestionId::all().filter(|id| record.is_applicable(*id)) {
                // alternate verdicts, sprinkle invalids
                let v = match (id.get() + record.image_id.len() as u8) % 3 {
                    0 => ParsedAnswer::Invalid,
                    _ => match catalog::question(id).kind {
                        AnswerKind::YesNo => ParsedAnswer::YesNo(id.get() % 2 == 0),
                        AnswerKind::Count => ParsedAnswer::Number(3),
                        AnswerKind::TypeChoice => {
                            ParsedAnswer::TypeChoice(record.diagram_type.unwrap())
                        }
                    },
                };
                a.insert(id, v);
            }
            let findings = derive_findings(
                &a,
                record.diagram_type,
                &record.applicability_flags(),
                &Thresholds::default(),
            )
            .unwrap();
            for f in findings {
                assert_eq!(
                    f.severity == Severity::Unknown,
                    f.verdict == ParsedAnswer::Invalid,
                    "{} q{}",
                    record.image_id,
                    f.question_id
                );
            }
        }
    }

    #[test]
    fn compression_findings_are_low_confidence() {
        let findings = derive_findings(
            &pie_answers(false),
            Some(DiagramType::Pie),
            &ApplicabilityFlags::default(),
            &Thresholds::default(),
        )
        .unwrap();
        let f13 = findings.iter().find(|f| f.question_id == q(13)).unwrap();
        assert!(f13.low_confidence);
        assert!(findings
            .iter()
            .filter(|f| f.question_id != q(13))
            .all(|f| !f.low_confidence));
    }

    #[test]
    fn aggregate_rejects_unknown_images() {
        let records = fixture::evaluation_manifest();
        let report = LintReport {
            schema_version: SCHEMA_VERSION,
            image_id: "ghost".into(),
            diagram_type: Some(DiagramType::Bar),
            strategy: Strategy::Individual,
            model: "m".into(),
            findings: vec![],
        };
        let err = aggregate(&[report], &records, InvalidPolicy::Penalize).unwrap_err();
        assert!(matches!(err, ReportError::MissingGroundTruth(ids) if ids == vec!["ghost"]));
    }

    #[test]
    fn render_json_round_trips() {
        let report = LintReport {
            schema_version: SCHEMA_VERSION,
            image_id: "a".into(),
            diagram_type: Some(DiagramType::Bar),
            strategy: Strategy::Summary,
            model: "m".into(),
            findings: vec![Finding {
                question_id: q(2),
                rule: "unnecessary-3D".into(),
                severity: Severity::Violation,
                verdict: ParsedAnswer::YesNo(true),
                low_confidence: false,
                evidence: vec![RawAnswer::new("Yes.", 0)],
            }],
        };
        let json = report.render(RenderFormat::Json);
        let parsed: LintReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.render(RenderFormat::Json), json);
        assert!(json.contains("\"schema_version\""));

        let empty = LintReport {
            findings: vec![],
            ..report
        };
        assert!(empty
            .render(RenderFormat::Json)
            .contains("\"findings\": []"));
    }

    #[test]
    fn render_markdown_has_metric_columns() {
        let mut questions = BTreeMap::new();
        questions.insert(
            q(2),
            QuestionScores::Classification(ClassificationReport {
                macro_precision: 1.0,
                macro_recall: 0.9714,
                macro_f1: 0.9855,
                accuracy: 0.999,
                balanced_accuracy: 0.9857,
                no_information_rate: 0.9653,
                n: 1010,
                invalid_count: 0,
                invalid_policy: InvalidPolicy::Penalize,
            }),
        );
        let agg = AggregateReport {
            schema_version: SCHEMA_VERSION,
            strategy: Strategy::Individual,
            model: "m".into(),
            questions,
            unscored: BTreeMap::new(),
        };
        let md = agg.render(RenderFormat::Markdown);
        assert!(md.contains("| Precision | Recall | F1-score | Accuracy | Balanced accuracy |"));
        assert!(md.contains("96.53 %"));

        let json = agg.render(RenderFormat::Json);
        let parsed: AggregateReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.render(RenderFormat::Json), json);
    }
}
