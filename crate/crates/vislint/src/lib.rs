//! Guideline-compliance linting and evaluation for scientific diagrams.
//!
//! `vislint` asks a vision-language chat endpoint a fixed catalog of 13
//! questions about a diagram (diagram type, 3D effects, axis labels, tick
//! marks, line/color counts, legends, compression artifacts), parses the
//! free-text replies into structured verdicts, and grades them against
//! data-visualization guidelines. The same machinery doubles as an
//! evaluation harness: run a prompting strategy over an annotated manifest,
//! persist every raw answer, and score the verdicts against ground truth
//! with classification and regression metrics.
//!
//! Modules:
//!
//! - [`catalog`]: diagram types, the 13 questions, applicability rules
//! - [`parse`]: free-text answers into structured verdicts
//! - [`prompt`]: the prompting strategies as conversation scripts
//! - [`client`]: the chat-completions client and the scripted mock backend
//! - [`dataset`]: manifests, stratified sampling, applicability subsets
//! - [`metrics`]: macro classification metrics, regression metrics
//! - [`report`]: findings, per-question aggregates, rendering
//! - [`runner`]: resumable batch runs and offline rescoring

pub mod catalog;
pub mod client;
pub mod dataset;
pub mod metrics;
pub mod parse;
pub mod prompt;
pub mod report;
pub mod runner;

pub use catalog::{
    applicable_questions, consolidate_type, AnswerKind, ApplicabilityFlags, DiagramType,
    GuidelineQuestion, QuestionId,
};
pub use client::{ChatBackend, HttpChatClient, ImagePayload, ModelConfig, ScriptedBackend};
pub use dataset::{
    filter_applicable, load_manifest, stratified_sample, AnnotationRecord, SamplePlan,
};
pub use metrics::{
    classification_report, no_information_rate, regression_report, ClassificationReport,
    RegressionReport,
};
pub use parse::{parse_answer, ParsedAnswer, RawAnswer};
pub use prompt::{answer_spec, build_system_prompt, plan, ConversationScript, Strategy};
pub use report::{derive_findings, Finding, LintReport, Severity, Thresholds};
pub use runner::{run_experiment, RunConfig};
