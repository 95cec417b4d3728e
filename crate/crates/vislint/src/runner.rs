//! Batch orchestration: runs prompting strategies over manifests with
//! bounded parallelism, persists raw answers as resumable JSONL, and rescores
//! persisted answers offline.
//!
//! Every model reply is one JSONL row, uniquely keyed by
//! (image_id, question_id, strategy, model, turn_index). Rows for a question
//! already present in the output file are skipped on rerun, so a completed
//! run triggers zero new backend calls. One image's failure never aborts a
//! run; its questions simply stay unanswered and score as invalid.
//!
//! Workers process images concurrently, but batches are written back in
//! image order by a single writer, so output bytes are deterministic for a
//! deterministic backend.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{self, ApplicabilityFlags, QuestionId};
use crate::client::{ChatBackend, ImagePayload};
use crate::dataset::{self, AnnotationRecord, DatasetError};
use crate::metrics::InvalidPolicy;
use crate::parse::{parse_answer, ParsedAnswer, RawAnswer};
use crate::prompt::{
    execute, ConversationScript, FewShotExemplar, Planner, PromptError, Strategy, Subject,
};
use crate::report::{
    aggregate, derive_findings, AggregateReport, LintReport, ReportError, Thresholds,
    SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("answers line {line}: {message}")]
    BadRow { line: usize, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Settings for one experiment or batch lint run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub model_name: String,
    pub thresholds: Thresholds,
    pub parallelism: usize,
    pub out_dir: PathBuf,
    pub chart_specific: bool,
    pub exemplars: Option<Vec<FewShotExemplar>>,
    pub invalid_policy: InvalidPolicy,
}

impl RunConfig {
    pub fn new(strategy: Strategy, model_name: impl Into<String>, out_dir: PathBuf) -> RunConfig {
        RunConfig {
            strategy,
            model_name: model_name.into(),
            thresholds: Thresholds::default(),
            parallelism: 4,
            out_dir,
            chart_specific: false,
            exemplars: None,
            invalid_policy: InvalidPolicy::Penalize,
        }
    }

    fn planner(&self) -> Planner {
        Planner {
            chart_specific: self.chart_specific,
        }
    }
}

/// One persisted model reply.
///
/// `question_id` is `None` for the introductory turns of the grouped
/// strategy; those rows use the script index as their `turn_index` so that
/// keys stay unique across groups. All other rows use the turn index within
/// their question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRow {
    pub image_id: String,
    pub question_id: Option<QuestionId>,
    pub strategy: Strategy,
    pub model: String,
    pub turn_index: usize,
    pub text: String,
}

type RowKey = (String, Option<u8>, Strategy, String, usize);

fn row_key(row: &AnswerRow) -> RowKey {
    (
        row.image_id.clone(),
        row.question_id.map(QuestionId::get),
        row.strategy,
        row.model.clone(),
        row.turn_index,
    )
}

/// Read a JSONL answers file.
pub fn read_answers(path: &Path) -> Result<Vec<AnswerRow>, RunnerError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: AnswerRow = serde_json::from_str(&line).map_err(|e| RunnerError::BadRow {
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn existing_keys(path: &Path) -> Result<HashSet<RowKey>, RunnerError> {
    if !path.exists() {
        return Ok(HashSet::new());
    }
    Ok(read_answers(path)?.iter().map(row_key).collect())
}

struct Job<'a> {
    record: &'a AnnotationRecord,
    applicable: Vec<QuestionId>,
    missing: BTreeSet<QuestionId>,
}

fn applicable_questions_of(record: &AnnotationRecord) -> Vec<QuestionId> {
    QuestionId::all()
        .filter(|id| record.is_applicable(*id))
        .collect()
}

/// A question is complete once every model turn up to its extraction turn is
/// persisted.
fn question_done(
    existing: &HashSet<RowKey>,
    image_id: &str,
    q: QuestionId,
    strategy: Strategy,
    model: &str,
) -> bool {
    (0..=strategy.extraction_turn()).all(|turn| {
        existing.contains(&(
            image_id.to_string(),
            Some(q.get()),
            strategy,
            model.to_string(),
            turn,
        ))
    })
}

fn subject_for(
    record: &AnnotationRecord,
    image_root: Option<&Path>,
    needs_images: bool,
) -> Result<Subject, String> {
    if !needs_images {
        return Ok(Subject::new(record.image_id.clone(), None));
    }
    let path = if record.path.is_absolute() {
        record.path.clone()
    } else {
        match image_root {
            Some(root) => root.join(&record.path),
            None => record.path.clone(),
        }
    };
    let payload =
        ImagePayload::from_path(&path).map_err(|e| format!("{}: {e}", record.image_id))?;
    Ok(Subject::new(
        record.image_id.clone(),
        Some(Arc::new(payload)),
    ))
}

fn rows_for_script(
    script_index: usize,
    script: &ConversationScript,
    raws: Vec<RawAnswer>,
    record: &AnnotationRecord,
    config: &RunConfig,
) -> Vec<AnswerRow> {
    raws.into_iter()
        .map(|raw| {
            let meta = script.model_turns[raw.turn_index];
            AnswerRow {
                image_id: record.image_id.clone(),
                question_id: meta.question_id,
                strategy: config.strategy,
                model: config.model_name.clone(),
                turn_index: match meta.question_id {
                    Some(_) => meta.turn_in_question,
                    None => script_index,
                },
                text: raw.text,
            }
        })
        .collect()
}

/// Execute one record's scripts, returning the new rows to persist.
/// Backend and image failures degrade to diagnostics, never errors.
fn run_job(
    job: &Job<'_>,
    config: &RunConfig,
    backend: &dyn ChatBackend,
    existing: &HashSet<RowKey>,
    image_root: Option<&Path>,
    diagnostics: &Mutex<Vec<String>>,
) -> Vec<AnswerRow> {
    if job.missing.is_empty() {
        return Vec::new();
    }
    let subject = match subject_for(job.record, image_root, backend.needs_images()) {
        Ok(s) => s,
        Err(message) => {
            diagnostics.lock().unwrap().push(message);
            return Vec::new();
        }
    };
    let scripts = match config.planner().plan(
        config.strategy,
        &job.applicable,
        config.exemplars.as_deref(),
    ) {
        Ok(s) => s,
        Err(e) => {
            diagnostics
                .lock()
                .unwrap()
                .push(format!("{}: {e}", job.record.image_id));
            return Vec::new();
        }
    };

    let mut rows = Vec::new();
    for (script_index, script) in scripts.iter().enumerate() {
        let wanted = script
            .extractions
            .iter()
            .any(|e| job.missing.contains(&e.question_id));
        if !wanted {
            continue;
        }
        match execute(script, backend, &subject) {
            Ok(raws) => {
                for row in rows_for_script(script_index, script, raws, job.record, config) {
                    if !existing.contains(&row_key(&row)) {
                        rows.push(row);
                    }
                }
            }
            Err(e) => {
                // the script's questions stay unanswered and parse as invalid
                diagnostics
                    .lock()
                    .unwrap()
                    .push(format!("{}: {e}", job.record.image_id));
            }
        }
    }
    rows
}

/// Run jobs with bounded parallelism, handing finished row batches to
/// `on_batch` strictly in job order. Returns accumulated diagnostics.
fn execute_jobs(
    jobs: &[Job<'_>],
    config: &RunConfig,
    backend: &dyn ChatBackend,
    existing: &HashSet<RowKey>,
    image_root: Option<&Path>,
    mut on_batch: impl FnMut(Vec<AnswerRow>) -> Result<(), RunnerError>,
) -> Result<Vec<String>, RunnerError> {
    let diagnostics = Mutex::new(Vec::new());
    let next_job = AtomicUsize::new(0);
    let workers = config.parallelism.max(1).min(jobs.len().max(1));

    let mut result = Ok(());
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, Vec<AnswerRow>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let diagnostics = &diagnostics;
            let next_job = &next_job;
            scope.spawn(move || loop {
                let index = next_job.fetch_add(1, Ordering::Relaxed);
                if index >= jobs.len() {
                    break;
                }
                let rows = run_job(
                    &jobs[index],
                    config,
                    backend,
                    existing,
                    image_root,
                    diagnostics,
                );
                if tx.send((index, rows)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // reorder completion-order batches back into job order
        let mut pending: BTreeMap<usize, Vec<AnswerRow>> = BTreeMap::new();
        let mut next_write = 0usize;
        for (index, rows) in rx {
            pending.insert(index, rows);
            while let Some(rows) = pending.remove(&next_write) {
                if let Err(e) = on_batch(rows) {
                    result = Err(e);
                    return;
                }
                next_write += 1;
            }
        }
    });
    result?;
    Ok(diagnostics.into_inner().unwrap())
}

/// Outcome of [`run_experiment`].
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub report: AggregateReport,
    pub answers_path: PathBuf,
    pub report_json_path: PathBuf,
    pub report_markdown_path: PathBuf,
    /// Per-image failures (the run continued past them).
    pub diagnostics: Vec<String>,
    /// Backend completions actually performed (zero on a completed rerun).
    pub new_rows: usize,
}

/// Run one strategy over a manifest: execute scripts with bounded
/// parallelism, persist raw answers to `answers.jsonl` (resuming where
/// possible), parse and score them, and write the aggregate report files.
pub fn run_experiment(
    config: &RunConfig,
    manifest_path: &Path,
    backend: &dyn ChatBackend,
) -> Result<ExperimentOutcome, RunnerError> {
    if config.strategy == Strategy::FewShot
        && config.exemplars.as_deref().is_none_or(|e| e.is_empty())
    {
        return Err(PromptError::MissingExemplars.into());
    }

    let mut records = dataset::load_manifest(manifest_path)?;
    records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let image_root = manifest_path.parent().map(Path::to_path_buf);

    fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
    let answers_path = config.out_dir.join("answers.jsonl");
    let existing = existing_keys(&answers_path)?;

    let jobs: Vec<Job<'_>> = records
        .iter()
        .map(|record| {
            let applicable = applicable_questions_of(record);
            let missing = applicable
                .iter()
                .copied()
                .filter(|q| {
                    !question_done(
                        &existing,
                        &record.image_id,
                        *q,
                        config.strategy,
                        &config.model_name,
                    )
                })
                .collect();
            Job {
                record,
                applicable,
                missing,
            }
        })
        .collect();

    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&answers_path)
        .map_err(io_err(&answers_path))?;
    let mut writer = std::io::BufWriter::new(file);
    let mut new_rows = 0usize;
    let diagnostics = execute_jobs(
        &jobs,
        config,
        backend,
        &existing,
        image_root.as_deref(),
        |rows| {
            for row in rows {
                let line = serde_json::to_string(&row).expect("rows serialize");
                writeln!(writer, "{line}").map_err(io_err(&answers_path))?;
                new_rows += 1;
            }
            writer.flush().map_err(io_err(&answers_path))
        },
    )?;
    drop(writer);

    // score from the persisted file so offline evaluation shares this path
    let rows: Vec<AnswerRow> = read_answers(&answers_path)?
        .into_iter()
        .filter(|r| r.strategy == config.strategy && r.model == config.model_name)
        .collect();
    let reports = lint_reports_for_run(
        config.strategy,
        &config.model_name,
        &rows,
        &records,
        &config.thresholds,
    )?;
    let report = aggregate(&reports, &records, config.invalid_policy)?;

    let report_json_path = config
        .out_dir
        .join(format!("report_{}.json", config.strategy));
    let report_markdown_path = config
        .out_dir
        .join(format!("report_{}.md", config.strategy));
    fs::write(
        &report_json_path,
        report.render(crate::report::RenderFormat::Json),
    )
    .map_err(io_err(&report_json_path))?;
    fs::write(
        &report_markdown_path,
        report.render(crate::report::RenderFormat::Markdown),
    )
    .map_err(io_err(&report_markdown_path))?;

    Ok(ExperimentOutcome {
        report,
        answers_path,
        report_json_path,
        report_markdown_path,
        diagnostics,
        new_rows,
    })
}

/// Rebuild per-image lint reports from persisted rows of one (strategy,
/// model) run.
///
/// Verdicts come from each question's extraction turn; applicable questions
/// with no persisted answer become invalid verdicts. Rows for questions that
/// are not applicable to their record (stale manifests) are ignored.
pub fn lint_reports_for_run(
    strategy: Strategy,
    model: &str,
    rows: &[AnswerRow],
    records: &[AnnotationRecord],
    thresholds: &Thresholds,
) -> Result<Vec<LintReport>, RunnerError> {
    let mut by_image: BTreeMap<&str, Vec<&AnswerRow>> = BTreeMap::new();
    for row in rows {
        by_image.entry(row.image_id.as_str()).or_default().push(row);
    }
    let extraction_turn = strategy.extraction_turn();

    let mut reports = Vec::new();
    for record in records {
        let Some(image_rows) = by_image.get(record.image_id.as_str()) else {
            continue;
        };
        let mut answers: BTreeMap<QuestionId, ParsedAnswer> = BTreeMap::new();
        let mut evidence: BTreeMap<QuestionId, Vec<RawAnswer>> = BTreeMap::new();
        for row in image_rows {
            let Some(q) = row.question_id else { continue };
            if !record.is_applicable(q) {
                continue;
            }
            evidence
                .entry(q)
                .or_default()
                .push(RawAnswer::new(row.text.clone(), row.turn_index));
            if row.turn_index == extraction_turn {
                let raw = RawAnswer::new(row.text.clone(), row.turn_index);
                answers.insert(q, parse_answer(catalog::question(q).kind, &raw));
            }
        }
        for q in applicable_questions_of(record) {
            answers.entry(q).or_insert(ParsedAnswer::Invalid);
        }

        let mut findings = derive_findings(
            &answers,
            record.diagram_type,
            &record.applicability_flags(),
            thresholds,
        )?;
        for finding in &mut findings {
            if let Some(mut raws) = evidence.remove(&finding.question_id) {
                raws.sort_by_key(|r| r.turn_index);
                finding.evidence = raws;
            }
        }
        reports.push(LintReport {
            schema_version: SCHEMA_VERSION,
            image_id: record.image_id.clone(),
            diagram_type: record.diagram_type,
            strategy,
            model: model.to_string(),
            findings,
        });
    }
    Ok(reports)
}

/// Score a persisted answers file against a manifest, one aggregate per
/// (strategy, model) run found in the file.
pub fn score_answers(
    rows: &[AnswerRow],
    records: &[AnnotationRecord],
    thresholds: &Thresholds,
    policy: InvalidPolicy,
) -> Result<Vec<AggregateReport>, RunnerError> {
    let mut runs: BTreeMap<(Strategy, &str), Vec<AnswerRow>> = BTreeMap::new();
    for row in rows {
        runs.entry((row.strategy, row.model.as_str()))
            .or_default()
            .push(row.clone());
    }
    let mut out = Vec::new();
    for ((strategy, model), run_rows) in runs {
        let reports = lint_reports_for_run(strategy, model, &run_rows, records, thresholds)?;
        out.push(aggregate(&reports, records, policy)?);
    }
    Ok(out)
}

/// Lint settings shared by single-image and manifest linting.
#[derive(Debug, Clone)]
pub struct LintConfig {
    pub strategy: Strategy,
    pub model_name: String,
    pub thresholds: Thresholds,
    pub parallelism: usize,
    pub chart_specific: bool,
    pub exemplars: Option<Vec<FewShotExemplar>>,
}

/// Lint a single unannotated image.
///
/// The diagram type question runs first (its verdict decides which questions
/// are applicable at all), then the remaining applicable questions under the
/// chosen strategy, then the legend-group question if the model said a legend
/// exists. Script failures degrade to invalid verdicts.
pub fn lint_image(
    config: &LintConfig,
    image_path: &Path,
    backend: &dyn ChatBackend,
) -> Result<(LintReport, Vec<String>), RunnerError> {
    let image_id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| image_path.display().to_string());
    let payload = if backend.needs_images() {
        Some(Arc::new(
            ImagePayload::from_path(image_path)
                .map_err(|e| RunnerError::Prompt(PromptError::Backend(e)))?,
        ))
    } else {
        None
    };
    let subject = Subject::new(image_id.clone(), payload);
    let planner = Planner {
        chart_specific: config.chart_specific,
    };
    let mut diagnostics = Vec::new();
    let mut answers: BTreeMap<QuestionId, ParsedAnswer> = BTreeMap::new();
    let mut evidence: BTreeMap<QuestionId, Vec<RawAnswer>> = BTreeMap::new();

    let ask = |questions: &[QuestionId],
               strategy: Strategy,
               answers: &mut BTreeMap<QuestionId, ParsedAnswer>,
               evidence: &mut BTreeMap<QuestionId, Vec<RawAnswer>>,
               diagnostics: &mut Vec<String>|
     -> Result<(), RunnerError> {
        let scripts = planner.plan(strategy, questions, config.exemplars.as_deref())?;
        for script in &scripts {
            match execute(script, backend, &subject) {
                Ok(raws) => {
                    for extraction in &script.extractions {
                        let raw = &raws[extraction.model_turn];
                        let kind = catalog::question(extraction.question_id).kind;
                        answers.insert(extraction.question_id, parse_answer(kind, raw));
                    }
                    for raw in raws {
                        if let Some(q) = script.model_turns[raw.turn_index].question_id {
                            evidence.entry(q).or_default().push(raw);
                        }
                    }
                }
                Err(e) => {
                    diagnostics.push(format!("{image_id}: {e}"));
                    for extraction in &script.extractions {
                        answers.insert(extraction.question_id, ParsedAnswer::Invalid);
                    }
                }
            }
        }
        Ok(())
    };

    // stage 1: diagram type
    let q1 = QuestionId::new(1).expect("1 is valid");
    ask(
        &[q1],
        Strategy::Individual,
        &mut answers,
        &mut evidence,
        &mut diagnostics,
    )?;
    let diagram_type = match answers.get(&q1) {
        Some(ParsedAnswer::TypeChoice(t)) => Some(*t),
        _ => None,
    };

    // stage 2: everything else that is applicable, except the legend-group
    // question which depends on the legend verdict
    let flags = ApplicabilityFlags::default();
    let stage2: Vec<QuestionId> = match diagram_type {
        Some(ty) => catalog::applicable_questions(ty, &flags)
            .into_iter()
            .filter(|q| q.get() != 1 && q.get() != 12)
            .collect(),
        None => [2u8, 11, 13]
            .iter()
            .map(|&n| QuestionId::new(n).expect("valid"))
            .collect(),
    };
    ask(
        &stage2,
        config.strategy,
        &mut answers,
        &mut evidence,
        &mut diagnostics,
    )?;

    // stage 3: legend groups, if the model saw a legend
    let q11 = QuestionId::new(11).expect("11 is valid");
    let q12 = QuestionId::new(12).expect("12 is valid");
    if answers.get(&q11) == Some(&ParsedAnswer::YesNo(true)) {
        ask(
            &[q12],
            config.strategy,
            &mut answers,
            &mut evidence,
            &mut diagnostics,
        )?;
    }

    let mut findings = derive_findings(
        &answers,
        diagram_type,
        &ApplicabilityFlags::default(),
        &config.thresholds,
    )?;
    for finding in &mut findings {
        if let Some(mut raws) = evidence.remove(&finding.question_id) {
            raws.sort_by_key(|r| r.turn_index);
            finding.evidence = raws;
        }
    }
    Ok((
        LintReport {
            schema_version: SCHEMA_VERSION,
            image_id,
            diagram_type,
            strategy: config.strategy,
            model: config.model_name.clone(),
            findings,
        },
        diagnostics,
    ))
}

/// Lint every record of a manifest (applicability from ground truth), in
/// memory, with bounded parallelism.
pub fn lint_manifest(
    config: &LintConfig,
    manifest_path: &Path,
    backend: &dyn ChatBackend,
) -> Result<(Vec<LintReport>, Vec<String>), RunnerError> {
    let run = RunConfig {
        strategy: config.strategy,
        model_name: config.model_name.clone(),
        thresholds: config.thresholds,
        parallelism: config.parallelism,
        out_dir: PathBuf::new(),
        chart_specific: config.chart_specific,
        exemplars: config.exemplars.clone(),
        invalid_policy: InvalidPolicy::Penalize,
    };
    let mut records = dataset::load_manifest(manifest_path)?;
    records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let image_root = manifest_path.parent().map(Path::to_path_buf);

    let jobs: Vec<Job<'_>> = records
        .iter()
        .map(|record| {
            let applicable = applicable_questions_of(record);
            Job {
                record,
                missing: applicable.iter().copied().collect(),
                applicable,
            }
        })
        .collect();

    let mut rows = Vec::new();
    let existing = HashSet::new();
    let diagnostics = execute_jobs(
        &jobs,
        &run,
        backend,
        &existing,
        image_root.as_deref(),
        |batch| {
            rows.extend(batch);
            Ok(())
        },
    )?;
    let reports = lint_reports_for_run(
        config.strategy,
        &config.model_name,
        &rows,
        &records,
        &config.thresholds,
    )?;
    Ok((reports, diagnostics))
}
