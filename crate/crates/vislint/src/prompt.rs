//! The prompting strategies: deterministic multi-turn conversation plans and
//! their execution against a chat backend.
//!
//! Five zero-shot strategies are supported, plus a few-shot variant of the
//! individual-question strategy. A [`ConversationScript`] is a pure data
//! plan; [`execute`] drives a [`ChatBackend`] through it turn by turn,
//! appending every model reply to the context before the next user turn.
//! Scripts and execution are fully deterministic given a deterministic
//! backend.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{self, AnswerKind, QuestionId};
use crate::client::{ChatBackend, ChatMessage, ClientError, ImagePayload, Role, TurnContext};
use crate::parse::RawAnswer;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("few-shot strategy requires exemplars")]
    MissingExemplars,
    #[error("cannot plan a conversation over zero questions")]
    EmptyQuestions,
    #[error("script attaches the subject image but none was provided")]
    MissingSubjectImage,
    #[error(transparent)]
    Backend(#[from] ClientError),
}

/// What, if anything, a turn attaches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Attachment {
    /// Text only.
    None,
    /// The image under analysis. At most one turn per conversation carries it.
    Subject,
    /// A few-shot exemplar image loaded from disk.
    File(PathBuf),
}

/// One scripted turn. Assistant turns are canned few-shot replies, not model
/// calls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub attachment: Attachment,
}

impl Turn {
    fn system(text: impl Into<String>) -> Turn {
        Turn {
            role: Role::System,
            text: text.into(),
            attachment: Attachment::None,
        }
    }

    fn user(text: impl Into<String>, attachment: Attachment) -> Turn {
        Turn {
            role: Role::User,
            text: text.into(),
            attachment,
        }
    }

    fn assistant(text: impl Into<String>) -> Turn {
        Turn {
            role: Role::Assistant,
            text: text.into(),
            attachment: Attachment::None,
        }
    }
}

/// Metadata for one expected model reply: which question it belongs to (none
/// for introductory turns) and its index within that question's turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelTurn {
    pub question_id: Option<QuestionId>,
    pub turn_in_question: usize,
}

/// Which model turn to parse for a question's verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub question_id: QuestionId,
    /// Index into the script's model turns.
    pub model_turn: usize,
}

/// A turn-by-turn conversation plan for one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationScript {
    pub turns: Vec<Turn>,
    pub model_turns: Vec<ModelTurn>,
    pub extractions: Vec<Extraction>,
}

impl ConversationScript {
    pub fn expected_model_turns(&self) -> usize {
        self.model_turns.len()
    }

    /// Number of user turns the script sends (few-shot exemplar turns included).
    pub fn user_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.role == Role::User).count()
    }
}

/// The prompting strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Each question in its own conversation.
    Individual,
    /// All questions in one shared conversation, catalog order.
    Context,
    /// Ask, challenge ("Are you sure?"), then request a final answer.
    Elaborate,
    /// Ask without an answer-type constraint, then ask for a constrained summary.
    Summary,
    /// Grouped questions, each group opened by a descriptive prompt.
    #[serde(rename = "intro")]
    IntroductionQuestion,
    /// Individual structure with exemplar turns prepended.
    #[serde(rename = "fewshot")]
    FewShot,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Individual,
        Strategy::Context,
        Strategy::Elaborate,
        Strategy::Summary,
        Strategy::IntroductionQuestion,
        Strategy::FewShot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Individual => "individual",
            Strategy::Context => "context",
            Strategy::Elaborate => "elaborate",
            Strategy::Summary => "summary",
            Strategy::IntroductionQuestion => "intro",
            Strategy::FewShot => "fewshot",
        }
    }

    /// Index of the model turn carrying a question's final answer.
    pub fn extraction_turn(self) -> usize {
        match self {
            Strategy::Individual
            | Strategy::Context
            | Strategy::IntroductionQuestion
            | Strategy::FewShot => 0,
            Strategy::Summary => 1,
            Strategy::Elaborate => 2,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Strategy, String> {
        Strategy::ALL
            .iter()
            .copied()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}; expected one of individual|context|elaborate|summary|intro|fewshot"))
    }
}

/// A worked example for the few-shot strategy: an image and the ideal answer
/// to one question about it. Supplied via a JSON config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExemplar {
    pub question_id: QuestionId,
    pub image: PathBuf,
    pub answer: String,
}

const SYSTEM_PROMPT: &str = "You are a helpful assistant specializing in scientific \
visualization. Your task is to help researchers assess and improve plots in their \
scientific papers.";

/// The system prompt, or the empty string in chart-specific mode (models that
/// do not support system prompts get the question and answer specification as
/// a plain user turn instead).
pub fn build_system_prompt(chart_specific_mode: bool) -> &'static str {
    if chart_specific_mode {
        ""
    } else {
        SYSTEM_PROMPT
    }
}

/// The answer-type specification appended to questions so replies can be
/// parsed mechanically.
pub fn answer_spec(kind: AnswerKind) -> &'static str {
    match kind {
        AnswerKind::YesNo => "Please answer the question with a single \"yes\" or \"no\".",
        AnswerKind::Count => {
            "Please answer the question with a single whole number (e.g. 1, 2, or 3)."
        }
        AnswerKind::TypeChoice => "Please answer the question with one of the given options only.",
    }
}

const ELABORATE_CHALLENGE: &str = "Are you sure? Please elaborate on your answer.";
const ELABORATE_FINAL: &str = "Please give your final answer. ";
const SUMMARY_REQUEST: &str = "Please summarize your answer. ";

/// Question groups for the introduction-question strategy, with the
/// descriptive prompt that opens each group's conversation.
const INTRO_GROUPS: [(&[u8], &str); 6] = [
    (
        &[1, 2],
        "Please describe the diagram type and any 3D effects.",
    ),
    (&[3, 4, 5], "Please describe the axes and their labels."),
    (
        &[6, 7, 8],
        "Please describe the axes, tick marks and tick labels of the diagram.",
    ),
    (
        &[9, 10],
        "Please describe the lines and colors used in the diagram.",
    ),
    (&[11, 12], "Please describe the legend of the diagram."),
    (&[13], "Please describe the overall image quality."),
];

/// Builds conversation scripts. `chart_specific` drops the system turn and is
/// meant for models that do not accept system prompts.
#[derive(Debug, Clone, Copy, Default)]
pub struct Planner {
    pub chart_specific: bool,
}

impl Planner {
    fn question_text(&self, id: QuestionId) -> String {
        let q = catalog::question(id);
        format!("{} {}", q.text, answer_spec(q.kind))
    }

    fn base_turns(&self) -> Vec<Turn> {
        if self.chart_specific {
            Vec::new()
        } else {
            vec![Turn::system(build_system_prompt(false))]
        }
    }

    /// Build the scripts for a strategy over an ordered question list.
    ///
    /// Exemplars must be present exactly when the strategy is few-shot.
    pub fn plan(
        &self,
        strategy: Strategy,
        questions: &[QuestionId],
        exemplars: Option<&[FewShotExemplar]>,
    ) -> Result<Vec<ConversationScript>, PromptError> {
        if questions.is_empty() {
            return Err(PromptError::EmptyQuestions);
        }
        let scripts = match strategy {
            Strategy::Individual => questions
                .iter()
                .map(|&q| self.single_question(q, &[]))
                .collect(),
            Strategy::FewShot => {
                let exemplars = match exemplars {
                    Some(e) if !e.is_empty() => e,
                    _ => return Err(PromptError::MissingExemplars),
                };
                questions
                    .iter()
                    .map(|&q| self.single_question(q, exemplars))
                    .collect()
            }
            Strategy::Context => vec![self.context_script(questions)],
            Strategy::Elaborate => questions.iter().map(|&q| self.elaborate(q)).collect(),
            Strategy::Summary => questions.iter().map(|&q| self.summary(q)).collect(),
            Strategy::IntroductionQuestion => self.intro_scripts(questions),
        };
        Ok(scripts)
    }

    fn single_question(&self, q: QuestionId, exemplars: &[FewShotExemplar]) -> ConversationScript {
        let mut turns = self.base_turns();
        for ex in exemplars.iter().filter(|e| e.question_id == q) {
            turns.push(Turn::user(
                self.question_text(q),
                Attachment::File(ex.image.clone()),
            ));
            turns.push(Turn::assistant(ex.answer.clone()));
        }
        turns.push(Turn::user(self.question_text(q), Attachment::Subject));
        ConversationScript {
            turns,
            model_turns: vec![ModelTurn {
                question_id: Some(q),
                turn_in_question: 0,
            }],
            extractions: vec![Extraction {
                question_id: q,
                model_turn: 0,
            }],
        }
    }

    fn context_script(&self, questions: &[QuestionId]) -> ConversationScript {
        let mut turns = self.base_turns();
        let mut model_turns = Vec::new();
        let mut extractions = Vec::new();
        for (i, &q) in questions.iter().enumerate() {
            // the subject image rides on the first user turn only
            let attachment = if i == 0 {
                Attachment::Subject
            } else {
                Attachment::None
            };
            turns.push(Turn::user(self.question_text(q), attachment));
            model_turns.push(ModelTurn {
                question_id: Some(q),
                turn_in_question: 0,
            });
            extractions.push(Extraction {
                question_id: q,
                model_turn: i,
            });
        }
        ConversationScript {
            turns,
            model_turns,
            extractions,
        }
    }

    fn elaborate(&self, q: QuestionId) -> ConversationScript {
        let spec = answer_spec(catalog::question(q).kind);
        let mut turns = self.base_turns();
        turns.push(Turn::user(self.question_text(q), Attachment::Subject));
        turns.push(Turn::user(ELABORATE_CHALLENGE, Attachment::None));
        turns.push(Turn::user(
            format!("{ELABORATE_FINAL}{spec}"),
            Attachment::None,
        ));
        ConversationScript {
            turns,
            model_turns: (0..3)
                .map(|i| ModelTurn {
                    question_id: Some(q),
                    turn_in_question: i,
                })
                .collect(),
            extractions: vec![Extraction {
                question_id: q,
                model_turn: 2,
            }],
        }
    }

    fn summary(&self, q: QuestionId) -> ConversationScript {
        let question = catalog::question(q);
        let mut turns = self.base_turns();
        // first ask without constraining the answer shape
        turns.push(Turn::user(question.text, Attachment::Subject));
        turns.push(Turn::user(
            format!("{SUMMARY_REQUEST}{}", answer_spec(question.kind)),
            Attachment::None,
        ));
        ConversationScript {
            turns,
            model_turns: (0..2)
                .map(|i| ModelTurn {
                    question_id: Some(q),
                    turn_in_question: i,
                })
                .collect(),
            extractions: vec![Extraction {
                question_id: q,
                model_turn: 1,
            }],
        }
    }

    fn intro_scripts(&self, questions: &[QuestionId]) -> Vec<ConversationScript> {
        let mut scripts = Vec::new();
        for (members, intro) in INTRO_GROUPS {
            let group: Vec<QuestionId> = questions
                .iter()
                .copied()
                .filter(|q| members.contains(&q.get()))
                .collect();
            if group.is_empty() {
                continue;
            }
            let mut turns = self.base_turns();
            turns.push(Turn::user(intro, Attachment::Subject));
            let mut model_turns = vec![ModelTurn {
                question_id: None,
                turn_in_question: 0,
            }];
            let mut extractions = Vec::new();
            for &q in &group {
                turns.push(Turn::user(self.question_text(q), Attachment::None));
                extractions.push(Extraction {
                    question_id: q,
                    model_turn: model_turns.len(),
                });
                model_turns.push(ModelTurn {
                    question_id: Some(q),
                    turn_in_question: 0,
                });
            }
            scripts.push(ConversationScript {
                turns,
                model_turns,
                extractions,
            });
        }
        scripts
    }
}

/// Plan with the default (system-prompt) configuration.
pub fn plan(
    strategy: Strategy,
    questions: &[QuestionId],
    exemplars: Option<&[FewShotExemplar]>,
) -> Result<Vec<ConversationScript>, PromptError> {
    Planner::default().plan(strategy, questions, exemplars)
}

/// The image a conversation is about. The payload may be absent when the
/// backend answers without looking at pixels.
#[derive(Debug, Clone)]
pub struct Subject {
    pub image_id: String,
    pub payload: Option<Arc<ImagePayload>>,
}

impl Subject {
    pub fn new(image_id: impl Into<String>, payload: Option<Arc<ImagePayload>>) -> Subject {
        Subject {
            image_id: image_id.into(),
            payload,
        }
    }
}

/// Drive a backend through a script.
///
/// Turns are sent strictly in order; every model reply is appended to the
/// conversation before the next user turn goes out. Returns all model replies
/// with their model-turn indices; callers parse only the extraction turns. A
/// backend failure aborts the whole script.
pub fn execute(
    script: &ConversationScript,
    backend: &dyn ChatBackend,
    subject: &Subject,
) -> Result<Vec<RawAnswer>, PromptError> {
    let needs_images = backend.needs_images();
    let mut conversation: Vec<ChatMessage> = Vec::with_capacity(script.turns.len() * 2);
    let mut answers = Vec::with_capacity(script.model_turns.len());
    let mut model_turn = 0usize;

    for (i, turn) in script.turns.iter().enumerate() {
        let image = match &turn.attachment {
            Attachment::None => None,
            _ if !needs_images => None,
            Attachment::Subject => Some(
                subject
                    .payload
                    .clone()
                    .ok_or(PromptError::MissingSubjectImage)?,
            ),
            Attachment::File(path) => Some(Arc::new(ImagePayload::from_path(path)?)),
        };
        conversation.push(ChatMessage {
            role: turn.role,
            text: turn.text.clone(),
            image,
        });

        // a user turn elicits a reply unless the script supplies one (few-shot)
        let scripted_reply_follows =
            matches!(script.turns.get(i + 1), Some(t) if t.role == Role::Assistant);
        if turn.role == Role::User && !scripted_reply_follows {
            let meta = script.model_turns[model_turn];
            let ctx = TurnContext {
                image_id: &subject.image_id,
                question_id: meta.question_id,
                turn_index: meta.turn_in_question,
            };
            let reply = backend.complete(&conversation, &ctx)?;
            answers.push(RawAnswer::new(reply.clone(), model_turn));
            conversation.push(ChatMessage {
                role: Role::Assistant,
                text: reply,
                image: None,
            });
            model_turn += 1;
        }
    }

    debug_assert_eq!(model_turn, script.model_turns.len());
    Ok(answers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::ScriptedBackend;

    fn q(n: u8) -> QuestionId {
        QuestionId::new(n).unwrap()
    }

    fn all_questions() -> Vec<QuestionId> {
        QuestionId::all().collect()
    }

    fn subject() -> Subject {
        Subject::new("img1", None)
    }

    #[test]
    fn system_prompt_modes() {
        let p = build_system_prompt(false);
        assert!(
            p.starts_with("You are a helpful assistant specializing in scientific visualization.")
        );
        assert!(p.ends_with("assess and improve plots in their scientific papers."));
        assert_eq!(build_system_prompt(true), "");
        assert_eq!(build_system_prompt(false), build_system_prompt(false));
    }

    #[test]
    fn answer_specs_verbatim() {
        assert_eq!(
            answer_spec(AnswerKind::YesNo),
            "Please answer the question with a single \"yes\" or \"no\"."
        );
        assert_eq!(
            answer_spec(AnswerKind::Count),
            "Please answer the question with a single whole number (e.g. 1, 2, or 3)."
        );
        assert_eq!(
            answer_spec(AnswerKind::TypeChoice),
            "Please answer the question with one of the given options only."
        );
    }

    #[test]
    fn individual_plan_shape() {
        let scripts = plan(Strategy::Individual, &[q(2)], None).unwrap();
        assert_eq!(scripts.len(), 1);
        let s = &scripts[0];
        assert_eq!(s.expected_model_turns(), 1);
        assert_eq!(
            s.extractions,
            vec![Extraction {
                question_id: q(2),
                model_turn: 0
            }]
        );
        assert_eq!(s.turns[0].role, Role::System);
        assert_eq!(s.turns[1].attachment, Attachment::Subject);
        assert!(s.turns[1].text.contains("3D effect"));
        assert!(s.turns[1].text.ends_with("\"yes\" or \"no\"."));
    }

    #[test]
    fn elaborate_plan_shape() {
        let scripts = plan(Strategy::Elaborate, &[q(3)], None).unwrap();
        assert_eq!(scripts.len(), 1);
        let s = &scripts[0];
        assert_eq!(s.expected_model_turns(), 3);
        assert_eq!(s.extractions[0].model_turn, 2);
        assert_eq!(
            s.turns[2].text,
            "Are you sure? Please elaborate on your answer."
        );
        assert!(s.turns[3]
            .text
            .starts_with("Please give your final answer."));
    }

    #[test]
    fn summary_plan_shape() {
        let scripts = plan(Strategy::Summary, &[q(9)], None).unwrap();
        let s = &scripts[0];
        assert_eq!(s.expected_model_turns(), 2);
        assert_eq!(s.extractions[0].model_turn, 1);
        // first turn is the bare question, no answer spec
        assert_eq!(s.turns[1].text, catalog::question(q(9)).text);
        assert!(s.turns[2].text.starts_with("Please summarize your answer."));
        assert!(s.turns[2].text.contains("whole number"));
    }

    #[test]
    fn context_plan_attaches_image_once() {
        let scripts = plan(Strategy::Context, &all_questions(), None).unwrap();
        assert_eq!(scripts.len(), 1);
        let s = &scripts[0];
        assert_eq!(s.expected_model_turns(), 13);
        let subject_turns = s
            .turns
            .iter()
            .filter(|t| t.attachment == Attachment::Subject)
            .count();
        assert_eq!(subject_turns, 1);
        let extraction_turns: Vec<usize> = s.extractions.iter().map(|e| e.model_turn).collect();
        assert_eq!(extraction_turns, (0..13).collect::<Vec<_>>());
    }

    #[test]
    fn intro_plan_groups() {
        let scripts = plan(Strategy::IntroductionQuestion, &all_questions(), None).unwrap();
        assert_eq!(scripts.len(), 6);
        let total_model_turns: usize = scripts.iter().map(|s| s.expected_model_turns()).sum();
        assert_eq!(total_model_turns, 19);
        assert!(scripts[2].turns[1]
            .text
            .contains("Please describe the axes, tick marks and tick labels of the diagram."));
        // intro reply belongs to no question
        assert_eq!(scripts[0].model_turns[0].question_id, None);
        // partial catalogs keep only the groups that still have members
        let partial = plan(Strategy::IntroductionQuestion, &[q(4), q(13)], None).unwrap();
        assert_eq!(partial.len(), 2);
    }

    #[test]
    fn turn_count_table() {
        let qs = all_questions();
        let counts: Vec<(Strategy, usize, usize)> = [
            (Strategy::Individual, None),
            (Strategy::Context, None),
            (Strategy::Elaborate, None),
            (Strategy::Summary, None),
            (Strategy::IntroductionQuestion, None),
        ]
        .iter()
        .map(|(st, ex): &(Strategy, Option<Vec<FewShotExemplar>>)| {
            let scripts = plan(*st, &qs, ex.as_deref()).unwrap();
            let turns = scripts.iter().map(|s| s.expected_model_turns()).sum();
            (*st, scripts.len(), turns)
        })
        .collect();
        assert_eq!(
            counts,
            vec![
                (Strategy::Individual, 13, 13),
                (Strategy::Context, 1, 13),
                (Strategy::Elaborate, 13, 39),
                (Strategy::Summary, 13, 26),
                (Strategy::IntroductionQuestion, 6, 19),
            ]
        );
    }

    #[test]
    fn fewshot_requires_exemplars() {
        assert!(matches!(
            plan(Strategy::FewShot, &[q(2)], None),
            Err(PromptError::MissingExemplars)
        ));
        let exemplars = vec![FewShotExemplar {
            question_id: q(2),
            image: PathBuf::from("shots/3d.png"),
            answer: "yes".into(),
        }];
        let scripts = plan(Strategy::FewShot, &[q(2)], Some(&exemplars)).unwrap();
        let s = &scripts[0];
        // system, exemplar user, exemplar assistant, real question
        assert_eq!(s.turns.len(), 4);
        assert_eq!(s.turns[2].role, Role::Assistant);
        assert_eq!(s.turns[3].attachment, Attachment::Subject);
        assert_eq!(s.expected_model_turns(), 1);
        // only one turn carries the subject image even with exemplars present
        assert_eq!(
            s.turns
                .iter()
                .filter(|t| t.attachment == Attachment::Subject)
                .count(),
            1
        );
    }

    #[test]
    fn chart_specific_mode_drops_system_turn() {
        let planner = Planner {
            chart_specific: true,
        };
        let scripts = planner.plan(Strategy::Individual, &[q(2)], None).unwrap();
        assert_eq!(scripts[0].turns.len(), 1);
        assert_eq!(scripts[0].turns[0].role, Role::User);
    }

    #[test]
    fn empty_question_list_rejected() {
        assert!(matches!(
            plan(Strategy::Individual, &[], None),
            Err(PromptError::EmptyQuestions)
        ));
    }

    #[test]
    fn execute_individual_pass_through() {
        let mut backend = ScriptedBackend::new("n/a");
        backend.insert("img1", Some(q(2)), 0, "Yes.");
        let scripts = plan(Strategy::Individual, &[q(2)], None).unwrap();
        let answers = execute(&scripts[0], &backend, &subject()).unwrap();
        assert_eq!(answers, vec![RawAnswer::new("Yes.", 0)]);
    }

    #[test]
    fn execute_elaborate_collects_all_turns() {
        let mut backend = ScriptedBackend::new("n/a");
        backend.insert("img1", Some(q(3)), 0, "Yes.");
        backend.insert(
            "img1",
            Some(q(3)),
            1,
            "On inspection the y-axis lacks a label.",
        );
        backend.insert("img1", Some(q(3)), 2, "no");
        let scripts = plan(Strategy::Elaborate, &[q(3)], None).unwrap();
        let answers = execute(&scripts[0], &backend, &subject()).unwrap();
        assert_eq!(answers.len(), 3);
        let extraction = scripts[0].extractions[0].model_turn;
        assert_eq!(answers[extraction].text, "no");
    }

    #[test]
    fn execute_is_deterministic_and_conserves_turns() {
        let backend = ScriptedBackend::new("2");
        for strategy in [
            Strategy::Individual,
            Strategy::Context,
            Strategy::Elaborate,
            Strategy::Summary,
            Strategy::IntroductionQuestion,
        ] {
            let scripts = plan(strategy, &all_questions(), None).unwrap();
            let before = backend.calls();
            let mut first_run = Vec::new();
            for s in &scripts {
                first_run.push(execute(s, &backend, &subject()).unwrap());
            }
            let calls_used = backend.calls() - before;
            let planned: usize = scripts.iter().map(|s| s.expected_model_turns()).sum();
            assert_eq!(calls_used, planned, "{strategy}: call count vs plan");

            let mut second_run = Vec::new();
            for s in &scripts {
                second_run.push(execute(s, &backend, &subject()).unwrap());
            }
            assert_eq!(first_run, second_run, "{strategy}: replay identical");
        }
    }

    #[test]
    fn user_turn_conservation() {
        use std::sync::atomic::{AtomicUsize, Ordering};

        // records how many user messages each completed conversation held
        struct Recording {
            user_turns_seen: AtomicUsize,
        }
        impl ChatBackend for Recording {
            fn complete(
                &self,
                messages: &[ChatMessage],
                _c: &TurnContext<'_>,
            ) -> Result<String, ClientError> {
                let users = messages.iter().filter(|m| m.role == Role::User).count();
                self.user_turns_seen.store(users, Ordering::Relaxed);
                Ok("ok".into())
            }
            fn needs_images(&self) -> bool {
                false
            }
        }

        let exemplars = vec![FewShotExemplar {
            question_id: q(5),
            image: PathBuf::from("shots/axis.png"),
            answer: "yes".into(),
        }];
        for (strategy, ex) in [
            (Strategy::Individual, None),
            (Strategy::Context, None),
            (Strategy::Elaborate, None),
            (Strategy::Summary, None),
            (Strategy::IntroductionQuestion, None),
            (Strategy::FewShot, Some(exemplars.as_slice())),
        ] {
            let scripts = plan(strategy, &all_questions(), ex).unwrap();
            for script in &scripts {
                let backend = Recording {
                    user_turns_seen: AtomicUsize::new(0),
                };
                execute(script, &backend, &subject()).unwrap();
                // by the last model call the whole script's user turns are in context
                assert_eq!(
                    backend.user_turns_seen.load(Ordering::Relaxed),
                    script.user_turns(),
                    "{strategy}: user turns sent vs planned"
                );
            }
        }
    }

    #[test]
    fn backend_failure_aborts_script() {
        struct FailingBackend;
        impl ChatBackend for FailingBackend {
            fn complete(
                &self,
                _m: &[ChatMessage],
                _c: &TurnContext<'_>,
            ) -> Result<String, ClientError> {
                Err(ClientError::Backend("unreachable".into()))
            }
            fn needs_images(&self) -> bool {
                false
            }
        }
        let scripts = plan(Strategy::Elaborate, &[q(3)], None).unwrap();
        assert!(matches!(
            execute(&scripts[0], &FailingBackend, &subject()),
            Err(PromptError::Backend(ClientError::Backend(_)))
        ));
    }

    #[test]
    fn live_backend_requires_subject_payload() {
        struct Hungry;
        impl ChatBackend for Hungry {
            fn complete(
                &self,
                _m: &[ChatMessage],
                _c: &TurnContext<'_>,
            ) -> Result<String, ClientError> {
                Ok("ok".into())
            }
        }
        let scripts = plan(Strategy::Individual, &[q(2)], None).unwrap();
        assert!(matches!(
            execute(&scripts[0], &Hungry, &subject()),
            Err(PromptError::MissingSubjectImage)
        ));
    }

    #[test]
    fn strategy_round_trips_through_strings() {
        for st in Strategy::ALL {
            assert_eq!(st.as_str().parse::<Strategy>().unwrap(), st);
            let json = serde_json::to_string(&st).unwrap();
            assert_eq!(json, format!("\"{}\"", st.as_str()));
            assert_eq!(serde_json::from_str::<Strategy>(&json).unwrap(), st);
        }
    }
}
