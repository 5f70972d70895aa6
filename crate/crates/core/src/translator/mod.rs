//! Natural-language front end: few-shot prompts, completion backends and
//! the bounded generate/validate/correct loop.

mod backend;
mod mock;
mod prompt;

pub use backend::{BackendError, CompletionBackend, RemoteBackend, ScriptedBackend, API_KEY_ENV};
pub use mock::MockBackend;
pub use prompt::{
    build_prompt, Example, FeedbackExample, Operation, PromptRecord, PromptStore, SharedPromptStore, FEEDBACK_CAP,
};

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::engine::RuleType;
use crate::intent::{
    extract_json_body, format_errors_for_regeneration, parse_intent_document, parse_parameter_patch, IntentDocument,
    ParameterPatch, ValidationError,
};

/// Regeneration rounds after the first call.
pub const MAX_RETRIES: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranslatorError {
    #[error("{0}")]
    BackendUnavailable(String),
    #[error("output still invalid after {calls} calls")]
    StillInvalidAfterRetries {
        errors: Vec<ValidationError>,
        /// Last backend output, verbatim.
        raw: String,
        calls: usize,
    },
    #[error("`{answer}` is not a rule type")]
    UnrecognizedRuleType { answer: String, calls: usize },
    #[error("the backend produced no rule descriptions")]
    EmptySequence,
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("invalid correction: {0}")]
    InvalidCorrection(String),
    #[error("empty input")]
    EmptyInput,
    #[error("prompt store i/o: {0}")]
    Io(String),
}

impl From<BackendError> for TranslatorError {
    fn from(e: BackendError) -> Self {
        TranslatorError::BackendUnavailable(e.to_string())
    }
}

/// Catalog names offered to the backend alongside the user text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub ingredients: Vec<String>,
    pub skeletons: Vec<String>,
}

impl Vocabulary {
    fn payload(&self, text: &str) -> String {
        let mut out = text.trim().to_string();
        if !self.ingredients.is_empty() {
            out.push_str(&format!("\nAvailable ingredients: {}", self.ingredients.join(", ")));
        }
        if !self.skeletons.is_empty() {
            out.push_str(&format!("\nAvailable skeletons: {}", self.skeletons.join(", ")));
        }
        out
    }
}

/// A translated value with the backend text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated<T> {
    pub value: T,
    /// Accepted backend output with code fences removed.
    pub raw: String,
    /// Backend calls spent.
    pub calls: usize,
}

fn correction_loop<T>(
    op: Operation,
    payload: &str,
    store: &PromptStore,
    backend: &dyn CompletionBackend,
    parse: fn(&str) -> Result<T, Vec<ValidationError>>,
) -> Result<Generated<T>, TranslatorError> {
    let base = store.build(op, payload);
    let mut prompt = base.clone();
    let mut calls = 0;
    loop {
        calls += 1;
        let raw = backend.complete(&prompt)?;
        match parse(&raw) {
            Ok(value) => {
                return Ok(Generated {
                    value,
                    raw: extract_json_body(&raw).to_string(),
                    calls,
                })
            }
            Err(errors) if calls > MAX_RETRIES => return Err(TranslatorError::StillInvalidAfterRetries { errors, raw, calls }),
            Err(errors) => {
                prompt = format!(
                    "{base}\n# Previous output\n{}\n\n# Errors\n{}\nReturn the corrected JSON object only.\n",
                    raw.trim(),
                    format_errors_for_regeneration(&errors)
                );
            }
        }
    }
}

fn non_empty(text: &str) -> Result<(), TranslatorError> {
    if text.trim().is_empty() {
        Err(TranslatorError::EmptyInput)
    } else {
        Ok(())
    }
}

/// Translate one user turn into a validated intent document.
pub fn generate_intent(
    user_text: &str,
    vocabulary: &Vocabulary,
    store: &PromptStore,
    backend: &dyn CompletionBackend,
) -> Result<Generated<IntentDocument>, TranslatorError> {
    non_empty(user_text)?;
    correction_loop(Operation::CodeGeneration, &vocabulary.payload(user_text), store, backend, parse_intent_document)
}

/// Translate a parameter description into a validated patch.
pub fn adjust_parameters(
    description: &str,
    store: &PromptStore,
    backend: &dyn CompletionBackend,
) -> Result<Generated<ParameterPatch>, TranslatorError> {
    non_empty(description)?;
    correction_loop(Operation::ParameterAdjustment, description, store, backend, parse_parameter_patch)
}

/// Rule type named by a backend answer. Exact names (any case or
/// punctuation) win; otherwise the longest name found in the text.
pub fn match_rule_type(answer: &str) -> Option<RuleType> {
    if let Some(t) = RuleType::parse(answer) {
        return Some(t);
    }
    if let Some(t) = answer.lines().find_map(RuleType::parse) {
        return Some(t);
    }
    let squash = |s: &str| -> String { s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase() };
    let text = squash(answer);
    let mut names: Vec<RuleType> = RuleType::ALL.to_vec();
    names.sort_by_key(|t| std::cmp::Reverse(t.as_str().len()));
    names.into_iter().find(|t| text.contains(&squash(t.as_str())))
}

/// Classify a rule description. An unrecognized answer gets one clarifying
/// retry listing the legal names.
pub fn extract_rule_type(
    description: &str,
    store: &PromptStore,
    backend: &dyn CompletionBackend,
) -> Result<Generated<RuleType>, TranslatorError> {
    non_empty(description)?;
    let base = store.build(Operation::RuleExtraction, description);
    let first = backend.complete(&base)?;
    if let Some(t) = match_rule_type(&first) {
        return Ok(Generated {
            value: t,
            raw: first,
            calls: 1,
        });
    }
    let names: Vec<&str> = RuleType::ALL.iter().map(|t| t.as_str()).collect();
    let retry = format!(
        "{base}\n# Previous output\n{}\n\n# Clarification\nThat is not a rule type. Answer with exactly one of: {}.\n",
        first.trim(),
        names.join(", ")
    );
    let second = backend.complete(&retry)?;
    match match_rule_type(&second) {
        Some(t) => Ok(Generated {
            value: t,
            raw: second,
            calls: 2,
        }),
        None => Err(TranslatorError::UnrecognizedRuleType {
            answer: second.trim().to_string(),
            calls: 2,
        }),
    }
}

static LIST_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:\d+\s*[.):]|[-*\u{2022}])\s*").unwrap());

/// One rule description per non-empty line, list markers removed, in
/// backend order.
pub fn parse_rule_lines(raw: &str) -> Vec<String> {
    raw.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .map(|l| LIST_MARKER.replace(l, "").trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Rule descriptions for a whole model, smallest share of space first: the
/// backend lists them largest first and the order is inverted.
pub fn generate_rule_sequence(
    model_description: &str,
    catalog_names: &[String],
    store: &PromptStore,
    backend: &dyn CompletionBackend,
) -> Result<Generated<Vec<String>>, TranslatorError> {
    let vocabulary = Vocabulary {
        ingredients: catalog_names.to_vec(),
        skeletons: Vec::new(),
    };
    let raw = backend.complete(&store.build(Operation::RuleSequence, &vocabulary.payload(model_description)))?;
    let mut lines = parse_rule_lines(&raw);
    if lines.is_empty() {
        return Err(TranslatorError::EmptySequence);
    }
    lines.reverse();
    Ok(Generated {
        value: lines,
        raw,
        calls: 1,
    })
}

/// Free-text modeling advice, returned verbatim.
pub fn advise(question: &str, store: &PromptStore, backend: &dyn CompletionBackend) -> Result<String, TranslatorError> {
    Ok(backend.complete(&store.build(Operation::Advisor, question))?)
}

/// Check a user correction against the operation's output grammar and
/// return the form to store.
pub fn validate_correction(op: Operation, corrected_output: &str) -> Result<String, TranslatorError> {
    let text = corrected_output.trim();
    let invalid = |why: String| Err(TranslatorError::InvalidCorrection(why));
    match op {
        Operation::CodeGeneration => match parse_intent_document(text) {
            Ok(doc) => Ok(doc.to_json()),
            Err(errors) => invalid(format_errors_for_regeneration(&errors)),
        },
        Operation::ParameterAdjustment => match parse_parameter_patch(text) {
            Ok(patch) => Ok(patch.to_json()),
            Err(errors) => invalid(format_errors_for_regeneration(&errors)),
        },
        Operation::RuleExtraction => match RuleType::parse(text) {
            Some(t) => Ok(t.as_str().to_string()),
            None => invalid(format!("`{text}` is not a rule type")),
        },
        Operation::RuleSequence => {
            let lines = parse_rule_lines(text);
            if lines.is_empty() {
                invalid("no rule descriptions".into())
            } else {
                Ok(lines.iter().enumerate().map(|(i, l)| format!("{}. {l}", i + 1)).collect::<Vec<_>>().join("\n"))
            }
        }
        Operation::Advisor if text.is_empty() => invalid("empty advice".into()),
        Operation::Advisor => Ok(text.to_string()),
    }
}

/// Validate a correction and append it to the operation's feedback
/// examples. Rejected corrections leave the store untouched.
pub fn record_feedback(
    operation: &str,
    input: &str,
    corrected_output: &str,
    store: &mut PromptStore,
) -> Result<(), TranslatorError> {
    let op = Operation::from_name(operation)?;
    let output = validate_correction(op, corrected_output)?;
    store.push_feedback(op, input, &output)
}
