//! Few-shot prompt store: a task description, fixed initial examples and
//! user feedback examples per operation, persisted as
//! `prompts/<operation>.json`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::TranslatorError;

/// Feedback examples kept per operation; the oldest are evicted first.
pub const FEEDBACK_CAP: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    CodeGeneration,
    RuleExtraction,
    ParameterAdjustment,
    Advisor,
    RuleSequence,
}

impl Operation {
    pub const ALL: [Operation; 5] = [
        Operation::CodeGeneration,
        Operation::RuleExtraction,
        Operation::ParameterAdjustment,
        Operation::Advisor,
        Operation::RuleSequence,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Operation::CodeGeneration => "code_generation",
            Operation::RuleExtraction => "rule_extraction",
            Operation::ParameterAdjustment => "parameter_adjustment",
            Operation::Advisor => "advisor",
            Operation::RuleSequence => "rule_sequence",
        }
    }

    pub fn from_name(name: &str) -> Result<Operation, TranslatorError> {
        Operation::ALL
            .into_iter()
            .find(|o| o.name() == name)
            .ok_or_else(|| TranslatorError::UnknownOperation(name.to_string()))
    }

    fn default_record(&self) -> &'static str {
        match self {
            Operation::CodeGeneration => include_str!("../../prompts/code_generation.json"),
            Operation::RuleExtraction => include_str!("../../prompts/rule_extraction.json"),
            Operation::ParameterAdjustment => include_str!("../../prompts/parameter_adjustment.json"),
            Operation::Advisor => include_str!("../../prompts/advisor.json"),
            Operation::RuleSequence => include_str!("../../prompts/rule_sequence.json"),
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackExample {
    pub input: String,
    pub output: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub task_description: String,
    /// Expert reasoning steps; only rule extraction carries them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_logic: Option<String>,
    pub initial_examples: Vec<Example>,
    #[serde(default)]
    pub feedback_examples: Vec<FeedbackExample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptStore {
    dir: Option<PathBuf>,
    records: BTreeMap<Operation, PromptRecord>,
}

/// A store shared across sessions; writers are serialized by the lock.
pub type SharedPromptStore = Arc<RwLock<PromptStore>>;

impl Default for PromptStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn write_example(out: &mut String, heading: &str, input: &str, output: &str) {
    let _ = write!(out, "## {heading}\nInput: {}\nOutput:\n{}\n\n", one_line(input), output.trim());
}

impl PromptStore {
    /// Built-in records, not persisted.
    pub fn in_memory() -> Self {
        let records = Operation::ALL
            .into_iter()
            .map(|op| {
                let rec: PromptRecord = serde_json::from_str(op.default_record()).expect("bundled prompt record is valid");
                (op, rec)
            })
            .collect();
        PromptStore { dir: None, records }
    }

    /// Load records from `dir`, falling back to built-ins for missing files.
    /// Feedback recorded later is written back to `dir`.
    pub fn open(dir: &Path) -> Result<Self, TranslatorError> {
        let mut store = Self::in_memory();
        for op in Operation::ALL {
            let path = dir.join(format!("{}.json", op.name()));
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|e| TranslatorError::Io(format!("{}: {e}", path.display())))?;
                let rec: PromptRecord = serde_json::from_str(&text)
                    .map_err(|e| TranslatorError::Io(format!("{}: {e}", path.display())))?;
                store.records.insert(op, rec);
            }
        }
        store.dir = Some(dir.to_path_buf());
        Ok(store)
    }

    pub fn shared(self) -> SharedPromptStore {
        Arc::new(RwLock::new(self))
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn record(&self, op: Operation) -> &PromptRecord {
        &self.records[&op]
    }

    /// Deterministic prompt: task, decision logic (rule extraction), initial
    /// examples, feedback examples oldest first, then the payload.
    pub fn build(&self, op: Operation, payload: &str) -> String {
        let rec = self.record(op);
        let mut out = format!("# Operation: {}\n\n# Task\n{}\n\n", op.name(), rec.task_description.trim());
        if let Some(logic) = &rec.decision_logic {
            let _ = write!(out, "# Decision logic\n{}\n\n", logic.trim());
        }
        if !rec.initial_examples.is_empty() {
            out.push_str("# Examples\n");
            for (i, ex) in rec.initial_examples.iter().enumerate() {
                write_example(&mut out, &format!("Example {}", i + 1), &ex.input, &ex.output);
            }
        }
        if !rec.feedback_examples.is_empty() {
            out.push_str("# User feedback examples\n");
            for (i, ex) in rec.feedback_examples.iter().enumerate() {
                write_example(&mut out, &format!("Feedback {}", i + 1), &ex.input, &ex.output);
            }
        }
        let _ = write!(out, "# Input\n{}\n", payload.trim());
        out
    }

    /// Append a feedback example, evicting the oldest past the cap, and
    /// persist the record when the store has a directory. Validation is the
    /// caller's job (see [`super::record_feedback`]).
    pub fn push_feedback(&mut self, op: Operation, input: &str, output: &str) -> Result<(), TranslatorError> {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let rec = self.records.get_mut(&op).expect("all operations present");
        rec.feedback_examples.push(FeedbackExample {
            input: input.trim().to_string(),
            output: output.trim().to_string(),
            timestamp,
        });
        if rec.feedback_examples.len() > FEEDBACK_CAP {
            let excess = rec.feedback_examples.len() - FEEDBACK_CAP;
            rec.feedback_examples.drain(..excess);
        }
        self.persist(op)
    }

    fn persist(&self, op: Operation) -> Result<(), TranslatorError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        fs::create_dir_all(dir).map_err(|e| TranslatorError::Io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(format!("{}.json", op.name()));
        let text = serde_json::to_string_pretty(self.record(op)).expect("record serializes");
        // write-then-rename keeps the file whole if the process dies mid-write
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text + "\n").map_err(|e| TranslatorError::Io(format!("{}: {e}", tmp.display())))?;
        fs::rename(&tmp, &path).map_err(|e| TranslatorError::Io(format!("{}: {e}", path.display())))
    }
}

/// Build the prompt for an operation named as in the store files.
pub fn build_prompt(operation: &str, store: &PromptStore, payload: &str) -> Result<String, TranslatorError> {
    Ok(store.build(Operation::from_name(operation)?, payload))
}
