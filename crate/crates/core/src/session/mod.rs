//! Conversational sessions: turn handling, intent interpretation, selection
//! disambiguation, automatic mode, user feedback and history replay.

mod action;
mod config;
mod fuzzy;

pub use action::{interpret, Action};
pub use config::{BackendKind, Config};
pub use fuzzy::{resolve_name, NameMatch, MAX_CANDIDATES, MAX_EDIT_DISTANCE};

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLockReadGuard, RwLockWriteGuard};

use serde::Serialize;
use thiserror::Error;

use crate::engine::{ApplyReport, Catalog, EngineError, RuleSpec, RuleType, Scene, ViewState, BALL};
use crate::intent::{ColorChange, IntentDocument, ParameterPatch, PositionLink, RenderMode, ValidationError};
use crate::translator::{
    adjust_parameters, advise, extract_rule_type, generate_intent, generate_rule_sequence, validate_correction,
    CompletionBackend, Operation, PromptStore, SharedPromptStore, TranslatorError, Vocabulary,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("unknown ingredient `{0}`")]
    UnknownIngredient(String),
    #[error("unknown skeleton `{0}`")]
    UnknownSkeleton(String),
    #[error("a selection is pending; pick a candidate or cancel")]
    AmbiguousSelectionPending,
    #[error("no selection is pending")]
    NoPendingSelection,
    #[error("candidate {index} out of range; {count} candidates")]
    CandidateOutOfRange { index: usize, count: usize },
    #[error("no ingredient selected")]
    NoIngredientSelected,
    #[error("no rule to edit; create one first")]
    NoCurrentRule,
    #[error("no model path configured")]
    NoModelPath,
    #[error("no turn {0}")]
    UnknownTurn(usize),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Translator(#[from] TranslatorError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl SessionError {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            SessionError::UnknownIngredient(_) => "unknown_ingredient",
            SessionError::UnknownSkeleton(_) => "unknown_skeleton",
            SessionError::AmbiguousSelectionPending => "ambiguous_selection_pending",
            SessionError::NoPendingSelection => "no_pending_selection",
            SessionError::CandidateOutOfRange { .. } => "candidate_out_of_range",
            SessionError::NoIngredientSelected => "no_ingredient_selected",
            SessionError::NoCurrentRule => "no_current_rule",
            SessionError::NoModelPath => "no_model_path",
            SessionError::UnknownTurn(_) => "unknown_turn",
            SessionError::Config(_) => "config",
            SessionError::Translator(e) => match e {
                TranslatorError::BackendUnavailable(_) => "backend_unavailable",
                TranslatorError::StillInvalidAfterRetries { .. } => "still_invalid_after_retries",
                TranslatorError::UnrecognizedRuleType { .. } => "unrecognized_rule_type",
                TranslatorError::EmptySequence => "empty_sequence",
                TranslatorError::UnknownOperation(_) => "unknown_operation",
                TranslatorError::InvalidCorrection(_) => "invalid_correction",
                TranslatorError::EmptyInput => "empty_input",
                TranslatorError::Io(_) => "io",
            },
            SessionError::Engine(e) => match e {
                EngineError::InfeasiblePopulation { .. } => "infeasible_population",
                EngineError::VersionMismatch { .. } => "version_mismatch",
                EngineError::MissingCatalogEntry(_) => "missing_catalog_entry",
                EngineError::Io(_) => "io",
                _ => "engine",
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    StepByStep,
    Automatic,
    Advisor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKind {
    Ingredient,
    Skeleton,
}

/// Current working selection that new rules are built from.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Selection {
    pub ingredients: Vec<String>,
    pub skeleton: Option<String>,
}

type Resolutions = BTreeMap<(SelectionKind, String), String>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PendingSelection {
    pub kind: SelectionKind,
    pub query: String,
    pub candidates: Vec<String>,
    #[serde(skip)]
    origin: PendingOrigin,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct PendingOrigin {
    intent: Option<IntentDocument>,
    actions: Vec<Action>,
    resolutions: Resolutions,
}

/// Fully resolved scene operation. History replay re-applies these.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    SelectIngredients { names: Vec<String> },
    SelectSkeleton { name: String },
    CreateRule {
        rule_type: RuleType,
        ingredients: Vec<String>,
        skeleton: Option<String>,
        description: String,
    },
    EditRule { rule_id: u64, patch: ParameterPatch },
    ApplyRule { rule_id: u64 },
    RevertRule { rule_id: u64 },
    UpdatePivot { ingredient: String, chain_id: u32, residue_id: u32 },
    UpdatePosition { link: PositionLink },
    Highlight { names: Vec<String> },
    ModifyColor { changes: Vec<ColorChange> },
    ChangeMode { mode: RenderMode },
    Labeling { on: bool },
    Save { path: PathBuf },
    Load { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TurnInput {
    Message { text: String },
    Advice { question: String },
    Select { candidate_index: usize },
    Cancel,
    Actions { actions: Vec<Action> },
    Automatic { description: String, step: usize },
    Feedback { turn_index: usize, corrected_output: String },
    LoadModel { path: PathBuf },
}

/// One backend exchange inside a turn.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslationRecord {
    pub operation: Operation,
    pub input: String,
    /// Backend text; for failed exchanges the last raw output.
    pub raw: String,
    pub calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnError {
    pub kind: String,
    pub message: String,
    /// Index into the turn's action list of the failing action.
    pub action_index: Option<usize>,
    /// Step of an automatic run that failed.
    pub step: Option<usize>,
    pub operation: Option<Operation>,
    pub raw_output: Option<String>,
    pub validation_errors: Vec<ValidationError>,
}

/// Instance id ranges `[start, end)` added and removed by a turn.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SceneDelta {
    pub added: Vec<[u64; 2]>,
    pub removed: Vec<[u64; 2]>,
    pub view_changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PendingView {
    pub kind: SelectionKind,
    pub query: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnOutcome {
    pub turn_index: usize,
    pub ok: bool,
    pub messages: Vec<String>,
    pub actions: Vec<String>,
    pub pending_selection: Option<PendingView>,
    pub rules_created: Vec<u64>,
    pub reports: Vec<ApplyReport>,
    pub error: Option<TurnError>,
    pub delta: SceneDelta,
    pub advice: Option<String>,
    pub instance_count: usize,
    /// Position of this turn inside an automatic run.
    pub step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Checkpoint {
    scene: Scene,
    selection: Selection,
    current_rule: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Turn {
    pub index: usize,
    pub input: TurnInput,
    pub intent: Option<IntentDocument>,
    pub actions: Vec<Action>,
    pub steps: Vec<Step>,
    pub translations: Vec<TranslationRecord>,
    pub outcome: TurnOutcome,
    /// Replaced by a later feedback re-run; replay skips it.
    pub superseded: bool,
    #[serde(skip)]
    resolutions: Resolutions,
    /// State before the turn; kept for the latest turn only.
    #[serde(skip)]
    before: Option<Box<Checkpoint>>,
}

/// Work collected while a turn runs.
#[derive(Default)]
struct TurnCtx {
    intent: Option<IntentDocument>,
    actions: Vec<Action>,
    steps: Vec<Step>,
    translations: Vec<TranslationRecord>,
    messages: Vec<String>,
    rules_created: Vec<u64>,
    reports: Vec<ApplyReport>,
    error: Option<TurnError>,
    pending: Option<PendingView>,
    advice: Option<String>,
    step: Option<usize>,
    resolutions: Resolutions,
}

impl TurnCtx {
    fn fail(&mut self, error: &SessionError, action_index: Option<usize>) {
        let (raw_output, validation_errors, operation) = match error {
            SessionError::Translator(TranslatorError::StillInvalidAfterRetries { errors, raw, .. }) => {
                (Some(raw.clone()), errors.clone(), self.translations.last().map(|t| t.operation))
            }
            SessionError::Translator(TranslatorError::UnrecognizedRuleType { answer, .. }) => {
                (Some(answer.clone()), Vec::new(), Some(Operation::RuleExtraction))
            }
            SessionError::Translator(_) => (None, Vec::new(), self.translations.last().map(|t| t.operation)),
            _ => (None, Vec::new(), None),
        };
        self.error = Some(TurnError {
            kind: error.kind().to_string(),
            message: error.to_string(),
            action_index,
            step: self.step,
            operation,
            raw_output,
            validation_errors,
        });
    }
}

fn id_ranges(ids: impl Iterator<Item = u64>) -> Vec<[u64; 2]> {
    let mut out: Vec<[u64; 2]> = Vec::new();
    for id in ids {
        match out.last_mut() {
            Some(r) if r[1] == id => r[1] = id + 1,
            _ => out.push([id, id + 1]),
        }
    }
    out
}

fn scene_delta(before: &BTreeSet<u64>, after: &Scene, view_before: &ViewState) -> SceneDelta {
    let now: BTreeSet<u64> = after.instances.iter().map(|i| i.id).collect();
    SceneDelta {
        added: id_ranges(now.difference(before).copied()),
        removed: id_ranges(before.difference(&now).copied()),
        view_changed: &after.view != view_before,
    }
}

/// First catalog name written as a word of `text` (case-insensitive,
/// plural tolerated).
fn named_in(text: &str, names: &[String]) -> Option<String> {
    for word in text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '_')) {
        let w = word.to_lowercase();
        if w.is_empty() {
            continue;
        }
        let stem = w.strip_suffix('s').unwrap_or(&w);
        if let Some(n) = names.iter().find(|n| {
            let l = n.to_lowercase();
            l == w || l == stem
        }) {
            return Some(n.clone());
        }
    }
    None
}

pub struct Session {
    pub id: String,
    seed: u64,
    scene: Scene,
    catalog: Arc<Catalog>,
    store: SharedPromptStore,
    backend: Arc<dyn CompletionBackend>,
    selection: Selection,
    current_rule: Option<u64>,
    pending: Option<PendingSelection>,
    history: Vec<Turn>,
    mode: Mode,
    model_path: Option<PathBuf>,
}

impl Session {
    pub fn new(
        id: &str,
        seed: u64,
        catalog: Arc<Catalog>,
        store: SharedPromptStore,
        backend: Arc<dyn CompletionBackend>,
    ) -> Session {
        Session {
            id: id.to_string(),
            seed,
            scene: Scene::new(seed),
            catalog,
            store,
            backend,
            selection: Selection::default(),
            current_rule: None,
            pending: None,
            history: Vec::new(),
            mode: Mode::StepByStep,
            model_path: None,
        }
    }

    /// Session with the config's catalog, prompts, backend, seed and model
    /// path.
    pub fn from_config(id: &str, config: &Config) -> Result<Session, SessionError> {
        let catalog = Arc::new(config.catalog()?);
        let store = config.prompt_store()?.shared();
        let mut s = Session::new(id, config.seed, catalog, store, config.backend());
        s.model_path = config.model_path.clone();
        Ok(s)
    }

    pub fn with_model_path(mut self, path: Option<PathBuf>) -> Self {
        self.model_path = path;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn history(&self) -> &[Turn] {
        &self.history
    }

    pub fn pending(&self) -> Option<&PendingSelection> {
        self.pending.as_ref()
    }

    pub fn selection(&self) -> &Selection {
        &self.selection
    }

    pub fn current_rule(&self) -> Option<u64> {
        self.current_rule
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn prompt_store(&self) -> &SharedPromptStore {
        &self.store
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    fn store(&self) -> RwLockReadGuard<'_, PromptStore> {
        self.store.read().unwrap_or_else(|e| e.into_inner())
    }

    fn store_mut(&self) -> RwLockWriteGuard<'_, PromptStore> {
        self.store.write().unwrap_or_else(|e| e.into_inner())
    }

    fn vocabulary(&self) -> Vocabulary {
        Vocabulary {
            ingredients: self.catalog.ingredient_names(),
            skeletons: self.catalog.skeleton_names(),
        }
    }

    fn resolvable_ingredients(&self) -> Vec<String> {
        let mut names = self.catalog.ingredient_names();
        names.push(BALL.to_string());
        names
    }

    // -----------------------------------------------------------------------
    // public turn entry points

    /// One chat message: advice, a pending-selection answer, or a modeling
    /// instruction translated and executed. Errors land in the outcome.
    pub fn handle_turn(&mut self, user_text: &str) -> TurnOutcome {
        let text = user_text.trim();
        if let Some(question) = strip_prefix_ci(text, "advice:") {
            return self.advice_turn(question.trim());
        }
        if let Some(p) = &self.pending {
            if let Some(idx) = p.candidates.iter().position(|c| c.eq_ignore_ascii_case(text)) {
                return self.select(idx);
            }
            if text.eq_ignore_ascii_case("cancel") {
                return self.cancel();
            }
            return self.refused(TurnInput::Message { text: text.into() }, SessionError::AmbiguousSelectionPending);
        }
        self.mode = Mode::StepByStep;
        let input = TurnInput::Message { text: text.into() };
        self.run_turn(input, |s, ctx| s.translate_and_run(ctx, text))
    }

    /// Resolve the pending selection and resume its instruction.
    pub fn select(&mut self, candidate_index: usize) -> TurnOutcome {
        let input = TurnInput::Select { candidate_index };
        let Some(p) = self.pending.clone() else {
            return self.refused(input, SessionError::NoPendingSelection);
        };
        let Some(choice) = p.candidates.get(candidate_index).cloned() else {
            let count = p.candidates.len();
            return self.refused(input, SessionError::CandidateOutOfRange { index: candidate_index, count });
        };
        self.pending = None;
        let mut resolutions = p.origin.resolutions.clone();
        resolutions.insert((p.kind, p.query.to_lowercase()), choice);
        self.run_turn(input, move |s, ctx| {
            ctx.intent = p.origin.intent.clone();
            ctx.resolutions = resolutions;
            s.run_actions(ctx, p.origin.actions.clone());
        })
    }

    pub fn cancel(&mut self) -> TurnOutcome {
        if self.pending.is_none() {
            return self.refused(TurnInput::Cancel, SessionError::NoPendingSelection);
        }
        self.pending = None;
        self.run_turn(TurnInput::Cancel, |_, ctx| ctx.messages.push("selection cancelled".into()))
    }

    /// Execute already interpreted actions as one turn.
    pub fn execute(&mut self, actions: Vec<Action>) -> TurnOutcome {
        if self.pending.is_some() {
            return self.refused(TurnInput::Actions { actions }, SessionError::AmbiguousSelectionPending);
        }
        self.run_turn(TurnInput::Actions { actions: actions.clone() }, |s, ctx| s.run_actions(ctx, actions))
    }

    pub fn apply_rule(&mut self, rule_id: u64) -> TurnOutcome {
        self.execute(vec![Action::ApplyRule { rule_id }])
    }

    pub fn revert_rule(&mut self, rule_id: u64) -> TurnOutcome {
        self.execute(vec![Action::RevertRule { rule_id }])
    }

    /// Automatic mode: one outcome per generated rule, smallest share of
    /// space first. The run stops at the first failing step.
    pub fn run_automatic(&mut self, model_description: &str) -> Vec<TurnOutcome> {
        let mut out = Vec::new();
        self.run_automatic_each(model_description, |_, o| out.push(o.clone()));
        out
    }

    /// As [`Session::run_automatic`], handing each outcome and the session
    /// state after it to `emit` as soon as its step finishes.
    pub fn run_automatic_each(&mut self, model_description: &str, mut emit: impl FnMut(&Session, &TurnOutcome)) {
        if self.pending.is_some() {
            let o = self.refused(
                TurnInput::Automatic {
                    description: model_description.into(),
                    step: 0,
                },
                SessionError::AmbiguousSelectionPending,
            );
            emit(self, &o);
            return;
        }
        self.mode = Mode::Automatic;
        let names = self.catalog.ingredient_names();
        let seq = {
            let store = self.store();
            generate_rule_sequence(model_description, &names, &store, self.backend.as_ref())
        };
        let seq = match seq {
            Ok(seq) => seq,
            Err(e) => {
                let input = TurnInput::Automatic {
                    description: model_description.into(),
                    step: 0,
                };
                let o = self.run_turn(input, |_, ctx| {
                    ctx.step = Some(0);
                    ctx.translations.push(TranslationRecord {
                        operation: Operation::RuleSequence,
                        input: model_description.into(),
                        raw: String::new(),
                        calls: 1,
                    });
                    ctx.fail(&e.into(), None);
                });
                emit(self, &o);
                return;
            }
        };
        for (k, description) in seq.value.iter().enumerate() {
            let input = TurnInput::Automatic {
                description: description.clone(),
                step: k,
            };
            let record = (k == 0).then(|| TranslationRecord {
                operation: Operation::RuleSequence,
                input: model_description.to_string(),
                raw: seq.raw.clone(),
                calls: seq.calls,
            });
            let o = self.run_turn(input, |s, ctx| {
                ctx.step = Some(k);
                ctx.translations.extend(record);
                s.automatic_step(ctx, description);
            });
            emit(self, &o);
            if !o.ok {
                break;
            }
        }
    }

    /// Record a user correction for a turn's backend output and re-run the
    /// turn with the refreshed prompts. The latest turn is re-run from the
    /// state before it and marked superseded; older turns are re-run on the
    /// current state.
    pub fn submit_feedback(&mut self, turn_index: usize, corrected_output: &str) -> Result<TurnOutcome, SessionError> {
        let turn = self.history.get(turn_index).ok_or(SessionError::UnknownTurn(turn_index))?;
        let latest = turn_index + 1 == self.history.len();
        if self.pending.is_some() && !latest {
            return Err(SessionError::AmbiguousSelectionPending);
        }
        let mut candidates: Vec<&TranslationRecord> = turn.translations.iter().rev().collect();
        if let Some(op) = turn.outcome.error.as_ref().and_then(|e| e.operation) {
            candidates.sort_by_key(|t| t.operation != op);
        }
        if candidates.is_empty() {
            return Err(TranslatorError::InvalidCorrection("the turn has no backend output to correct".into()).into());
        }
        let mut first_err = None;
        let mut chosen = None;
        for t in &candidates {
            match validate_correction(t.operation, corrected_output) {
                Ok(_) => {
                    chosen = Some((t.operation, t.input.clone()));
                    break;
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        let Some((op, op_input)) = chosen else {
            return Err(first_err.expect("at least one candidate").into());
        };
        crate::translator::record_feedback(op.name(), &op_input, corrected_output, &mut self.store_mut())?;

        let original = turn.clone();
        if latest {
            if let Some(cp) = original.before.clone() {
                self.scene = cp.scene;
                self.selection = cp.selection;
                self.current_rule = cp.current_rule;
                self.pending = None;
                self.history[turn_index].superseded = true;
            }
        }
        let input = TurnInput::Feedback {
            turn_index,
            corrected_output: corrected_output.to_string(),
        };
        Ok(self.run_turn(input, |s, ctx| match &original.input {
            TurnInput::Message { text } => s.translate_and_run(ctx, text),
            TurnInput::Automatic { description, step } => {
                ctx.step = Some(*step);
                s.automatic_step(ctx, description);
            }
            TurnInput::Advice { question } => s.advise_into(ctx, question),
            _ => {
                ctx.intent = original.intent.clone();
                ctx.resolutions = original.resolutions.clone();
                s.run_actions(ctx, original.actions.clone());
            }
        }))
    }

    /// Write the scene file. Saving does not change the scene.
    pub fn save_model(&self, path: &Path) -> Result<(), SessionError> {
        Ok(self.scene.save(path)?)
    }

    /// Replace the scene with a saved one, resolved against this session's
    /// catalog. Failures leave the session untouched.
    pub fn load_model(&mut self, path: &Path) -> Result<TurnOutcome, SessionError> {
        if self.pending.is_some() {
            return Err(SessionError::AmbiguousSelectionPending);
        }
        Scene::load(path, &self.catalog)?;
        let step = Step::Load { path: path.to_path_buf() };
        let outcome = self.run_turn(TurnInput::LoadModel { path: path.to_path_buf() }, |s, ctx| {
            s.run_step(ctx, step, None);
        });
        Ok(outcome)
    }

    /// Scene rebuilt from a fresh scene with the same seed by re-applying
    /// every recorded step.
    pub fn replay(&self) -> Result<Scene, SessionError> {
        let mut fresh = Session::new(&self.id, self.seed, self.catalog.clone(), self.store.clone(), self.backend.clone());
        fresh.model_path = self.model_path.clone();
        for turn in self.history.iter().filter(|t| !t.superseded) {
            for step in &turn.steps {
                fresh.apply_step(step)?;
            }
        }
        Ok(fresh.scene)
    }

    // -----------------------------------------------------------------------
    // turn machinery

    fn run_turn(&mut self, input: TurnInput, body: impl FnOnce(&mut Session, &mut TurnCtx)) -> TurnOutcome {
        let checkpoint = Checkpoint {
            scene: self.scene.clone(),
            selection: self.selection.clone(),
            current_rule: self.current_rule,
        };
        let ids_before: BTreeSet<u64> = self.scene.instances.iter().map(|i| i.id).collect();
        let mut ctx = TurnCtx::default();
        body(self, &mut ctx);
        let index = self.history.len();
        let outcome = TurnOutcome {
            turn_index: index,
            ok: ctx.error.is_none(),
            messages: ctx.messages,
            actions: ctx.actions.iter().map(|a| a.name().to_string()).collect(),
            pending_selection: ctx.pending,
            rules_created: ctx.rules_created,
            reports: ctx.reports,
            error: ctx.error,
            delta: scene_delta(&ids_before, &self.scene, &checkpoint.scene.view),
            advice: ctx.advice,
            instance_count: self.scene.instances.len(),
            step: ctx.step,
        };
        if let Some(last) = self.history.last_mut() {
            last.before = None;
        }
        self.history.push(Turn {
            index,
            input,
            intent: ctx.intent,
            actions: ctx.actions,
            steps: ctx.steps,
            translations: ctx.translations,
            outcome: outcome.clone(),
            superseded: false,
            resolutions: ctx.resolutions,
            before: Some(Box::new(checkpoint)),
        });
        outcome
    }

    fn refused(&mut self, input: TurnInput, error: SessionError) -> TurnOutcome {
        self.run_turn(input, |_, ctx| ctx.fail(&error, None))
    }

    fn advice_turn(&mut self, question: &str) -> TurnOutcome {
        self.mode = Mode::Advisor;
        let input = TurnInput::Advice { question: question.into() };
        self.run_turn(input, |s, ctx| s.advise_into(ctx, question))
    }

    fn advise_into(&mut self, ctx: &mut TurnCtx, question: &str) {
        let result = {
            let store = self.store();
            advise(question, &store, self.backend.as_ref())
        };
        match result {
            Ok(text) => {
                ctx.translations.push(TranslationRecord {
                    operation: Operation::Advisor,
                    input: question.into(),
                    raw: text.clone(),
                    calls: 1,
                });
                ctx.advice = Some(text);
            }
            Err(e) => ctx.fail(&e.into(), None),
        }
    }

    fn translate_and_run(&mut self, ctx: &mut TurnCtx, text: &str) {
        let result = {
            let store = self.store();
            generate_intent(text, &self.vocabulary(), &store, self.backend.as_ref())
        };
        match result {
            Ok(g) => {
                ctx.translations.push(TranslationRecord {
                    operation: Operation::CodeGeneration,
                    input: text.into(),
                    raw: g.raw,
                    calls: g.calls,
                });
                let actions = interpret(&g.value);
                ctx.intent = Some(g.value);
                self.run_actions(ctx, actions);
            }
            Err(e) => {
                let (raw, calls) = match &e {
                    TranslatorError::StillInvalidAfterRetries { raw, calls, .. } => (raw.clone(), *calls),
                    _ => (String::new(), 0),
                };
                ctx.translations.push(TranslationRecord {
                    operation: Operation::CodeGeneration,
                    input: text.into(),
                    raw,
                    calls,
                });
                ctx.fail(&e.into(), None);
            }
        }
    }

    /// Resolve every catalog name first so an ambiguous or unknown name
    /// stops the turn before anything changes, then run the actions in
    /// order, stopping at the first failure.
    fn run_actions(&mut self, ctx: &mut TurnCtx, actions: Vec<Action>) {
        ctx.actions = actions.clone();
        let mut resolved = actions;
        for (i, action) in resolved.iter_mut().enumerate() {
            if let Err(halt) = self.resolve_action(action, &ctx.resolutions) {
                match halt {
                    Halt::Pending { kind, query, candidates } => {
                        ctx.pending = Some(PendingView {
                            kind,
                            query: query.clone(),
                            candidates: candidates.clone(),
                        });
                        ctx.messages.push(format!(
                            "`{query}` matches {} {}s: {}. Which one?",
                            candidates.len(),
                            match kind {
                                SelectionKind::Ingredient => "ingredient",
                                SelectionKind::Skeleton => "skeleton",
                            },
                            candidates.join(", ")
                        ));
                        self.pending = Some(PendingSelection {
                            kind,
                            query,
                            candidates,
                            origin: PendingOrigin {
                                intent: ctx.intent.clone(),
                                actions: ctx.actions.clone(),
                                resolutions: ctx.resolutions.clone(),
                            },
                        });
                    }
                    Halt::Error(e) => ctx.fail(&e, Some(i)),
                }
                return;
            }
        }
        for (i, action) in resolved.into_iter().enumerate() {
            match self.step_for(ctx, action) {
                Ok(step) => {
                    if !self.run_step(ctx, step, Some(i)) {
                        return;
                    }
                }
                Err(e) => {
                    ctx.fail(&e, Some(i));
                    return;
                }
            }
        }
    }

    fn resolve_one(&self, kind: SelectionKind, query: &str, resolutions: &Resolutions) -> Result<String, Halt> {
        if let Some(r) = resolutions.get(&(kind, query.to_lowercase())) {
            return Ok(r.clone());
        }
        let names = match kind {
            SelectionKind::Ingredient => self.resolvable_ingredients(),
            SelectionKind::Skeleton => self.catalog.skeleton_names(),
        };
        match resolve_name(query, &names) {
            NameMatch::Unique(n) => Ok(n),
            NameMatch::Ambiguous(candidates) => Err(Halt::Pending {
                kind,
                query: query.to_string(),
                candidates,
            }),
            NameMatch::None => Err(Halt::Error(match kind {
                SelectionKind::Ingredient => SessionError::UnknownIngredient(query.to_string()),
                SelectionKind::Skeleton => SessionError::UnknownSkeleton(query.to_string()),
            })),
        }
    }

    fn resolve_action(&self, action: &mut Action, res: &Resolutions) -> Result<(), Halt> {
        use SelectionKind::*;
        match action {
            Action::SelectIngredient { names } | Action::Highlight { names } => {
                for n in names.iter_mut() {
                    *n = self.resolve_one(Ingredient, n, res)?;
                }
            }
            Action::SelectSkeleton { names } => {
                for n in names.iter_mut() {
                    *n = self.resolve_one(Skeleton, n, res)?;
                }
            }
            Action::UpdatePosition { link } => {
                link.main.ingredient = self.resolve_one(Ingredient, &link.main.ingredient, res)?;
                link.sub.ingredient = self.resolve_one(Ingredient, &link.sub.ingredient, res)?;
            }
            Action::ModifyColor { changes } => {
                for c in changes.iter_mut() {
                    c.ingredient = self.resolve_one(Ingredient, &c.ingredient, res)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Turn a resolved action into a step, consulting the backend for rule
    /// types and parameters.
    fn step_for(&mut self, ctx: &mut TurnCtx, action: Action) -> Result<Step, SessionError> {
        Ok(match action {
            Action::SelectIngredient { names } => Step::SelectIngredients { names },
            Action::SelectSkeleton { mut names } => {
                if names.len() > 1 {
                    ctx.messages.push(format!("using skeleton {}; rules take one skeleton", names[0]));
                }
                Step::SelectSkeleton { name: names.swap_remove(0) }
            }
            Action::UpdatePivot { index } => Step::UpdatePivot {
                ingredient: self.selection.ingredients.first().cloned().ok_or(SessionError::NoIngredientSelected)?,
                chain_id: index.chain_id,
                residue_id: index.residue_id,
            },
            Action::UpdatePosition { link } => Step::UpdatePosition { link },
            Action::CreateRule { description } => {
                let rule_type = self.classify(ctx, &description)?;
                if self.selection.ingredients.is_empty() {
                    return Err(SessionError::NoIngredientSelected);
                }
                let skeleton = match rule_type {
                    RuleType::Connection => None,
                    _ => self.selection.skeleton.clone(),
                };
                Step::CreateRule {
                    rule_type,
                    ingredients: self.selection.ingredients.clone(),
                    skeleton,
                    description,
                }
            }
            Action::EditRule { description } => {
                let rule_id = self.current_rule.ok_or(SessionError::NoCurrentRule)?;
                let patch = self.parameters(ctx, &description)?;
                Step::EditRule { rule_id, patch }
            }
            Action::Highlight { names } => Step::Highlight { names },
            Action::ModifyColor { changes } => Step::ModifyColor { changes },
            Action::ChangeMode { mode } => Step::ChangeMode { mode },
            Action::Labeling { on } => Step::Labeling { on },
            Action::SaveModel => Step::Save {
                path: self.model_path.clone().ok_or(SessionError::NoModelPath)?,
            },
            Action::LoadModel => Step::Load {
                path: self.model_path.clone().ok_or(SessionError::NoModelPath)?,
            },
            Action::ApplyRule { rule_id } => Step::ApplyRule { rule_id },
            Action::RevertRule { rule_id } => Step::RevertRule { rule_id },
        })
    }

    fn classify(&mut self, ctx: &mut TurnCtx, description: &str) -> Result<RuleType, SessionError> {
        let result = {
            let store = self.store();
            extract_rule_type(description, &store, self.backend.as_ref())
        };
        let (raw, calls) = match &result {
            Ok(g) => (g.raw.clone(), g.calls),
            Err(TranslatorError::UnrecognizedRuleType { answer, calls }) => (answer.clone(), *calls),
            Err(_) => (String::new(), 0),
        };
        ctx.translations.push(TranslationRecord {
            operation: Operation::RuleExtraction,
            input: description.into(),
            raw,
            calls,
        });
        Ok(result?.value)
    }

    fn parameters(&mut self, ctx: &mut TurnCtx, description: &str) -> Result<ParameterPatch, SessionError> {
        let result = {
            let store = self.store();
            adjust_parameters(description, &store, self.backend.as_ref())
        };
        let (raw, calls) = match &result {
            Ok(g) => (g.raw.clone(), g.calls),
            Err(TranslatorError::StillInvalidAfterRetries { raw, calls, .. }) => (raw.clone(), *calls),
            Err(_) => (String::new(), 0),
        };
        ctx.translations.push(TranslationRecord {
            operation: Operation::ParameterAdjustment,
            input: description.into(),
            raw,
            calls,
        });
        Ok(result?.value)
    }

    /// Apply a step and log it; false when it failed.
    fn run_step(&mut self, ctx: &mut TurnCtx, step: Step, action_index: Option<usize>) -> bool {
        match self.apply_step(&step) {
            Ok(effect) => {
                ctx.messages.push(effect.message);
                ctx.rules_created.extend(effect.rule_created);
                if let Some(r) = effect.report {
                    if let Some(s) = &r.shortfall {
                        ctx.messages.push(s.clone());
                    }
                    ctx.reports.push(r);
                }
                ctx.steps.push(step);
                true
            }
            Err(e) => {
                ctx.fail(&e, action_index);
                false
            }
        }
    }

    fn automatic_step(&mut self, ctx: &mut TurnCtx, description: &str) {
        let ingredient = match named_in(description, &self.catalog.ingredient_names()) {
            Some(n) => n,
            None => return ctx.fail(&SessionError::UnknownIngredient(description.into()), None),
        };
        let skeleton = named_in(description, &self.catalog.skeleton_names());
        let rule_type = match self.classify(ctx, description) {
            Ok(t) => t,
            Err(e) => return ctx.fail(&e, None),
        };
        let patch = match self.parameters(ctx, description) {
            Ok(p) => p,
            Err(e) => return ctx.fail(&e, None),
        };
        let mut steps = vec![Step::SelectIngredients {
            names: vec![ingredient.clone()],
        }];
        if let Some(name) = &skeleton {
            steps.push(Step::SelectSkeleton { name: name.clone() });
        }
        steps.push(Step::CreateRule {
            rule_type,
            ingredients: vec![ingredient],
            skeleton: if rule_type == RuleType::Connection { None } else { skeleton },
            description: description.to_string(),
        });
        for step in steps {
            if !self.run_step(ctx, step, None) {
                return;
            }
        }
        let rule_id = self.current_rule.expect("rule just created");
        if !patch.is_empty() && !self.run_step(ctx, Step::EditRule { rule_id, patch }, None) {
            return;
        }
        self.run_step(ctx, Step::ApplyRule { rule_id }, None);
    }

    fn apply_step(&mut self, step: &Step) -> Result<StepEffect, SessionError> {
        let catalog = self.catalog.clone();
        let mut effect = StepEffect::default();
        effect.message = match step {
            Step::SelectIngredients { names } => {
                for n in names {
                    catalog.ingredient(n)?;
                }
                self.selection.ingredients = names.clone();
                format!("selected {}", names.join(", "))
            }
            Step::SelectSkeleton { name } => {
                catalog.skeleton(name)?;
                self.selection.skeleton = Some(name.clone());
                format!("selected skeleton {name}")
            }
            Step::CreateRule {
                rule_type,
                ingredients,
                skeleton,
                description,
            } => {
                let names: Vec<&str> = ingredients.iter().map(String::as_str).collect();
                let spec = RuleSpec::new(*rule_type, &names, skeleton.as_deref()).described(description);
                let id = self.scene.create_rule(&catalog, spec)?;
                self.current_rule = Some(id);
                effect.rule_created = Some(id);
                match skeleton {
                    Some(s) => format!("created {rule_type} rule {id} for {} on {s}", ingredients.join(", ")),
                    None => format!("created {rule_type} rule {id} for {}", ingredients.join(", ")),
                }
            }
            Step::EditRule { rule_id, patch } => {
                let params = self.scene.edit_rule(&catalog, *rule_id, patch)?;
                self.current_rule = Some(*rule_id);
                format!(
                    "rule {rule_id}: elements {}, distance {}, collision {}",
                    params.elements,
                    params.distance,
                    if params.collision_detection { "on" } else { "off" }
                )
            }
            Step::ApplyRule { rule_id } => {
                let report = self.scene.apply_rule(&catalog, *rule_id)?;
                self.current_rule = Some(*rule_id);
                let msg = format!("rule {rule_id} placed {} of {} instances", report.placed, report.requested);
                effect.report = Some(report);
                msg
            }
            Step::RevertRule { rule_id } => {
                let removed = self.scene.revert_rule(*rule_id)?;
                format!("rule {rule_id}: removed {} instances", removed.len())
            }
            Step::UpdatePivot {
                ingredient,
                chain_id,
                residue_id,
            } => {
                let p = self.scene.update_pivot(&catalog, ingredient, *chain_id, *residue_id)?;
                format!("pivot of {ingredient} moved to chain {chain_id} residue {residue_id} ({:.3}, {:.3}, {:.3})", p.x, p.y, p.z)
            }
            Step::UpdatePosition { link } => {
                let moved = self.scene.update_position(&catalog, &link.main, &link.sub)?;
                format!("moved {} instance {moved} onto {}", link.sub.ingredient, link.main.ingredient)
            }
            Step::Highlight { names } => {
                self.scene.view.highlights = names.iter().cloned().collect();
                format!("highlighted {}", names.join(", "))
            }
            Step::ModifyColor { changes } => {
                for c in changes {
                    self.scene.view.colors.insert(c.ingredient.clone(), c.color.0);
                }
                format!("recolored {}", changes.iter().map(|c| c.ingredient.as_str()).collect::<Vec<_>>().join(", "))
            }
            Step::ChangeMode { mode } => {
                self.scene.view.mode = *mode;
                format!("render mode {}", mode.as_str())
            }
            Step::Labeling { on } => {
                self.scene.view.labeling = *on;
                format!("labels {}", if *on { "on" } else { "off" })
            }
            Step::Save { path } => {
                self.scene.save(path)?;
                format!("saved model to {}", path.display())
            }
            Step::Load { path } => {
                self.scene = Scene::load(path, &catalog)?;
                self.current_rule = self.scene.rules.last().map(|r| r.id);
                self.selection = Selection::default();
                format!("loaded model from {}", path.display())
            }
        };
        Ok(effect)
    }
}

#[derive(Default)]
struct StepEffect {
    message: String,
    rule_created: Option<u64>,
    report: Option<ApplyReport>,
}

enum Halt {
    Pending {
        kind: SelectionKind,
        query: String,
        candidates: Vec<String>,
    },
    Error(SessionError),
}

fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    let head = text.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &text[prefix.len()..])
}
