use std::sync::Arc;

use mesoscribe_core::engine::{Catalog, EngineError, RuleType};
use mesoscribe_core::intent::RenderMode;
use mesoscribe_core::session::*;
use mesoscribe_core::translator::{MockBackend, Operation, PromptStore, ScriptedBackend, TranslatorError};

fn session(seed: u64) -> Session {
    Session::new("s", seed, Arc::new(Catalog::demo()), PromptStore::in_memory().shared(), Arc::new(MockBackend))
}

#[test]
fn gold_layer_turns() {
    let mut s = session(42);
    let o = s.handle_turn("Populate the Au atom uniformly on a rectangle skeleton");
    assert!(o.ok, "{o:?}");
    assert_eq!(o.actions, ["select_ingredient", "select_skeleton", "create_rule"]);
    let rule = &s.scene().rules[0];
    assert_eq!((rule.rule_type, rule.skeleton.as_deref()), (RuleType::Fill, Some("rectangle")));
    // creating does not apply
    assert!(s.scene().instances.is_empty());
    assert!(s.handle_turn("Set the elements to 300").ok);
    let o = s.apply_rule(1);
    assert!(o.ok, "{o:?}");
    assert_eq!(o.reports[0].placed, 300);
    assert_eq!(o.delta.added, vec![[1, 301]]);
    assert!(s.scene().instances.iter().all(|i| i.center().z.abs() < 1e-9));
}

#[test]
fn color_and_highlight_in_one_turn() {
    let mut s = session(1);
    let o = s.handle_turn("make the lipids red and highlight them");
    assert!(o.ok, "{o:?}");
    assert_eq!(o.actions, ["highlight", "modify_color"]);
    assert!(o.delta.view_changed);
    assert_eq!(s.scene().view.colors["lipid"], [1.0, 0.0, 0.0]);
    assert!(s.scene().view.highlights.contains("lipid"));
    let o = s.handle_turn("Switch to the chain level and show labels");
    assert!(o.ok);
    assert_eq!((s.scene().view.mode, s.scene().view.labeling), (RenderMode::Chain, true));
}

#[test]
fn selection_gate_and_cancel() {
    let mut s = session(3);
    let o = s.handle_turn("Create curves between HDT and SpyCatcher instances");
    assert_eq!(o.pending_selection.as_ref().unwrap().candidates.len(), 2);
    assert_eq!(s.apply_rule(1).error.unwrap().kind, "ambiguous_selection_pending");
    assert_eq!(s.run_automatic("Generate a blood plasma model inside a box.").len(), 1);
    assert!(s.scene().rules.is_empty());
    assert!(s.cancel().ok);
    assert!(s.pending().is_none());
    assert_eq!(s.select(0).error.unwrap().kind, "no_pending_selection");
    // answering by name works too
    s.handle_turn("Create curves between HDT and SpyCatcher instances");
    let o = s.handle_turn("hdt-1");
    assert!(o.ok, "{o:?}");
    assert_eq!(s.scene().rules[0].ingredients, ["HDT-1", "SpyCatcher"]);
    assert_eq!(s.scene().rules[0].rule_type, RuleType::Connection);
}

#[test]
fn unknown_ingredient_reported() {
    let mut s = session(3);
    let o = s.execute(vec![Action::SelectIngredient {
        names: vec!["unobtainium".into()],
    }]);
    let e = o.error.unwrap();
    assert_eq!(e.kind, "unknown_ingredient");
    assert!(e.message.contains("unobtainium"));
}

#[test]
fn automatic_blood_plasma() {
    let mut s = session(42);
    let outcomes = s.run_automatic("Generate a blood plasma model inside a box.");
    assert_eq!(outcomes.len(), 8);
    assert!(outcomes.iter().all(|o| o.ok), "{:?}", outcomes.iter().find(|o| !o.ok));
    let first = &s.history()[0];
    assert_eq!(
        first.input,
        TurnInput::Automatic {
            description: "Add Heparin into the box to occupy 2% of the space".into(),
            step: 0
        }
    );
    let rules = &s.scene().rules;
    assert_eq!(rules.len(), 8);
    assert_eq!(rules[0].ingredients, ["Heparin"]);
    assert_eq!(rules[0].rule_type, RuleType::Fill);
    // 2% of 100^3 over (4/3)pi 2^3
    assert_eq!(rules[0].params.elements, 596);
    assert_eq!(rules[7].ingredients, ["Albumin"]);
    assert!(rules.iter().all(|r| r.rule_type == RuleType::Fill && r.applied.len() == 1));
    assert_eq!(s.mode(), Mode::Automatic);
}

#[test]
fn automatic_empty_sequence() {
    let mut s = session(42);
    let outcomes = s.run_automatic("Fill the box with unobtainium");
    assert_eq!(outcomes.len(), 1);
    assert_eq!(outcomes[0].error.as_ref().unwrap().kind, "empty_sequence");
}

#[test]
fn automatic_failure_halts_with_step() {
    let backend = ScriptedBackend::new([
        "1. Add unobtainium into the box to occupy 3% of the space\n2. Add IgG into the box to occupy 1% of the space",
        "fill",
        "{\"space\": 1}",
    ]);
    let mut s = Session::new("s", 42, Arc::new(Catalog::demo()), PromptStore::in_memory().shared(), Arc::new(backend));
    let outcomes = s.run_automatic("anything");
    assert_eq!(outcomes.len(), 2);
    assert!(outcomes[0].ok);
    let e = outcomes[1].error.as_ref().unwrap();
    assert_eq!((e.kind.as_str(), e.step), ("unknown_ingredient", Some(1)));
    // the partial scene stays
    assert_eq!(s.scene().rules.len(), 1);
    assert!(!s.scene().instances.is_empty());
}

#[test]
fn feedback_fixes_misclassification_by_rerun() {
    let mut s = session(5);
    s.handle_turn("Add lipid into the membrane to occupy 1% of the space");
    assert!(s.handle_turn("Set the elements to 20").ok);
    assert!(s.apply_rule(1).ok);
    let text = "Tile the lipids next to each other across the membrane";
    let o = s.handle_turn(text);
    assert!(o.ok, "{o:?}");
    assert_eq!(s.scene().rules[1].rule_type, RuleType::Siblings);
    let before = s.scene().instances.clone();
    let idx = o.turn_index;
    assert!(matches!(
        s.submit_feedback(idx, "sibling-ish"),
        Err(SessionError::Translator(TranslatorError::InvalidCorrection(_)))
    ));
    let fixed = s.submit_feedback(idx, "siblings-parent").unwrap();
    assert!(fixed.ok, "{fixed:?}");
    assert_eq!(s.scene().rules.len(), 2);
    assert_eq!(s.scene().rules[1].rule_type, RuleType::SiblingsParent);
    assert_eq!(s.scene().instances, before);
    assert!(s.history()[idx].superseded);
    let store = s.prompt_store().read().unwrap();
    assert_eq!(store.record(Operation::RuleExtraction).feedback_examples.len(), 1);
}

#[test]
fn feedback_after_invalid_output() {
    let mut s = session(5);
    let o = s.handle_turn("hmm");
    let e = o.error.unwrap();
    assert_eq!(e.kind, "still_invalid_after_retries");
    assert_eq!(e.raw_output.as_deref(), Some("{}"));
    let fixed = s.submit_feedback(o.turn_index, r#"{"labeling": true}"#).unwrap();
    assert!(fixed.ok);
    assert!(s.scene().view.labeling);
    // a second identical correction is stored again
    s.submit_feedback(o.turn_index, r#"{"labeling": true}"#).unwrap();
    let store = s.prompt_store().read().unwrap();
    assert_eq!(store.record(Operation::CodeGeneration).feedback_examples.len(), 2);
}

#[test]
fn save_load_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let mut s = session(11).with_model_path(Some(path.clone()));
    s.handle_turn("Add IgG into the box to occupy 1% of the space");
    s.handle_turn("occupy 1% of the space");
    s.apply_rule(1);
    assert!(s.handle_turn("Save the model").ok);
    let saved = s.scene().clone();
    let mut t = session(99).with_model_path(Some(path.clone()));
    assert!(t.handle_turn("Load the model").ok);
    assert_eq!(t.scene(), &saved);

    let text = std::fs::read_to_string(&path).unwrap();
    let v99 = dir.path().join("v99.json");
    std::fs::write(&v99, text.replacen("\"version\": 1", "\"version\": 99", 1)).unwrap();
    assert!(matches!(
        t.load_model(&v99),
        Err(SessionError::Engine(EngineError::VersionMismatch { .. }))
    ));
    let mut small = Catalog::demo();
    small.ingredients.remove("IgG");
    let mut u = Session::new("u", 1, Arc::new(small), PromptStore::in_memory().shared(), Arc::new(MockBackend));
    match u.load_model(&path) {
        Err(SessionError::Engine(EngineError::MissingCatalogEntry(r))) => assert_eq!(r, "ingredient/IgG"),
        other => panic!("{other:?}"),
    }
    assert!(u.history().is_empty());
}

#[test]
fn history_replay_is_byte_identical() {
    let mut s = session(7);
    s.handle_turn("Populate the Au atom uniformly on a rectangle skeleton");
    s.handle_turn("Set the elements to 150");
    s.apply_rule(1);
    s.handle_turn("Populate HDT at a distance above the rectangle surface");
    s.select(0);
    s.handle_turn("Set the distance to 3 and the elements to 40");
    s.apply_rule(2);
    s.apply_rule(2);
    s.revert_rule(2);
    s.handle_turn("make the Au gold");
    let replayed = s.replay().unwrap();
    assert_eq!(replayed.to_json(), s.scene().to_json());
}

#[test]
fn history_serializes() {
    let mut s = session(7);
    s.handle_turn("Populate HDT at a distance above the rectangle surface");
    let v = serde_json::to_value(s.history()).unwrap();
    assert_eq!(v[0]["input"]["kind"], "message");
    assert_eq!(v[0]["outcome"]["pending_selection"]["candidates"][1], "HDT-2");
}
