//! Intent documents mapped onto ordered session actions.

use serde::Serialize;

use crate::intent::{ColorChange, IntentDocument, PositionLink, RenderMode, ResidueIndex};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    SelectIngredient { names: Vec<String> },
    SelectSkeleton { names: Vec<String> },
    UpdatePivot { index: ResidueIndex },
    UpdatePosition { link: PositionLink },
    CreateRule { description: String },
    EditRule { description: String },
    Highlight { names: Vec<String> },
    ModifyColor { changes: Vec<ColorChange> },
    ChangeMode { mode: RenderMode },
    Labeling { on: bool },
    SaveModel,
    LoadModel,
    ApplyRule { rule_id: u64 },
    RevertRule { rule_id: u64 },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::SelectIngredient { .. } => "select_ingredient",
            Action::SelectSkeleton { .. } => "select_skeleton",
            Action::UpdatePivot { .. } => "update_pivot",
            Action::UpdatePosition { .. } => "update_position",
            Action::CreateRule { .. } => "create_rule",
            Action::EditRule { .. } => "edit_rule",
            Action::Highlight { .. } => "highlight",
            Action::ModifyColor { .. } => "modify_color",
            Action::ChangeMode { .. } => "change_mode",
            Action::Labeling { .. } => "labeling",
            Action::SaveModel => "save_model",
            Action::LoadModel => "load_model",
            Action::ApplyRule { .. } => "apply_rule",
            Action::RevertRule { .. } => "revert_rule",
        }
    }
}

/// One action per present field: selections, pivot/position, createRule,
/// editRule, visual intents, save/load. `false` save/load flags are no-ops.
pub fn interpret(doc: &IntentDocument) -> Vec<Action> {
    let mut out = Vec::new();
    if let Some(names) = &doc.select_ingredient {
        out.push(Action::SelectIngredient { names: names.clone() });
    }
    if let Some(names) = &doc.select_skeleton {
        out.push(Action::SelectSkeleton { names: names.clone() });
    }
    if let Some(index) = doc.update_pivot {
        out.push(Action::UpdatePivot { index });
    }
    if let Some(link) = &doc.update_position {
        out.push(Action::UpdatePosition { link: link.clone() });
    }
    if let Some(d) = &doc.create_rule {
        out.push(Action::CreateRule { description: d.clone() });
    }
    if let Some(d) = &doc.edit_rule {
        out.push(Action::EditRule { description: d.clone() });
    }
    if let Some(names) = &doc.highlight_ingredient {
        out.push(Action::Highlight { names: names.clone() });
    }
    if let Some(changes) = &doc.modify_color {
        out.push(Action::ModifyColor { changes: changes.clone() });
    }
    if let Some(mode) = doc.change_mode {
        out.push(Action::ChangeMode { mode });
    }
    if let Some(on) = doc.labeling {
        out.push(Action::Labeling { on });
    }
    if doc.save_model == Some(true) {
        out.push(Action::SaveModel);
    }
    if doc.load_model == Some(true) {
        out.push(Action::LoadModel);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intent::{parse_intent_document, Rgb};

    #[test]
    fn fixed_order_regardless_of_key_order() {
        let doc = parse_intent_document(
            r#"{"labeling": true, "createRule": "fill it", "selectIngredient": [{"ingredient": "lipid"}], "saveModel": true}"#,
        )
        .unwrap();
        let names: Vec<_> = interpret(&doc).iter().map(Action::name).collect();
        assert_eq!(names, ["select_ingredient", "create_rule", "labeling", "save_model"]);
    }

    #[test]
    fn color_only() {
        let doc = parse_intent_document(r#"{"modifyColor": [{"ingredient": "lipid", "color": "red"}]}"#).unwrap();
        assert_eq!(
            interpret(&doc),
            vec![Action::ModifyColor {
                changes: vec![ColorChange {
                    ingredient: "lipid".into(),
                    color: Rgb([1.0, 0.0, 0.0])
                }]
            }]
        );
    }
}
