//! Offline table-driven backend. It reads the operation, the examples and
//! the input section back out of the prompt, answers with the output of an
//! example whose input matches (newest feedback first), and otherwise falls
//! back to keyword heuristics. The output depends on the prompt text only.

use std::sync::LazyLock;

use regex::Regex;
use serde_json::{json, Map, Value};

use super::backend::{BackendError, CompletionBackend};
use super::prompt::Operation;
use crate::intent::{Rgb, NAMED_COLORS};

#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl MockBackend {
    pub fn new() -> Self {
        MockBackend
    }
}

impl CompletionBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let parsed = ParsedPrompt::parse(prompt);
        let Some(op) = parsed.operation else {
            return Err(BackendError::Unavailable("mock backend: prompt has no operation header".into()));
        };
        let key = normalize(&parsed.user_text);
        let from_examples = parsed
            .feedback
            .iter()
            .rev()
            .chain(parsed.examples.iter())
            .find(|(input, _)| normalize(input) == key)
            .map(|(_, output)| output.clone());
        if let Some(out) = from_examples {
            return Ok(out);
        }
        Ok(match op {
            Operation::CodeGeneration => code_generation(&parsed),
            Operation::RuleExtraction => rule_extraction(&parsed.user_text).to_string(),
            Operation::ParameterAdjustment => parameter_adjustment(&parsed.user_text),
            Operation::RuleSequence => rule_sequence(&parsed),
            Operation::Advisor => advisor(&parsed.user_text),
        })
    }
}

#[derive(Debug, Default)]
struct ParsedPrompt {
    operation: Option<Operation>,
    examples: Vec<(String, String)>,
    feedback: Vec<(String, String)>,
    user_text: String,
    ingredients: Vec<String>,
    skeletons: Vec<String>,
}

const INGREDIENTS_LINE: &str = "Available ingredients:";
const SKELETONS_LINE: &str = "Available skeletons:";

fn name_list(line: &str) -> Vec<String> {
    line.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

impl ParsedPrompt {
    fn parse(prompt: &str) -> ParsedPrompt {
        let mut out = ParsedPrompt::default();
        for line in prompt.lines() {
            if let Some(rest) = line.strip_prefix("# Operation: ") {
                out.operation = Operation::from_name(rest.trim()).ok();
                break;
            }
        }
        for block in prompt.split("\n## ").skip(1) {
            let (heading, body) = block.split_once('\n').unwrap_or((block, ""));
            let Some(rest) = body.strip_prefix("Input: ") else {
                continue;
            };
            let Some((input, output)) = rest.split_once("\nOutput:\n") else {
                continue;
            };
            let output = output.split("\n\n").next().unwrap_or("").trim().to_string();
            let pair = (input.trim().to_string(), output);
            if heading.starts_with("Feedback") {
                out.feedback.push(pair);
            } else if heading.starts_with("Example") {
                out.examples.push(pair);
            }
        }
        if let Some(at) = prompt.rfind("\n# Input\n").or_else(|| prompt.starts_with("# Input\n").then_some(0)) {
            let section = &prompt[at..].trim_start_matches('\n')["# Input\n".len()..];
            // later sections (previous output, errors, clarification) follow
            let section = section.split("\n# ").next().unwrap_or("");
            let mut text = Vec::new();
            for line in section.lines() {
                if let Some(rest) = line.strip_prefix(INGREDIENTS_LINE) {
                    out.ingredients = name_list(rest);
                } else if let Some(rest) = line.strip_prefix(SKELETONS_LINE) {
                    out.skeletons = name_list(rest);
                } else {
                    text.push(line);
                }
            }
            out.user_text = text.join("\n").trim().to_string();
        }
        out
    }
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(['.', '!', '?'])
        .to_lowercase()
}

// ---------------------------------------------------------------------------
// code generation

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z0-9][A-Za-z0-9_-]*").unwrap());
static CHAIN_RESIDUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)chain\s*(?:id\s*)?(\d+)\D{0,12}?residue\s*(?:id\s*)?(\d+)").unwrap());
static MODE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(protein|chain|atomistic|atom|residue)s?[ -](?:level|mode|view|representation|detail)").unwrap()
});
static LABELS_ON: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(show|display|add|turn on|enable)\b.*\blabel").unwrap());
static LABELS_OFF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(hide|remove|turn off|disable|no)\b.*\blabel").unwrap());
static CREATE_VERB: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^(please\s+)?(populate|add|place|put|fill|create|generate|make (?:copies|a copy|\d+ copies)|tile|connect|link|attach|build|scatter|distribute|arrange|repeat|copy|spread|cover|grow)\b",
    )
    .unwrap()
});
static EDIT_WORDS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(elements?|number|count|distance|collisions?|space|occupy|length|tweak\w*|deviation|std|normal|straight|catmull|more|fewer|less)\b",
    )
    .unwrap()
});
static SAVE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(save|store|export)\b").unwrap());
static LOAD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(load|open|restore)\b").unwrap());
static HIGHLIGHT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(highlight|emphasi[sz]e)").unwrap());

/// Catalog names mentioned in `text`, in order of first mention. A word
/// that prefixes several names (e.g. "HDT" for HDT-1 and HDT-2) is reported
/// as written so the session can ask which one was meant.
fn mentions(text: &str, names: &[String]) -> Vec<String> {
    let mut found: Vec<String> = Vec::new();
    let words: Vec<&str> = WORD.find_iter(text).map(|m| m.as_str()).collect();
    for w in &words {
        let lw = w.to_lowercase();
        let stem = lw.strip_suffix('s').unwrap_or(&lw);
        let exact = names.iter().find(|n| {
            let ln = n.to_lowercase();
            ln == lw || ln == stem
        });
        let hit = match exact {
            Some(n) => Some(n.clone()),
            None => {
                let prefixed = names
                    .iter()
                    .filter(|n| {
                        let ln = n.to_lowercase();
                        lw.len() >= 2 && ln.starts_with(&lw) && !ln[lw.len()..].starts_with(char::is_alphabetic)
                    })
                    .count();
                (prefixed > 0).then(|| w.to_string())
            }
        };
        if let Some(h) = hit {
            if !found.contains(&h) {
                found.push(h);
            }
        }
    }
    found
}

fn code_generation(p: &ParsedPrompt) -> String {
    let text = p.user_text.as_str();
    let ingredients = mentions(text, &p.ingredients);
    let skeletons = mentions(text, &p.skeletons);
    let mut doc = Map::new();
    let named = |key: &str, list: &[String]| -> Value {
        Value::Array(list.iter().map(|n| json!({ key: n })).collect())
    };

    let anchors: Vec<(u32, u32)> = CHAIN_RESIDUE
        .captures_iter(text)
        .filter_map(|c| Some((c[1].parse().ok()?, c[2].parse().ok()?)))
        .collect();
    let lower = text.to_lowercase();

    if lower.contains("pivot") {
        if let Some(&(chain, residue)) = anchors.first() {
            if !ingredients.is_empty() {
                doc.insert("selectIngredient".into(), named("ingredient", &ingredients[..1]));
            }
            doc.insert("updatePivot".into(), json!({"chainId": chain, "residueId": residue}));
        }
    } else if anchors.len() >= 2 && ingredients.len() >= 2 {
        doc.insert(
            "updatePosition".into(),
            json!([
                {"mainIngredient": ingredients[0], "chainId": anchors[0].0, "residueId": anchors[0].1},
                {"subIngredient": ingredients[1], "chainId": anchors[1].0, "residueId": anchors[1].1},
            ]),
        );
    } else if CREATE_VERB.is_match(text.trim()) {
        if !ingredients.is_empty() {
            doc.insert("selectIngredient".into(), named("ingredient", &ingredients));
        }
        if !skeletons.is_empty() {
            doc.insert("selectSkeleton".into(), named("skeleton", &skeletons[..1]));
        }
        doc.insert("createRule".into(), Value::String(text.trim().to_string()));
    } else if EDIT_WORDS.is_match(text) && !HIGHLIGHT.is_match(text) && color_in(text).is_none() {
        doc.insert("editRule".into(), Value::String(text.trim().to_string()));
    }

    if HIGHLIGHT.is_match(text) && !ingredients.is_empty() {
        doc.insert("highlightIngredient".into(), named("ingredient", &ingredients));
    }
    if let Some(rgb) = color_in(text) {
        let changes: Vec<Value> = ingredients
            .iter()
            .map(|n| json!({"ingredient": n, "color": rgb.0}))
            .collect();
        if !changes.is_empty() {
            doc.insert("modifyColor".into(), Value::Array(changes));
        }
    }
    if let Some(c) = MODE.captures(text) {
        let mode = match c[1].to_lowercase().as_str() {
            "protein" => "protein",
            "chain" => "chain",
            _ => "atomistic",
        };
        doc.insert("changeMode".into(), Value::String(mode.into()));
    }
    if LABELS_OFF.is_match(text) {
        doc.insert("labeling".into(), Value::Bool(false));
    } else if LABELS_ON.is_match(text) {
        doc.insert("labeling".into(), Value::Bool(true));
    }
    if doc.is_empty() {
        if SAVE.is_match(text) {
            doc.insert("saveModel".into(), Value::Bool(true));
        } else if LOAD.is_match(text) {
            doc.insert("loadModel".into(), Value::Bool(true));
        }
    }
    serde_json::to_string_pretty(&Value::Object(doc)).expect("json value serializes")
}

fn color_in(text: &str) -> Option<Rgb> {
    let lower = text.to_lowercase();
    WORD.find_iter(&lower)
        .map(|m| m.as_str())
        .find(|w| *w == "grey" || NAMED_COLORS.iter().any(|(n, _)| n == w))
        .and_then(Rgb::named)
}

// ---------------------------------------------------------------------------
// rule extraction

static EXTRACTION_TABLE: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    [
        (r"\boccup|\bfill|\binside\b|\binto the\b|\buniformly\b", "fill"),
        (r"\bcurves?\b|\bconnect|\blinkers?\b|\bbetween\b.+\band\b", "connection"),
        (r"\b(relative to|at|on) (the )?(vertex|vertices)\b|\bvertex \d", "parent-child-relative"),
        (r"next to each other on the\b|\bconstrained\b|\bacross the surface\b", "siblings-parent"),
        (r"\bnext to\b|\bcop(y|ies)\b|\brepeat|\btransform\w* between\b|\bside by side\b|\bin a row\b", "siblings"),
        (r"\bdistance\b|\babove\b|\bbelow\b|\bon the surface\b|\boffset\b", "parent-child-distance"),
    ]
    .into_iter()
    .map(|(re, name)| (Regex::new(&format!("(?i){re}")).unwrap(), name))
    .collect()
});

fn rule_extraction(text: &str) -> &'static str {
    EXTRACTION_TABLE
        .iter()
        .find(|(re, _)| re.is_match(text))
        .map(|(_, name)| *name)
        .unwrap_or("unknown")
}

// ---------------------------------------------------------------------------
// parameter adjustment

static NUM: &str = r"(\d+(?:\.\d+)?)";
static P_SPACE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+)\s*(?:%|percent)").unwrap());
static P_ELEMENTS_KEY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:elements?|number|count|amount)\b\D{0,16}?(\d+)\b").unwrap());
static P_ELEMENTS_VERB: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:populate|place|add|use|create|generate|put|want|need|make)\s+(\d+)\b(?:\s*[^%\d\s.])").unwrap()
});
static P_ELEMENTS_NOUN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(\d+)\s+(?:elements|instances|copies|balls|atoms|lipids|proteins|molecules|spheres)\b").unwrap()
});
static P_DISTANCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)\bdistance\b(?:\s+(?:of|to|is|at|=|:))*\s*{NUM}")).unwrap());
static P_DISTANCE_REL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i){NUM}\s*(?:units?|nm|angstroms?|a)?\s+(?:above|below|away from|from)\b")).unwrap()
});
static P_STD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i)\b(?:std|standard deviation|deviation|sigma|spread)\b(?:\s+(?:of|to|is|=|:))*\s*{NUM}")).unwrap()
});
static P_LENGTH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)\blength\b(?:\s+(?:of|to|is|=|:))*\s*{NUM}")).unwrap());
static P_TWEAK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)\b(?:tweak\w*|tilt\w*|jitter\w*)\b\D{{0,20}}?{NUM}")).unwrap());
static P_NO_COLLISION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(no|without|disable|ignore|skip|turn off)\s+(the\s+)?collision|collisions?\s+(checks?\s+|detection\s+)?(off|disabled)").unwrap()
});
static P_COLLISION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(with|enable|turn on|check)\s+(the\s+)?collision|collisions?\s+(checks?\s+|detection\s+)?(on|enabled)").unwrap()
});
static P_ON_SURFACE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bon the (skeleton )?surface\b").unwrap());

fn number(re: &Regex, text: &str) -> Option<f64> {
    re.captures(text).and_then(|c| c[1].parse().ok())
}

fn parameter_adjustment(text: &str) -> String {
    let mut patch = Map::new();
    if let Some(space) = P_SPACE.captures(text).and_then(|c| c[1].parse::<u64>().ok()) {
        patch.insert("space".into(), json!(space));
    } else if let Some(n) = [&*P_ELEMENTS_KEY, &*P_ELEMENTS_NOUN, &*P_ELEMENTS_VERB]
        .into_iter()
        .find_map(|re| re.captures(text).and_then(|c| c[1].parse::<u64>().ok()))
    {
        patch.insert("elements".into(), json!(n));
    }
    if let Some(d) = number(&P_DISTANCE, text).or_else(|| number(&P_DISTANCE_REL, text)) {
        patch.insert("distance".into(), json!(d));
    } else if P_ON_SURFACE.is_match(text) {
        patch.insert("distance".into(), json!(0.0));
    }
    if P_NO_COLLISION.is_match(text) {
        patch.insert("collisionDetection".into(), json!(false));
    } else if P_COLLISION.is_match(text) {
        patch.insert("collisionDetection".into(), json!(true));
    }
    let lower = text.to_lowercase();
    if lower.contains("inverse normal") || lower.contains("inverse-normal") || lower.contains("opposite") || lower.contains("flip") {
        patch.insert("alignDirection".into(), json!("inverse-normal"));
    } else if lower.contains("along the normal") || lower.contains("normal direction") {
        patch.insert("alignDirection".into(), json!("normal"));
    }
    if let Some(l) = number(&P_LENGTH, text) {
        patch.insert("length".into(), json!(l));
    }
    if lower.contains("straight") {
        patch.insert("curve".into(), json!("straight"));
    } else if lower.contains("catmull") || lower.contains("smooth curve") {
        patch.insert("curve".into(), json!("catmull-rom"));
    }
    if let Some(t) = P_TWEAK.captures(text) {
        patch.insert("tweaking".into(), json!(format!("{} degrees", &t[1])));
    }
    if let Some(s) = number(&P_STD, text) {
        patch.insert("std".into(), json!(s));
    }
    serde_json::to_string_pretty(&Value::Object(patch)).expect("json value serializes")
}

// ---------------------------------------------------------------------------
// rule sequence

/// Blood plasma composition by descending share of space.
const PLASMA: [(&str, u32); 8] = [
    ("Albumin", 6),
    ("IgG", 5),
    ("Fibrinogen", 4),
    ("Transferrin", 3),
    ("IgA", 3),
    ("Alpha2Macroglobulin", 2),
    ("Haptoglobin", 2),
    ("Heparin", 2),
];

fn rule_sequence(p: &ParsedPrompt) -> String {
    let lower = p.user_text.to_lowercase();
    let container = mentions(&p.user_text, &["box".to_string(), "membrane".into(), "capsid".into()])
        .into_iter()
        .next()
        .unwrap_or_else(|| "box".into())
        .to_lowercase();
    let rows: Vec<(String, u32)> = if lower.contains("plasma") {
        PLASMA.iter().map(|(n, s)| (n.to_string(), *s)).collect()
    } else {
        mentions(&p.user_text, &p.ingredients)
            .into_iter()
            .enumerate()
            .map(|(i, n)| (n, 5u32.saturating_sub(i as u32).max(1)))
            .collect()
    };
    rows.iter()
        .enumerate()
        .map(|(i, (n, s))| format!("{}. Add {n} into the {container} to occupy {s}% of the space", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

// ---------------------------------------------------------------------------
// advisor

fn advisor(question: &str) -> String {
    let subject = if question.trim().is_empty() {
        "the model".to_string()
    } else {
        format!("\"{}\"", question.trim())
    };
    format!(
        "Plan for {subject}:\n\
         1. Build the enclosing skeleton first (membrane, capsid or box) so later rules have a surface or volume to refer to.\n\
         2. Place membrane-bound proteins with parent-child distance or siblings-parent rules and tune elements and distance.\n\
         3. Fill the interior with soluble ingredients, largest share of space first.\n\
         4. Finish with connection rules for linkers between placed instances."
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::translator::prompt::PromptStore;

    fn payload(text: &str) -> String {
        format!(
            "{text}\n{INGREDIENTS_LINE} Au, HDT-1, HDT-2, SpyCatcher, lipid\n{SKELETONS_LINE} box, rectangle, membrane"
        )
    }

    fn ask(op: Operation, text: &str) -> String {
        let store = PromptStore::in_memory();
        MockBackend.complete(&store.build(op, &payload(text))).unwrap()
    }

    #[test]
    fn parses_prompt_sections() {
        let store = PromptStore::in_memory();
        let p = ParsedPrompt::parse(&store.build(Operation::RuleExtraction, &payload("fill the box")));
        assert_eq!(p.operation, Some(Operation::RuleExtraction));
        assert_eq!(p.examples.len(), 6);
        assert_eq!(p.user_text, "fill the box");
        assert_eq!(p.ingredients.len(), 5);
        assert_eq!(p.skeletons, vec!["box", "rectangle", "membrane"]);
    }

    #[test]
    fn example_output_is_returned_verbatim() {
        let store = PromptStore::in_memory();
        let rec = store.record(Operation::CodeGeneration);
        let ex = &rec.initial_examples[1];
        assert_eq!(ask(Operation::CodeGeneration, &ex.input), ex.output.trim());
    }

    #[test]
    fn ambiguous_prefix_is_kept_as_written() {
        let names: Vec<String> = ["HDT-1", "HDT-2", "SpyCatcher"].map(String::from).to_vec();
        assert_eq!(mentions("create curves between HDT and SpyCatcher", &names), vec!["HDT", "SpyCatcher"]);
        assert_eq!(mentions("put HDT-2 there", &names), vec!["HDT-2"]);
        assert_eq!(mentions("lipids", &["lipid".to_string()]), vec!["lipid"]);
    }

    #[test]
    fn code_generation_heuristics() {
        let v: Value = serde_json::from_str(&ask(Operation::CodeGeneration, "Populate HDT at a distance above the rectangle")).unwrap();
        assert_eq!(v["selectIngredient"], json!([{"ingredient": "HDT"}]));
        assert_eq!(v["selectSkeleton"], json!([{"skeleton": "rectangle"}]));
        let v: Value = serde_json::from_str(&ask(Operation::CodeGeneration, "Set the elements to 400")).unwrap();
        assert_eq!(v, json!({"editRule": "Set the elements to 400"}));
        let v: Value = serde_json::from_str(&ask(Operation::CodeGeneration, "color the Au gold and show labels")).unwrap();
        assert_eq!(v["modifyColor"][0]["ingredient"], "Au");
        assert_eq!(v["labeling"], true);
        assert_eq!(ask(Operation::CodeGeneration, "hmm"), "{}");
    }

    #[test]
    fn parameter_heuristics() {
        let v = |t| serde_json::from_str::<Value>(&ask(Operation::ParameterAdjustment, t)).unwrap();
        assert_eq!(v("Add Heparin into the box to occupy 2% of the space"), json!({"space": 2}));
        assert_eq!(
            v("set the distance to 3.5 with a standard deviation of 0.5 and 60 elements"),
            json!({"elements": 60, "distance": 3.5, "std": 0.5})
        );
        assert_eq!(v("populate 50 balls, length 12, straight"), json!({"elements": 50, "length": 12.0, "curve": "straight"}));
        assert_eq!(v("tweak them by 20 degrees"), json!({"tweaking": "20 degrees"}));
    }

    #[test]
    fn table_order_first_match_wins() {
        assert_eq!(rule_extraction("populate lipids at distance 3 above the membrane surface"), "parent-child-distance");
        assert_eq!(rule_extraction("Populate the Au atom uniformly on a rectangle skeleton"), "fill");
        assert_eq!(rule_extraction("Tile the capsid proteins next to each other across the membrane"), "siblings");
        assert_eq!(rule_extraction("sing a song"), "unknown");
    }

    #[test]
    fn plasma_fixture_descends() {
        let out = ask(Operation::RuleSequence, "Generate a blood plasma model inside a box.");
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 8);
        assert_eq!(lines[7], "8. Add Heparin into the box to occupy 2% of the space");
    }

    #[test]
    fn pure() {
        let store = PromptStore::in_memory();
        let prompt = store.build(Operation::Advisor, "Which part of SARS-CoV-2 should I model first?");
        assert_eq!(MockBackend.complete(&prompt), MockBackend.complete(&prompt));
        assert!(!MockBackend.complete(&store.build(Operation::Advisor, "")).unwrap().is_empty());
    }
}
