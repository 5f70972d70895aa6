//! The two JSON grammars the translator emits: turn intents and rule
//! parameter patches.
//!
//! Parsing is strict. Every deviation from the grammar becomes a
//! [`ValidationError`] with a JSON-pointer path, and the rendered error list
//! is what gets fed back to the generator on a correction round.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Parse,
    ArrayShape,
    DataType,
    UnknownKey,
    Domain,
}

impl ErrorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorKind::Parse => "parse",
            ErrorKind::ArrayShape => "array-shape",
            ErrorKind::DataType => "data-type",
            ErrorKind::UnknownKey => "unknown-key",
            ErrorKind::Domain => "domain",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Path of the document root.
pub const ROOT: &str = "/";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationError {
    pub kind: ErrorKind,
    pub path: String,
    pub message: String,
}

impl ValidationError {
    fn new(kind: ErrorKind, path: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationError {
            kind,
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ERROR {} at {}: {}", self.kind, self.path, self.message)
    }
}

/// Render errors as one line each, sorted by path, for a regeneration
/// prompt.
///
/// # Panics
/// On an empty list; callers only format after a failed validation.
pub fn format_errors_for_regeneration(errors: &[ValidationError]) -> String {
    assert!(!errors.is_empty(), "no validation errors to format");
    let mut sorted: Vec<&ValidationError> = errors.iter().collect();
    sorted.sort_by(|a, b| a.path.cmp(&b.path));
    sorted.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n")
}

// ---------------------------------------------------------------------------
// domain values

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    Protein,
    Chain,
    Atomistic,
}

impl RenderMode {
    /// Accepts the three mode names plus the informal synonyms users reach
    /// for ("residue level", "amino acid level", ...).
    pub fn parse(text: &str) -> Option<RenderMode> {
        let mut key = text.trim().to_ascii_lowercase().replace(['-', '_'], " ");
        for suffix in [" level", " mode", " view"] {
            if let Some(stripped) = key.strip_suffix(suffix) {
                key = stripped.trim().to_string();
            }
        }
        match key.as_str() {
            "protein" | "proteins" => Some(RenderMode::Protein),
            "chain" | "chains" => Some(RenderMode::Chain),
            "atomistic" | "atomic" | "atom" | "atoms" | "residue" | "residues" | "amino acid"
            | "amino acids" => Some(RenderMode::Atomistic),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RenderMode::Protein => "protein",
            RenderMode::Chain => "chain",
            RenderMode::Atomistic => "atomistic",
        }
    }
}

/// RGB color with components in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rgb(pub [f64; 3]);

pub const NAMED_COLORS: [(&str, [f64; 3]); 16] = [
    ("red", [1.0, 0.0, 0.0]),
    ("green", [0.0, 0.5, 0.0]),
    ("blue", [0.0, 0.0, 1.0]),
    ("yellow", [1.0, 1.0, 0.0]),
    ("orange", [1.0, 0.65, 0.0]),
    ("purple", [0.5, 0.0, 0.5]),
    ("cyan", [0.0, 1.0, 1.0]),
    ("magenta", [1.0, 0.0, 1.0]),
    ("white", [1.0, 1.0, 1.0]),
    ("black", [0.0, 0.0, 0.0]),
    ("gray", [0.5, 0.5, 0.5]),
    ("brown", [0.6, 0.4, 0.2]),
    ("pink", [1.0, 0.75, 0.8]),
    ("lime", [0.0, 1.0, 0.0]),
    ("navy", [0.0, 0.0, 0.5]),
    ("gold", [1.0, 0.84, 0.0]),
];

impl Rgb {
    pub fn named(name: &str) -> Option<Rgb> {
        let key = name.trim().to_ascii_lowercase();
        let key = if key == "grey" { "gray".to_string() } else { key };
        NAMED_COLORS
            .iter()
            .find(|(n, _)| *n == key)
            .map(|(_, c)| Rgb(*c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidueIndex {
    pub chain_id: u32,
    pub residue_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidueAnchor {
    pub ingredient: String,
    pub chain_id: u32,
    pub residue_id: u32,
}

/// The main anchor stays put; the sub instance moves onto it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionLink {
    pub main: ResidueAnchor,
    pub sub: ResidueAnchor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorChange {
    pub ingredient: String,
    pub color: Rgb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignDirection {
    #[serde(rename = "normal")]
    Normal,
    #[serde(rename = "inverse-normal")]
    InverseNormal,
}

impl AlignDirection {
    pub fn parse(text: &str) -> Option<AlignDirection> {
        let key: String = text
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "normal" | "alongnormal" | "skeletonnormal" => Some(AlignDirection::Normal),
            "inversenormal" | "inverse" | "opposite" | "oppositenormal" | "reverse"
            | "reversenormal" | "negativenormal" | "antinormal" | "flipped" => {
                Some(AlignDirection::InverseNormal)
            }
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AlignDirection::Normal => "normal",
            AlignDirection::InverseNormal => "inverse-normal",
        }
    }
}

// ---------------------------------------------------------------------------
// documents

/// Validated intents of one user turn. Only fields present in the source
/// text are `Some`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntentDocument {
    pub select_ingredient: Option<Vec<String>>,
    pub select_skeleton: Option<Vec<String>>,
    pub create_rule: Option<String>,
    pub edit_rule: Option<String>,
    pub save_model: Option<bool>,
    pub load_model: Option<bool>,
    pub update_pivot: Option<ResidueIndex>,
    pub update_position: Option<PositionLink>,
    pub highlight_ingredient: Option<Vec<String>>,
    pub modify_color: Option<Vec<ColorChange>>,
    pub change_mode: Option<RenderMode>,
    pub labeling: Option<bool>,
}

/// Key vocabulary in canonical order.
pub const INTENT_KEYS: [&str; 12] = [
    "selectIngredient",
    "selectSkeleton",
    "createRule",
    "editRule",
    "saveModel",
    "loadModel",
    "updatePivot",
    "updatePosition",
    "highlightIngredient",
    "modifyColor",
    "changeMode",
    "labeling",
];

/// Rule parameter patch. Unset fields leave the rule untouched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterPatch {
    pub elements: Option<u32>,
    pub distance: Option<f64>,
    pub collision_detection: Option<bool>,
    pub space: Option<u32>,
    pub align_direction: Option<AlignDirection>,
    pub length: Option<f64>,
    pub curve: Option<String>,
    pub tweaking: Option<String>,
    pub std: Option<f64>,
}

pub const PATCH_KEYS: [&str; 9] = [
    "elements",
    "distance",
    "collisionDetection",
    "space",
    "alignDirection",
    "length",
    "curve",
    "tweaking",
    "std",
];

impl ParameterPatch {
    pub fn is_empty(&self) -> bool {
        *self == ParameterPatch::default()
    }
}

// ---------------------------------------------------------------------------
// wire forms (serialization in canonical key order)

#[derive(Serialize)]
struct NamedIngredient<'a> {
    ingredient: &'a str,
}

#[derive(Serialize)]
struct NamedSkeleton<'a> {
    skeleton: &'a str,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct PivotWire {
    chain_id: u32,
    residue_id: u32,
}

#[derive(Serialize)]
#[serde(untagged)]
enum PositionWire<'a> {
    #[serde(rename_all = "camelCase")]
    Main {
        main_ingredient: &'a str,
        chain_id: u32,
        residue_id: u32,
    },
    #[serde(rename_all = "camelCase")]
    Sub {
        sub_ingredient: &'a str,
        chain_id: u32,
        residue_id: u32,
    },
}

#[derive(Serialize)]
struct ColorWire<'a> {
    ingredient: &'a str,
    color: [f64; 3],
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct IntentWire<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    select_ingredient: Option<Vec<NamedIngredient<'a>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    select_skeleton: Option<Vec<NamedSkeleton<'a>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    create_rule: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edit_rule: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    save_model: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    load_model: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    update_pivot: Option<PivotWire>,
    #[serde(skip_serializing_if = "Option::is_none")]
    update_position: Option<[PositionWire<'a>; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    highlight_ingredient: Option<Vec<NamedIngredient<'a>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    modify_color: Option<Vec<ColorWire<'a>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    change_mode: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labeling: Option<bool>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct PatchWire<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    elements: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    collision_detection: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    space: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    align_direction: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    curve: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tweaking: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    std: Option<f64>,
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("wire structs always serialize")
}

impl IntentDocument {
    fn wire(&self) -> IntentWire<'_> {
        fn names(v: &Option<Vec<String>>) -> Option<Vec<NamedIngredient<'_>>> {
            v.as_ref()
                .map(|v| v.iter().map(|n| NamedIngredient { ingredient: n }).collect())
        }
        IntentWire {
            select_ingredient: names(&self.select_ingredient),
            select_skeleton: self
                .select_skeleton
                .as_ref()
                .map(|v| v.iter().map(|n| NamedSkeleton { skeleton: n }).collect()),
            create_rule: self.create_rule.as_deref(),
            edit_rule: self.edit_rule.as_deref(),
            save_model: self.save_model,
            load_model: self.load_model,
            update_pivot: self.update_pivot.map(|p| PivotWire {
                chain_id: p.chain_id,
                residue_id: p.residue_id,
            }),
            update_position: self.update_position.as_ref().map(|l| {
                [
                    PositionWire::Main {
                        main_ingredient: &l.main.ingredient,
                        chain_id: l.main.chain_id,
                        residue_id: l.main.residue_id,
                    },
                    PositionWire::Sub {
                        sub_ingredient: &l.sub.ingredient,
                        chain_id: l.sub.chain_id,
                        residue_id: l.sub.residue_id,
                    },
                ]
            }),
            highlight_ingredient: names(&self.highlight_ingredient),
            modify_color: self.modify_color.as_ref().map(|v| {
                v.iter()
                    .map(|c| ColorWire {
                        ingredient: &c.ingredient,
                        color: c.color.0,
                    })
                    .collect()
            }),
            change_mode: self.change_mode.map(|m| m.as_str()),
            labeling: self.labeling,
        }
    }

    /// Canonical JSON: keys in vocabulary order, 2-space indentation.
    pub fn to_json(&self) -> String {
        to_pretty(&self.wire())
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self.wire()).expect("wire structs always serialize")
    }

    pub fn is_empty(&self) -> bool {
        *self == IntentDocument::default()
    }
}

impl Serialize for IntentDocument {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.wire().serialize(s)
    }
}

impl ParameterPatch {
    fn wire(&self) -> PatchWire<'_> {
        PatchWire {
            elements: self.elements,
            distance: self.distance,
            collision_detection: self.collision_detection,
            space: self.space,
            align_direction: self.align_direction.map(|a| a.as_str()),
            length: self.length,
            curve: self.curve.as_deref(),
            tweaking: self.tweaking.as_deref(),
            std: self.std,
        }
    }

    pub fn to_json(&self) -> String {
        to_pretty(&self.wire())
    }
}

impl Serialize for ParameterPatch {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.wire().serialize(s)
    }
}

// ---------------------------------------------------------------------------
// extraction

/// Strip markdown fences and surrounding prose, returning the first
/// top-level JSON object. Text without any `{` is returned trimmed so the
/// JSON parser can report on it.
pub fn extract_json_body(raw: &str) -> &str {
    let mut text = raw.trim();
    if let Some(open) = text.find("```") {
        let after = &text[open + 3..];
        // skip the info string ("json") up to the end of the fence line
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        let body = match body.find("```") {
            Some(close) => &body[..close],
            None => body,
        };
        text = body.trim();
    }
    let Some(start) = text.find('{') else {
        return text;
    };
    match balanced_object_end(&text[start..]) {
        Some(end) => &text[start..start + end],
        None => &text[start..],
    }
}

/// Byte length of the balanced `{...}` prefix of `s`, string-aware.
fn balanced_object_end(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, ch) in s.char_indices() {
        if in_str {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_str = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn snippet(text: &str) -> String {
    const MAX: usize = 60;
    let flat: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() <= MAX {
        flat
    } else {
        let cut: String = flat.chars().take(MAX).collect();
        format!("{cut}...")
    }
}

fn fragment(v: &Value) -> String {
    snippet(&v.to_string())
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn parse_object(raw: &str) -> Result<Map<String, Value>, ValidationError> {
    let body = extract_json_body(raw);
    let value: Value = serde_json::from_str(body).map_err(|e| {
        ValidationError::new(
            ErrorKind::Parse,
            ROOT,
            format!("invalid JSON ({e}) in `{}`", snippet(body)),
        )
    })?;
    match value {
        Value::Object(map) => Ok(map),
        other => Err(ValidationError::new(
            ErrorKind::DataType,
            ROOT,
            format!("expected a JSON object, found {} {}", type_name(&other), fragment(&other)),
        )),
    }
}

/// Collects errors while walking a document.
struct Checker {
    errors: Vec<ValidationError>,
}

impl Checker {
    fn push(&mut self, kind: ErrorKind, path: &str, message: String) {
        self.errors.push(ValidationError::new(kind, path, message));
    }

    fn wrong_type(&mut self, path: &str, expected: &str, found: &Value) {
        self.push(
            ErrorKind::DataType,
            path,
            format!("expected {expected}, found {} {}", type_name(found), fragment(found)),
        );
    }

    fn boolean(&mut self, path: &str, v: &Value) -> Option<bool> {
        match v {
            Value::Bool(b) => Some(*b),
            other => {
                self.wrong_type(path, "boolean", other);
                None
            }
        }
    }

    fn text(&mut self, path: &str, v: &Value) -> Option<String> {
        match v {
            Value::String(s) if s.trim().is_empty() => {
                self.push(ErrorKind::Domain, path, "expected non-empty text, found \"\"".into());
                None
            }
            Value::String(s) => Some(s.trim().to_string()),
            other => {
                self.wrong_type(path, "string", other);
                None
            }
        }
    }

    fn index(&mut self, path: &str, v: &Value) -> Option<u32> {
        self.integer(path, v, 0)
    }

    /// Integer that must be `>= min`.
    fn integer(&mut self, path: &str, v: &Value, min: i64) -> Option<u32> {
        let Value::Number(n) = v else {
            self.wrong_type(path, "integer", v);
            return None;
        };
        match (n.as_u64(), n.as_i64()) {
            (Some(u), _) if u >= min.max(0) as u64 && u <= u32::MAX as u64 => Some(u as u32),
            (Some(u), _) if u > u32::MAX as u64 => {
                self.push(ErrorKind::Domain, path, format!("value {u} is too large"));
                None
            }
            (Some(_), _) | (None, Some(_)) => {
                let bound = if min <= 0 { ">= 0" } else { "positive" };
                self.push(ErrorKind::Domain, path, format!("expected {bound} integer, found {n}"));
                None
            }
            (None, None) => {
                self.wrong_type(path, "integer", v);
                None
            }
        }
    }

    /// Real that must be `>= 0` (or `> 0` when `strict`).
    fn real(&mut self, path: &str, v: &Value, strict: bool) -> Option<f64> {
        let Some(x) = v.as_f64() else {
            self.wrong_type(path, "number", v);
            return None;
        };
        let ok = if strict { x > 0.0 } else { x >= 0.0 };
        if !ok {
            let bound = if strict { "> 0" } else { ">= 0" };
            self.push(ErrorKind::Domain, path, format!("expected number {bound}, found {x}"));
            return None;
        }
        Some(x)
    }

    fn object<'v>(&mut self, path: &str, v: &'v Value, kind: ErrorKind) -> Option<&'v Map<String, Value>> {
        match v {
            Value::Object(m) => Some(m),
            other => {
                self.push(
                    kind,
                    path,
                    format!("expected an object, found {} {}", type_name(other), fragment(other)),
                );
                None
            }
        }
    }

    fn array<'v>(&mut self, path: &str, v: &'v Value, what: &str) -> Option<&'v Vec<Value>> {
        match v {
            Value::Array(a) if a.is_empty() => {
                self.push(ErrorKind::Domain, path, format!("expected at least one {what}, found []"));
                None
            }
            Value::Array(a) => Some(a),
            other => {
                self.push(
                    ErrorKind::ArrayShape,
                    path,
                    format!("expected an array of {what}, found {} {}", type_name(other), fragment(other)),
                );
                None
            }
        }
    }

    fn unknown_keys(&mut self, path: &str, map: &Map<String, Value>, allowed: &[&str]) {
        for key in map.keys().filter(|k| !allowed.contains(&k.as_str())) {
            let hint = allowed
                .iter()
                .map(|a| (strsim::levenshtein(a, key), a))
                .min()
                .filter(|(d, _)| *d <= 3)
                .map(|(_, a)| format!("; did you mean \"{a}\"?"))
                .unwrap_or_default();
            let at = if path == ROOT { format!("/{key}") } else { format!("{path}/{key}") };
            self.push(ErrorKind::UnknownKey, &at, format!("unknown key \"{key}\"{hint}"));
        }
    }

    /// `[{"<key>": name}, ...]`; bare strings are accepted too.
    fn name_list(&mut self, path: &str, v: &Value, key: &str) -> Option<Vec<String>> {
        let items = self.array(path, v, &format!("{{\"{key}\": name}} objects"))?;
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            let at = format!("{path}/{i}");
            match item {
                Value::String(_) => match self.text(&at, item) {
                    Some(s) => out.push(s),
                    None => ok = false,
                },
                Value::Object(m) => {
                    self.unknown_keys(&at, m, &[key]);
                    match m.get(key) {
                        Some(name) => match self.text(&format!("{at}/{key}"), name) {
                            Some(s) => out.push(s),
                            None => ok = false,
                        },
                        None => {
                            self.push(ErrorKind::ArrayShape, &at, format!("missing key \"{key}\" in {}", fragment(item)));
                            ok = false;
                        }
                    }
                }
                other => {
                    self.push(
                        ErrorKind::ArrayShape,
                        &at,
                        format!("expected {{\"{key}\": name}}, found {} {}", type_name(other), fragment(other)),
                    );
                    ok = false;
                }
            }
        }
        ok.then_some(out)
    }

    fn required<'v>(&mut self, path: &str, map: &'v Map<String, Value>, key: &str, kind: ErrorKind) -> Option<&'v Value> {
        let v = map.get(key);
        if v.is_none() {
            self.push(kind, path, format!("missing key \"{key}\" in {}", fragment(&Value::Object(map.clone()))));
        }
        v
    }

    fn pivot(&mut self, path: &str, v: &Value) -> Option<ResidueIndex> {
        let m = self.object(path, v, ErrorKind::DataType)?;
        self.unknown_keys(path, m, &["chainId", "residueId"]);
        let chain = self.required(path, m, "chainId", ErrorKind::DataType);
        let residue = self.required(path, m, "residueId", ErrorKind::DataType);
        let chain_id = chain.and_then(|c| self.index(&format!("{path}/chainId"), c));
        let residue_id = residue.and_then(|r| self.index(&format!("{path}/residueId"), r));
        Some(ResidueIndex {
            chain_id: chain_id?,
            residue_id: residue_id?,
        })
    }

    fn position(&mut self, path: &str, v: &Value) -> Option<PositionLink> {
        let items = self.array(path, v, "residue anchors")?;
        if items.len() != 2 {
            self.push(
                ErrorKind::ArrayShape,
                path,
                format!("expected exactly 2 entries (main and sub), found {} in {}", items.len(), fragment(v)),
            );
            return None;
        }
        let mut main = None;
        let mut sub = None;
        for (i, item) in items.iter().enumerate() {
            let at = format!("{path}/{i}");
            let Some(m) = self.object(&at, item, ErrorKind::ArrayShape) else {
                continue;
            };
            let role = match (m.contains_key("mainIngredient"), m.contains_key("subIngredient")) {
                (true, false) => "mainIngredient",
                (false, true) => "subIngredient",
                _ => {
                    self.push(
                        ErrorKind::ArrayShape,
                        &at,
                        format!("expected exactly one of \"mainIngredient\"/\"subIngredient\" in {}", fragment(item)),
                    );
                    continue;
                }
            };
            self.unknown_keys(&at, m, &[role, "chainId", "residueId"]);
            let name = self.text(&format!("{at}/{role}"), &m[role]);
            let chain = self.required(&at, m, "chainId", ErrorKind::ArrayShape);
            let residue = self.required(&at, m, "residueId", ErrorKind::ArrayShape);
            let chain_id = chain.and_then(|c| self.index(&format!("{at}/chainId"), c));
            let residue_id = residue.and_then(|r| self.index(&format!("{at}/residueId"), r));
            let anchor = match (name, chain_id, residue_id) {
                (Some(ingredient), Some(chain_id), Some(residue_id)) => Some(ResidueAnchor {
                    ingredient,
                    chain_id,
                    residue_id,
                }),
                _ => None,
            };
            let slot = if role == "mainIngredient" { &mut main } else { &mut sub };
            if slot.is_some() {
                self.push(ErrorKind::ArrayShape, &at, format!("duplicate \"{role}\" entry"));
            }
            *slot = Some(anchor);
        }
        match (main, sub) {
            (Some(Some(main)), Some(Some(sub))) => Some(PositionLink { main, sub }),
            (None, _) | (_, None) => {
                self.push(ErrorKind::ArrayShape, path, "need one mainIngredient and one subIngredient entry".into());
                None
            }
            _ => None,
        }
    }

    fn color(&mut self, path: &str, v: &Value) -> Option<Rgb> {
        match v {
            Value::String(s) => match Rgb::named(s) {
                Some(c) => Some(c),
                None => {
                    self.push(ErrorKind::Domain, path, format!("unknown color name \"{s}\""));
                    None
                }
            },
            Value::Array(a) if a.len() == 3 => {
                let mut out = [0.0; 3];
                let mut ok = true;
                for (i, c) in a.iter().enumerate() {
                    let at = format!("{path}/{i}");
                    match c.as_f64() {
                        Some(x) if (0.0..=1.0).contains(&x) => out[i] = x,
                        Some(x) => {
                            self.push(ErrorKind::Domain, &at, format!("color component {x} outside [0, 1]"));
                            ok = false;
                        }
                        None => {
                            self.wrong_type(&at, "number", c);
                            ok = false;
                        }
                    }
                }
                ok.then_some(Rgb(out))
            }
            other => {
                self.wrong_type(path, "an RGB triple or color name", other);
                None
            }
        }
    }

    fn colors(&mut self, path: &str, v: &Value) -> Option<Vec<ColorChange>> {
        let items = self.array(path, v, "{\"ingredient\", \"color\"} objects")?;
        let mut out = Vec::new();
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            let at = format!("{path}/{i}");
            let Some(m) = self.object(&at, item, ErrorKind::ArrayShape) else {
                ok = false;
                continue;
            };
            self.unknown_keys(&at, m, &["ingredient", "color"]);
            let name = self
                .required(&at, m, "ingredient", ErrorKind::ArrayShape)
                .and_then(|n| self.text(&format!("{at}/ingredient"), n));
            let color = self
                .required(&at, m, "color", ErrorKind::ArrayShape)
                .and_then(|c| self.color(&format!("{at}/color"), c));
            match (name, color) {
                (Some(ingredient), Some(color)) => out.push(ColorChange { ingredient, color }),
                _ => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn finish<T>(mut self, value: T) -> Result<T, Vec<ValidationError>> {
        if self.errors.is_empty() {
            Ok(value)
        } else {
            self.errors.sort_by(|a, b| a.path.cmp(&b.path));
            Err(self.errors)
        }
    }
}

/// Parse and validate a turn-intent document.
pub fn parse_intent_document(raw: &str) -> Result<IntentDocument, Vec<ValidationError>> {
    let map = parse_object(raw).map_err(|e| vec![e])?;
    if map.is_empty() {
        return Err(vec![ValidationError::new(
            ErrorKind::Domain,
            ROOT,
            "empty intent: the document {} requests no action",
        )]);
    }
    let mut ck = Checker { errors: Vec::new() };
    ck.unknown_keys(ROOT, &map, &INTENT_KEYS);
    let mut doc = IntentDocument::default();
    for (key, v) in &map {
        let path = format!("/{key}");
        let p = path.as_str();
        match key.as_str() {
            "selectIngredient" => doc.select_ingredient = ck.name_list(p, v, "ingredient"),
            "selectSkeleton" => doc.select_skeleton = ck.name_list(p, v, "skeleton"),
            "createRule" => doc.create_rule = ck.text(p, v),
            "editRule" => doc.edit_rule = ck.text(p, v),
            "saveModel" => doc.save_model = ck.boolean(p, v),
            "loadModel" => doc.load_model = ck.boolean(p, v),
            "updatePivot" => doc.update_pivot = ck.pivot(p, v),
            "updatePosition" => doc.update_position = ck.position(p, v),
            "highlightIngredient" => doc.highlight_ingredient = ck.name_list(p, v, "ingredient"),
            "modifyColor" => doc.modify_color = ck.colors(p, v),
            "changeMode" => {
                doc.change_mode = match v {
                    Value::String(s) => {
                        let mode = RenderMode::parse(s);
                        if mode.is_none() {
                            ck.push(
                                ErrorKind::Domain,
                                p,
                                format!("unknown render mode \"{s}\"; expected protein, chain or atomistic"),
                            );
                        }
                        mode
                    }
                    other => {
                        ck.wrong_type(p, "string", other);
                        None
                    }
                }
            }
            "labeling" => doc.labeling = ck.boolean(p, v),
            _ => {}
        }
    }
    ck.finish(doc)
}

/// Parse and validate a rule parameter patch.
pub fn parse_parameter_patch(raw: &str) -> Result<ParameterPatch, Vec<ValidationError>> {
    let map = parse_object(raw).map_err(|e| vec![e])?;
    let mut ck = Checker { errors: Vec::new() };
    ck.unknown_keys(ROOT, &map, &PATCH_KEYS);
    let mut patch = ParameterPatch::default();
    for (key, v) in &map {
        let path = format!("/{key}");
        let p = path.as_str();
        match key.as_str() {
            "elements" => patch.elements = ck.integer(p, v, 1),
            "distance" => patch.distance = ck.real(p, v, false),
            "collisionDetection" => patch.collision_detection = ck.boolean(p, v),
            "space" => {
                patch.space = ck.integer(p, v, 1).and_then(|s| {
                    if s > 100 {
                        ck.push(ErrorKind::Domain, p, format!("space is a percentage in (0, 100], found {s}"));
                        None
                    } else {
                        Some(s)
                    }
                })
            }
            "alignDirection" => {
                patch.align_direction = ck.text(p, v).and_then(|s| {
                    let dir = AlignDirection::parse(&s);
                    if dir.is_none() {
                        ck.push(
                            ErrorKind::Domain,
                            p,
                            format!("unknown align direction \"{s}\"; expected normal or inverse-normal"),
                        );
                    }
                    dir
                })
            }
            "length" => patch.length = ck.real(p, v, true),
            "curve" => patch.curve = ck.text(p, v),
            "tweaking" => patch.tweaking = ck.text(p, v),
            "std" => patch.std = ck.real(p, v, false),
            _ => {}
        }
    }
    if map.contains_key("elements") && map.contains_key("space") {
        ck.push(
            ErrorKind::Domain,
            "/space",
            "elements and space are mutually exclusive; space is converted to elements".into(),
        );
    }
    ck.finish(patch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(r: Result<IntentDocument, Vec<ValidationError>>) -> Vec<(ErrorKind, String)> {
        r.unwrap_err().into_iter().map(|e| (e.kind, e.path)).collect()
    }

    #[test]
    fn create_rule_document() {
        let doc = parse_intent_document(r#"{"createRule":"Add Heparin into the box to occupy 2% of the space"}"#).unwrap();
        assert_eq!(doc.create_rule.as_deref(), Some("Add Heparin into the box to occupy 2% of the space"));
        assert_eq!(
            doc,
            IntentDocument {
                create_rule: doc.create_rule.clone(),
                ..Default::default()
            }
        );
    }

    #[test]
    fn empty_document_is_domain_error() {
        let errs = parse_intent_document("{}").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].kind, ErrorKind::Domain);
        assert_eq!(errs[0].path, ROOT);
        assert!(errs[0].message.contains("empty intent"));
    }

    #[test]
    fn boolean_given_string() {
        let errs = parse_intent_document(r#"{"saveModel":"yes"}"#).unwrap_err();
        assert_eq!(errs[0].kind, ErrorKind::DataType);
        assert_eq!(errs[0].path, "/saveModel");
        assert!(errs[0].message.contains("\"yes\""));
    }

    #[test]
    fn array_given_object() {
        assert_eq!(
            kinds(parse_intent_document(r#"{"selectIngredient":{"ingredient":"HDT"}}"#)),
            vec![(ErrorKind::ArrayShape, "/selectIngredient".to_string())]
        );
    }

    #[test]
    fn fenced_and_prose_wrapped() {
        let raw = "Sure! Here is the code:\n```json\n{\"labeling\": true}\n```\nLet me know.";
        assert_eq!(parse_intent_document(raw).unwrap().labeling, Some(true));
        let raw = "The intent is {\"labeling\": false} as requested";
        assert_eq!(parse_intent_document(raw).unwrap().labeling, Some(false));
    }

    #[test]
    fn parse_error_at_root() {
        let errs = parse_intent_document("{\"createRule\": ").unwrap_err();
        assert_eq!(errs[0].kind, ErrorKind::Parse);
        assert_eq!(errs[0].path, ROOT);
        assert!(errs[0].message.contains("createRule"));
        let errs = parse_intent_document("no json here").unwrap_err();
        assert_eq!(errs[0].kind, ErrorKind::Parse);
    }

    #[test]
    fn unknown_key_named_with_hint() {
        let errs = parse_intent_document(r#"{"selectIngredients":[{"ingredient":"Au"}]}"#).unwrap_err();
        assert_eq!(errs[0].kind, ErrorKind::UnknownKey);
        assert_eq!(errs[0].path, "/selectIngredients");
        assert!(errs[0].message.contains("\"selectIngredients\""));
        assert!(errs[0].message.contains("did you mean \"selectIngredient\""));
    }

    #[test]
    fn mode_synonyms() {
        let doc = parse_intent_document(r#"{"changeMode":"residue level"}"#).unwrap();
        assert_eq!(doc.change_mode, Some(RenderMode::Atomistic));
        let doc = parse_intent_document(r#"{"changeMode":"amino acid level"}"#).unwrap();
        assert_eq!(doc.change_mode, Some(RenderMode::Atomistic));
        assert_eq!(
            kinds(parse_intent_document(r#"{"changeMode":"cartoon"}"#)),
            vec![(ErrorKind::Domain, "/changeMode".to_string())]
        );
    }

    #[test]
    fn named_colors_resolve_at_parse_time() {
        let doc = parse_intent_document(r#"{"modifyColor":[{"ingredient":"lipid","color":"red"}]}"#).unwrap();
        assert_eq!(doc.modify_color.unwrap()[0].color, Rgb([1.0, 0.0, 0.0]));
        assert_eq!(NAMED_COLORS.len(), 16);
        assert_eq!(
            kinds(parse_intent_document(r#"{"modifyColor":[{"ingredient":"lipid","color":[1.2,0,0]}]}"#)),
            vec![(ErrorKind::Domain, "/modifyColor/0/color/0".to_string())]
        );
    }

    #[test]
    fn negative_indices_are_domain_errors() {
        assert_eq!(
            kinds(parse_intent_document(r#"{"updatePivot":{"chainId":-1,"residueId":2}}"#)),
            vec![(ErrorKind::Domain, "/updatePivot/chainId".to_string())]
        );
    }

    #[test]
    fn update_position_requires_one_pair() {
        let three = r#"{"updatePosition":[
            {"mainIngredient":"A","chainId":0,"residueId":1},
            {"subIngredient":"B","chainId":0,"residueId":2},
            {"subIngredient":"C","chainId":0,"residueId":3}]}"#;
        assert_eq!(kinds(parse_intent_document(three)), vec![(ErrorKind::ArrayShape, "/updatePosition".to_string())]);
        let ok = r#"{"updatePosition":[
            {"subIngredient":"B","chainId":0,"residueId":2},
            {"mainIngredient":"A","chainId":1,"residueId":1}]}"#;
        let link = parse_intent_document(ok).unwrap().update_position.unwrap();
        assert_eq!(link.main.ingredient, "A");
        assert_eq!(link.sub.residue_id, 2);
    }

    #[test]
    fn serialization_uses_canonical_order_and_indent() {
        let doc = IntentDocument {
            labeling: Some(true),
            select_ingredient: Some(vec!["Au".into()]),
            ..Default::default()
        };
        assert_eq!(
            doc.to_json(),
            "{\n  \"selectIngredient\": [\n    {\n      \"ingredient\": \"Au\"\n    }\n  ],\n  \"labeling\": true\n}"
        );
    }

    #[test]
    fn patch_examples() {
        let p = parse_parameter_patch(r#"{"elements":1000,"distance":0.0}"#).unwrap();
        assert_eq!(p.elements, Some(1000));
        assert_eq!(p.distance, Some(0.0));
        assert_eq!(parse_parameter_patch(r#"{"space":2}"#).unwrap().space, Some(2));
        let e = parse_parameter_patch(r#"{"elements":-5}"#).unwrap_err();
        assert_eq!((e[0].kind, e[0].path.as_str()), (ErrorKind::Domain, "/elements"));
        let e = parse_parameter_patch(r#"{"elements":5,"space":3}"#).unwrap_err();
        assert_eq!(e[0].kind, ErrorKind::Domain);
        let e = parse_parameter_patch(r#"{"space":101}"#).unwrap_err();
        assert_eq!(e[0].kind, ErrorKind::Domain);
        let e = parse_parameter_patch(r#"{"elements":2.5}"#).unwrap_err();
        assert_eq!(e[0].kind, ErrorKind::DataType);
        assert!(parse_parameter_patch("{}").unwrap().is_empty());
    }

    #[test]
    fn format_lists_errors_in_path_order() {
        let errs = vec![
            ValidationError::new(ErrorKind::DataType, "/saveModel", "expected boolean, found string"),
            ValidationError::new(ErrorKind::UnknownKey, "/foo", "unknown key \"foo\""),
        ];
        let text = format_errors_for_regeneration(&errs);
        assert_eq!(
            text,
            "ERROR unknown-key at /foo: unknown key \"foo\"\nERROR data-type at /saveModel: expected boolean, found string"
        );
    }

    #[test]
    #[should_panic]
    fn format_rejects_empty() {
        format_errors_for_regeneration(&[]);
    }
}
