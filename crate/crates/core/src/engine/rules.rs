//! Rule definitions: the six rule classes, their parameters and the
//! per-rule application log.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::geometry::{pose, translation, CurveKind, Quat, RigidTransform, Vec3};
use crate::intent::{AlignDirection, ParameterPatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleType {
    ParentChildDistance,
    ParentChildRelative,
    Siblings,
    SiblingsParent,
    Fill,
    Connection,
}

impl RuleType {
    pub const ALL: [RuleType; 6] = [
        RuleType::ParentChildDistance,
        RuleType::ParentChildRelative,
        RuleType::Siblings,
        RuleType::SiblingsParent,
        RuleType::Fill,
        RuleType::Connection,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RuleType::ParentChildDistance => "parent-child-distance",
            RuleType::ParentChildRelative => "parent-child-relative",
            RuleType::Siblings => "siblings",
            RuleType::SiblingsParent => "siblings-parent",
            RuleType::Fill => "fill",
            RuleType::Connection => "connection",
        }
    }

    /// Case- and punctuation-insensitive match against the six names, e.g.
    /// "Parent-child (distance)", "siblings_parent", "FILL.".
    pub fn parse(text: &str) -> Option<RuleType> {
        let key: String = text
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "parentchilddistance" => Some(RuleType::ParentChildDistance),
            "parentchildrelative" => Some(RuleType::ParentChildRelative),
            "siblings" => Some(RuleType::Siblings),
            "siblingsparent" => Some(RuleType::SiblingsParent),
            "fill" => Some(RuleType::Fill),
            "connection" => Some(RuleType::Connection),
            _ => None,
        }
    }

    pub fn needs_skeleton(&self) -> bool {
        matches!(
            self,
            RuleType::ParentChildDistance
                | RuleType::ParentChildRelative
                | RuleType::SiblingsParent
                | RuleType::Fill
        )
    }
}

impl fmt::Display for RuleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleParams {
    pub elements: u32,
    pub distance: f64,
    pub collision_detection: bool,
    pub align_direction: AlignDirection,
    /// `None` means pivot-to-pivot distance.
    pub length: Option<f64>,
    pub curve: CurveKind,
    /// Cone half-angle in degrees.
    pub tweaking: f64,
    pub std: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        RuleParams {
            elements: 100,
            distance: 0.0,
            collision_detection: true,
            align_direction: AlignDirection::Normal,
            length: None,
            curve: CurveKind::CatmullRom,
            tweaking: 0.0,
            std: 0.0,
        }
    }
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap());

/// Degrees out of a tweak descriptor such as "tweak up to 15 degrees".
pub fn parse_tweaking(text: &str) -> Result<f64, EngineError> {
    let lower = text.trim().to_ascii_lowercase();
    if matches!(lower.as_str(), "none" | "no" | "off" | "") {
        return Ok(0.0);
    }
    let invalid = || EngineError::InvalidParameter {
        field: "tweaking",
        value: text.to_string(),
    };
    let m = NUMBER.find(&lower).ok_or_else(invalid)?;
    let mut deg: f64 = m.as_str().parse().map_err(|_| invalid())?;
    if lower.contains("rad") && !lower.contains("deg") {
        deg = deg.to_degrees();
    }
    if !(0.0..=180.0).contains(&deg) {
        return Err(invalid());
    }
    Ok(deg)
}

impl RuleParams {
    /// Field-wise merge. `space` must already have been converted into
    /// `elements` by the caller.
    pub fn merge(&mut self, patch: &ParameterPatch) -> Result<(), EngineError> {
        let mut next = self.clone();
        if let Some(e) = patch.elements {
            next.elements = e;
        }
        if let Some(d) = patch.distance {
            next.distance = d;
        }
        if let Some(c) = patch.collision_detection {
            next.collision_detection = c;
        }
        if let Some(a) = patch.align_direction {
            next.align_direction = a;
        }
        if let Some(l) = patch.length {
            next.length = Some(l);
        }
        if let Some(c) = &patch.curve {
            next.curve = CurveKind::parse(c).ok_or_else(|| EngineError::InvalidParameter {
                field: "curve",
                value: c.clone(),
            })?;
        }
        if let Some(t) = &patch.tweaking {
            next.tweaking = parse_tweaking(t)?;
        }
        if let Some(s) = patch.std {
            next.std = s;
        }
        *self = next;
        Ok(())
    }
}

/// Position plus unit quaternion `[w, x, y, z]`, as stored in scene files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    pub rotation: [f64; 4],
}

impl Pose {
    pub fn from_transform(t: &RigidTransform) -> Pose {
        let q = t.rotation.quaternion();
        Pose {
            position: t.translation.vector.into(),
            rotation: [q.w, q.i, q.j, q.k],
        }
    }

    /// Stored components are used as-is so a save/load cycle is bit-exact.
    pub fn transform(&self) -> RigidTransform {
        let [w, x, y, z] = self.rotation;
        let q = Quat::new_unchecked(nalgebra::Quaternion::new(w, x, y, z));
        pose(Vec3::from(self.position), q)
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position)
    }
}

impl From<RigidTransform> for Pose {
    fn from(t: RigidTransform) -> Self {
        Pose::from_transform(&t)
    }
}

/// Ids `[start, end)` placed by one application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Application {
    pub start: u64,
    pub end: u64,
    pub requested: u32,
    /// Curves built by a connection application, in placement order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<CurveRecord>,
}

impl Application {
    pub fn contains(&self, id: u64) -> bool {
        (self.start..self.end).contains(&id)
    }

    pub fn placed(&self) -> u64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub control_points: Vec<[f64; 3]>,
    pub kind: CurveKind,
    /// Endpoint instance ids.
    pub endpoints: (u64, u64),
    /// Ball ids placed along this curve, in arc order.
    pub balls: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: u64,
    pub rule_type: RuleType,
    pub ingredients: Vec<String>,
    pub skeleton: Option<String>,
    pub description: String,
    pub params: RuleParams,
    /// Siblings family: generating transforms, in the seed's local frame.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seed_transforms: Vec<Pose>,
    /// Siblings family: start poses captured at creation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<Pose>,
    /// ParentChildRelative: designated vertex indices (empty = all).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vertices: Vec<usize>,
    /// ParentChildRelative: vertex frame to instance pose, from a prototype.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Pose>,
    /// Connection: explicit endpoint instance pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_pair: Option<(u64, u64)>,
    #[serde(default)]
    pub applied: Vec<Application>,
}

/// What a caller supplies to create a rule.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSpec {
    pub rule_type: RuleType,
    pub ingredients: Vec<String>,
    pub skeleton: Option<String>,
    pub description: String,
    pub seed_transforms: Vec<RigidTransform>,
    pub endpoint_pair: Option<(u64, u64)>,
}

impl RuleSpec {
    pub fn new(rule_type: RuleType, ingredients: &[&str], skeleton: Option<&str>) -> Self {
        RuleSpec {
            rule_type,
            ingredients: ingredients.iter().map(|s| s.to_string()).collect(),
            skeleton: skeleton.map(str::to_string),
            description: String::new(),
            seed_transforms: Vec::new(),
            endpoint_pair: None,
        }
    }

    pub fn described(mut self, description: &str) -> Self {
        self.description = description.to_string();
        self
    }

    pub fn with_transforms(mut self, transforms: Vec<RigidTransform>) -> Self {
        self.seed_transforms = transforms;
        self
    }
}

static VERTEX_LIST: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bvert(?:ex|ices)\s+((?:\d+(?:\s*(?:,|and|&)\s*)?)+)").unwrap());
static TRANSLATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(?:translat\w*|offset|shift\w*|step)\s*(?:of|by)?\s*\(\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\)",
    )
    .unwrap()
});
static TURN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:rotat\w*|turn\w*|twist\w*)\s*(?:by)?\s*(-?\d+(?:\.\d+)?)\s*deg").unwrap());

/// Vertex indices named in a description ("at vertex 3", "vertices 0, 2 and 5").
pub fn parse_vertex_indices(description: &str) -> Vec<usize> {
    let mut out = Vec::new();
    for cap in VERTEX_LIST.captures_iter(description) {
        for m in NUMBER.find_iter(&cap[1]) {
            if let Ok(i) = m.as_str().parse::<usize>() {
                if !out.contains(&i) {
                    out.push(i);
                }
            }
        }
    }
    out
}

/// Seed transforms named in a description: each `translation (x, y, z)`,
/// optionally combined with one `rotate N degrees` about local z.
pub fn parse_seed_transforms(description: &str) -> Vec<RigidTransform> {
    let turn = TURN
        .captures(description)
        .and_then(|c| c[1].parse::<f64>().ok())
        .map(|deg| Quat::from_axis_angle(&Vec3::z_axis(), deg.to_radians()));
    TRANSLATION
        .captures_iter(description)
        .filter_map(|c| {
            let x: f64 = c[1].parse().ok()?;
            let y: f64 = c[2].parse().ok()?;
            let z: f64 = c[3].parse().ok()?;
            let t = Vec3::new(x, y, z);
            Some(match turn {
                Some(q) => pose(t, q),
                None => translation(t),
            })
        })
        .collect()
}
