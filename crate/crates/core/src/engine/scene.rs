//! The scene: placed instances, rules with their application logs, and view
//! state. Every mutation goes through a method here so ids stay monotonic
//! and application ranges stay disjoint.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::apply::{self, ApplyReport};
use super::catalog::Catalog;
use super::rules::{parse_seed_transforms, parse_vertex_indices, Pose, Rule, RuleParams, RuleSpec, RuleType};
use super::{space_to_count, EngineError};
use crate::geometry::{align_z_to, icosahedron, pose, RigidTransform, Vec3, RNG_ALGORITHM};
use crate::intent::{AlignDirection, ParameterPatch, RenderMode, ResidueAnchor};

pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u64,
    pub ingredient: String,
    #[serde(flatten)]
    pub pose: Pose,
}

impl Instance {
    pub fn transform(&self) -> RigidTransform {
        self.pose.transform()
    }

    pub fn center(&self) -> Vec3 {
        self.pose.position()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewState {
    pub colors: BTreeMap<String, [f64; 3]>,
    pub highlights: BTreeSet<String>,
    pub mode: RenderMode,
    pub labeling: bool,
}

impl Default for ViewState {
    fn default() -> Self {
        ViewState {
            colors: BTreeMap::new(),
            highlights: BTreeSet::new(),
            mode: RenderMode::Protein,
            labeling: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub seed: u64,
    /// Index of the generator stream the next application will use.
    pub apply_counter: u64,
    pub next_instance_id: u64,
    pub next_rule_id: u64,
    /// Pivot overrides set by `update_pivot`, in ingredient-local frame.
    pub pivots: BTreeMap<String, [f64; 3]>,
    pub rules: Vec<Rule>,
    /// Sorted by id.
    pub instances: Vec<Instance>,
    pub view: ViewState,
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    version: u32,
    seed: u64,
    rng: String,
    apply_counter: u64,
    next_instance_id: u64,
    next_rule_id: u64,
    catalog_refs: Vec<String>,
    pivots: BTreeMap<String, [f64; 3]>,
    rules: Vec<Rule>,
    instances: Vec<Instance>,
    view: ViewState,
}

impl Scene {
    pub fn new(seed: u64) -> Self {
        Scene {
            seed,
            apply_counter: 0,
            next_instance_id: 1,
            next_rule_id: 1,
            pivots: BTreeMap::new(),
            rules: Vec::new(),
            instances: Vec::new(),
            view: ViewState::default(),
        }
    }

    pub fn rule(&self, id: u64) -> Result<&Rule, EngineError> {
        self.rules.iter().find(|r| r.id == id).ok_or(EngineError::UnknownRule(id))
    }

    fn rule_index(&self, id: u64) -> Result<usize, EngineError> {
        self.rules.iter().position(|r| r.id == id).ok_or(EngineError::UnknownRule(id))
    }

    pub fn instance(&self, id: u64) -> Option<&Instance> {
        self.instances
            .binary_search_by_key(&id, |i| i.id)
            .ok()
            .map(|k| &self.instances[k])
    }

    pub fn instances_of<'a>(&'a self, ingredient: &'a str) -> impl Iterator<Item = &'a Instance> + 'a {
        self.instances.iter().filter(move |i| i.ingredient == ingredient)
    }

    /// Pivot in the ingredient's local frame, honouring overrides.
    pub fn pivot_local(&self, catalog: &Catalog, ingredient: &str) -> Result<Vec3, EngineError> {
        if let Some(p) = self.pivots.get(ingredient) {
            return Ok(Vec3::from(*p));
        }
        Ok(Vec3::from(catalog.ingredient(ingredient)?.pivot))
    }

    pub fn pivot_world(&self, catalog: &Catalog, instance: &Instance) -> Result<Vec3, EngineError> {
        let local = self.pivot_local(catalog, &instance.ingredient)?;
        Ok((instance.transform() * nalgebra::Point3::from(local)).coords)
    }

    pub(super) fn push_instance(&mut self, ingredient: &str, pose: Pose) -> u64 {
        let id = self.next_instance_id;
        self.next_instance_id += 1;
        self.instances.push(Instance {
            id,
            ingredient: ingredient.to_string(),
            pose,
        });
        id
    }

    /// Create (not apply) a rule. Returns its id.
    pub fn create_rule(&mut self, catalog: &Catalog, spec: RuleSpec) -> Result<u64, EngineError> {
        check_arity(&spec)?;
        for name in &spec.ingredients {
            catalog.ingredient(name)?;
        }
        let skeleton = match &spec.skeleton {
            Some(s) => Some(catalog.skeleton(s)?),
            None => None,
        };
        let mut rule = Rule {
            id: self.next_rule_id,
            rule_type: spec.rule_type,
            ingredients: spec.ingredients.clone(),
            skeleton: spec.skeleton.clone(),
            description: spec.description.clone(),
            params: RuleParams::default(),
            seed_transforms: Vec::new(),
            seeds: Vec::new(),
            vertices: Vec::new(),
            offset: None,
            endpoint_pair: spec.endpoint_pair,
            applied: Vec::new(),
        };
        match spec.rule_type {
            RuleType::Siblings | RuleType::SiblingsParent => {
                let transforms = if spec.seed_transforms.is_empty() {
                    parse_seed_transforms(&spec.description)
                } else {
                    spec.seed_transforms.clone()
                };
                rule.seed_transforms = transforms.iter().map(Pose::from_transform).collect();
                rule.seeds = self.instances_of(&spec.ingredients[0]).map(|i| i.pose).collect();
            }
            RuleType::ParentChildRelative => {
                let skel = skeleton.expect("arity checked");
                let count = skel.vertices().len();
                rule.vertices = parse_vertex_indices(&spec.description);
                if let Some(&bad) = rule.vertices.iter().find(|&&v| v >= count) {
                    return Err(EngineError::InvalidParameter {
                        field: "vertex",
                        value: format!("{bad} (skeleton `{}` has {count} vertices)", skel.name),
                    });
                }
                // a placed instance of the ingredient is the prototype: its pose
                // relative to the nearest vertex frame becomes the offset
                if let Some(proto) = self.instances_of(&spec.ingredients[0]).next() {
                    let c = proto.center();
                    let (pos, n) = skel
                        .vertices()
                        .into_iter()
                        .min_by(|a, b| (a.0 - c).norm().total_cmp(&(b.0 - c).norm()))
                        .expect("skeletons have vertices");
                    let frame = pose(pos, align_z_to(&n));
                    rule.offset = Some(Pose::from_transform(&(frame.inverse() * proto.transform())));
                }
            }
            _ => {}
        }
        self.next_rule_id += 1;
        self.rules.push(rule);
        Ok(self.next_rule_id - 1)
    }

    /// Merge a validated patch. `space` is converted into `elements` against
    /// the rule's volumetric skeleton. Existing instances are untouched.
    pub fn edit_rule(&mut self, catalog: &Catalog, rule_id: u64, patch: &ParameterPatch) -> Result<RuleParams, EngineError> {
        let idx = self.rule_index(rule_id)?;
        let rule = &self.rules[idx];
        let mut patch = patch.clone();
        if let Some(space) = patch.space.take() {
            let skel = match &rule.skeleton {
                Some(name) => catalog.skeleton(name)?,
                None => return Err(EngineError::SpaceOnSurfaceSkeleton("<none>".into())),
            };
            if !skel.supports_volume() {
                return Err(EngineError::SpaceOnSurfaceSkeleton(skel.name.clone()));
            }
            let ingredient = catalog.ingredient(&rule.ingredients[0])?;
            patch.elements = Some(space_to_count(space, skel, ingredient)?);
        }
        let rule = &mut self.rules[idx];
        rule.params.merge(&patch)?;
        Ok(rule.params.clone())
    }

    pub fn apply_rule(&mut self, catalog: &Catalog, rule_id: u64) -> Result<ApplyReport, EngineError> {
        let idx = self.rule_index(rule_id)?;
        apply::apply(self, catalog, idx)
    }

    /// Undo the most recent application of a rule. Returns the removed ids.
    pub fn revert_rule(&mut self, rule_id: u64) -> Result<Vec<u64>, EngineError> {
        let idx = self.rule_index(rule_id)?;
        let app = self.rules[idx].applied.pop().ok_or(EngineError::NothingToRevert(rule_id))?;
        let removed: Vec<u64> = self.instances.iter().filter(|i| app.contains(i.id)).map(|i| i.id).collect();
        self.instances.retain(|i| !app.contains(i.id));
        Ok(removed)
    }

    /// Move an ingredient's pivot onto one of its residues.
    pub fn update_pivot(&mut self, catalog: &Catalog, ingredient: &str, chain_id: u32, residue_id: u32) -> Result<Vec3, EngineError> {
        let p = catalog.ingredient(ingredient)?.residue(chain_id, residue_id)?;
        self.pivots.insert(ingredient.to_string(), p.into());
        Ok(p)
    }

    /// Translate the sub instance nearest to the main instance (the lowest
    /// id of the main ingredient) so the two named residues coincide.
    /// Returns the moved instance id.
    pub fn update_position(&mut self, catalog: &Catalog, main: &ResidueAnchor, sub: &ResidueAnchor) -> Result<u64, EngineError> {
        let main_res = catalog.ingredient(&main.ingredient)?.residue(main.chain_id, main.residue_id)?;
        let sub_res = catalog.ingredient(&sub.ingredient)?.residue(sub.chain_id, sub.residue_id)?;
        let main_inst = self
            .instances_of(&main.ingredient)
            .next()
            .ok_or_else(|| EngineError::NoSuchInstance(main.ingredient.clone()))?;
        let anchor = main_inst.center();
        let target = (main_inst.transform() * nalgebra::Point3::from(main_res)).coords;
        let main_id = main_inst.id;
        let sub_idx = self
            .instances
            .iter()
            .enumerate()
            .filter(|(_, i)| i.ingredient == sub.ingredient && i.id != main_id)
            .min_by(|(_, a), (_, b)| (a.center() - anchor).norm().total_cmp(&(b.center() - anchor).norm()))
            .map(|(k, _)| k)
            .ok_or_else(|| EngineError::NoSuchInstance(sub.ingredient.clone()))?;
        let inst = &mut self.instances[sub_idx];
        let current = (inst.transform() * nalgebra::Point3::from(sub_res)).coords;
        let moved = inst.center() + (target - current);
        inst.pose.position = moved.into();
        Ok(inst.id)
    }

    /// Catalog entries referenced by rules, instances and pivot overrides,
    /// as `ingredient/<name>` and `skeleton/<name>`.
    pub fn catalog_refs(&self) -> Vec<String> {
        let mut refs = BTreeSet::new();
        for r in &self.rules {
            for i in &r.ingredients {
                refs.insert(format!("ingredient/{i}"));
            }
            if let Some(s) = &r.skeleton {
                refs.insert(format!("skeleton/{s}"));
            }
        }
        for i in &self.instances {
            refs.insert(format!("ingredient/{}", i.ingredient));
        }
        for name in self.pivots.keys() {
            refs.insert(format!("ingredient/{name}"));
        }
        refs.into_iter().collect()
    }

    pub fn to_json(&self) -> String {
        let file = SceneFile {
            version: SCENE_VERSION,
            seed: self.seed,
            rng: RNG_ALGORITHM.to_string(),
            apply_counter: self.apply_counter,
            next_instance_id: self.next_instance_id,
            next_rule_id: self.next_rule_id,
            catalog_refs: self.catalog_refs(),
            pivots: self.pivots.clone(),
            rules: self.rules.clone(),
            instances: self.instances.clone(),
            view: self.view.clone(),
        };
        serde_json::to_string_pretty(&file).expect("scene serializes")
    }

    pub fn from_json(text: &str, catalog: &Catalog) -> Result<Scene, EngineError> {
        let value: Value = serde_json::from_str(text).map_err(|e| EngineError::Format(e.to_string()))?;
        let version = value.get("version").and_then(Value::as_u64);
        if version != Some(SCENE_VERSION as u64) {
            return Err(EngineError::VersionMismatch {
                found: version.map(|v| v.to_string()).unwrap_or_else(|| "missing".into()),
                expected: SCENE_VERSION,
            });
        }
        let file: SceneFile = serde_json::from_value(value).map_err(|e| EngineError::Format(e.to_string()))?;
        if file.rng != RNG_ALGORITHM {
            return Err(EngineError::Format(format!(
                "scene was generated with rng `{}`, this build uses `{RNG_ALGORITHM}`",
                file.rng
            )));
        }
        let scene = Scene {
            seed: file.seed,
            apply_counter: file.apply_counter,
            next_instance_id: file.next_instance_id,
            next_rule_id: file.next_rule_id,
            pivots: file.pivots,
            rules: file.rules,
            instances: file.instances,
            view: file.view,
        };
        // re-resolve against the catalog, including refs the file lists
        for r in file.catalog_refs.iter().chain(scene.catalog_refs().iter()) {
            let found = match r.split_once('/') {
                Some(("ingredient", name)) => catalog.ingredients.contains_key(name),
                Some(("skeleton", name)) => catalog.skeletons.contains_key(name),
                _ => false,
            };
            if !found {
                return Err(EngineError::MissingCatalogEntry(r.clone()));
            }
        }
        if scene.instances.windows(2).any(|w| w[0].id >= w[1].id)
            || scene.instances.last().is_some_and(|i| i.id >= scene.next_instance_id)
        {
            return Err(EngineError::Format("instance ids must be increasing and below next_instance_id".into()));
        }
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        fs::write(path, self.to_json()).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path, catalog: &Catalog) -> Result<Scene, EngineError> {
        let text = fs::read_to_string(path).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))?;
        Scene::from_json(&text, catalog)
    }

    /// Wavefront OBJ with one icosphere per instance, scaled by its
    /// bounding radius.
    pub fn to_obj(&self, catalog: &Catalog) -> Result<String, EngineError> {
        let (verts, tris) = icosphere();
        let mut out = String::from("# mesoscribe scene\n");
        let mut base = 1usize;
        for inst in &self.instances {
            let r = catalog.ingredient(&inst.ingredient)?.bounding_radius;
            let t = inst.transform();
            let _ = writeln!(out, "o {}_{}", inst.ingredient, inst.id);
            for v in &verts {
                let p = t * nalgebra::Point3::from(v * r);
                let _ = writeln!(out, "v {:.6} {:.6} {:.6}", p.x, p.y, p.z);
            }
            for f in &tris {
                let _ = writeln!(out, "f {} {} {}", f[0] + base, f[1] + base, f[2] + base);
            }
            base += verts.len();
        }
        Ok(out)
    }
}

/// Unit icosphere: an icosahedron with one midpoint subdivision.
fn icosphere() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let (v0, t0) = icosahedron(1.0);
    let mut verts: Vec<Vec3> = v0.iter().map(|p| Vec3::from(*p)).collect();
    let mut mid = BTreeMap::new();
    let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
        *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
            verts.push(((verts[a] + verts[b]) / 2.0).normalize());
            verts.len() - 1
        })
    };
    let mut tris = Vec::with_capacity(t0.len() * 4);
    for [a, b, c] in t0 {
        let ab = midpoint(a, b, &mut verts);
        let bc = midpoint(b, c, &mut verts);
        let ca = midpoint(c, a, &mut verts);
        tris.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
    }
    (verts, tris)
}

fn check_arity(spec: &RuleSpec) -> Result<(), EngineError> {
    let n = spec.ingredients.len();
    let violation = |reason: &str| EngineError::ArityViolation {
        rule_type: spec.rule_type,
        reason: reason.to_string(),
    };
    match spec.rule_type {
        RuleType::Fill | RuleType::ParentChildDistance | RuleType::ParentChildRelative if n != 1 => {
            return Err(violation(&format!("needs exactly 1 ingredient, got {n}")))
        }
        RuleType::Siblings | RuleType::SiblingsParent if n == 0 => return Err(violation("needs at least 1 ingredient")),
        RuleType::Connection if n != 2 => {
            return Err(violation(&format!("needs exactly 2 endpoint ingredients, got {n}")))
        }
        _ => {}
    }
    if spec.rule_type.needs_skeleton() && spec.skeleton.is_none() {
        return Err(violation("needs a skeleton"));
    }
    Ok(())
}

/// Alignment axis for a surface normal.
pub(super) fn aligned(n: &Vec3, dir: AlignDirection) -> Vec3 {
    match dir {
        AlignDirection::Normal => *n,
        AlignDirection::InverseNormal => -n,
    }
}
