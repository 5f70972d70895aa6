//! Instance populating for each rule class.
//!
//! An application draws from generator stream `scene.apply_counter`, places
//! instances with consecutive ids and records the id range on the rule. A
//! failed application leaves the scene untouched.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::catalog::{Catalog, BALL};
use super::rules::{Application, CurveRecord, Pose, Rule, RuleType};
use super::scene::{aligned, Scene};
use super::EngineError;
use crate::geometry::{
    align_z_to, any_perpendicular, pose, random_rotation, rng_stream, sample_cone, translation, Curve, Quat,
    RigidTransform, SceneRng, Skeleton, SpatialHash, SurfaceSampler, Vec3,
};

/// Attempts allowed per requested element.
pub const ATTEMPTS_PER_ELEMENT: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApplyReport {
    pub rule_id: u64,
    pub rule_type: RuleType,
    pub requested: u32,
    pub placed: u32,
    pub attempts: u64,
    /// Ids `[start, end)` of the placed instances.
    pub start: u64,
    pub end: u64,
    /// Set when fewer instances than requested were placed.
    pub shortfall: Option<String>,
}

/// Spatial hash over every instance in the scene plus the ones being placed.
struct Placer<'a> {
    catalog: &'a Catalog,
    hash: SpatialHash,
    collision: bool,
    placed: Vec<(String, Pose)>,
    next_id: u64,
    attempts: u64,
}

impl<'a> Placer<'a> {
    fn new(scene: &Scene, catalog: &'a Catalog, rule: &Rule) -> Result<Self, EngineError> {
        let mut max_r: f64 = catalog.ball_radius();
        for name in &rule.ingredients {
            max_r = max_r.max(catalog.ingredient(name)?.bounding_radius);
        }
        let mut radii = Vec::with_capacity(scene.instances.len());
        for inst in &scene.instances {
            let r = catalog.ingredient(&inst.ingredient)?.bounding_radius;
            max_r = max_r.max(r);
            radii.push(r);
        }
        let mut hash = SpatialHash::for_max_radius(max_r);
        if rule.params.collision_detection {
            for (inst, r) in scene.instances.iter().zip(radii) {
                hash.insert(inst.id, inst.center(), r);
            }
        }
        Ok(Placer {
            catalog,
            hash,
            collision: rule.params.collision_detection,
            placed: Vec::new(),
            next_id: scene.next_instance_id,
            attempts: 0,
        })
    }

    fn radius(&self, ingredient: &str) -> f64 {
        self.catalog.ingredients[ingredient].bounding_radius
    }

    fn blocked(&self, center: &Vec3, radius: f64, skip: impl Fn(u64) -> bool) -> bool {
        self.collision && self.hash.collides(center, radius, skip)
    }

    fn place(&mut self, ingredient: &str, t: &RigidTransform) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        if self.collision {
            self.hash.insert(id, t.translation.vector, self.radius(ingredient));
        }
        self.placed.push((ingredient.to_string(), Pose::from_transform(t)));
        id
    }

    /// Try to place at `t`; false when it collides.
    fn try_place(&mut self, ingredient: &str, t: &RigidTransform) -> bool {
        let r = self.radius(ingredient);
        if self.blocked(&t.translation.vector, r, |_| false) {
            return false;
        }
        self.place(ingredient, t);
        true
    }
}

pub(super) fn apply(scene: &mut Scene, catalog: &Catalog, idx: usize) -> Result<ApplyReport, EngineError> {
    let rule = scene.rules[idx].clone();
    let skeleton = match &rule.skeleton {
        Some(name) => Some(catalog.skeleton(name)?),
        None => None,
    };
    let mut rng = rng_stream(scene.seed, scene.apply_counter);
    let mut placer = Placer::new(scene, catalog, &rule)?;
    let mut curves = Vec::new();
    let mut notes = Vec::new();
    let requested = match rule.rule_type {
        RuleType::Fill => fill(&rule, skeleton.expect("arity"), &mut placer, &mut rng)?,
        RuleType::ParentChildDistance => parent_child_distance(&rule, skeleton.expect("arity"), &mut placer, &mut rng)?,
        RuleType::ParentChildRelative => parent_child_relative(&rule, skeleton.expect("arity"), &mut placer),
        RuleType::Siblings | RuleType::SiblingsParent => siblings(scene, &rule, skeleton, &mut placer)?,
        RuleType::Connection => connection(scene, catalog, &rule, &mut placer, &mut rng, &mut curves, &mut notes)?,
    };
    let placed = placer.placed.len() as u32;
    if placed == 0 {
        return Err(EngineError::InfeasiblePopulation {
            rule_id: rule.id,
            attempts: placer.attempts,
        });
    }
    let start = scene.next_instance_id;
    for (ingredient, p) in placer.placed {
        scene.push_instance(&ingredient, p);
    }
    let end = scene.next_instance_id;
    debug_assert_eq!(end, placer.next_id);
    scene.apply_counter += 1;
    scene.rules[idx].applied.push(Application {
        start,
        end,
        requested,
        curves,
    });
    if placed < requested {
        notes.insert(0, format!("placed {placed} of {requested} requested instances after {} attempts", placer.attempts));
    }
    Ok(ApplyReport {
        rule_id: rule.id,
        rule_type: rule.rule_type,
        requested,
        placed,
        attempts: placer.attempts,
        start,
        end,
        shortfall: (!notes.is_empty()).then(|| notes.join("; ")),
    })
}

fn budget(elements: u32) -> u64 {
    ATTEMPTS_PER_ELEMENT * elements as u64
}

/// Rotation aligning +z to `axis`, tweaked within the cone and spun about
/// the resulting axis.
fn oriented(axis: &Vec3, tweak_deg: f64, rng: &mut SceneRng) -> Quat {
    let a = if tweak_deg > 0.0 {
        sample_cone(axis, tweak_deg.to_radians(), rng)
    } else {
        *axis
    };
    let spin = rng.random::<f64>() * std::f64::consts::TAU;
    align_z_to(&a) * Quat::from_axis_angle(&Vec3::z_axis(), spin)
}

fn fill(rule: &Rule, skel: &Skeleton, placer: &mut Placer, rng: &mut SceneRng) -> Result<u32, EngineError> {
    let p = &rule.params;
    let ingredient = &rule.ingredients[0];
    let budget = budget(p.elements);
    let mut count = 0;
    if skel.supports_volume() {
        let (lo, hi) = skel.bounds();
        let ext = hi - lo;
        while count < p.elements && placer.attempts < budget {
            placer.attempts += 1;
            let c = lo + Vec3::new(rng.random(), rng.random(), rng.random()).component_mul(&ext);
            if !skel.inside(&c)? {
                continue;
            }
            let rot = random_rotation(rng);
            if placer.try_place(ingredient, &pose(c, rot)) {
                count += 1;
            }
        }
    } else {
        // surface-only skeleton: uniform over the surface
        let sampler = SurfaceSampler::new(skel)?;
        while count < p.elements && placer.attempts < budget {
            placer.attempts += 1;
            let (s, n) = sampler.sample(rng);
            let rot = oriented(&aligned(&n, p.align_direction), p.tweaking, rng);
            if placer.try_place(ingredient, &pose(s + n * p.distance, rot)) {
                count += 1;
            }
        }
    }
    Ok(p.elements)
}

fn parent_child_distance(rule: &Rule, skel: &Skeleton, placer: &mut Placer, rng: &mut SceneRng) -> Result<u32, EngineError> {
    let p = &rule.params;
    let ingredient = &rule.ingredients[0];
    let sampler = SurfaceSampler::new(skel)?;
    let budget = budget(p.elements);
    let mut count = 0;
    while count < p.elements && placer.attempts < budget {
        placer.attempts += 1;
        let (s, n) = sampler.sample(rng);
        let offset = if p.std > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            (p.distance + p.std * z).max(0.0)
        } else {
            p.distance
        };
        let rot = oriented(&aligned(&n, p.align_direction), p.tweaking, rng);
        if placer.try_place(ingredient, &pose(s + n * offset, rot)) {
            count += 1;
        }
    }
    Ok(p.elements)
}

fn parent_child_relative(rule: &Rule, skel: &Skeleton, placer: &mut Placer) -> u32 {
    let p = &rule.params;
    let vertices = skel.vertices();
    let chosen: Vec<usize> = if rule.vertices.is_empty() {
        (0..vertices.len()).collect()
    } else {
        rule.vertices.clone()
    };
    let offset = match &rule.offset {
        Some(o) => o.transform(),
        None => translation(Vec3::new(0.0, 0.0, p.distance)),
    };
    for &v in &chosen {
        let (pos, n) = vertices[v];
        let frame = pose(pos, align_z_to(&aligned(&n, p.align_direction)));
        placer.attempts += 1;
        placer.try_place(&rule.ingredients[0], &(frame * offset));
    }
    chosen.len() as u32
}

/// Re-project onto the skeleton surface and turn local +z onto the normal.
fn project(skel: &Skeleton, t: &RigidTransform, rule: &Rule) -> Result<RigidTransform, EngineError> {
    let (q, n) = skel.closest_surface_point(&t.translation.vector)?;
    let target = aligned(&n, rule.params.align_direction);
    let z = t.rotation * Vec3::z();
    let turn = Quat::rotation_between(&z, &target)
        .unwrap_or_else(|| Quat::from_axis_angle(&nalgebra::Unit::new_normalize(any_perpendicular(&z)), std::f64::consts::PI));
    Ok(pose(q + n * rule.params.distance, turn * t.rotation))
}

/// Start pose when no instance of the ingredient existed at creation.
fn virtual_seed(skel: Option<&Skeleton>, rule: &Rule) -> Result<RigidTransform, EngineError> {
    match (rule.rule_type, skel) {
        (RuleType::SiblingsParent, Some(s)) => {
            let (p, n) = match s.closest_surface_point(&s.center()) {
                Ok((p, n)) if (p - s.center()).norm() < 1e-9 => (p, n),
                _ => s.vertices()[0],
            };
            project(s, &pose(p, align_z_to(&aligned(&n, rule.params.align_direction))), rule)
        }
        (_, Some(s)) => Ok(translation(s.center())),
        (_, None) => Ok(RigidTransform::identity()),
    }
}

fn siblings(scene: &Scene, rule: &Rule, skel: Option<&Skeleton>, placer: &mut Placer) -> Result<u32, EngineError> {
    let p = &rule.params;
    if rule.rule_type == RuleType::SiblingsParent && !skel.is_some_and(|s| s.supports_surface()) {
        let s = skel.expect("arity");
        return Err(crate::geometry::GeometryError::UnsupportedSkeletonVariant {
            variant: s.shape.variant_name(),
            operation: "siblings-parent projection",
        }
        .into());
    }
    let seeds: Vec<RigidTransform> = if rule.seeds.is_empty() {
        vec![virtual_seed(skel, rule)?]
    } else {
        rule.seeds.iter().map(Pose::transform).collect()
    };
    let transforms: Vec<RigidTransform> = if rule.seed_transforms.is_empty() {
        let r = placer.radius(&rule.ingredients[0]);
        vec![translation(Vec3::new(2.0 * r + p.distance, 0.0, 0.0))]
    } else {
        rule.seed_transforms.iter().map(Pose::transform).collect()
    };
    // chains step past twice the scene box only when a skeleton frames it
    let limit = skel.map(|s| {
        let (mut lo, mut hi) = s.bounds();
        for inst in &scene.instances {
            let c = inst.center();
            lo = lo.inf(&c);
            hi = hi.sup(&c);
        }
        let mid = (lo + hi) / 2.0;
        let half = (hi - lo).abs();
        (mid - half, mid + half)
    });
    struct Chain {
        current: RigidTransform,
        step: RigidTransform,
        ingredient: String,
        alive: bool,
    }
    let mut chains: Vec<Chain> = Vec::new();
    for seed in &seeds {
        for (i, t) in transforms.iter().enumerate() {
            chains.push(Chain {
                current: *seed,
                step: *t,
                ingredient: rule.ingredients[i % rule.ingredients.len()].clone(),
                alive: true,
            });
        }
    }
    let mut count = 0;
    while count < p.elements && chains.iter().any(|c| c.alive) {
        for chain in chains.iter_mut().filter(|c| c.alive) {
            if count >= p.elements {
                break;
            }
            placer.attempts += 1;
            let mut next = chain.current * chain.step;
            if rule.rule_type == RuleType::SiblingsParent {
                next = project(skel.expect("checked"), &next, rule)?;
            }
            let c = next.translation.vector;
            let outside = limit.is_some_and(|(lo, hi)| (0..3).any(|k| c[k] < lo[k] || c[k] > hi[k]));
            if outside || !placer.try_place(&chain.ingredient, &next) {
                chain.alive = false;
                continue;
            }
            chain.current = next;
            count += 1;
        }
    }
    Ok(p.elements)
}

/// Greedy nearest-neighbour pairing; each instance used at most once.
fn greedy_pairs(a: &[(u64, Vec3)], b: &[(u64, Vec3)]) -> Vec<(usize, usize)> {
    let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, (_, pa)) in a.iter().enumerate() {
        for (j, (_, pb)) in b.iter().enumerate() {
            all.push(((pa - pb).norm(), i, j));
        }
    }
    all.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_a, mut used_b) = (BTreeSet::new(), BTreeSet::new());
    let mut out = Vec::new();
    for (_, i, j) in all {
        if !used_a.contains(&i) && !used_b.contains(&j) {
            used_a.insert(i);
            used_b.insert(j);
            out.push((i, j));
        }
    }
    out
}

/// Control points between two pivots for a curve of the requested length:
/// bowed through a perpendicular midpoint when longer than the chord,
/// trimmed when shorter.
fn linker_controls(
    pa: Vec3,
    pb: Vec3,
    length: Option<f64>,
    kind: crate::geometry::CurveKind,
    rng: &mut SceneRng,
) -> Result<Vec<Vec3>, EngineError> {
    let chord = pb - pa;
    let c = chord.norm();
    let target = length.unwrap_or(c);
    let phi = rng.random::<f64>() * std::f64::consts::TAU;
    if target < c * (1.0 - 1e-12) {
        return Ok(vec![pa, pa + chord * (target / c)]);
    }
    if target <= c * (1.0 + 1e-12) {
        return Ok(vec![pa, pb]);
    }
    let u = any_perpendicular(&chord);
    let w = chord.normalize().cross(&u);
    let bow = u * phi.cos() + w * phi.sin();
    let mid = (pa + pb) / 2.0;
    let len_at = |h: f64| -> Result<f64, EngineError> { Ok(Curve::new(vec![pa, mid + bow * h, pb], kind)?.length()) };
    let (mut lo, mut hi) = (0.0, target / 2.0);
    for _ in 0..80 {
        let h = (lo + hi) / 2.0;
        if len_at(h)? < target {
            lo = h;
        } else {
            hi = h;
        }
    }
    Ok(vec![pa, mid + bow * ((lo + hi) / 2.0), pb])
}

fn connection(
    scene: &Scene,
    catalog: &Catalog,
    rule: &Rule,
    placer: &mut Placer,
    rng: &mut SceneRng,
    curves: &mut Vec<CurveRecord>,
    notes: &mut Vec<String>,
) -> Result<u32, EngineError> {
    let p = &rule.params;
    let ends = |name: &str| -> Result<Vec<(u64, Vec3)>, EngineError> {
        scene
            .instances_of(name)
            .map(|i| Ok((i.id, scene.pivot_world(catalog, i)?)))
            .collect()
    };
    let a = ends(&rule.ingredients[0])?;
    let b = ends(&rule.ingredients[1])?;
    if a.is_empty() {
        return Err(EngineError::NoSuchInstance(rule.ingredients[0].clone()));
    }
    if b.is_empty() {
        return Err(EngineError::NoSuchInstance(rule.ingredients[1].clone()));
    }
    let pairs: Vec<((u64, Vec3), (u64, Vec3))> = match rule.endpoint_pair {
        Some((ia, ib)) => {
            let find = |set: &[(u64, Vec3)], id: u64| set.iter().find(|e| e.0 == id).copied();
            let ea = find(&a, ia).ok_or_else(|| EngineError::NoSuchInstance(format!("{} #{ia}", rule.ingredients[0])))?;
            let eb = find(&b, ib).ok_or_else(|| EngineError::NoSuchInstance(format!("{} #{ib}", rule.ingredients[1])))?;
            vec![(ea, eb)]
        }
        None => {
            let pairs = greedy_pairs(&a, &b);
            if a.len() != b.len() {
                notes.push(format!(
                    "matched {} pairs; {} {} and {} {} instances left unconnected",
                    pairs.len(),
                    a.len() - pairs.len(),
                    rule.ingredients[0],
                    b.len() - pairs.len(),
                    rule.ingredients[1]
                ));
            }
            pairs.into_iter().map(|(i, j)| (a[i], b[j])).collect()
        }
    };
    let k = (p.elements as usize).max(2);
    let ball_r = catalog.ball_radius();
    let mut requested = 0u32;
    for ((ida, pa), (idb, pb)) in pairs {
        if (pb - pa).norm() < 1e-9 {
            notes.push(format!("instances {ida} and {idb} share a pivot; no curve built"));
            continue;
        }
        let controls = linker_controls(pa, pb, p.length, p.curve, rng)?;
        let curve = Curve::new(controls.clone(), p.curve)?;
        let points = curve.resample_by_arclength(k)?;
        let first = placer.next_id;
        let mut balls = Vec::new();
        for q in &points[1..k - 1] {
            requested += 1;
            placer.attempts += 1;
            // endpoints and the curve's own balls do not block it
            if placer.blocked(q, ball_r, |id| id == ida || id == idb || id >= first) {
                continue;
            }
            balls.push(placer.place(BALL, &translation(*q)));
        }
        curves.push(CurveRecord {
            control_points: controls.iter().map(|v| (*v).into()).collect(),
            kind: p.curve,
            endpoints: (ida, idb),
            balls,
        });
    }
    Ok(requested)
}
