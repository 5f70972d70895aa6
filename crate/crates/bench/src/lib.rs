//! Fixtures shared by the benchmarks.

use mesoscribe_core::engine::{Catalog, EngineError, Ingredient, RuleSpec, RuleType, Scene};
use mesoscribe_core::geometry::Vec3;
use mesoscribe_core::intent::ParameterPatch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Demo catalog plus a radius-5 sphere named `r5`.
pub fn catalog() -> Catalog {
    let mut c = Catalog::demo();
    c.add_ingredient(Ingredient::new("r5", 5.0)).expect("r5 is not in the demo catalog");
    c
}

/// Unapplied fill rule for `elements` copies of `r5` in the box.
pub fn fill_scene(catalog: &Catalog, seed: u64, elements: u32, collision: bool) -> Result<(Scene, u64), EngineError> {
    let mut scene = Scene::new(seed);
    let id = scene.create_rule(catalog, RuleSpec::new(RuleType::Fill, &["r5"], Some("box")))?;
    let patch = ParameterPatch {
        elements: Some(elements),
        collision_detection: Some(collision),
        ..ParameterPatch::default()
    };
    scene.edit_rule(catalog, id, &patch)?;
    Ok((scene, id))
}

/// `n` spheres with centers uniform in a cube of side `side`.
pub fn random_spheres(seed: u64, n: usize, side: f64, max_radius: f64) -> Vec<(Vec3, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let c = Vec3::new(rng.random_range(0.0..side), rng.random_range(0.0..side), rng.random_range(0.0..side));
            (c, rng.random_range(max_radius * 0.1..max_radius))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let c = catalog();
        let (mut s, id) = fill_scene(&c, 1, 10, true).unwrap();
        assert_eq!(s.apply_rule(&c, id).unwrap().placed, 10);
        assert_eq!(random_spheres(1, 7, 10.0, 1.0).len(), 7);
    }
}
