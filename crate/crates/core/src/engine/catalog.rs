//! Ingredient and skeleton catalogs loaded from `catalog/ingredients/*.json`
//! and `catalog/skeletons/*.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::geometry::{Skeleton, Vec3};

/// Reserved ingredient name for connection-rule balls.
pub const BALL: &str = "ball";
pub const DEFAULT_BALL_RADIUS: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ingredient {
    pub name: String,
    pub bounding_radius: f64,
    #[serde(default)]
    pub pivot: [f64; 3],
    /// Residue centers in the local frame, grouped by chain.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chains: Vec<Vec<[f64; 3]>>,
    #[serde(default = "default_color")]
    pub color: [f64; 3],
    /// Catalog entry id (file stem for loaded entries).
    #[serde(default)]
    pub source: String,
}

fn default_color() -> [f64; 3] {
    [0.7, 0.7, 0.7]
}

impl Ingredient {
    pub fn new(name: &str, bounding_radius: f64) -> Self {
        Ingredient {
            name: name.to_string(),
            bounding_radius,
            pivot: [0.0; 3],
            chains: Vec::new(),
            color: default_color(),
            source: name.to_string(),
        }
    }

    pub fn has_residues(&self) -> bool {
        self.chains.iter().any(|c| !c.is_empty())
    }

    pub fn residue(&self, chain_id: u32, residue_id: u32) -> Result<Vec3, EngineError> {
        if !self.has_residues() {
            return Err(EngineError::NoResidueData(self.name.clone()));
        }
        let out_of_range = || EngineError::IndexOutOfRange {
            ingredient: self.name.clone(),
            chain_id,
            residue_id,
        };
        let chain = self.chains.get(chain_id as usize).ok_or_else(out_of_range)?;
        let r = chain.get(residue_id as usize).ok_or_else(out_of_range)?;
        Ok(Vec3::from(*r))
    }

    /// Sphere volume of the bounding radius.
    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.bounding_radius.powi(3)
    }

    fn validate(&self) -> Result<(), EngineError> {
        let bad = |reason: String| EngineError::InvalidCatalogEntry {
            name: self.name.clone(),
            reason,
        };
        if self.name.trim().is_empty() {
            return Err(bad("empty name".into()));
        }
        if !(self.bounding_radius > 0.0 && self.bounding_radius.is_finite()) {
            return Err(bad(format!("bounding_radius must be positive, got {}", self.bounding_radius)));
        }
        for (c, chain) in self.chains.iter().enumerate() {
            for (r, p) in chain.iter().enumerate() {
                let d = Vec3::from(*p).norm();
                if d > self.bounding_radius + 1e-9 {
                    return Err(bad(format!(
                        "residue {r} of chain {c} lies {d} from the origin, outside radius {}",
                        self.bounding_radius
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    pub ingredients: BTreeMap<String, Ingredient>,
    pub skeletons: BTreeMap<String, Skeleton>,
}

macro_rules! demo_entries {
    ($dir:literal: $($name:literal),* $(,)?) => {
        [$(($name, include_str!(concat!("../../catalog/", $dir, "/", $name, ".json")))),*]
    };
}

impl Catalog {
    /// The bundled demo catalog.
    pub fn demo() -> Catalog {
        let ingredients = demo_entries!("ingredients":
            "Au", "HDT-1", "HDT-2", "SpyCatcher", "lipid", "capsid-protein", "Albumin", "IgG",
            "Fibrinogen", "Transferrin", "IgA", "Haptoglobin", "Alpha2Macroglobulin", "Heparin",
            "ball",
        );
        let skeletons = demo_entries!("skeletons": "box", "rectangle", "membrane", "capsid");
        let mut catalog = Catalog::default();
        for (stem, text) in ingredients {
            catalog
                .add_ingredient(parse_ingredient(stem, text).expect("bundled ingredient is valid"))
                .expect("bundled ingredient is valid");
        }
        for (_, text) in skeletons {
            let s: Skeleton = serde_json::from_str(text).expect("bundled skeleton is valid");
            catalog.add_skeleton(s).expect("bundled skeleton is valid");
        }
        catalog
    }

    /// Load `<dir>/ingredients/*.json` and `<dir>/skeletons/*.json`. Files are
    /// read in name order. A missing `ball` entry is added with the default
    /// radius.
    pub fn load_dir(dir: &Path) -> Result<Catalog, EngineError> {
        let mut catalog = Catalog::default();
        for (stem, text) in read_json_files(&dir.join("ingredients"))? {
            catalog.add_ingredient(parse_ingredient(&stem, &text)?)?;
        }
        for (stem, text) in read_json_files(&dir.join("skeletons"))? {
            let s: Skeleton = serde_json::from_str(&text)
                .map_err(|e| EngineError::Format(format!("skeleton {stem}: {e}")))?;
            catalog.add_skeleton(s)?;
        }
        if !catalog.ingredients.contains_key(BALL) {
            catalog.add_ingredient(Ingredient::new(BALL, DEFAULT_BALL_RADIUS))?;
        }
        Ok(catalog)
    }

    pub fn add_ingredient(&mut self, ingredient: Ingredient) -> Result<(), EngineError> {
        ingredient.validate()?;
        self.ingredients.insert(ingredient.name.clone(), ingredient);
        Ok(())
    }

    pub fn add_skeleton(&mut self, skeleton: Skeleton) -> Result<(), EngineError> {
        skeleton.validate()?;
        self.skeletons.insert(skeleton.name.clone(), skeleton);
        Ok(())
    }

    pub fn ingredient(&self, name: &str) -> Result<&Ingredient, EngineError> {
        self.ingredients
            .get(name)
            .ok_or_else(|| EngineError::UnknownIngredient(name.to_string()))
    }

    pub fn skeleton(&self, name: &str) -> Result<&Skeleton, EngineError> {
        self.skeletons
            .get(name)
            .ok_or_else(|| EngineError::UnknownSkeleton(name.to_string()))
    }

    pub fn ball_radius(&self) -> f64 {
        self.ingredients
            .get(BALL)
            .map(|b| b.bounding_radius)
            .unwrap_or(DEFAULT_BALL_RADIUS)
    }

    /// Ingredient names a user can select; the reserved ball is excluded.
    pub fn ingredient_names(&self) -> Vec<String> {
        self.ingredients.keys().filter(|n| *n != BALL).cloned().collect()
    }

    pub fn skeleton_names(&self) -> Vec<String> {
        self.skeletons.keys().cloned().collect()
    }
}

fn parse_ingredient(stem: &str, text: &str) -> Result<Ingredient, EngineError> {
    let mut ing: Ingredient = serde_json::from_str(text)
        .map_err(|e| EngineError::Format(format!("ingredient {stem}: {e}")))?;
    if ing.source.is_empty() {
        ing.source = stem.to_string();
    }
    Ok(ing)
}

fn read_json_files(dir: &Path) -> Result<Vec<(String, String)>, EngineError> {
    let entries = fs::read_dir(dir).map_err(|e| EngineError::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let text = fs::read_to_string(&p).map_err(|e| EngineError::Io(format!("{}: {e}", p.display())))?;
            Ok((stem, text))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_catalog_contents() {
        let c = Catalog::demo();
        assert_eq!(c.ingredient("Heparin").unwrap().bounding_radius, 2.0);
        assert_eq!(c.ball_radius(), 0.4);
        assert!(c.skeleton("box").unwrap().supports_volume());
        assert!(c.skeleton("rectangle").unwrap().supports_surface());
        assert!(c.skeleton("capsid").unwrap().volume().is_ok());
        assert!(!c.ingredient_names().contains(&BALL.to_string()));
        assert_eq!(c.ingredient("HDT-1").unwrap().source, "HDT-1");
    }

    #[test]
    fn residue_lookup() {
        let c = Catalog::demo();
        let spy = c.ingredient("SpyCatcher").unwrap();
        assert_eq!(spy.residue(0, 0).unwrap(), Vec3::from(spy.chains[0][0]));
        assert!(matches!(spy.residue(0, 999), Err(EngineError::IndexOutOfRange { .. })));
        assert!(matches!(spy.residue(9, 0), Err(EngineError::IndexOutOfRange { .. })));
        assert!(matches!(
            c.ingredient("Au").unwrap().residue(0, 0),
            Err(EngineError::NoResidueData(_))
        ));
    }

    #[test]
    fn residues_outside_radius_rejected() {
        let mut ing = Ingredient::new("x", 1.0);
        ing.chains = vec![vec![[2.0, 0.0, 0.0]]];
        assert!(Catalog::default().add_ingredient(ing).is_err());
    }

    #[test]
    fn load_dir_reads_files_and_adds_ball() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("ingredients")).unwrap();
        fs::create_dir_all(dir.path().join("skeletons")).unwrap();
        fs::write(
            dir.path().join("ingredients/foo.json"),
            r#"{"name":"Foo","bounding_radius":2,"color":[1,0,0],"chains":[[[0,0,1]]]}"#,
        )
        .unwrap();
        fs::write(
            dir.path().join("skeletons/s.json"),
            r#"{"name":"ball-host","variant":"sphere","center":[0,0,0],"radius":4}"#,
        )
        .unwrap();
        let c = Catalog::load_dir(dir.path()).unwrap();
        assert_eq!(c.ingredient("Foo").unwrap().source, "foo");
        assert_eq!(c.ball_radius(), DEFAULT_BALL_RADIUS);
        assert!(c.skeleton("ball-host").is_ok());
    }
}
