//! Rule engine: creates, edits, applies and reverts the six rule classes over
//! a [`Scene`].

mod apply;
mod catalog;
mod rules;
mod scene;

pub use apply::{ApplyReport, ATTEMPTS_PER_ELEMENT};
pub use catalog::{Catalog, Ingredient, BALL, DEFAULT_BALL_RADIUS};
pub use rules::{
    parse_seed_transforms, parse_tweaking, parse_vertex_indices, Application, CurveRecord, Pose, Rule,
    RuleParams, RuleSpec, RuleType,
};
pub use scene::{Instance, Scene, ViewState, SCENE_VERSION};

use thiserror::Error;

use crate::geometry::{GeometryError, Skeleton};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("no rule with id {0}")]
    UnknownRule(u64),
    #[error("rule {rule_id} placed no instances after {attempts} attempts")]
    InfeasiblePopulation { rule_id: u64, attempts: u64 },
    #[error("{rule_type} rule: {reason}")]
    ArityViolation { rule_type: RuleType, reason: String },
    #[error("space needs a volumetric skeleton; `{0}` has no volume")]
    SpaceOnSurfaceSkeleton(String),
    #[error("rule {0} has no application to revert")]
    NothingToRevert(u64),
    #[error("{ingredient} has no residue at chain {chain_id}, residue {residue_id}")]
    IndexOutOfRange {
        ingredient: String,
        chain_id: u32,
        residue_id: u32,
    },
    #[error("{0} has no chain/residue data")]
    NoResidueData(String),
    #[error("no placed instance of {0}")]
    NoSuchInstance(String),
    #[error("unknown ingredient `{0}`")]
    UnknownIngredient(String),
    #[error("unknown skeleton `{0}`")]
    UnknownSkeleton(String),
    #[error("invalid {field} value `{value}`")]
    InvalidParameter { field: &'static str, value: String },
    #[error("invalid catalog entry `{name}`: {reason}")]
    InvalidCatalogEntry { name: String, reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("scene version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error("scene references missing catalog entry `{0}`")]
    MissingCatalogEntry(String),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("malformed file: {0}")]
    Format(String),
}

/// Number of ingredient instances whose bounding spheres fill
/// `space_percent` of the skeleton volume: floor of the volume ratio, at
/// least 1.
pub fn space_to_count(space_percent: u32, skeleton: &Skeleton, ingredient: &Ingredient) -> Result<u32, EngineError> {
    if space_percent == 0 || space_percent > 100 {
        return Err(EngineError::InvalidParameter {
            field: "space",
            value: space_percent.to_string(),
        });
    }
    let volume = skeleton.volume()?;
    let count = (space_percent as f64 / 100.0 * volume / ingredient.volume()).floor();
    Ok((count.min(u32::MAX as f64) as u32).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn space_examples() {
        let boxed = Skeleton::cuboid("b", Vec3::zeros(), Vec3::repeat(100.0));
        assert_eq!(space_to_count(2, &boxed, &Ingredient::new("x", 5.0)).unwrap(), 38);
        let sphere = Skeleton::sphere("s", Vec3::zeros(), 3.0);
        assert_eq!(space_to_count(100, &sphere, &Ingredient::new("x", 3.0)).unwrap(), 1);
        // tiny share still yields one instance
        assert_eq!(space_to_count(1, &sphere, &Ingredient::new("x", 3.0)).unwrap(), 1);
        let rect = Skeleton::rectangle("r", Vec3::zeros(), 1.0, 1.0, Vec3::z());
        assert!(matches!(
            space_to_count(2, &rect, &Ingredient::new("x", 1.0)),
            Err(EngineError::Geometry(GeometryError::UnsupportedSkeletonVariant { .. }))
        ));
        assert!(space_to_count(0, &boxed, &Ingredient::new("x", 1.0)).is_err());
    }
}
