//! Geometric substrate for the rule engine: skeleton primitives, uniform
//! sampling, curves, rigid transforms and sphere collision queries.

mod curve;
mod math;
mod skeleton;
mod spatial_hash;

pub use curve::{catmull_rom, Curve, CurveKind, SAMPLES_PER_SEGMENT};
pub use math::{
    align_z_to, any_perpendicular, pose, random_rotation, rng_stream, sample_cone, translation,
    Quat, RigidTransform, SceneRng, Vec3, RNG_ALGORITHM,
};
pub use skeleton::{icosahedron, sample_surface_uniform, Skeleton, SkeletonShape, SurfaceSampler};
pub use spatial_hash::{spheres_overlap, SpatialHash, OVERLAP_EPS};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("skeleton variant `{variant}` does not support {operation}")]
    UnsupportedSkeletonVariant {
        variant: &'static str,
        operation: &'static str,
    },
    #[error("mesh `{name}` is not watertight (edge {edge:?} is not shared by exactly two triangles)")]
    NonWatertightMesh { name: String, edge: (usize, usize) },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid skeleton `{name}`: {reason}")]
    InvalidSkeleton { name: String, reason: String },
}
