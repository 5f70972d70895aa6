//! Vector, rotation and rigid-transform helpers shared by the sampling and
//! rule code.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Vec3 = Vector3<f64>;
pub type Quat = UnitQuaternion<f64>;
pub type RigidTransform = Isometry3<f64>;

/// Generator used for every random draw in the engine.
pub type SceneRng = ChaCha8Rng;

/// Identifier written into scene exports next to the seed.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Independent generator stream for `(seed, stream)`.
pub fn rng_stream(seed: u64, stream: u64) -> SceneRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn pose(position: Vec3, rotation: Quat) -> RigidTransform {
    Isometry3::from_parts(Translation3::from(position), rotation)
}

pub fn translation(v: Vec3) -> RigidTransform {
    pose(v, Quat::identity())
}

/// Rotation taking local +z onto `dir`. `dir` need not be normalized.
pub fn align_z_to(dir: &Vec3) -> Quat {
    let z = Vec3::z();
    let d = dir.normalize();
    match Quat::rotation_between(&z, &d) {
        Some(q) => q,
        // antiparallel: any half turn about an axis perpendicular to z
        None => Quat::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI),
    }
}

/// A unit vector perpendicular to `v`, chosen deterministically.
pub fn any_perpendicular(v: &Vec3) -> Vec3 {
    let helper = if v.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let p = helper - v * (v.dot(&helper) / v.norm_squared());
    p.normalize()
}

/// Uniformly distributed rotation (Shoemake's method).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Quat {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let u3: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = nalgebra::Quaternion::new(b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin());
    UnitQuaternion::from_quaternion(q)
}

/// Direction drawn uniformly from the spherical cap of half-angle
/// `half_angle` (radians) around `axis`.
pub fn sample_cone<R: Rng + ?Sized>(axis: &Vec3, half_angle: f64, rng: &mut R) -> Vec3 {
    let axis = axis.normalize();
    if half_angle <= 0.0 {
        return axis;
    }
    let cos_max = half_angle.min(std::f64::consts::PI).cos();
    let cos_t = 1.0 - rng.random::<f64>() * (1.0 - cos_max);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = rng.random::<f64>() * std::f64::consts::TAU;
    let u = any_perpendicular(&axis);
    let v = axis.cross(&u);
    (axis * cos_t + u * (sin_t * phi.cos()) + v * (sin_t * phi.sin())).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn align_handles_parallel_and_antiparallel() {
        for d in [Vec3::z(), -Vec3::z(), Vec3::x(), Vec3::new(1.0, 2.0, -3.0)] {
            let q = align_z_to(&d);
            let got = q * Vec3::z();
            assert!((got - d.normalize()).norm() < 1e-12, "{d:?} -> {got:?}");
        }
    }

    #[test]
    fn random_rotation_is_unit() {
        let mut rng = rng_stream(7, 0);
        for _ in 0..1000 {
            let q = random_rotation(&mut rng);
            assert!((q.quaternion().norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cone_samples_stay_inside_cap() {
        let mut rng = rng_stream(3, 1);
        let axis = Vec3::new(0.3, -0.2, 0.9);
        let half = 15f64.to_radians();
        for _ in 0..2000 {
            let d = sample_cone(&axis, half, &mut rng);
            let angle = d.angle(&axis.normalize());
            assert!(angle <= half + 1e-9);
        }
    }

    #[test]
    fn inverse_composes_to_identity() {
        let mut rng = rng_stream(11, 0);
        for _ in 0..100 {
            let t = pose(
                Vec3::new(rng.random(), rng.random(), rng.random()) * 10.0,
                random_rotation(&mut rng),
            );
            let id = t.inverse() * t;
            assert!(id.translation.vector.norm() < 1e-9);
            assert!(id.rotation.angle() < 1e-9);
        }
    }

    #[test]
    fn streams_are_independent_and_repeatable() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(rng_stream(42, 0), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(rng_stream(42, 0), |r, _| Some(r.random())).collect();
        let c: Vec<u64> = (0..4).map(|_| 0).scan(rng_stream(42, 1), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
