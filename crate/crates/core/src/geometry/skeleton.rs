//! Skeleton primitives: the surfaces and volumes that guide instance
//! placement.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::math::{any_perpendicular, Vec3};
use super::GeometryError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub name: String,
    #[serde(flatten)]
    pub shape: SkeletonShape,
}

/// Geometric host. Extents are full side lengths, not half-lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SkeletonShape {
    Rectangle {
        center: [f64; 3],
        extents: [f64; 2],
        normal: [f64; 3],
    },
    Box {
        center: [f64; 3],
        extents: [f64; 3],
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Open or closed triangle surface with per-vertex normals.
    SurfaceMesh {
        vertices: Vec<[f64; 3]>,
        normals: Vec<[f64; 3]>,
        triangles: Vec<[usize; 3]>,
    },
    /// Closed (watertight) triangle mesh bounding a volume.
    VolumeMesh {
        vertices: Vec<[f64; 3]>,
        triangles: Vec<[usize; 3]>,
    },
}

fn v(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

// Fixed, mutually non-coplanar directions for ray-parity inside tests.
const PARITY_RAYS: [[f64; 3]; 3] = [
    [0.5773502691896258, 0.5773502691896258, 0.5773502691896258],
    [-0.2672612419124244, 0.5345224838248488, -0.8017837257372732],
    [0.8164965809277261, -0.408248290463863, -0.408248290463863],
];

impl SkeletonShape {
    pub fn variant_name(&self) -> &'static str {
        match self {
            SkeletonShape::Rectangle { .. } => "rectangle",
            SkeletonShape::Box { .. } => "box",
            SkeletonShape::Sphere { .. } => "sphere",
            SkeletonShape::SurfaceMesh { .. } => "surface_mesh",
            SkeletonShape::VolumeMesh { .. } => "volume_mesh",
        }
    }
}

impl Skeleton {
    pub fn new(name: impl Into<String>, shape: SkeletonShape) -> Self {
        Skeleton {
            name: name.into(),
            shape,
        }
    }

    pub fn rectangle(name: &str, center: Vec3, width: f64, height: f64, normal: Vec3) -> Self {
        let n = normal.normalize();
        Self::new(
            name,
            SkeletonShape::Rectangle {
                center: center.into(),
                extents: [width, height],
                normal: n.into(),
            },
        )
    }

    pub fn cuboid(name: &str, center: Vec3, extents: Vec3) -> Self {
        Self::new(
            name,
            SkeletonShape::Box {
                center: center.into(),
                extents: extents.into(),
            },
        )
    }

    pub fn sphere(name: &str, center: Vec3, radius: f64) -> Self {
        Self::new(
            name,
            SkeletonShape::Sphere {
                center: center.into(),
                radius,
            },
        )
    }

    pub fn supports_surface(&self) -> bool {
        matches!(
            self.shape,
            SkeletonShape::Rectangle { .. }
                | SkeletonShape::Sphere { .. }
                | SkeletonShape::SurfaceMesh { .. }
        )
    }

    pub fn supports_volume(&self) -> bool {
        matches!(
            self.shape,
            SkeletonShape::Box { .. } | SkeletonShape::Sphere { .. } | SkeletonShape::VolumeMesh { .. }
        )
    }

    fn unsupported(&self, operation: &'static str) -> GeometryError {
        GeometryError::UnsupportedSkeletonVariant {
            variant: self.shape.variant_name(),
            operation,
        }
    }

    /// Structural checks: positive sizes, index bounds, normals, watertightness.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| GeometryError::InvalidSkeleton {
            name: self.name.clone(),
            reason: msg,
        };
        match &self.shape {
            SkeletonShape::Rectangle {
                extents, normal, ..
            } => {
                if !(extents[0] > 0.0 && extents[1] > 0.0) {
                    return Err(bad("rectangle extents must be positive".into()));
                }
                if v(normal).norm() < 1e-12 {
                    return Err(bad("rectangle normal must be non-zero".into()));
                }
            }
            SkeletonShape::Box { extents, .. } => {
                if !extents.iter().all(|e| *e > 0.0) {
                    return Err(bad("box extents must be positive".into()));
                }
            }
            SkeletonShape::Sphere { radius, .. } => {
                if !radius.is_finite() || *radius <= 0.0 {
                    return Err(bad("sphere radius must be positive".into()));
                }
            }
            SkeletonShape::SurfaceMesh {
                vertices,
                normals,
                triangles,
            } => {
                if normals.len() != vertices.len() {
                    return Err(bad(format!(
                        "{} normals for {} vertices",
                        normals.len(),
                        vertices.len()
                    )));
                }
                check_indices(vertices.len(), triangles).map_err(bad)?;
                if triangles.is_empty() {
                    return Err(bad("mesh has no triangles".into()));
                }
            }
            SkeletonShape::VolumeMesh {
                vertices,
                triangles,
            } => {
                check_indices(vertices.len(), triangles).map_err(bad)?;
                check_watertight(triangles).map_err(|edge| GeometryError::NonWatertightMesh {
                    name: self.name.clone(),
                    edge,
                })?;
            }
        }
        Ok(())
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        match &self.shape {
            SkeletonShape::Rectangle { .. } => {
                let corners = self.rectangle_corners();
                bounds_of(corners.iter().copied())
            }
            SkeletonShape::Box { center, extents } => {
                let h = v(extents) / 2.0;
                (v(center) - h, v(center) + h)
            }
            SkeletonShape::Sphere { center, radius } => {
                let r = Vec3::repeat(*radius);
                (v(center) - r, v(center) + r)
            }
            SkeletonShape::SurfaceMesh { vertices, .. } | SkeletonShape::VolumeMesh { vertices, .. } => {
                bounds_of(vertices.iter().map(v))
            }
        }
    }

    pub fn center(&self) -> Vec3 {
        let (lo, hi) = self.bounds();
        (lo + hi) / 2.0
    }

    /// In-plane axes `(u, v, n)` of a rectangle; `u` spans extents[0].
    fn rectangle_frame(normal: &[f64; 3]) -> (Vec3, Vec3, Vec3) {
        let n = v(normal).normalize();
        let u = any_perpendicular(&n);
        let w = n.cross(&u);
        (u, w, n)
    }

    fn rectangle_corners(&self) -> Vec<Vec3> {
        match &self.shape {
            SkeletonShape::Rectangle {
                center,
                extents,
                normal,
            } => {
                let (u, w, _) = Self::rectangle_frame(normal);
                let c = v(center);
                let (hu, hw) = (u * extents[0] / 2.0, w * extents[1] / 2.0);
                vec![c - hu - hw, c + hu - hw, c + hu + hw, c - hu + hw]
            }
            _ => Vec::new(),
        }
    }

    /// Point containment for volumetric skeletons.
    pub fn inside(&self, p: &Vec3) -> Result<bool, GeometryError> {
        match &self.shape {
            SkeletonShape::Box { center, extents } => {
                let d = p - v(center);
                Ok((0..3).all(|i| d[i].abs() <= extents[i] / 2.0))
            }
            SkeletonShape::Sphere { center, radius } => Ok((p - v(center)).norm() <= *radius),
            SkeletonShape::VolumeMesh {
                vertices,
                triangles,
            } => {
                let votes = PARITY_RAYS
                    .iter()
                    .filter(|d| ray_parity(vertices, triangles, p, &v(d)))
                    .count();
                Ok(votes >= 2)
            }
            _ => Err(self.unsupported("inside")),
        }
    }

    /// Odd/even crossing count along one ray direction. Only meaningful for
    /// closed meshes; exposed so callers can cross-check `inside`.
    pub fn ray_parity(&self, p: &Vec3, dir: &Vec3) -> Result<bool, GeometryError> {
        match &self.shape {
            SkeletonShape::VolumeMesh {
                vertices,
                triangles,
            } => Ok(ray_parity(vertices, triangles, p, dir)),
            _ => Err(self.unsupported("ray_parity")),
        }
    }

    pub fn volume(&self) -> Result<f64, GeometryError> {
        match &self.shape {
            SkeletonShape::Box { extents, .. } => Ok(extents[0] * extents[1] * extents[2]),
            SkeletonShape::Sphere { radius, .. } => {
                Ok(4.0 / 3.0 * std::f64::consts::PI * radius.powi(3))
            }
            SkeletonShape::VolumeMesh {
                vertices,
                triangles,
            } => {
                if let Err(edge) = check_watertight(triangles) {
                    return Err(GeometryError::NonWatertightMesh {
                        name: self.name.clone(),
                        edge,
                    });
                }
                // divergence theorem: sum of signed tetrahedra against the origin
                let signed: f64 = triangles
                    .iter()
                    .map(|t| {
                        let (a, b, c) = (v(&vertices[t[0]]), v(&vertices[t[1]]), v(&vertices[t[2]]));
                        a.dot(&b.cross(&c)) / 6.0
                    })
                    .sum();
                Ok(signed.abs())
            }
            _ => Err(self.unsupported("volume")),
        }
    }

    /// Closest point on the surface and the outward normal there.
    pub fn closest_surface_point(&self, p: &Vec3) -> Result<(Vec3, Vec3), GeometryError> {
        match &self.shape {
            SkeletonShape::Rectangle {
                center,
                extents,
                normal,
            } => {
                let (u, w, n) = Self::rectangle_frame(normal);
                let d = p - v(center);
                let su = d.dot(&u).clamp(-extents[0] / 2.0, extents[0] / 2.0);
                let sw = d.dot(&w).clamp(-extents[1] / 2.0, extents[1] / 2.0);
                Ok((v(center) + u * su + w * sw, n))
            }
            SkeletonShape::Sphere { center, radius } => {
                let c = v(center);
                let d = p - c;
                let dir = if d.norm() < 1e-15 { Vec3::z() } else { d.normalize() };
                Ok((c + dir * *radius, dir))
            }
            SkeletonShape::SurfaceMesh {
                vertices,
                normals,
                triangles,
            } => {
                let mut best: Option<(f64, Vec3, Vec3)> = None;
                for t in triangles {
                    let (a, b, c) = (v(&vertices[t[0]]), v(&vertices[t[1]]), v(&vertices[t[2]]));
                    let (q, bary) = closest_point_on_triangle(p, &a, &b, &c);
                    let d2 = (q - p).norm_squared();
                    if best.as_ref().is_none_or(|(bd, _, _)| d2 < *bd) {
                        let n = v(&normals[t[0]]) * bary[0]
                            + v(&normals[t[1]]) * bary[1]
                            + v(&normals[t[2]]) * bary[2];
                        best = Some((d2, q, n.normalize()));
                    }
                }
                let (_, q, n) = best.ok_or_else(|| self.unsupported("closest_surface_point"))?;
                Ok((q, n))
            }
            _ => Err(self.unsupported("closest_surface_point")),
        }
    }

    /// Unsigned distance from `p` to the surface.
    pub fn surface_distance(&self, p: &Vec3) -> Result<f64, GeometryError> {
        self.closest_surface_point(p).map(|(q, _)| (p - q).norm())
    }

    /// Designatable vertices with their outward normals.
    pub fn vertices(&self) -> Vec<(Vec3, Vec3)> {
        match &self.shape {
            SkeletonShape::Rectangle { normal, .. } => {
                let n = v(normal).normalize();
                self.rectangle_corners().into_iter().map(|c| (c, n)).collect()
            }
            SkeletonShape::Box { center, extents } => {
                let c = v(center);
                let h = v(extents) / 2.0;
                let mut out = Vec::with_capacity(8);
                for sx in [-1.0, 1.0] {
                    for sy in [-1.0, 1.0] {
                        for sz in [-1.0, 1.0] {
                            let off = Vec3::new(sx * h.x, sy * h.y, sz * h.z);
                            out.push((c + off, off.normalize()));
                        }
                    }
                }
                out
            }
            SkeletonShape::Sphere { center, radius } => {
                let c = v(center);
                [Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()]
                    .into_iter()
                    .map(|d| (c + d * *radius, d))
                    .collect()
            }
            SkeletonShape::SurfaceMesh {
                vertices, normals, ..
            } => vertices
                .iter()
                .zip(normals)
                .map(|(p, n)| (v(p), v(n).normalize()))
                .collect(),
            SkeletonShape::VolumeMesh {
                vertices,
                triangles,
            } => {
                let mut acc = vec![Vec3::zeros(); vertices.len()];
                for t in triangles {
                    let (a, b, c) = (v(&vertices[t[0]]), v(&vertices[t[1]]), v(&vertices[t[2]]));
                    let face = (b - a).cross(&(c - a));
                    for &i in t {
                        acc[i] += face;
                    }
                }
                vertices
                    .iter()
                    .zip(acc)
                    .map(|(p, n)| (v(p), if n.norm() > 0.0 { n.normalize() } else { Vec3::z() }))
                    .collect()
            }
        }
    }
}

fn bounds_of(points: impl Iterator<Item = Vec3>) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    (lo, hi)
}

fn check_indices(n: usize, triangles: &[[usize; 3]]) -> Result<(), String> {
    for (i, t) in triangles.iter().enumerate() {
        if t.iter().any(|&k| k >= n) {
            return Err(format!("triangle {i} references a vertex out of range"));
        }
    }
    Ok(())
}

/// Every undirected edge must be shared by exactly two triangles.
fn check_watertight(triangles: &[[usize; 3]]) -> Result<(), (usize, usize)> {
    if triangles.is_empty() {
        return Err((0, 0));
    }
    let mut count: HashMap<(usize, usize), u32> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut bad: Vec<_> = count.into_iter().filter(|(_, c)| *c != 2).map(|(e, _)| e).collect();
    bad.sort_unstable();
    match bad.first() {
        Some(e) => Err(*e),
        None => Ok(()),
    }
}

fn ray_parity(vertices: &[[f64; 3]], triangles: &[[usize; 3]], p: &Vec3, dir: &Vec3) -> bool {
    let dir = dir.normalize();
    let hits = triangles
        .iter()
        .filter(|t| {
            ray_hits_triangle(p, &dir, &v(&vertices[t[0]]), &v(&vertices[t[1]]), &v(&vertices[t[2]]))
        })
        .count();
    hits % 2 == 1
}

/// Möller-Trumbore, counting only hits strictly in front of the origin.
fn ray_hits_triangle(o: &Vec3, d: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> bool {
    let e1 = b - a;
    let e2 = c - a;
    let pv = d.cross(&e2);
    let det = e1.dot(&pv);
    if det.abs() < 1e-14 {
        return false;
    }
    let inv = 1.0 / det;
    let tv = o - a;
    let u = tv.dot(&pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let qv = tv.cross(&e1);
    let w = d.dot(&qv) * inv;
    if w < 0.0 || u + w > 1.0 {
        return false;
    }
    e2.dot(&qv) * inv > 1e-12
}

/// Closest point on triangle `abc` to `p`, with barycentric weights.
fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return (a + ab * t, [1.0 - t, t, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return (a + ac * t, [1.0 - t, 0.0, t]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * t, [0.0, 1.0 - t, t]);
    }
    let denom = 1.0 / (va + vb + vc);
    let bv = vb * denom;
    let cw = vc * denom;
    (a + ab * bv + ac * cw, [1.0 - bv - cw, bv, cw])
}

/// Precomputed area-uniform surface sampler.
pub struct SurfaceSampler<'a> {
    skeleton: &'a Skeleton,
    triangle_pick: Option<WeightedIndex<f64>>,
}

impl<'a> SurfaceSampler<'a> {
    pub fn new(skeleton: &'a Skeleton) -> Result<Self, GeometryError> {
        let triangle_pick = match &skeleton.shape {
            SkeletonShape::Rectangle { .. } | SkeletonShape::Sphere { .. } => None,
            SkeletonShape::SurfaceMesh {
                vertices,
                triangles,
                ..
            } => {
                let areas: Vec<f64> = triangles
                    .iter()
                    .map(|t| {
                        let (a, b, c) = (v(&vertices[t[0]]), v(&vertices[t[1]]), v(&vertices[t[2]]));
                        (b - a).cross(&(c - a)).norm() / 2.0
                    })
                    .collect();
                let pick = WeightedIndex::new(&areas).map_err(|_| GeometryError::InvalidSkeleton {
                    name: skeleton.name.clone(),
                    reason: "mesh has zero surface area".into(),
                })?;
                Some(pick)
            }
            _ => return Err(skeleton.unsupported("sample_surface")),
        };
        Ok(SurfaceSampler {
            skeleton,
            triangle_pick,
        })
    }

    /// Uniform-by-area point and its unit outward normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec3, Vec3) {
        match &self.skeleton.shape {
            SkeletonShape::Rectangle {
                center,
                extents,
                normal,
            } => {
                let (u, w, n) = Skeleton::rectangle_frame(normal);
                let su = (rng.random::<f64>() - 0.5) * extents[0];
                let sw = (rng.random::<f64>() - 0.5) * extents[1];
                (v(center) + u * su + w * sw, n)
            }
            SkeletonShape::Sphere { center, radius } => {
                let z = 1.0 - 2.0 * rng.random::<f64>();
                let phi = rng.random::<f64>() * std::f64::consts::TAU;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let dir = Vec3::new(r * phi.cos(), r * phi.sin(), z);
                (v(center) + dir * *radius, dir)
            }
            SkeletonShape::SurfaceMesh {
                vertices,
                normals,
                triangles,
            } => {
                let pick = self.triangle_pick.as_ref().expect("mesh sampler has weights");
                let t = triangles[pick.sample(rng)];
                let r1 = rng.random::<f64>().sqrt();
                let r2: f64 = rng.random();
                let bary = [1.0 - r1, r1 * (1.0 - r2), r1 * r2];
                let p = v(&vertices[t[0]]) * bary[0]
                    + v(&vertices[t[1]]) * bary[1]
                    + v(&vertices[t[2]]) * bary[2];
                let n = v(&normals[t[0]]) * bary[0]
                    + v(&normals[t[1]]) * bary[1]
                    + v(&normals[t[2]]) * bary[2];
                (p, n.normalize())
            }
            _ => unreachable!("constructor rejects non-surface skeletons"),
        }
    }
}

/// One uniform surface sample. Builds the sampler each call; hot loops
/// should hold a [`SurfaceSampler`] instead.
pub fn sample_surface_uniform<R: Rng + ?Sized>(
    skeleton: &Skeleton,
    rng: &mut R,
) -> Result<(Vec3, Vec3), GeometryError> {
    Ok(SurfaceSampler::new(skeleton)?.sample(rng))
}

/// Regular icosahedron with the given circumradius, outward-wound.
pub fn icosahedron(radius: f64) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let scale = radius / (1.0 + phi * phi).sqrt();
    let vertices = raw.iter().map(|p| [p[0] * scale, p[1] * scale, p[2] * scale]).collect();
    let triangles = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::math::rng_stream;

    fn ico_skeleton() -> Skeleton {
        let (vertices, triangles) = icosahedron(10.0);
        Skeleton::new("ico", SkeletonShape::VolumeMesh { vertices, triangles })
    }

    #[test]
    fn rectangle_samples_lie_on_the_primitive() {
        let rect = Skeleton::rectangle("r", Vec3::zeros(), 10.0, 10.0, Vec3::z());
        let sampler = SurfaceSampler::new(&rect).unwrap();
        let mut rng = rng_stream(1, 0);
        for _ in 0..1000 {
            let (p, n) = sampler.sample(&mut rng);
            assert_eq!(p.z, 0.0);
            assert!(p.x.abs() <= 5.0 && p.y.abs() <= 5.0);
            assert_eq!(n, Vec3::z());
        }
    }

    #[test]
    fn sphere_samples_at_radius() {
        let s = Skeleton::sphere("s", Vec3::new(1.0, 2.0, 3.0), 4.0);
        let mut rng = rng_stream(2, 0);
        for _ in 0..1000 {
            let (p, n) = sample_surface_uniform(&s, &mut rng).unwrap();
            assert!(((p - Vec3::new(1.0, 2.0, 3.0)).norm() - 4.0).abs() < 1e-9);
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn box_inside_and_volume() {
        let b = Skeleton::cuboid("box", Vec3::zeros(), Vec3::repeat(100.0));
        assert!(b.inside(&Vec3::zeros()).unwrap());
        assert!(!b.inside(&Vec3::new(51.0, 0.0, 0.0)).unwrap());
        assert_eq!(b.volume().unwrap(), 1e6);
    }

    #[test]
    fn sphere_volume_closed_form() {
        let s = Skeleton::sphere("s", Vec3::zeros(), 5.0);
        assert!((s.volume().unwrap() - 523.598_775_598_298_8).abs() < 1e-9);
    }

    #[test]
    fn surface_ops_reject_volume_only_variants() {
        let b = Skeleton::cuboid("box", Vec3::zeros(), Vec3::repeat(1.0));
        let mut rng = rng_stream(0, 0);
        assert!(matches!(
            sample_surface_uniform(&b, &mut rng),
            Err(GeometryError::UnsupportedSkeletonVariant { .. })
        ));
        let r = Skeleton::rectangle("r", Vec3::zeros(), 1.0, 1.0, Vec3::z());
        assert!(matches!(r.volume(), Err(GeometryError::UnsupportedSkeletonVariant { .. })));
        assert!(r.inside(&Vec3::zeros()).is_err());
    }

    #[test]
    fn icosahedron_is_watertight_and_outward() {
        let ico = ico_skeleton();
        ico.validate().unwrap();
        let (vertices, triangles) = icosahedron(10.0);
        let signed: f64 = triangles
            .iter()
            .map(|t| v(&vertices[t[0]]).dot(&v(&vertices[t[1]]).cross(&v(&vertices[t[2]]))))
            .sum();
        assert!(signed > 0.0);
        assert!(ico.inside(&Vec3::zeros()).unwrap());
        assert!(!ico.inside(&Vec3::new(11.0, 0.0, 0.0)).unwrap());
    }

    #[test]
    fn open_mesh_is_rejected() {
        let (vertices, mut triangles) = icosahedron(1.0);
        triangles.pop();
        let s = Skeleton::new("holey", SkeletonShape::VolumeMesh { vertices, triangles });
        assert!(matches!(s.validate(), Err(GeometryError::NonWatertightMesh { .. })));
        assert!(matches!(s.volume(), Err(GeometryError::NonWatertightMesh { .. })));
    }

    #[test]
    fn closest_point_on_rectangle_clamps() {
        let r = Skeleton::rectangle("r", Vec3::zeros(), 10.0, 10.0, Vec3::z());
        let (q, n) = r.closest_surface_point(&Vec3::new(8.0, 1.0, 3.0)).unwrap();
        assert!((q - Vec3::new(5.0, 1.0, 0.0)).norm() < 1e-12);
        assert_eq!(n, Vec3::z());
    }

    #[test]
    fn skeleton_json_is_variant_tagged() {
        let json = r#"{"name":"box","variant":"box","center":[0,0,0],"extents":[100,100,100]}"#;
        let s: Skeleton = serde_json::from_str(json).unwrap();
        assert_eq!(s, Skeleton::cuboid("box", Vec3::zeros(), Vec3::repeat(100.0)));
    }
}
