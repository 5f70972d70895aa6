//! Interpolating curves with a numeric arc-length table.

use serde::{Deserialize, Serialize};

use super::math::Vec3;
use super::GeometryError;

/// Arc-length table resolution per curve segment.
pub const SAMPLES_PER_SEGMENT: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    CatmullRom,
    Straight,
}

impl CurveKind {
    /// Lenient name lookup used when interpreting parameter patches.
    pub fn parse(name: &str) -> Option<CurveKind> {
        let key: String = name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "catmullrom" | "catmull" | "spline" | "smooth" | "curved" | "curve" => {
                Some(CurveKind::CatmullRom)
            }
            "straight" | "line" | "linear" | "straightline" => Some(CurveKind::Straight),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Curve {
    control_points: Vec<Vec3>,
    kind: CurveKind,
    /// Cumulative length at each table sample; strictly increasing unless
    /// consecutive control points coincide.
    arclength: Vec<f64>,
}

impl Curve {
    pub fn new(points: Vec<Vec3>, kind: CurveKind) -> Result<Curve, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::TooFewPoints {
                needed: 2,
                got: points.len(),
            });
        }
        let mut curve = Curve {
            control_points: points,
            kind,
            arclength: Vec::new(),
        };
        curve.arclength = curve.build_table();
        Ok(curve)
    }

    pub fn control_points(&self) -> &[Vec3] {
        &self.control_points
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn segments(&self) -> usize {
        self.control_points.len() - 1
    }

    pub fn arclength_table(&self) -> &[f64] {
        &self.arclength
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().expect("table is never empty")
    }

    fn build_table(&self) -> Vec<f64> {
        let n = self.segments() * SAMPLES_PER_SEGMENT;
        let mut table = Vec::with_capacity(n + 1);
        table.push(0.0);
        let mut prev = self.control_points[0];
        let mut total = 0.0;
        for i in 1..=n {
            let p = self.point_at(i as f64 / SAMPLES_PER_SEGMENT as f64);
            total += (p - prev).norm();
            table.push(total);
            prev = p;
        }
        table
    }

    /// Point at global parameter `u` in `[0, segments]`; integer values hit
    /// the control points.
    pub fn point_at(&self, u: f64) -> Vec3 {
        let last = self.segments();
        let u = u.clamp(0.0, last as f64);
        let seg = (u.floor() as usize).min(last - 1);
        let t = u - seg as f64;
        let p = &self.control_points;
        match self.kind {
            CurveKind::Straight => p[seg] + (p[seg + 1] - p[seg]) * t,
            CurveKind::CatmullRom => {
                let p1 = p[seg];
                let p2 = p[seg + 1];
                // phantom endpoints by reflection
                let p0 = if seg == 0 { p1 * 2.0 - p2 } else { p[seg - 1] };
                let p3 = if seg + 2 > last { p2 * 2.0 - p1 } else { p[seg + 2] };
                centripetal_segment(&p0, &p1, &p2, &p3, t)
            }
        }
    }

    /// Global parameter at arc length `s` (clamped to the curve).
    pub fn param_at_arclength(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let table = &self.arclength;
        // first index with table[idx] >= s
        let idx = table.partition_point(|&x| x < s);
        if idx == 0 {
            return 0.0;
        }
        let (a, b) = (table[idx - 1], table[idx]);
        let frac = if b > a { (s - a) / (b - a) } else { 0.0 };
        ((idx - 1) as f64 + frac) / SAMPLES_PER_SEGMENT as f64
    }

    pub fn point_at_arclength(&self, s: f64) -> Vec3 {
        self.point_at(self.param_at_arclength(s))
    }

    /// `k` points evenly spaced by arc length, endpoints included exactly.
    pub fn resample_by_arclength(&self, k: usize) -> Result<Vec<Vec3>, GeometryError> {
        if k < 2 {
            return Err(GeometryError::TooFewPoints { needed: 2, got: k });
        }
        let len = self.length();
        let mut out = Vec::with_capacity(k);
        out.push(self.control_points[0]);
        for i in 1..k - 1 {
            out.push(self.point_at_arclength(len * i as f64 / (k - 1) as f64));
        }
        out.push(*self.control_points.last().expect("at least two points"));
        Ok(out)
    }
}

pub fn catmull_rom(points: Vec<Vec3>) -> Result<Curve, GeometryError> {
    Curve::new(points, CurveKind::CatmullRom)
}

/// Barry-Goldman evaluation with centripetal (alpha = 1/2) knots.
fn centripetal_segment(p0: &Vec3, p1: &Vec3, p2: &Vec3, p3: &Vec3, t: f64) -> Vec3 {
    fn knot(a: &Vec3, b: &Vec3) -> f64 {
        let d = (b - a).norm().sqrt();
        if d < 1e-12 {
            1.0
        } else {
            d
        }
    }
    let t0 = 0.0;
    let t1 = t0 + knot(p0, p1);
    let t2 = t1 + knot(p1, p2);
    let t3 = t2 + knot(p2, p3);
    let t = t1 + (t2 - t1) * t;

    let lerp = |a: &Vec3, b: &Vec3, ta: f64, tb: f64| a * ((tb - t) / (tb - ta)) + b * ((t - ta) / (tb - ta));
    let a1 = lerp(p0, p1, t0, t1);
    let a2 = lerp(p1, p2, t1, t2);
    let a3 = lerp(p2, p3, t2, t3);
    let b1 = lerp(&a1, &a2, t0, t2);
    let b2 = lerp(&a2, &a3, t1, t3);
    lerp(&b1, &b2, t1, t2)
}
