//! Uniform-grid spatial hash over spheres.
//!
//! Each sphere is registered in every cell its bounding box touches, so a
//! query only has to visit the cells under the query sphere's box.

use std::collections::{BTreeMap, HashMap};

use super::math::Vec3;

/// Slack subtracted from the radius sum; touching spheres do not overlap.
pub const OVERLAP_EPS: f64 = 1e-9;

pub fn spheres_overlap(c1: &Vec3, r1: f64, c2: &Vec3, r2: f64) -> bool {
    (c1 - c2).norm() < r1 + r2 - OVERLAP_EPS
}

type Cell = (i64, i64, i64);

#[derive(Debug, Clone)]
pub struct SpatialHash {
    cell_size: f64,
    cells: HashMap<Cell, Vec<u64>>,
    spheres: BTreeMap<u64, (Vec3, f64)>,
}

impl SpatialHash {
    pub fn new(cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        SpatialHash {
            cell_size,
            cells: HashMap::new(),
            spheres: BTreeMap::new(),
        }
    }

    /// Cell size of twice the largest radius expected.
    pub fn for_max_radius(max_radius: f64) -> Self {
        Self::new(2.0 * max_radius.max(1e-6))
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.spheres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spheres.is_empty()
    }

    fn cell_of(&self, x: f64) -> i64 {
        (x / self.cell_size).floor() as i64
    }

    fn cell_range(&self, center: &Vec3, radius: f64) -> (Cell, Cell) {
        let lo = center - Vec3::repeat(radius);
        let hi = center + Vec3::repeat(radius);
        (
            (self.cell_of(lo.x), self.cell_of(lo.y), self.cell_of(lo.z)),
            (self.cell_of(hi.x), self.cell_of(hi.y), self.cell_of(hi.z)),
        )
    }

    fn for_cells(&self, center: &Vec3, radius: f64, mut f: impl FnMut(Cell)) {
        let (lo, hi) = self.cell_range(center, radius);
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                for z in lo.2..=hi.2 {
                    f((x, y, z));
                }
            }
        }
    }

    pub fn insert(&mut self, id: u64, center: Vec3, radius: f64) {
        debug_assert!(radius > 0.0);
        if self.spheres.contains_key(&id) {
            self.remove(id);
        }
        let mut touched = Vec::new();
        self.for_cells(&center, radius, |c| touched.push(c));
        for c in touched {
            self.cells.entry(c).or_default().push(id);
        }
        self.spheres.insert(id, (center, radius));
    }

    pub fn remove(&mut self, id: u64) -> bool {
        let Some((center, radius)) = self.spheres.remove(&id) else {
            return false;
        };
        let mut touched = Vec::new();
        self.for_cells(&center, radius, |c| touched.push(c));
        for c in touched {
            if let Some(ids) = self.cells.get_mut(&c) {
                ids.retain(|&x| x != id);
                if ids.is_empty() {
                    self.cells.remove(&c);
                }
            }
        }
        true
    }

    /// Candidate ids whose cells intersect the query sphere's box; a superset
    /// of the true overlappers. Sorted, no duplicates.
    pub fn query(&self, center: &Vec3, radius: f64) -> Vec<u64> {
        let mut out = Vec::new();
        self.for_cells(center, radius, |c| {
            if let Some(ids) = self.cells.get(&c) {
                out.extend_from_slice(ids);
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Ids whose spheres strictly overlap the query sphere.
    pub fn overlapping(&self, center: &Vec3, radius: f64) -> Vec<u64> {
        self.query(center, radius)
            .into_iter()
            .filter(|id| {
                let (c, r) = self.spheres[id];
                spheres_overlap(center, radius, &c, r)
            })
            .collect()
    }

    /// Whether any stored sphere, other than those `skip` accepts, overlaps.
    pub fn collides(&self, center: &Vec3, radius: f64, skip: impl Fn(u64) -> bool) -> bool {
        let (lo, hi) = self.cell_range(center, radius);
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                for z in lo.2..=hi.2 {
                    if let Some(ids) = self.cells.get(&(x, y, z)) {
                        for &id in ids {
                            if skip(id) {
                                continue;
                            }
                            let (c, r) = self.spheres[&id];
                            if spheres_overlap(center, radius, &c, r) {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }

    /// All overlapping pairs `(a, b)` with `a < b`, sorted.
    pub fn overlapping_pairs(&self) -> Vec<(u64, u64)> {
        let mut pairs = Vec::new();
        for (&id, (c, r)) in &self.spheres {
            for other in self.overlapping(c, *r) {
                if other > id {
                    pairs.push((id, other));
                }
            }
        }
        pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_is_strict() {
        assert!(spheres_overlap(&Vec3::zeros(), 1.0, &Vec3::new(1.5, 0.0, 0.0), 1.0));
        assert!(!spheres_overlap(&Vec3::zeros(), 1.0, &Vec3::new(2.0, 0.0, 0.0), 1.0));
    }

    #[test]
    fn big_sphere_registered_in_all_cells() {
        let mut h = SpatialHash::new(1.0);
        h.insert(1, Vec3::zeros(), 5.0);
        // a tiny sphere near the big sphere's rim finds it
        assert_eq!(h.overlapping(&Vec3::new(4.9, 0.0, 0.0), 0.2), vec![1]);
        assert!(h.overlapping(&Vec3::new(5.3, 0.0, 0.0), 0.2).is_empty());
    }

    #[test]
    fn remove_unregisters() {
        let mut h = SpatialHash::for_max_radius(1.0);
        h.insert(7, Vec3::new(-3.0, 2.0, 0.5), 1.0);
        assert_eq!(h.query(&Vec3::new(-3.0, 2.0, 0.5), 0.5), vec![7]);
        assert!(h.remove(7));
        assert!(h.query(&Vec3::new(-3.0, 2.0, 0.5), 0.5).is_empty());
        assert!(!h.remove(7));
        assert!(h.is_empty());
    }

    #[test]
    fn collides_honours_skip() {
        let mut h = SpatialHash::new(2.0);
        h.insert(1, Vec3::zeros(), 1.0);
        assert!(h.collides(&Vec3::new(0.5, 0.0, 0.0), 1.0, |_| false));
        assert!(!h.collides(&Vec3::new(0.5, 0.0, 0.0), 1.0, |id| id == 1));
    }
}
