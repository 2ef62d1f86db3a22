use std::collections::HashMap;

use super::{frame, GeomError, Plane, Vec3, REL_TOL};

/// What lies on the other side of a facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NeighborTag {
    /// Power bisector shared with site `j`.
    Site(usize),
    /// Face `k` of the simulation domain.
    DomainFace(usize),
    /// Artificial bounding plane that never touches the region of interest.
    Bound,
}

/// One planar face of a [`ConvexCell`]. The vertex loop is counter-clockwise
/// when viewed from outside, i.e. positively oriented about `plane.normal`.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub plane: Plane,
    pub vertices: Vec<usize>,
    pub tag: NeighborTag,
}

/// Bounded convex polytope stored as a vertex array plus facet loops.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexCell {
    pub vertices: Vec<Vec3>,
    pub facets: Vec<Facet>,
    /// On-plane tolerance used by [`ConvexCell::clip`].
    pub tol: f64,
}

/// Result of an in-place clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipOutcome {
    Unchanged,
    Clipped,
    Empty,
}

impl ConvexCell {
    /// Axis-aligned box with facets tagged `DomainFace(0..6)` in the order of
    /// [`super::box_halfspaces`].
    pub fn axis_box(min: Vec3, max: Vec3) -> ConvexCell {
        Self::tagged_box(min, max, NeighborTag::DomainFace, REL_TOL * (max - min).length())
    }

    fn tagged_box(min: Vec3, max: Vec3, tag: impl Fn(usize) -> NeighborTag, tol: f64) -> ConvexCell {
        let v = |i: usize| {
            Vec3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        };
        let vertices = (0..8).map(v).collect();
        let planes = super::box_halfspaces(min, max);
        // Loops counter-clockwise seen from outside.
        let loops: [[usize; 4]; 6] = [
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
        ];
        let facets = planes
            .into_iter()
            .zip(loops)
            .enumerate()
            .map(|(k, (plane, lp))| Facet {
                plane,
                vertices: lp.to_vec(),
                tag: tag(k),
            })
            .collect();
        ConvexCell {
            vertices,
            facets,
            tol,
        }
    }

    /// Intersection of the given halfspaces; facet `k` carries
    /// `DomainFace(k)`. Redundant halfspaces produce no facet.
    pub fn from_halfspaces(halfspaces: &[Plane]) -> Result<ConvexCell, GeomError> {
        let reach = halfspaces.iter().fold(1.0f64, |m, h| m.max(h.offset.abs()));
        let big = 1e3 * reach;
        let mut cell = Self::tagged_box(Vec3::splat(-big), Vec3::splat(big), |_| NeighborTag::Bound, 1e-13 * big);
        for (k, h) in halfspaces.iter().enumerate() {
            if cell.clip(*h, NeighborTag::DomainFace(k)) == ClipOutcome::Empty {
                return Err(GeomError::EmptyDomain);
            }
        }
        if cell.facets.iter().any(|f| f.tag == NeighborTag::Bound) {
            return Err(GeomError::UnboundedDomain);
        }
        // Second pass with a tight starting box so the final tolerance is
        // relative to the domain itself.
        let (lo, hi) = cell.bbox();
        let pad = 0.1 * (hi - lo).length();
        let tol = REL_TOL * (hi - lo).length();
        let mut tight = Self::tagged_box(lo - Vec3::splat(pad), hi + Vec3::splat(pad), |_| NeighborTag::Bound, tol);
        for (k, h) in halfspaces.iter().enumerate() {
            if tight.clip(*h, NeighborTag::DomainFace(k)) == ClipOutcome::Empty {
                return Err(GeomError::EmptyDomain);
            }
        }
        if tight.facets.iter().any(|f| f.tag == NeighborTag::Bound) {
            return Err(GeomError::UnboundedDomain);
        }
        Ok(tight)
    }

    /// Returns `self ∩ {plane.normal · x <= plane.offset}`, `None` if empty.
    pub fn clipped(&self, plane: Plane, tag: NeighborTag) -> Option<ConvexCell> {
        let mut out = self.clone();
        match out.clip(plane, tag) {
            ClipOutcome::Empty => None,
            _ => Some(out),
        }
    }

    /// Clip in place. Vertices within `tol` of the plane count as inside.
    pub fn clip(&mut self, plane: Plane, tag: NeighborTag) -> ClipOutcome {
        let tol = self.tol;
        let dist: Vec<f64> = self.vertices.iter().map(|v| plane.signed_distance(*v)).collect();
        let mut any_out = false;
        let mut any_in = false;
        for &d in &dist {
            if d > tol {
                any_out = true;
            } else if d < -tol {
                any_in = true;
            }
        }
        if !any_out {
            return ClipOutcome::Unchanged;
        }
        if !any_in {
            return ClipOutcome::Empty;
        }

        let outside = |i: usize| dist[i] > tol;
        let mut crossings: Vec<(usize, usize, usize)> = Vec::new();
        let mut cut: Vec<usize> = Vec::new();
        let mut facets = Vec::with_capacity(self.facets.len() + 1);

        for facet in &self.facets {
            let m = facet.vertices.len();
            let mut lp: Vec<usize> = Vec::with_capacity(m + 2);
            let push = |lp: &mut Vec<usize>, i: usize| {
                if lp.last() != Some(&i) {
                    lp.push(i);
                }
            };
            for k in 0..m {
                let a = facet.vertices[k];
                let b = facet.vertices[(k + 1) % m];
                let (oa, ob) = (outside(a), outside(b));
                if !oa {
                    push(&mut lp, a);
                }
                if oa != ob {
                    let (vin, vout) = if oa { (b, a) } else { (a, b) };
                    let idx = if dist[vin] >= -tol {
                        vin
                    } else {
                        let key = (vin.min(vout), vin.max(vout));
                        match crossings.iter().find(|c| (c.0, c.1) == key) {
                            Some(c) => c.2,
                            None => {
                                let t = dist[vin] / (dist[vin] - dist[vout]);
                                let p = self.vertices[vin] + t * (self.vertices[vout] - self.vertices[vin]);
                                self.vertices.push(p);
                                let idx = self.vertices.len() - 1;
                                crossings.push((key.0, key.1, idx));
                                idx
                            }
                        }
                    };
                    push(&mut lp, idx);
                    cut.push(idx);
                }
            }
            while lp.len() > 1 && lp.first() == lp.last() {
                lp.pop();
            }
            if lp.len() >= 3 {
                facets.push(Facet {
                    plane: facet.plane,
                    vertices: lp,
                    tag: facet.tag,
                });
            }
        }

        for (i, &d) in dist.iter().enumerate() {
            if d.abs() <= tol {
                cut.push(i);
            }
        }
        cut.sort_unstable();
        cut.dedup();
        if cut.len() >= 3 {
            let (e1, e2) = frame(plane.normal);
            let center = cut.iter().map(|&i| self.vertices[i]).sum::<Vec3>() / cut.len() as f64;
            let mut keyed: Vec<(f64, usize)> = cut
                .iter()
                .map(|&i| {
                    let r = self.vertices[i] - center;
                    (r.dot(e2).atan2(r.dot(e1)), i)
                })
                .collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            facets.push(Facet {
                plane,
                vertices: keyed.into_iter().map(|(_, i)| i).collect(),
                tag,
            });
        }

        self.facets = facets;
        self.compact();
        ClipOutcome::Clipped
    }

    fn compact(&mut self) {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut kept = Vec::with_capacity(self.vertices.len());
        for f in &mut self.facets {
            for v in &mut f.vertices {
                if remap[*v] == usize::MAX {
                    remap[*v] = kept.len();
                    kept.push(self.vertices[*v]);
                }
                *v = remap[*v];
            }
        }
        self.vertices = kept;
    }

    pub fn bbox(&self) -> (Vec3, Vec3) {
        self.vertices.iter().fold(
            (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY)),
            |(lo, hi), v| (lo.min(*v), hi.max(*v)),
        )
    }

    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi - lo).length()
    }

    /// Exact polytope volume by tetrahedral fans from the vertex average.
    pub fn volume(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        let apex = self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64;
        let mut vol = 0.0;
        for f in &self.facets {
            let v0 = self.vertices[f.vertices[0]];
            for k in 1..f.vertices.len() - 1 {
                let a = self.vertices[f.vertices[k]];
                let b = self.vertices[f.vertices[k + 1]];
                vol += (a - v0).cross(b - v0).dot(v0 - apex);
            }
        }
        vol / 6.0
    }

    pub fn facet_area(&self, k: usize) -> f64 {
        self.facet_area_centroid(k).0
    }

    /// Area and centroid of facet `k`.
    pub fn facet_area_centroid(&self, k: usize) -> (f64, Vec3) {
        let f = &self.facets[k];
        let v0 = self.vertices[f.vertices[0]];
        let mut area = 0.0;
        let mut moment = Vec3::ZERO;
        for i in 1..f.vertices.len() - 1 {
            let a = self.vertices[f.vertices[i]];
            let b = self.vertices[f.vertices[i + 1]];
            let t = 0.5 * (a - v0).cross(b - v0).dot(f.plane.normal);
            area += t;
            moment += t * (v0 + a + b) / 3.0;
        }
        if area.abs() > 0.0 {
            (area, moment / area)
        } else {
            (0.0, v0)
        }
    }

    /// Inside test with the cell tolerance.
    pub fn contains(&self, x: Vec3) -> bool {
        self.facets.iter().all(|f| f.plane.signed_distance(x) <= self.tol)
    }

    /// Largest distance from `p` to any vertex.
    pub fn max_distance_from(&self, p: Vec3) -> f64 {
        self.vertices.iter().fold(0.0f64, |m, v| m.max(v.distance_squared(p))).sqrt()
    }

    /// Number of distinct undirected edges.
    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .facets
            .iter()
            .flat_map(|f| {
                let m = f.vertices.len();
                (0..m).map(move |k| {
                    let (a, b) = (f.vertices[k], f.vertices[(k + 1) % m]);
                    (a.min(b), a.max(b))
                })
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    /// Checks the combinatorial and geometric invariants of a valid cell.
    pub fn validate(&self) -> Result<(), String> {
        let tol = 10.0 * self.tol;
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (fi, f) in self.facets.iter().enumerate() {
            let m = f.vertices.len();
            if m < 3 {
                return Err(format!("facet {fi} has {m} vertices"));
            }
            for k in 0..m {
                let e = (f.vertices[k], f.vertices[(k + 1) % m]);
                *directed.entry(e).or_default() += 1;
            }
            let (area, _) = self.facet_area_centroid(fi);
            if area < 0.0 {
                return Err(format!("facet {fi} is clockwise (area {area:e})"));
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 || directed.get(&(b, a)) != Some(&1) {
                return Err(format!("edge ({a},{b}) is not shared by exactly two facets"));
            }
        }
        let (v, e, f) = (self.vertices.len(), self.edge_count(), self.facets.len());
        if v + f != e + 2 {
            return Err(format!("Euler relation fails: V={v} E={e} F={f}"));
        }
        for (i, x) in self.vertices.iter().enumerate() {
            let mut on = 0;
            for f in &self.facets {
                let d = f.plane.signed_distance(*x);
                if d > tol {
                    return Err(format!("vertex {i} outside facet plane by {d:e}"));
                }
                if d.abs() <= tol {
                    on += 1;
                }
            }
            if on < 3 {
                return Err(format!("vertex {i} lies on only {on} planes"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> ConvexCell {
        ConvexCell::axis_box(Vec3::ZERO, Vec3::ONE)
    }

    #[test]
    fn unit_cube_counts() {
        let c = unit_cube();
        assert_eq!((c.vertices.len(), c.edge_count(), c.facets.len()), (8, 12, 6));
        assert!((c.volume() - 1.0).abs() < 1e-15);
        c.validate().unwrap();
    }

    #[test]
    fn cube_from_halfspaces() {
        let c = ConvexCell::from_halfspaces(&super::super::box_halfspaces(Vec3::ZERO, Vec3::ONE)).unwrap();
        assert_eq!((c.vertices.len(), c.edge_count(), c.facets.len()), (8, 12, 6));
        assert!((c.volume() - 1.0).abs() < 1e-12);
        c.validate().unwrap();
    }

    #[test]
    fn tetrahedron_from_halfspaces() {
        let planes = [
            Plane::new(-Vec3::X, 0.0).unwrap(),
            Plane::new(-Vec3::Y, 0.0).unwrap(),
            Plane::new(-Vec3::Z, 0.0).unwrap(),
            Plane::new(Vec3::ONE, 1.0).unwrap(),
        ];
        let c = ConvexCell::from_halfspaces(&planes).unwrap();
        assert_eq!((c.vertices.len(), c.facets.len()), (4, 4));
        assert!((c.volume() - 1.0 / 6.0).abs() < 1e-12);
        c.validate().unwrap();
    }

    #[test]
    fn unbounded_and_empty_domains() {
        let half = [Plane::new(Vec3::X, 1.0).unwrap()];
        assert_eq!(ConvexCell::from_halfspaces(&half), Err(GeomError::UnboundedDomain));
        let empty = [Plane::new(Vec3::X, -1.0).unwrap(), Plane::new(-Vec3::X, -1.0).unwrap()];
        assert_eq!(ConvexCell::from_halfspaces(&empty), Err(GeomError::EmptyDomain));
    }

    #[test]
    fn half_cube_clip() {
        let c = unit_cube().clipped(Plane::new(Vec3::X, 0.5).unwrap(), NeighborTag::Site(3)).unwrap();
        assert!((c.volume() - 0.5).abs() < 1e-15);
        assert_eq!(c.facets.len(), 6);
        assert_eq!(c.facets.iter().filter(|f| f.tag == NeighborTag::Site(3)).count(), 1);
        let (lo, hi) = c.bbox();
        assert_eq!((lo, hi), (Vec3::ZERO, Vec3::new(0.5, 1.0, 1.0)));
        c.validate().unwrap();
    }

    #[test]
    fn clip_outside_plane_is_noop() {
        let mut c = unit_cube();
        assert_eq!(c.clip(Plane::new(Vec3::X, 2.0).unwrap(), NeighborTag::Site(0)), ClipOutcome::Unchanged);
        assert_eq!(c, unit_cube());
    }

    #[test]
    fn clip_everything_is_empty() {
        let mut c = unit_cube();
        assert_eq!(c.clip(Plane::new(Vec3::X, -0.5).unwrap(), NeighborTag::Site(0)), ClipOutcome::Empty);
        // Plane through a face: only on-plane vertices survive, which is flat.
        let mut c = unit_cube();
        assert_eq!(c.clip(Plane::new(Vec3::X, 0.0).unwrap(), NeighborTag::Site(0)), ClipOutcome::Empty);
    }

    #[test]
    fn corner_cut() {
        let c = unit_cube().clipped(Plane::new(Vec3::ONE, 2.5).unwrap(), NeighborTag::Site(1)).unwrap();
        assert_eq!(c.facets.len(), 7);
        assert!((c.volume() - (1.0 - 1.0 / 48.0)).abs() < 1e-14);
        c.validate().unwrap();
    }

    #[test]
    fn clip_through_vertices_keeps_them() {
        // Diagonal plane through four cube vertices.
        let c = unit_cube().clipped(Plane::new(Vec3::new(1.0, 1.0, 0.0), 1.0).unwrap(), NeighborTag::Site(0)).unwrap();
        assert!((c.volume() - 0.5).abs() < 1e-14);
        assert_eq!(c.vertices.len(), 6);
        c.validate().unwrap();
    }
}
