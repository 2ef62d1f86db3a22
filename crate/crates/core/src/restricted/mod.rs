//! Analytic evaluation of a Laguerre cell intersected with its ball:
//! restricted facets, free-surface area, volume and centroid.

mod facet;
mod patch;

pub use facet::{restrict_facet, FacetRestriction};
pub use patch::projected_patch_area;

use std::f64::consts::PI;

use thiserror::Error;

use crate::geom::{ray_ball, ConvexCell, GeneralizedPolygon, GeomError, NeighborTag, Plane, Vec3};
use crate::par::Exec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RestrictError {
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("no interior point found: every probe segment is degenerate")]
    DegenerateCell,
    #[error("spherical projection is numerically unstable")]
    UnstableProjection,
    #[error("evaluation of cell {cell} failed: {source}")]
    EvaluationFailed {
        cell: usize,
        #[source]
        source: Box<RestrictError>,
    },
}

/// Sphere of center `p_i` and squared radius `psi_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub r2: f64,
}

impl Sphere {
    pub fn new(center: Vec3, r2: f64) -> Self {
        Sphere { center, r2 }
    }

    pub fn radius(&self) -> f64 {
        self.r2.max(0.0).sqrt()
    }

    pub fn area(&self) -> f64 {
        4.0 * PI * self.r2.max(0.0)
    }

    pub fn ball_volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.r2.max(0.0).powf(1.5)
    }

    pub fn contains(&self, x: Vec3) -> bool {
        x.distance_squared(self.center) <= self.r2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Empty,
    FullBall,
    Clipped,
}

/// One facet of the cell cut down to the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedFacet {
    pub tag: NeighborTag,
    pub shape: GeneralizedPolygon,
    pub area: f64,
    pub centroid: Vec3,
    /// Signed distance from the site to the facet plane, positive when the
    /// site is on the cell side.
    pub signed_height: f64,
}

/// Everything the solver and the physics need about one restricted cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedCell {
    pub status: CellStatus,
    pub volume: f64,
    pub centroid: Vec3,
    pub free_surface_area: f64,
    pub facets: Vec<RestrictedFacet>,
    pub interior_point: Vec3,
}

impl RestrictedCell {
    pub fn empty(center: Vec3) -> Self {
        RestrictedCell {
            status: CellStatus::Empty,
            volume: 0.0,
            centroid: center,
            free_surface_area: 0.0,
            facets: Vec::new(),
            interior_point: center,
        }
    }

    pub fn full_ball(sphere: &Sphere) -> Self {
        RestrictedCell {
            status: CellStatus::FullBall,
            volume: sphere.ball_volume(),
            centroid: sphere.center,
            free_surface_area: sphere.area(),
            facets: Vec::new(),
            interior_point: sphere.center,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.status == CellStatus::Empty
    }

    /// Area of the restricted facet shared with site `j` (zero if none).
    pub fn facet_area_with(&self, j: usize) -> f64 {
        self.facets
            .iter()
            .find(|f| f.tag == NeighborTag::Site(j))
            .map_or(0.0, |f| f.area)
    }

    /// Restricted facets on domain faces.
    pub fn boundary_facets(&self) -> impl Iterator<Item = &RestrictedFacet> {
        self.facets.iter().filter(|f| matches!(f.tag, NeighborTag::DomainFace(_)))
    }
}

/// Signed distance from the sphere center to a facet plane, positive on
/// the inside.
pub fn signed_height(plane: &Plane, sphere: &Sphere) -> f64 {
    plane.offset - plane.normal.dot(sphere.center)
}

/// All facets of `cell` that meet the ball, cut down to it.
pub fn restricted_facets(cell: &ConvexCell, sphere: &Sphere) -> Vec<RestrictedFacet> {
    let mut out = Vec::new();
    for k in 0..cell.facets.len() {
        let Some(shape) = restrict_facet(cell, k, sphere).into_polygon(cell, k) else {
            continue;
        };
        let (area, centroid) = shape.area_centroid_unchecked();
        let f = &cell.facets[k];
        out.push(RestrictedFacet {
            tag: f.tag,
            signed_height: signed_height(&f.plane, sphere),
            shape,
            area,
            centroid,
        });
    }
    out
}

/// Chord of the ray `origin + t * dir` (`t >= 0`) inside the ball and all
/// facet halfspaces.
fn probe(origin: Vec3, dir: Vec3, facets: &[RestrictedFacet], sphere: &Sphere, skip: usize) -> Option<(f64, f64)> {
    let (t1, t2) = ray_ball(origin, dir, sphere.center, sphere.r2)?;
    let (mut lo, mut hi) = (t1.max(0.0), t2);
    for (k, f) in facets.iter().enumerate() {
        if k == skip {
            continue;
        }
        let pl = &f.shape.plane;
        let denom = pl.normal.dot(dir);
        let s = pl.signed_distance(origin);
        if denom > 0.0 {
            hi = hi.min(-s / denom);
        } else if denom < 0.0 {
            lo = lo.max(-s / denom);
        } else if s > 0.0 {
            return None;
        }
    }
    (hi > lo).then_some((lo, hi))
}

fn strictly_inside(x: Vec3, facets: &[RestrictedFacet], sphere: &Sphere) -> bool {
    x.distance_squared(sphere.center) < sphere.r2 && facets.iter().all(|f| f.shape.plane.signed_distance(x) < 0.0)
}

/// A point strictly inside the restricted cell: the average of the
/// midpoints of inward probe chords cast from every facet centroid.
pub fn interior_point(facets: &[RestrictedFacet], sphere: &Sphere, tol: f64) -> Result<Vec3, RestrictError> {
    let mut sum = Vec3::ZERO;
    let mut count = 0usize;
    let mut longest: Option<(f64, Vec3)> = None;
    for (k, f) in facets.iter().enumerate() {
        let dir = -f.shape.plane.normal;
        let Some((lo, hi)) = probe(f.centroid, dir, facets, sphere, k) else {
            continue;
        };
        if hi - lo < tol {
            continue;
        }
        let mid = f.centroid + 0.5 * (lo + hi) * dir;
        sum += mid;
        count += 1;
        if longest.is_none_or(|(len, _)| hi - lo > len) {
            longest = Some((hi - lo, mid));
        }
    }
    let Some((_, fallback)) = longest else {
        return Err(RestrictError::DegenerateCell);
    };
    let c = sum / count as f64;
    if strictly_inside(c, facets, sphere) {
        Ok(c)
    } else {
        Ok(fallback)
    }
}

/// Spherical area of the cell, `4πψ` minus the projections of all facets.
pub fn free_surface_area(facets: &[RestrictedFacet], sphere: &Sphere, c: Vec3) -> Result<f64, RestrictError> {
    let mut covered = 0.0;
    for f in facets {
        covered += projected_patch_area(&f.shape, sphere, c)?;
    }
    Ok((sphere.area() - covered).clamp(0.0, sphere.area()))
}

/// Free-surface area with up to three retries from nudged interior points.
fn robust_free_surface(facets: &[RestrictedFacet], sphere: &Sphere, c: Vec3) -> Result<f64, RestrictError> {
    let nudges = [
        Vec3::new(1.0, 2.0, 3.0),
        Vec3::new(-3.0, 1.0, 2.0),
        Vec3::new(2.0, -3.0, 1.0),
    ];
    let mut last = match free_surface_area(facets, sphere, c) {
        Ok(a) => return Ok(a),
        Err(e) => e,
    };
    let step = 1e-6 * sphere.radius();
    for d in nudges {
        let c2 = c + step * d.normalize();
        if !strictly_inside(c2, facets, sphere) {
            continue;
        }
        match free_surface_area(facets, sphere, c2) {
            Ok(a) => return Ok(a),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Full analytic evaluation of one cell against its sphere. `cell` is
/// `None` for an empty Laguerre cell.
pub fn evaluate_cell(cell: Option<&ConvexCell>, sphere: &Sphere) -> Result<RestrictedCell, RestrictError> {
    let Some(cell) = cell else {
        return Ok(RestrictedCell::empty(sphere.center));
    };
    if !(sphere.r2 > 0.0) {
        return Ok(RestrictedCell::empty(sphere.center));
    }
    let facets = restricted_facets(cell, sphere);
    if facets.is_empty() {
        return Ok(if cell.contains(sphere.center) {
            RestrictedCell::full_ball(sphere)
        } else {
            RestrictedCell::empty(sphere.center)
        });
    }
    let c = match interior_point(&facets, sphere, cell.tol) {
        Ok(c) => c,
        Err(RestrictError::DegenerateCell) => return Ok(RestrictedCell::empty(sphere.center)),
        Err(e) => return Err(e),
    };
    let free = robust_free_surface(&facets, sphere, c)?;
    let p = sphere.center;
    let r = sphere.radius();

    let shell = r * free / 3.0;
    let mut volume = shell;
    let mut moment = p * shell;
    let mut normal_sum = Vec3::ZERO;
    for f in &facets {
        let pyramid = f.signed_height * f.area / 3.0;
        volume += pyramid;
        moment += pyramid * (p + 0.75 * (f.centroid - p));
        normal_sum += f.shape.plane.normal * f.area;
    }
    // First moment of the spherical sector about p is (R^2/4) times the
    // integral of the sphere normal over the patch.
    moment -= 0.25 * sphere.r2 * normal_sum;
    let volume = volume.max(0.0);
    let centroid = if volume > 0.0 { moment / volume } else { c };
    Ok(RestrictedCell {
        status: CellStatus::Clipped,
        volume,
        centroid,
        free_surface_area: free,
        facets,
        interior_point: c,
    })
}

/// Polar second moment `∫_V |x - p|^2 dx` of a restricted cell about its
/// site, from the divergence of `(x - p)|x - p|^2`.
pub fn polar_second_moment(cell: &RestrictedCell, sphere: &Sphere) -> f64 {
    match cell.status {
        CellStatus::Empty => 0.0,
        CellStatus::FullBall | CellStatus::Clipped => {
            let p = sphere.center;
            let r = sphere.radius();
            let flat: f64 = cell
                .facets
                .iter()
                .map(|f| {
                    let h = f.signed_height;
                    let foot = p + h * f.shape.plane.normal;
                    h * (h * h * f.area + f.shape.polar_moment(foot))
                })
                .sum();
            (flat + r * r * r * cell.free_surface_area) / 5.0
        }
    }
}

/// Evaluates every cell of a diagram, in site order.
pub fn evaluate_all(
    cells: &[Option<ConvexCell>],
    positions: &[Vec3],
    psi: &[f64],
    exec: Exec,
) -> Result<Vec<RestrictedCell>, RestrictError> {
    let results = exec.map(cells, |i, c| {
        evaluate_cell(c.as_ref(), &Sphere::new(positions[i], psi[i])).map_err(|e| RestrictError::EvaluationFailed {
            cell: i,
            source: Box::new(e),
        })
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big_box() -> ConvexCell {
        ConvexCell::axis_box(Vec3::splat(-10.0), Vec3::splat(10.0))
    }

    #[test]
    fn ball_inside_cell() {
        let s = Sphere::new(Vec3::ZERO, 0.01);
        let r = evaluate_cell(Some(&big_box()), &s).unwrap();
        assert_eq!(r.status, CellStatus::FullBall);
        assert!((r.volume - 4.0 / 3.0 * PI * 1e-3).abs() < 1e-18);
        assert!((r.free_surface_area - 4.0 * PI * 1e-2).abs() < 1e-16);
    }

    #[test]
    fn second_moments() {
        let s = Sphere::new(Vec3::new(0.1, 0.0, 0.0), 0.25);
        let full = evaluate_cell(Some(&big_box()), &s).unwrap();
        assert!((polar_second_moment(&full, &s) - 4.0 * PI / 5.0 * 0.5f64.powi(5)).abs() < 1e-15);
        let cell = big_box().clipped(Plane::new(Vec3::Z, 0.0).unwrap(), NeighborTag::Site(1)).unwrap();
        let s = Sphere::new(Vec3::ZERO, 1.0);
        let half = evaluate_cell(Some(&cell), &s).unwrap();
        assert!((polar_second_moment(&half, &s) - 2.0 * PI / 5.0).abs() < 1e-12);
    }

    #[test]
    fn half_ball() {
        let cell = big_box().clipped(Plane::new(Vec3::Z, 0.0).unwrap(), NeighborTag::Site(1)).unwrap();
        let s = Sphere::new(Vec3::ZERO, 1.0);
        let r = evaluate_cell(Some(&cell), &s).unwrap();
        assert_eq!(r.status, CellStatus::Clipped);
        assert_eq!(r.facets.len(), 1);
        assert!((r.facets[0].area - PI).abs() < 1e-12);
        assert!((r.volume - 2.0 * PI / 3.0).abs() < 1e-12, "{}", r.volume);
        assert!((r.free_surface_area - 2.0 * PI).abs() < 1e-12);
        assert!((r.centroid - Vec3::new(0.0, 0.0, -0.375)).length() < 1e-12, "{:?}", r.centroid);
        assert!(r.interior_point.z < 0.0 && r.interior_point.length() < 1.0);
    }

    #[test]
    fn equal_weight_height_is_half_distance() {
        let pl = crate::laguerre::bisector(Vec3::ZERO, 0.3, Vec3::new(0.0, 0.8, 0.0), 0.3).unwrap();
        assert!((signed_height(&pl, &Sphere::new(Vec3::ZERO, 0.3)) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn plane_through_other_site_when_weight_gap_is_distance_squared() {
        let pj = Vec3::new(0.3, 0.4, 0.0);
        let pl = crate::laguerre::bisector(Vec3::ZERO, 0.26, pj, 0.01).unwrap();
        assert!((signed_height(&pl, &Sphere::new(Vec3::ZERO, 0.26)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn separated_ball_is_empty() {
        let cell = big_box().clipped(Plane::new(Vec3::Z, -2.0).unwrap(), NeighborTag::Site(1)).unwrap();
        let r = evaluate_cell(Some(&cell), &Sphere::new(Vec3::ZERO, 1.0)).unwrap();
        assert_eq!(r.status, CellStatus::Empty);
        assert_eq!(r.volume, 0.0);
    }
}
