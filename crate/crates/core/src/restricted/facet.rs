use std::f64::consts::TAU;

use crate::geom::{frame, ray_ball, BoundaryPiece, ConvexCell, GeneralizedPolygon, Plane, Vec3};

use super::Sphere;

/// Result of intersecting one cell facet with the ball.
#[derive(Debug, Clone, PartialEq)]
pub enum FacetRestriction {
    /// Every vertex lies inside the ball; the facet is kept whole.
    Untouched,
    /// The facet does not meet the ball (or only touches it).
    Outside,
    /// The part of the facet inside the ball.
    Polygon(GeneralizedPolygon),
}

impl FacetRestriction {
    /// The restricted shape, materializing untouched facets from the cell.
    pub fn into_polygon(self, cell: &ConvexCell, k: usize) -> Option<GeneralizedPolygon> {
        match self {
            FacetRestriction::Untouched => {
                let f = &cell.facets[k];
                let pts: Vec<Vec3> = f.vertices.iter().map(|&v| cell.vertices[v]).collect();
                Some(GeneralizedPolygon::from_vertices(f.plane, &pts))
            }
            FacetRestriction::Outside => None,
            FacetRestriction::Polygon(g) => Some(g),
        }
    }
}

enum Event {
    Piece(BoundaryPiece),
    Entry(Vec3),
    Exit(Vec3),
}

fn angle_in(e1: Vec3, e2: Vec3, center: Vec3, x: Vec3) -> f64 {
    let r = x - center;
    r.dot(e2).atan2(r.dot(e1))
}

fn inside_convex(plane: &Plane, pts: &[Vec3], x: Vec3, tol: f64) -> bool {
    let m = pts.len();
    (0..m).all(|k| {
        let a = pts[k];
        let b = pts[(k + 1) % m];
        (b - a).cross(x - a).dot(plane.normal) >= -tol * (b - a).length()
    })
}

/// Intersects facet `k` of `cell` with the ball of `sphere`.
///
/// Vertices within the cell tolerance of the sphere count as inside, the
/// same tie-break as for clipping.
pub fn restrict_facet(cell: &ConvexCell, k: usize, sphere: &Sphere) -> FacetRestriction {
    let facet = &cell.facets[k];
    let plane = facet.plane;
    let tol = cell.tol;
    let p = sphere.center;
    let r2 = sphere.r2;
    if !(r2 > 0.0) {
        return FacetRestriction::Outside;
    }
    let s = plane.signed_distance(p);
    let rho2 = r2 - s * s;
    if rho2 <= tol * tol {
        return FacetRestriction::Outside;
    }
    let rho = rho2.sqrt();
    let q = p - s * plane.normal;

    let pts: Vec<Vec3> = facet.vertices.iter().map(|&v| cell.vertices[v]).collect();
    let reach = (r2.sqrt() + tol).powi(2);
    let inside: Vec<bool> = pts.iter().map(|v| v.distance_squared(p) <= reach).collect();
    if inside.iter().all(|&b| b) {
        return FacetRestriction::Untouched;
    }

    let m = pts.len();
    let mut events: Vec<Event> = Vec::with_capacity(m + 4);
    let seg = |a: Vec3, b: Vec3, events: &mut Vec<Event>| {
        if a.distance_squared(b) > 0.0 {
            events.push(Event::Piece(BoundaryPiece::Segment { a, b }));
        }
    };
    for i in 0..m {
        let (a, b) = (pts[i], pts[(i + 1) % m]);
        let e = b - a;
        let roots = ray_ball(a, e, p, r2);
        match (inside[i], inside[(i + 1) % m]) {
            (true, true) => seg(a, b, &mut events),
            (true, false) => {
                let t = roots.map_or(0.0, |(_, t2)| t2.clamp(0.0, 1.0));
                let x = a + t * e;
                seg(a, x, &mut events);
                events.push(Event::Exit(x));
            }
            (false, true) => {
                let t = roots.map_or(1.0, |(t1, _)| t1.clamp(0.0, 1.0));
                let x = a + t * e;
                events.push(Event::Entry(x));
                seg(x, b, &mut events);
            }
            (false, false) => {
                if let Some((t1, t2)) = roots {
                    if t1 > 0.0 && t2 < 1.0 && (t2 - t1) * e.length() > tol {
                        let (x1, x2) = (a + t1 * e, a + t2 * e);
                        events.push(Event::Entry(x1));
                        seg(x1, x2, &mut events);
                        events.push(Event::Exit(x2));
                    }
                }
            }
        }
    }

    let Some(first_exit) = events.iter().position(|e| matches!(e, Event::Exit(_))) else {
        // No crossings and some vertex outside: the disk is either inside
        // the polygon or disjoint from it.
        return if inside_convex(&plane, &pts, q, tol) {
            FacetRestriction::Polygon(GeneralizedPolygon::full_circle(plane, q, rho))
        } else {
            FacetRestriction::Outside
        };
    };
    events.rotate_left(first_exit);

    let axis = plane.normal;
    let (e1, e2) = frame(axis);
    let mut boundary = Vec::with_capacity(events.len());
    let mut pending: Option<Vec3> = None;
    for ev in events {
        match ev {
            Event::Piece(pc) => boundary.push(pc),
            Event::Exit(x) => pending = Some(x),
            Event::Entry(y) => {
                let x = pending.take().expect("exit precedes entry");
                let a0 = angle_in(e1, e2, q, x);
                let a1 = angle_in(e1, e2, q, y);
                let sweep = (a1 - a0).rem_euclid(TAU);
                let near_degenerate = !(1e-9..=TAU - 1e-9).contains(&sweep);
                let long = if near_degenerate {
                    // Endpoints nearly coincide: keep the full turn only if
                    // the circle really runs inside the polygon.
                    let opposite = q + (q - x);
                    inside_convex(&plane, &pts, opposite, tol)
                } else {
                    true
                };
                if long {
                    // A zero-length ccw arc encodes a full turn.
                    let end_angle = if sweep < 1e-9 { a0 } else { a0 + sweep };
                    boundary.push(BoundaryPiece::Arc {
                        center: q,
                        radius: rho,
                        axis,
                        start_angle: a0,
                        end_angle,
                        ccw: true,
                    });
                } else if x.distance_squared(y) > 0.0 {
                    boundary.push(BoundaryPiece::Segment { a: x, b: y });
                }
            }
        }
    }
    let g = GeneralizedPolygon { plane, boundary };
    let (area, _) = g.area_centroid_unchecked();
    if area <= tol * tol {
        return FacetRestriction::Outside;
    }
    FacetRestriction::Polygon(g)
}
