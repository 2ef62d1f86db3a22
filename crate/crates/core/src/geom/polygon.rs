use std::f64::consts::{PI, TAU};

use super::{frame, GeomError, Plane, Vec3};

/// One piece of a generalized polygon boundary.
///
/// Arc angles are measured in the frame returned by [`frame`] for `axis`;
/// a `ccw` arc sweeps from `start_angle` to `end_angle` positively about
/// `axis`, the other way otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryPiece {
    Segment {
        a: Vec3,
        b: Vec3,
    },
    Arc {
        center: Vec3,
        radius: f64,
        axis: Vec3,
        start_angle: f64,
        end_angle: f64,
        ccw: bool,
    },
    FullCircle {
        center: Vec3,
        radius: f64,
        axis: Vec3,
    },
}

impl BoundaryPiece {
    /// Arc between two points of the circle, positively about `axis`.
    pub fn arc_between(center: Vec3, radius: f64, axis: Vec3, from: Vec3, to: Vec3) -> BoundaryPiece {
        let (e1, e2) = frame(axis);
        let ang = |p: Vec3| {
            let r = p - center;
            r.dot(e2).atan2(r.dot(e1))
        };
        BoundaryPiece::Arc {
            center,
            radius,
            axis,
            start_angle: ang(from),
            end_angle: ang(to),
            ccw: true,
        }
    }

    /// Signed sweep of an arc about its axis, in `(-2π, 2π]`.
    pub fn sweep(&self) -> f64 {
        match *self {
            BoundaryPiece::Arc {
                start_angle,
                end_angle,
                ccw,
                ..
            } => {
                let mut s = (end_angle - start_angle).rem_euclid(TAU);
                if ccw {
                    if s == 0.0 {
                        s = TAU;
                    }
                    s
                } else {
                    let mut r = TAU - s;
                    if r == 0.0 {
                        r = TAU;
                    }
                    -r
                }
            }
            BoundaryPiece::FullCircle { .. } => TAU,
            BoundaryPiece::Segment { .. } => 0.0,
        }
    }

    pub fn start(&self) -> Vec3 {
        match *self {
            BoundaryPiece::Segment { a, .. } => a,
            BoundaryPiece::Arc {
                center,
                radius,
                axis,
                start_angle,
                ..
            } => circle_point(center, radius, axis, start_angle),
            BoundaryPiece::FullCircle { center, radius, axis } => circle_point(center, radius, axis, 0.0),
        }
    }

    pub fn end(&self) -> Vec3 {
        match *self {
            BoundaryPiece::Segment { b, .. } => b,
            BoundaryPiece::Arc {
                center,
                radius,
                axis,
                end_angle,
                ..
            } => circle_point(center, radius, axis, end_angle),
            BoundaryPiece::FullCircle { center, radius, axis } => circle_point(center, radius, axis, 0.0),
        }
    }
}

pub(crate) fn circle_point(center: Vec3, radius: f64, axis: Vec3, angle: f64) -> Vec3 {
    let (e1, e2) = frame(axis);
    center + radius * (angle.cos() * e1 + angle.sin() * e2)
}

/// Planar region bounded by one closed loop of segments and arcs, or by a
/// single full circle. Positively oriented about `plane.normal`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedPolygon {
    pub plane: Plane,
    pub boundary: Vec<BoundaryPiece>,
}

impl GeneralizedPolygon {
    pub fn full_circle(plane: Plane, center: Vec3, radius: f64) -> Self {
        GeneralizedPolygon {
            plane,
            boundary: vec![BoundaryPiece::FullCircle {
                center,
                radius,
                axis: plane.normal,
            }],
        }
    }

    /// Straight-edged polygon from a vertex loop.
    pub fn from_vertices(plane: Plane, pts: &[Vec3]) -> Self {
        let n = pts.len();
        GeneralizedPolygon {
            plane,
            boundary: (0..n)
                .map(|k| BoundaryPiece::Segment {
                    a: pts[k],
                    b: pts[(k + 1) % n],
                })
                .collect(),
        }
    }

    /// Largest point-to-piece-start distance, used to scale tolerances.
    fn extent(&self) -> f64 {
        let o = self.boundary.first().map(|p| p.start()).unwrap_or(Vec3::ZERO);
        self.boundary.iter().fold(0.0f64, |m, p| match *p {
            BoundaryPiece::Segment { a, b } => m.max(a.distance(o)).max(b.distance(o)),
            BoundaryPiece::Arc { center, radius, .. } | BoundaryPiece::FullCircle { center, radius, .. } => {
                m.max(center.distance(o) + radius)
            }
        })
    }

    /// Checks that consecutive pieces share endpoints.
    pub fn check_closed(&self) -> Result<(), GeomError> {
        let n = self.boundary.len();
        if n == 0 {
            return Err(GeomError::OpenLoop { piece: 0, gap: f64::INFINITY });
        }
        if n == 1 && matches!(self.boundary[0], BoundaryPiece::FullCircle { .. }) {
            return Ok(());
        }
        let tol = 1e-9 * self.extent().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let gap = self.boundary[k].end().distance(self.boundary[(k + 1) % n].start());
            if gap > tol {
                return Err(GeomError::OpenLoop { piece: k, gap });
            }
        }
        Ok(())
    }

    /// Signed area and first moment about the origin, by a fan of signed
    /// triangles and circular sectors from a reference point.
    fn area_moment(&self) -> (f64, Vec3) {
        let n = self.plane.normal;
        let o = self.boundary.first().map(|p| p.start()).unwrap_or(Vec3::ZERO);
        let tri = |a: Vec3, b: Vec3, c: Vec3| {
            let s = 0.5 * (b - a).cross(c - a).dot(n);
            (s, s * (a + b + c) / 3.0)
        };
        let mut area = 0.0;
        let mut moment = Vec3::ZERO;
        for piece in &self.boundary {
            match *piece {
                BoundaryPiece::Segment { a, b } => {
                    let (s, m) = tri(o, a, b);
                    area += s;
                    moment += m;
                }
                BoundaryPiece::Arc {
                    center,
                    radius,
                    axis,
                    start_angle,
                    ..
                } => {
                    let q0 = piece.start();
                    let q1 = piece.end();
                    let sweep = piece.sweep();
                    let (s0, m0) = tri(o, q0, center);
                    let (s1, m1) = tri(o, center, q1);
                    let orient = axis.dot(n).signum();
                    let sector = 0.5 * radius * radius * sweep * orient;
                    let half = 0.5 * sweep.abs();
                    let mid = circle_point(Vec3::ZERO, 1.0, axis, start_angle + 0.5 * sweep);
                    let dist = if half > 0.0 { 2.0 * radius * half.sin() / (3.0 * half) } else { 0.0 };
                    area += s0 + s1 + sector;
                    moment += m0 + m1 + sector * (center + dist * mid);
                }
                BoundaryPiece::FullCircle { center, radius, axis } => {
                    let s = PI * radius * radius * axis.dot(n).signum();
                    area += s;
                    moment += s * center;
                }
            }
        }
        (area, moment)
    }

    pub fn area(&self) -> Result<f64, GeomError> {
        self.check_closed()?;
        Ok(self.area_moment().0.abs())
    }

    /// Area-weighted centroid, lying on the polygon's plane.
    pub fn centroid(&self) -> Result<Vec3, GeomError> {
        self.check_closed()?;
        let (a, m) = self.area_moment();
        if a == 0.0 {
            return Ok(self.boundary.first().map(|p| p.start()).unwrap_or(Vec3::ZERO));
        }
        Ok(self.plane.project(m / a))
    }

    /// Polar second moment `∫ |y - o|^2 dA` about a point `o` of the plane,
    /// by Green's theorem on each boundary piece.
    pub fn polar_moment(&self, o: Vec3) -> f64 {
        let n = self.plane.normal;
        let (e1, e2) = frame(n);
        let uv = |p: Vec3| {
            let d = p - o;
            (d.dot(e1), d.dot(e2))
        };
        // ∫_0^1 (a + t d)^3 dt
        let cube = |a: f64, d: f64| a * a * a + 1.5 * a * a * d + a * d * d + 0.25 * d * d * d;
        let mut j = 0.0;
        for piece in &self.boundary {
            match *piece {
                BoundaryPiece::Segment { a, b } => {
                    let (au, av) = uv(a);
                    let (bu, bv) = uv(b);
                    let (du, dv) = (bu - au, bv - av);
                    j += (cube(au, du) * dv - cube(av, dv) * du) / 3.0;
                }
                BoundaryPiece::Arc { center, radius: r, axis, .. } => {
                    let (a, b) = uv(center);
                    let (su, sv) = uv(piece.start());
                    let t0 = (sv - b).atan2(su - a);
                    let t1 = t0 + piece.sweep() * axis.dot(n).signum();
                    let f = |t: f64| {
                        let (s, c) = t.sin_cos();
                        r * (a * a * a * s
                            + 3.0 * a * a * r * (0.5 * t + 0.25 * (2.0 * t).sin())
                            + 3.0 * a * r * r * (s - s * s * s / 3.0)
                            - b * b * b * c
                            + 3.0 * b * b * r * (0.5 * t - 0.25 * (2.0 * t).sin())
                            + 3.0 * b * r * r * (c * c * c / 3.0 - c)
                            + r * r * r * (0.75 * t + (4.0 * t).sin() / 16.0))
                    };
                    j += (f(t1) - f(t0)) / 3.0;
                }
                BoundaryPiece::FullCircle { center, radius: r, axis } => {
                    let d2 = (center - o).length_squared();
                    j += axis.dot(n).signum() * PI * r * r * (0.5 * r * r + d2);
                }
            }
        }
        j.abs()
    }

    /// Area and centroid without the closure check, for hot paths that build
    /// the loop themselves.
    pub(crate) fn area_centroid_unchecked(&self) -> (f64, Vec3) {
        let (a, m) = self.area_moment();
        if a == 0.0 {
            (0.0, self.boundary.first().map(|p| p.start()).unwrap_or(Vec3::ZERO))
        } else {
            (a.abs(), self.plane.project(m / a))
        }
    }
}
