//! 3D primitives: planes, convex cells with explicit facet loops, and planar
//! polygons bounded by segments and circular arcs.

mod cell;
mod polygon;

pub use cell::{ClipOutcome, ConvexCell, Facet, NeighborTag};
pub use polygon::{BoundaryPiece, GeneralizedPolygon};

use thiserror::Error;

/// Double-precision 3-vector used everywhere in the crate.
pub type Vec3 = glam::DVec3;

/// Relative on-plane tolerance, multiplied by the domain diagonal.
pub const REL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("halfspaces do not bound a finite region")]
    UnboundedDomain,
    #[error("halfspaces have an empty intersection")]
    EmptyDomain,
    #[error("polygon boundary is not closed (gap {gap:e} after piece {piece})")]
    OpenLoop { piece: usize, gap: f64 },
    #[error("degenerate plane normal")]
    DegenerateNormal,
}

/// Oriented plane `normal · x = offset`; the inside halfspace is
/// `normal · x <= offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    /// Builds a plane from any non-zero normal, rescaling the offset.
    pub fn new(normal: Vec3, offset: f64) -> Result<Self, GeomError> {
        let len = normal.length();
        if !(len > 0.0) || !len.is_finite() {
            return Err(GeomError::DegenerateNormal);
        }
        Ok(Plane {
            normal: normal / len,
            offset: offset / len,
        })
    }

    pub fn through(point: Vec3, normal: Vec3) -> Result<Self, GeomError> {
        let p = Plane::new(normal, 0.0)?;
        Ok(Plane {
            normal: p.normal,
            offset: p.normal.dot(point),
        })
    }

    /// Positive outside, negative inside.
    #[inline]
    pub fn signed_distance(&self, x: Vec3) -> f64 {
        self.normal.dot(x) - self.offset
    }

    #[inline]
    pub fn project(&self, x: Vec3) -> Vec3 {
        x - self.signed_distance(x) * self.normal
    }

    pub fn flipped(&self) -> Plane {
        Plane {
            normal: -self.normal,
            offset: -self.offset,
        }
    }
}

/// Right-handed orthonormal pair `(e1, e2)` with `e1 × e2 = axis`.
pub fn frame(axis: Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() < 0.6 {
        Vec3::X
    } else if axis.y.abs() < 0.6 {
        Vec3::Y
    } else {
        Vec3::Z
    };
    let e1 = (helper - axis * axis.dot(helper)).normalize();
    let e2 = axis.cross(e1);
    (e1, e2)
}

/// Halfspaces of the axis-aligned box `[min, max]`.
pub fn box_halfspaces(min: Vec3, max: Vec3) -> Vec<Plane> {
    vec![
        Plane { normal: -Vec3::X, offset: -min.x },
        Plane { normal: Vec3::X, offset: max.x },
        Plane { normal: -Vec3::Y, offset: -min.y },
        Plane { normal: Vec3::Y, offset: max.y },
        Plane { normal: -Vec3::Z, offset: -min.z },
        Plane { normal: Vec3::Z, offset: max.z },
    ]
}

/// Ray `origin + t * dir` intersected with a sphere; returns the parameter
/// interval inside the ball, if any.
pub fn ray_ball(origin: Vec3, dir: Vec3, center: Vec3, r2: f64) -> Option<(f64, f64)> {
    let a = dir.length_squared();
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.length_squared() - r2;
    let disc = b * b - a * c;
    if disc < 0.0 || a == 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Numerically stable pair of roots.
    let q = if b >= 0.0 { -(b + sq) } else { -b + sq };
    let (t1, t2) = if q == 0.0 {
        (0.0, 0.0)
    } else {
        let r1 = q / a;
        let r2 = c / q;
        (r1.min(r2), r1.max(r2))
    };
    Some((t1, t2))
}
