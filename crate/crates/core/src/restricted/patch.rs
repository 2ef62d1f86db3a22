use std::f64::consts::{PI, TAU};

use crate::geom::{ray_ball, BoundaryPiece, GeneralizedPolygon, Vec3};

use super::{RestrictError, Sphere};

/// A circular arc lying on the sphere, running counter-clockwise about
/// `axis` from `start` to `end`.
#[derive(Debug, Clone, Copy)]
struct SphereArc {
    start: Vec3,
    end: Vec3,
    axis: Vec3,
    center: Vec3,
    sweep: f64,
    /// Signed offset of the circle's plane from the sphere center along
    /// `axis`.
    height: f64,
}

impl SphereArc {
    fn tangent(&self, x: Vec3) -> Vec3 {
        self.axis.cross(x - self.center).normalize_or_zero()
    }
}

fn project(c: Vec3, x: Vec3, sphere: &Sphere) -> Vec3 {
    let d = x - c;
    match ray_ball(c, d, sphere.center, sphere.r2) {
        Some((_, t)) if t > 0.0 => c + t * d,
        _ => x,
    }
}

/// Arc of the sphere swept by rays from `c` through the segment `a -> b`.
fn project_segment(a: Vec3, b: Vec3, c: Vec3, sphere: &Sphere) -> Result<SphereArc, RestrictError> {
    let p = sphere.center;
    let cross = (a - c).cross(b - c);
    let scale = (a - c).length() * (b - c).length();
    if !(cross.length() > 1e-14 * scale) {
        return Err(RestrictError::UnstableProjection);
    }
    let m = cross.normalize();
    let h = m.dot(c - p);
    let q = p + h * m;
    let (sa, sb) = (project(c, a, sphere), project(c, b, sphere));
    let chord = sb - sa;
    let half = 0.5 * chord.length();
    let side = chord.cross(q - sa).dot(m);
    let dq = if half > 0.0 { side.abs() / (2.0 * half) } else { 0.0 };
    let minor = 2.0 * half.atan2(dq);
    let sweep = if side >= 0.0 { minor } else { TAU - minor };
    Ok(SphereArc {
        start: sa,
        end: sb,
        axis: m,
        center: q,
        sweep,
        height: h,
    })
}

/// Area of the radial projection of the restricted facet `b` from the
/// interior point `c` onto the sphere.
///
/// The projected boundary is a loop of small-circle arcs, so the area
/// follows from Gauss-Bonnet: `R^2 (2π - Σ ∫k_g ds - Σ θ)`.
pub fn projected_patch_area(b: &GeneralizedPolygon, sphere: &Sphere, c: Vec3) -> Result<f64, RestrictError> {
    let p = sphere.center;
    let r = sphere.radius();
    let min_len = 1e-12 * r;
    let mut arcs: Vec<SphereArc> = Vec::with_capacity(b.boundary.len());
    for piece in &b.boundary {
        match *piece {
            BoundaryPiece::Segment { a, b: e } => {
                if a.distance(e) < min_len {
                    continue;
                }
                arcs.push(project_segment(a, e, c, sphere)?);
            }
            BoundaryPiece::Arc { center, axis, ccw, .. } => {
                let m = if ccw { axis } else { -axis };
                arcs.push(SphereArc {
                    start: piece.start(),
                    end: piece.end(),
                    axis: m,
                    center,
                    sweep: piece.sweep().abs(),
                    height: m.dot(center - p),
                });
            }
            BoundaryPiece::FullCircle { center, axis, .. } => {
                let h = axis.dot(center - p);
                return Ok(2.0 * PI * r * (r - h));
            }
        }
    }
    if arcs.is_empty() {
        return Ok(0.0);
    }
    let curvature: f64 = arcs.iter().map(|a| a.sweep * a.height / r).sum();
    let mut turning = 0.0;
    let n = arcs.len();
    if n > 1 {
        for k in 0..n {
            let (ain, aout) = (&arcs[k], &arcs[(k + 1) % n]);
            let v = ain.end;
            let t_in = ain.tangent(v);
            let t_out = aout.tangent(aout.start);
            let normal = (v - p) / r;
            let mut theta = t_in.cross(t_out).dot(normal).atan2(t_in.dot(t_out));
            // Corners of a projected convex region always turn left.
            if theta < -PI + 1e-6 {
                theta += TAU;
            }
            turning += theta;
        }
    }
    let area = sphere.r2 * (TAU - curvature - turning);
    let full = 4.0 * PI * sphere.r2;
    let slack = 1e-9 * full;
    if !(area >= -slack && area <= full + slack) {
        return Err(RestrictError::UnstableProjection);
    }
    Ok(area.clamp(0.0, full))
}
