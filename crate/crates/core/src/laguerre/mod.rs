//! Unrestricted Laguerre (power) diagrams of weighted sites inside a convex
//! polytope domain.

mod grid;

pub use grid::{NearestIter, SpatialGrid};

use crate::geom::{ClipOutcome, ConvexCell, NeighborTag, Plane, Vec3};
use crate::par::Exec;

/// A weighted site with its prescribed volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub p: Vec3,
    pub psi: f64,
    pub nu: f64,
    pub phase: u32,
}

/// How much of each Laguerre cell is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellScope {
    /// The whole cell inside the domain.
    #[default]
    Full,
    /// Only the part that can meet the ball of radius `sqrt(psi_i)`.
    /// Facets far from the ball may be replaced by `NeighborTag::Bound`
    /// planes, and a cell whose ball is empty is reported as `None`.
    Ball,
}

/// Power bisector between site `i` and site `j`, oriented so that the
/// inside halfspace is the part of space owned by `i`. `None` when the
/// sites coincide.
pub fn bisector(pi: Vec3, psi_i: f64, pj: Vec3, psi_j: f64) -> Option<Plane> {
    let delta = pj - pi;
    let l2 = delta.length_squared();
    if l2 == 0.0 {
        return None;
    }
    let l = l2.sqrt();
    let n = delta / l;
    let mid = 0.5 * (pi + pj) + ((psi_i - psi_j) / (2.0 * l2)) * delta;
    Some(Plane { normal: n, offset: n.dot(mid) })
}

/// Signed distance from `p_i` to its power bisector with site `j`, at
/// inter-site distance `l`. Positive when `p_i` is on its own side.
#[inline]
pub fn bisector_height(l: f64, psi_i: f64, psi_j: f64) -> f64 {
    (l * l + psi_i - psi_j) / (2.0 * l)
}

/// Builds the Laguerre cell of site `i`. `psi_max` must bound every weight
/// (it drives the termination test). Returns `None` for an empty cell.
pub fn build_cell(
    i: usize,
    grid: &SpatialGrid,
    psi: &[f64],
    psi_max: f64,
    domain: &ConvexCell,
    scope: CellScope,
) -> Option<ConvexCell> {
    let sites = grid.points();
    let pi = sites[i];
    let psi_i = psi[i];
    let coincident = 1e-12 * domain.diagonal();
    let mut cell = domain.clone();
    let mut ball_radius = f64::INFINITY;
    if scope == CellScope::Ball {
        if !(psi_i > 0.0) {
            return None;
        }
        let r = psi_i.sqrt();
        ball_radius = r;
        let half = Vec3::splat(1.001 * r);
        for plane in crate::geom::box_halfspaces(pi - half, pi + half) {
            if cell.clip(plane, NeighborTag::Bound) == ClipOutcome::Empty {
                return None;
            }
        }
    }
    let mut rmax = cell.max_distance_from(pi).min(ball_radius);
    for (j, l) in grid.nearest(pi) {
        if j == i {
            continue;
        }
        // No point of the cell can be claimed by this or any farther site.
        if l >= rmax && l * l - 2.0 * l * rmax >= psi_max - psi_i {
            break;
        }
        if l <= coincident {
            if psi[j] > psi_i || (psi[j] == psi_i && j < i) {
                return None;
            }
            continue;
        }
        let plane = bisector(pi, psi_i, sites[j], psi[j])?;
        match cell.clip(plane, NeighborTag::Site(j)) {
            ClipOutcome::Empty => return None,
            ClipOutcome::Clipped => rmax = cell.max_distance_from(pi).min(ball_radius),
            ClipOutcome::Unchanged => {}
        }
    }
    Some(cell)
}

/// All cells of the diagram, in site order. Cells are built independently,
/// so the result does not depend on the execution policy.
pub fn build_diagram(
    grid: &SpatialGrid,
    psi: &[f64],
    domain: &ConvexCell,
    scope: CellScope,
    exec: Exec,
) -> Vec<Option<ConvexCell>> {
    let psi_max = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    exec.map_range(grid.len(), |i| build_cell(i, grid, psi, psi_max, domain, scope))
}

/// Grid over the domain's bounding box.
pub fn site_grid(positions: &[Vec3], domain: &ConvexCell) -> SpatialGrid {
    let (lo, hi) = domain.bbox();
    SpatialGrid::new(positions, lo, hi)
}

/// Index of the site minimizing the power distance `|x - p_j|^2 - psi_j`,
/// by exhaustive scan. Ties go to the lowest index.
pub fn power_nearest(x: Vec3, positions: &[Vec3], psi: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, p) in positions.iter().enumerate() {
        let d = x.distance_squared(*p) - psi[j];
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}
