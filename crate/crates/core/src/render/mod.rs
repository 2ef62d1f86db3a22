//! Offline rendering straight from the restricted diagram: ray hits on the
//! surface spheres, cell-to-cell ray walks, and a sphere-traced smooth
//! union of the balls. Also samples the free surface as an oriented point
//! cloud.

mod image;

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use thiserror::Error;

pub use image::Image;

use crate::geom::{ray_ball, ConvexCell, GeomError, NeighborTag, Vec3};
use crate::laguerre::{build_diagram, site_grid, CellScope, SpatialGrid};
use crate::par::Exec;
use crate::restricted::{evaluate_all, RestrictError, RestrictedCell};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("positions and weights differ in length")]
    LengthMismatch,
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Restrict(#[from] RestrictError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed image: {0}")]
    BadImage(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub dir: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Ray {
            origin,
            dir: dir.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + t * self.dir
    }
}

/// Pinhole camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub eye: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians.
    pub fov: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(eye: Vec3, look_at: Vec3, up: Vec3, fov: f64, width: usize, height: usize) -> Result<Self, RenderError> {
        if !(fov > 0.0 && fov < std::f64::consts::PI) {
            return Err(RenderError::InvalidCamera(format!("field of view {fov} outside (0, pi)")));
        }
        if width == 0 || height == 0 {
            return Err(RenderError::InvalidCamera("empty resolution".into()));
        }
        let fwd = look_at - eye;
        if fwd.length_squared() == 0.0 || fwd.cross(up).length_squared() == 0.0 {
            return Err(RenderError::InvalidCamera("degenerate view direction".into()));
        }
        Ok(Camera {
            eye,
            look_at,
            up,
            fov,
            width,
            height,
        })
    }

    fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let f = (self.look_at - self.eye).normalize();
        let r = f.cross(self.up).normalize();
        (f, r, r.cross(f))
    }

    /// Ray through the center of pixel `(px, py)`, row 0 at the top.
    pub fn ray(&self, px: usize, py: usize) -> Ray {
        let (f, r, u) = self.basis();
        let t = (0.5 * self.fov).tan();
        let aspect = self.width as f64 / self.height as f64;
        let x = (2.0 * (px as f64 + 0.5) / self.width as f64 - 1.0) * t * aspect;
        let y = (1.0 - 2.0 * (py as f64 + 0.5) / self.height as f64) * t;
        Ray::new(self.eye, f + x * r + y * u)
    }

    /// Continuous pixel coordinates of a point in front of the camera.
    pub fn project(&self, x: Vec3) -> Option<(f64, f64)> {
        let (f, r, u) = self.basis();
        let d = x - self.eye;
        let z = d.dot(f);
        if z <= 0.0 {
            return None;
        }
        let t = (0.5 * self.fov).tan();
        let aspect = self.width as f64 / self.height as f64;
        let sx = d.dot(r) / z / (t * aspect);
        let sy = d.dot(u) / z / t;
        Some((
            0.5 * (sx + 1.0) * self.width as f64,
            0.5 * (1.0 - sy) * self.height as f64,
        ))
    }
}

/// Uniform grid of ball indices for ray queries.
#[derive(Debug, Clone)]
struct BallGrid {
    lo: Vec3,
    cell: Vec3,
    dims: [usize; 3],
    start: Vec<usize>,
    items: Vec<usize>,
}

impl BallGrid {
    fn new(balls: &[(usize, Vec3, f64)]) -> Option<BallGrid> {
        if balls.is_empty() {
            return None;
        }
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        let mut mean_r = 0.0;
        for &(_, c, r) in balls {
            lo = lo.min(c - Vec3::splat(r));
            hi = hi.max(c + Vec3::splat(r));
            mean_r += r;
        }
        mean_r /= balls.len() as f64;
        let ext = (hi - lo).max(Vec3::splat(1e-12));
        let size = (2.0 * mean_r).max(ext.max_element() / 128.0);
        let dims = [0, 1, 2].map(|k| ((ext[k] / size).ceil() as usize).clamp(1, 128));
        let cell = Vec3::new(ext.x / dims[0] as f64, ext.y / dims[1] as f64, ext.z / dims[2] as f64);
        let index = |p: Vec3, k: usize| (((p[k] - lo[k]) / cell[k]).floor().max(0.0) as usize).min(dims[k] - 1);
        let mut counts = vec![0usize; dims[0] * dims[1] * dims[2] + 1];
        let ranges: Vec<[(usize, usize); 3]> = balls
            .iter()
            .map(|&(_, c, r)| {
                let a = c - Vec3::splat(r);
                let b = c + Vec3::splat(r);
                [0, 1, 2].map(|k| (index(a, k), index(b, k)))
            })
            .collect();
        let flat = |x: usize, y: usize, z: usize| (z * dims[1] + y) * dims[0] + x;
        let visit = |rg: &[(usize, usize); 3], f: &mut dyn FnMut(usize)| {
            for z in rg[2].0..=rg[2].1 {
                for y in rg[1].0..=rg[1].1 {
                    for x in rg[0].0..=rg[0].1 {
                        f(flat(x, y, z));
                    }
                }
            }
        };
        for rg in &ranges {
            visit(rg, &mut |b| counts[b + 1] += 1);
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; *counts.last().unwrap()];
        for (rg, &(id, _, _)) in ranges.iter().zip(balls) {
            visit(rg, &mut |b| {
                items[fill[b]] = id;
                fill[b] += 1;
            });
        }
        Some(BallGrid {
            lo,
            cell,
            dims,
            start: counts,
            items,
        })
    }

    /// Walks the voxels pierced by the ray in order. `visit` gets the
    /// voxel's items and the ray parameter at which the voxel is left; it
    /// returns `true` to stop.
    fn walk(&self, ray: &Ray, mut visit: impl FnMut(&[usize], f64) -> bool) {
        let hi = self.lo + Vec3::new(
            self.cell.x * self.dims[0] as f64,
            self.cell.y * self.dims[1] as f64,
            self.cell.z * self.dims[2] as f64,
        );
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        for k in 0..3 {
            let d = ray.dir[k];
            let o = ray.origin[k];
            if d.abs() < 1e-300 {
                if o < self.lo[k] || o > hi[k] {
                    return;
                }
                continue;
            }
            let (a, b) = ((self.lo[k] - o) / d, (hi[k] - o) / d);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        if t0 > t1 {
            return;
        }
        let p = ray.at(t0);
        let mut idx = [0usize; 3];
        let mut step = [0isize; 3];
        let mut t_next = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for k in 0..3 {
            let i = (((p[k] - self.lo[k]) / self.cell[k]).floor().max(0.0) as usize).min(self.dims[k] - 1);
            idx[k] = i;
            let d = ray.dir[k];
            if d > 0.0 {
                step[k] = 1;
                t_next[k] = t0 + (self.lo[k] + (i + 1) as f64 * self.cell[k] - p[k]) / d;
                t_delta[k] = self.cell[k] / d;
            } else if d < 0.0 {
                step[k] = -1;
                t_next[k] = t0 + (self.lo[k] + i as f64 * self.cell[k] - p[k]) / d;
                t_delta[k] = -self.cell[k] / d;
            }
        }
        loop {
            let b = (idx[2] * self.dims[1] + idx[1]) * self.dims[0] + idx[0];
            let k = (0..3).min_by(|&a, &b| t_next[a].total_cmp(&t_next[b])).unwrap();
            let exit = t_next[k].min(t1);
            if visit(&self.items[self.start[b]..self.start[b + 1]], exit) || t_next[k] > t1 {
                return;
            }
            let ni = idx[k] as isize + step[k];
            if ni < 0 || ni >= self.dims[k] as isize {
                return;
            }
            idx[k] = ni as usize;
            t_next[k] += t_delta[k];
        }
    }
}

/// First intersection of a ray with the free surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub cell: usize,
    pub t: f64,
    pub point: Vec3,
    pub normal: Vec3,
}

/// Piece of a ray walk inside one Laguerre cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSegment {
    pub cell: usize,
    pub t_enter: f64,
    pub t_exit: f64,
    /// Part of the segment inside the cell's ball.
    pub fluid: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraverseMode {
    /// Stop at the first fluid interval.
    SurfaceOnly,
    /// Walk until the ray leaves the domain.
    Volume,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Traversal {
    pub segments: Vec<PathSegment>,
    /// The walk hit the crossing limit and was cut short.
    pub aborted: bool,
}

impl Traversal {
    pub fn fluid_length(&self) -> f64 {
        self.segments.iter().filter_map(|s| s.fluid).map(|(a, b)| b - a).sum()
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.t_exit - s.t_enter).sum()
    }
}

/// Immutable snapshot of one fluid state, ready for ray queries.
#[derive(Debug, Clone)]
pub struct RenderScene {
    pub positions: Vec<Vec3>,
    pub psi: Vec<f64>,
    pub domain: ConvexCell,
    /// Unrestricted Laguerre cells.
    pub cells: Vec<Option<ConvexCell>>,
    pub restricted: Vec<RestrictedCell>,
    grid: SpatialGrid,
    balls: Option<BallGrid>,
    psi_max: f64,
}

impl RenderScene {
    pub fn new(positions: Vec<Vec3>, psi: Vec<f64>, domain: ConvexCell, exec: Exec) -> Result<Self, RenderError> {
        if positions.len() != psi.len() {
            return Err(RenderError::LengthMismatch);
        }
        let grid = site_grid(&positions, &domain);
        let cells = build_diagram(&grid, &psi, &domain, CellScope::Full, exec);
        let restricted = evaluate_all(&cells, &positions, &psi, exec)?;
        let surface: Vec<(usize, Vec3, f64)> = restricted
            .iter()
            .enumerate()
            .filter(|(_, c)| c.free_surface_area > 0.0)
            .map(|(i, _)| (i, positions[i], psi[i].max(0.0).sqrt()))
            .collect();
        let psi_max = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(RenderScene {
            balls: BallGrid::new(&surface),
            positions,
            psi,
            domain,
            cells,
            restricted,
            grid,
            psi_max,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Mean ball radius over cells with free surface.
    pub fn mean_surface_radius(&self) -> f64 {
        let r: Vec<f64> = self
            .restricted
            .iter()
            .zip(&self.psi)
            .filter(|(c, _)| c.free_surface_area > 0.0)
            .map(|(_, &p)| p.sqrt())
            .collect();
        if r.is_empty() {
            0.0
        } else {
            r.iter().sum::<f64>() / r.len() as f64
        }
    }

    /// Site whose Laguerre cell contains `x`; ties go to the lowest index.
    pub fn locate(&self, x: Vec3) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (j, d) in self.grid.nearest(x) {
            if let Some((b, _)) = best {
                if d * d - self.psi_max > b {
                    break;
                }
            }
            let pd = d * d - self.psi[j];
            if best.is_none_or(|(b, bj)| pd < b || (pd == b && j < bj)) {
                best = Some((pd, j));
            }
        }
        best.map(|(_, j)| j)
    }

    /// Parameter interval where the ray is inside the domain.
    pub fn domain_interval(&self, ray: &Ray) -> Option<(f64, f64)> {
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        for f in &self.domain.facets {
            let n = f.plane.normal;
            let dn = n.dot(ray.dir);
            let s = f.plane.signed_distance(ray.origin);
            if dn.abs() < 1e-300 {
                if s > 0.0 {
                    return None;
                }
                continue;
            }
            let t = -s / dn;
            if dn > 0.0 {
                t1 = t1.min(t);
            } else {
                t0 = t0.max(t);
            }
        }
        (t0 < t1).then_some((t0, t1))
    }

    /// Nearest ray hit on a ball surface that lies in the ball's own cell.
    pub fn first_hit(&self, ray: &Ray) -> Option<Hit> {
        let grid = self.balls.as_ref()?;
        let mut best: Option<Hit> = None;
        grid.walk(ray, |items, exit| {
            for &i in items {
                let p = self.positions[i];
                let Some((t1, t2)) = ray_ball(ray.origin, ray.dir, p, self.psi[i]) else {
                    continue;
                };
                for t in [t1, t2] {
                    if t < 0.0 || best.is_some_and(|b| b.t <= t) {
                        continue;
                    }
                    let x = ray.at(t);
                    if self.cells[i].as_ref().is_some_and(|c| c.contains(x)) {
                        best = Some(Hit {
                            cell: i,
                            t,
                            point: x,
                            normal: (x - p).normalize(),
                        });
                        break;
                    }
                }
            }
            best.is_some_and(|b| b.t <= exit)
        });
        best
    }

    /// Walks the ray from its domain entry through the unrestricted
    /// diagram, recording the fluid part of every cell crossed.
    pub fn traverse(&self, ray: &Ray, mode: TraverseMode) -> Traversal {
        let mut out = Traversal::default();
        let Some((t_in, t_out)) = self.domain_interval(ray) else {
            return out;
        };
        let nudge = (1e-9 * self.domain.diagonal()).min(0.5 * (t_out - t_in));
        let Some(mut cur) = self.locate(ray.at(t_in + nudge)) else {
            return out;
        };
        let mut t = t_in;
        let limit = 8 * self.len().max(1);
        for _ in 0..limit {
            let Some(cell) = self.cells[cur].as_ref() else {
                out.aborted = true;
                return out;
            };
            let mut t_exit = f64::INFINITY;
            let mut next = None;
            for f in &cell.facets {
                let dn = f.plane.normal.dot(ray.dir);
                if dn <= 0.0 {
                    continue;
                }
                let tf = -f.plane.signed_distance(ray.origin) / dn;
                if tf < t_exit {
                    t_exit = tf;
                    next = Some(f.tag);
                }
            }
            let t_exit = t_exit.max(t).min(t_out);
            let fluid = ray_ball(ray.origin, ray.dir, self.positions[cur], self.psi[cur])
                .map(|(a, b)| (a.max(t), b.min(t_exit)))
                .filter(|(a, b)| a < b);
            out.segments.push(PathSegment {
                cell: cur,
                t_enter: t,
                t_exit,
                fluid,
            });
            if mode == TraverseMode::SurfaceOnly && fluid.is_some() {
                return out;
            }
            t = t_exit;
            match next {
                Some(NeighborTag::Site(j)) if t < t_out => cur = j,
                _ => return out,
            }
        }
        out.aborted = true;
        out
    }

    /// Sites of the Laguerre neighborhood of the cell containing `x`,
    /// including that cell's own site.
    pub fn neighborhood(&self, x: Vec3) -> Vec<usize> {
        let Some(i) = self.locate(x) else {
            return Vec::new();
        };
        let mut out = vec![i];
        if let Some(c) = &self.cells[i] {
            out.extend(c.facets.iter().filter_map(|f| match f.tag {
                NeighborTag::Site(j) => Some(j),
                _ => None,
            }));
        }
        out
    }
}

/// Cubic polynomial smooth minimum with blend radius `k`.
pub fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return a.min(b);
    }
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * h * k / 6.0
}

/// Smooth union of the sphere distances `|x - p_j| - sqrt(psi_j)` over
/// `neighborhood`.
pub fn smooth_sdf(x: Vec3, positions: &[Vec3], psi: &[f64], neighborhood: &[usize], k: f64) -> f64 {
    neighborhood
        .iter()
        .map(|&j| x.distance(positions[j]) - psi[j].max(0.0).sqrt())
        .reduce(|a, b| smooth_min(a, b, k))
        .unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderMode {
    /// Shaded ball patches.
    Raw,
    /// Shaded smooth union, refined by sphere tracing.
    Smooth,
    /// Gray level proportional to the in-fluid path length.
    Depth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub mode: RenderMode,
    /// Smooth-union blend radius; defaults to half the mean surface radius.
    pub blend: Option<f64>,
    pub background: [u8; 3],
    pub light: Vec3,
    pub exec: Exec,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            mode: RenderMode::Raw,
            blend: None,
            background: [24, 24, 32],
            light: Vec3::new(-0.4, -0.5, 1.0),
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RenderStats {
    pub hits: usize,
    pub aborted_rays: usize,
    /// Smooth-mode pixels where sphere tracing fell back to the ball hit.
    pub trace_fallbacks: usize,
}

const ABORT_COLOR: [u8; 3] = [255, 0, 255];
const MAX_TRACE_STEPS: usize = 64;

enum Pixel {
    Color([u8; 3], bool, bool),
    Depth(f64),
    Aborted,
    Background,
}

fn to_u8(c: Vec3) -> [u8; 3] {
    let c = c.clamp(Vec3::ZERO, Vec3::ONE) * 255.0;
    [c.x.round() as u8, c.y.round() as u8, c.z.round() as u8]
}

fn shade(normal: Vec3, view: Vec3, light: Vec3, fresnel: bool) -> [u8; 3] {
    let base = Vec3::new(0.2, 0.45, 0.9);
    let lambert = normal.dot(light).max(0.0);
    let mut c = base * (0.15 + 0.85 * lambert);
    if fresnel {
        let cos = (-view).dot(normal).clamp(0.0, 1.0);
        let f = 0.02 + 0.98 * (1.0 - cos).powi(5);
        c = c * (1.0 - f) + Vec3::new(0.85, 0.9, 1.0) * f;
    }
    to_u8(c)
}

fn sphere_trace(scene: &RenderScene, ray: &Ray, hit: &Hit, k: f64, eps: f64) -> Option<(Vec3, Vec3)> {
    let sdf = |x: Vec3| smooth_sdf(x, &scene.positions, &scene.psi, &scene.neighborhood(x), k);
    let mut t = (hit.t - k).max(0.0);
    for _ in 0..MAX_TRACE_STEPS {
        let x = ray.at(t);
        let d = sdf(x);
        if d < eps {
            let h = 10.0 * eps;
            let g = Vec3::new(
                sdf(x + h * Vec3::X) - sdf(x - h * Vec3::X),
                sdf(x + h * Vec3::Y) - sdf(x - h * Vec3::Y),
                sdf(x + h * Vec3::Z) - sdf(x - h * Vec3::Z),
            );
            let n = if g.length_squared() > 0.0 { g.normalize() } else { hit.normal };
            return Some((x, n));
        }
        t += d;
        if t > hit.t + k {
            break;
        }
    }
    None
}

/// Renders the scene. Rows are independent, so the image does not depend
/// on the execution policy.
pub fn render(scene: &RenderScene, camera: &Camera, opts: &RenderOptions) -> (Image, RenderStats) {
    let light = opts.light.normalize();
    let k = opts.blend.unwrap_or(0.5 * scene.mean_surface_radius());
    let eps = 1e-4 * scene.domain.diagonal();
    let rows = opts.exec.map_range(camera.height, |py| {
        (0..camera.width)
            .map(|px| {
                let ray = camera.ray(px, py);
                match opts.mode {
                    RenderMode::Depth => {
                        let tr = scene.traverse(&ray, TraverseMode::Volume);
                        if tr.aborted {
                            Pixel::Aborted
                        } else {
                            Pixel::Depth(tr.fluid_length())
                        }
                    }
                    RenderMode::Raw => match scene.first_hit(&ray) {
                        Some(h) => Pixel::Color(shade(h.normal, ray.dir, light, false), true, false),
                        None => Pixel::Background,
                    },
                    RenderMode::Smooth => match scene.first_hit(&ray) {
                        Some(h) => match sphere_trace(scene, &ray, &h, k, eps) {
                            Some((_, n)) => Pixel::Color(shade(n, ray.dir, light, true), true, false),
                            None => Pixel::Color(shade(h.normal, ray.dir, light, true), true, true),
                        },
                        None => Pixel::Background,
                    },
                }
            })
            .collect::<Vec<Pixel>>()
    });
    let max_depth = rows
        .iter()
        .flatten()
        .filter_map(|p| match p {
            Pixel::Depth(d) => Some(*d),
            _ => None,
        })
        .fold(0.0f64, f64::max);
    let mut img = Image::new(camera.width, camera.height, opts.background);
    let mut stats = RenderStats::default();
    for (py, row) in rows.iter().enumerate() {
        for (px, p) in row.iter().enumerate() {
            match p {
                Pixel::Color(c, hit, fallback) => {
                    img.set(px, py, *c);
                    stats.hits += *hit as usize;
                    stats.trace_fallbacks += *fallback as usize;
                }
                Pixel::Depth(d) if *d > 0.0 => {
                    stats.hits += 1;
                    let g = (255.0 * d / max_depth).round() as u8;
                    img.set(px, py, [g, g, g]);
                }
                Pixel::Aborted => {
                    stats.aborted_rays += 1;
                    img.set(px, py, ABORT_COLOR);
                }
                _ => {}
            }
        }
    }
    (img, stats)
}

/// Oriented point on the free surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub normal: Vec3,
    pub cell: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurfaceSampling {
    pub samples: Vec<SurfaceSample>,
    /// Cells left out because their patch covers too little of the sphere
    /// for rejection sampling.
    pub skipped_cells: Vec<usize>,
}

/// Draws `count` points uniformly by area over the free surface. Each
/// sample picks a cell with probability proportional to `|K_i|`, then
/// rejection-samples its sphere against the Laguerre cell.
pub fn sample_surface(scene: &RenderScene, count: usize, seed: u64) -> SurfaceSampling {
    let mut skipped = Vec::new();
    let mut cells = Vec::new();
    let mut cdf = Vec::new();
    let mut total = 0.0;
    for (i, c) in scene.restricted.iter().enumerate() {
        let k = c.free_surface_area;
        if k <= 0.0 {
            continue;
        }
        let full = 4.0 * std::f64::consts::PI * scene.psi[i];
        if k / full < 1e-6 || scene.cells[i].is_none() {
            skipped.push(i);
            continue;
        }
        total += k;
        cells.push(i);
        cdf.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    if cells.is_empty() {
        return SurfaceSampling {
            samples,
            skipped_cells: skipped,
        };
    }
    while samples.len() < count {
        let u = rng.random_range(0.0..total);
        let slot = cdf.partition_point(|&c| c <= u).min(cells.len() - 1);
        let i = cells[slot];
        let cell = scene.cells[i].as_ref().expect("skipped above");
        let r = scene.psi[i].sqrt();
        loop {
            let n = Vec3::from_array(UnitSphere.sample(&mut rng));
            let x = scene.positions[i] + r * n;
            if cell.contains(x) {
                samples.push(SurfaceSample {
                    point: x,
                    normal: n,
                    cell: i,
                });
                break;
            }
        }
    }
    SurfaceSampling {
        samples,
        skipped_cells: skipped,
    }
}

/// Plain-text point cloud, one `x y z nx ny nz` per line.
pub fn write_point_cloud(samples: &[SurfaceSample], mut w: impl Write) -> io::Result<()> {
    for s in samples {
        writeln!(
            w,
            "{} {} {} {} {} {}",
            s.point.x, s.point.y, s.point.z, s.normal.x, s.normal.y, s.normal.z
        )?;
    }
    Ok(())
}
