//! Restricted-cell measures against Monte-Carlo estimates and closed forms.

use std::f64::consts::PI;
use std::time::Instant;

use potflow::geom::{box_halfspaces, ConvexCell, NeighborTag, Plane, Vec3};
use potflow::laguerre::{build_cell, site_grid, CellScope};
use potflow::oracle::{mc_centroid, mc_planar_area, mc_sphere_patch_area, mc_volume, McEstimate};
use potflow::restricted::{evaluate_cell, RestrictedCell, Sphere};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use super::{rel_diff, Check, SuiteReport};

#[derive(Debug, Clone, Copy)]
pub struct GeometryOptions {
    pub configs: usize,
    pub samples: u64,
    pub seed: u64,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        GeometryOptions {
            configs: 200,
            samples: 10_000_000,
            seed: 1,
        }
    }
}

/// Site 0 with its neighbors inside a domain given as halfspaces.
#[derive(Debug, Clone)]
pub struct CellConfig {
    pub planes: Vec<Plane>,
    pub positions: Vec<Vec3>,
    pub psi: Vec<f64>,
}

impl CellConfig {
    pub fn sphere(&self) -> Sphere {
        Sphere::new(self.positions[0], self.psi[0])
    }

    /// Unrestricted Laguerre cell of site 0 and its analytic evaluation.
    pub fn evaluate(&self) -> Option<(ConvexCell, RestrictedCell)> {
        let domain = ConvexCell::from_halfspaces(&self.planes).ok()?;
        let grid = site_grid(&self.positions, &domain);
        let psi_max = self.psi.iter().copied().fold(0.0, f64::max);
        let cell = build_cell(0, &grid, &self.psi, psi_max, &domain, CellScope::Full)?;
        let r = evaluate_cell(Some(&cell), &self.sphere()).ok()?;
        Some((cell, r))
    }

    fn power(&self, j: usize, x: Vec3) -> f64 {
        x.distance_squared(self.positions[j]) - self.psi[j]
    }

    /// Membership in the power cell of site 0 ignoring one constraint.
    fn in_cell_except(&self, x: Vec3, skip: Option<NeighborTag>) -> bool {
        let d0 = self.power(0, x);
        self.planes
            .iter()
            .enumerate()
            .all(|(k, h)| skip == Some(NeighborTag::DomainFace(k)) || h.signed_distance(x) <= 0.0)
            && (1..self.positions.len()).all(|j| skip == Some(NeighborTag::Site(j)) || self.power(j, x) > d0)
    }
}

fn unit_box() -> Vec<Plane> {
    box_halfspaces(Vec3::ZERO, Vec3::ONE)
}

/// Random configuration. Even seeds use small neighbor balls around one
/// large ball, odd seeds comparable balls that clip each other, and every
/// third seed adds a tilted domain wall.
pub fn random_config(seed: u64) -> CellConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut planes = unit_box();
        if seed % 3 == 0 {
            let n = Vec3::from_array(UnitSphere.sample(&mut rng));
            let through = Vec3::splat(0.5) + rng.random_range(0.1..0.3) * n;
            planes.push(Plane::through(through, n).expect("unit normal"));
        }
        let inside = |x: Vec3| planes.iter().all(|h| h.signed_distance(x) < 0.0);
        let n = rng.random_range(5..25);
        let mut positions = Vec::with_capacity(n);
        while positions.len() < n {
            let x = if positions.is_empty() {
                Vec3::new(
                    rng.random_range(0.3..0.7),
                    rng.random_range(0.3..0.7),
                    rng.random_range(0.3..0.7),
                )
            } else {
                Vec3::new(rng.random(), rng.random(), rng.random())
            };
            if inside(x) {
                positions.push(x);
            }
        }
        let psi: Vec<f64> = if seed % 2 == 0 {
            let mut psi: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.02)).collect();
            psi[0] = rng.random_range(0.01..0.12);
            psi
        } else {
            (0..n).map(|_| rng.random_range(0.005..0.05)).collect()
        };
        let c = CellConfig { planes, positions, psi };
        if let Some((_, r)) = c.evaluate() {
            if r.volume > 0.0 {
                return c;
            }
        }
    }
}

/// z-score with the binomial standard error implied by the analytic value,
/// so a region too small to be hit is not an automatic failure.
fn null_z(est: &McEstimate, analytic: f64, measure: f64, samples: u64) -> f64 {
    let p = (analytic / measure).clamp(0.0, 1.0);
    let se = measure * (p * (1.0 - p) / samples as f64).sqrt();
    let d = (est.estimate - analytic).abs();
    if d == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY
    } else {
        d / se
    }
}

/// All z-scores of one configuration: volume, free surface, centroid
/// components (when resolved) and every restricted facet.
pub fn config_z_scores(c: &CellConfig, samples: u64, seed: u64) -> Vec<(String, f64)> {
    let Some((_, r)) = c.evaluate() else {
        return vec![("evaluation".into(), f64::INFINITY)];
    };
    let sphere = c.sphere();
    let rad = sphere.radius();
    let (lo, hi) = (sphere.center - Vec3::splat(rad), sphere.center + Vec3::splat(rad));
    let box_measure = (2.0 * rad).powi(3);
    let inside = |x: Vec3| sphere.contains(x) && c.in_cell_except(x, None);
    let mut z = Vec::new();

    let vol = mc_volume(inside, lo, hi, samples, seed);
    z.push(("volume".into(), null_z(&vol, r.volume, box_measure, samples)));

    let area = mc_sphere_patch_area(&sphere, |x| c.in_cell_except(x, None), samples, seed ^ 0x5eed);
    z.push(("free_surface".into(), null_z(&area, r.free_surface_area, sphere.area(), samples)));

    if r.volume / box_measure * samples as f64 >= 100.0 {
        let (cen, se) = mc_centroid(inside, lo, hi, samples, seed);
        for k in 0..3 {
            let d = (r.centroid[k] - cen[k]).abs();
            z.push((format!("centroid.{k}"), if d == 0.0 { 0.0 } else { d / se[k] }));
        }
    }

    for (m, f) in r.facets.iter().enumerate() {
        let n = f.shape.plane.normal;
        let on_facet = |x: Vec3| sphere.contains(x) && c.in_cell_except(x, Some(f.tag));
        let foot = f.shape.plane.project(sphere.center);
        let est = mc_planar_area(foot, n, rad, on_facet, samples, seed.wrapping_add(m as u64 + 1));
        z.push((format!("facet {:?}", f.tag), null_z(&est, f.area, 4.0 * rad * rad, samples)));
    }
    z
}

/// Worst relative error over the closed-form cases: full ball, ball halved
/// by a bisector through its center, and caps cut by bisectors and by a
/// domain face, each checked for volume, free surface, flat facet and
/// centroid.
pub fn closed_form_error(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let big = box_halfspaces(Vec3::splat(-10.0), Vec3::splat(10.0));
    let mut worst = 0.0f64;
    for case in 0..cases {
        let p = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let rad: f64 = rng.random_range(0.2..1.0);
        let n = Vec3::from_array(UnitSphere.sample(&mut rng));
        let (h, config) = match case % 4 {
            0 => (rad, CellConfig { planes: big.clone(), positions: vec![p], psi: vec![rad * rad] }),
            1 => {
                let l: f64 = rng.random_range(0.1..2.0);
                let cfg = CellConfig {
                    planes: big.clone(),
                    positions: vec![p, p + l * n],
                    psi: vec![rad * rad, rad * rad + l * l],
                };
                (0.0, cfg)
            }
            2 => {
                let h = rng.random_range(-0.9..0.9) * rad;
                let l: f64 = rng.random_range(0.1..2.0);
                let psi_j = l * l + rad * rad - 2.0 * l * h;
                let cfg = CellConfig {
                    planes: big.clone(),
                    positions: vec![p, p + l * n],
                    psi: vec![rad * rad, psi_j],
                };
                (h, cfg)
            }
            _ => {
                let h = rng.random_range(-0.9..0.9) * rad;
                let mut planes = big.clone();
                planes.push(Plane::through(p + h * n, n).expect("unit normal"));
                (h, CellConfig { planes, positions: vec![p], psi: vec![rad * rad] })
            }
        };
        let Some((_, r)) = config.evaluate() else {
            return f64::INFINITY;
        };
        // Retained part is {x : (x - p)·n <= h}.
        let cap = rad - h;
        let (volume, surface, disk, centroid) = if case % 4 == 0 {
            (4.0 / 3.0 * PI * rad.powi(3), 4.0 * PI * rad * rad, 0.0, p)
        } else {
            let removed = PI * cap * cap * (3.0 * rad - cap) / 3.0;
            let volume = 4.0 / 3.0 * PI * rad.powi(3) - removed;
            // First moment of the retained part about p along n.
            let moment = -PI * (rad * rad - h * h).powi(2) / 4.0;
            (volume, 4.0 * PI * rad * rad - 2.0 * PI * rad * cap, PI * (rad * rad - h * h), p + moment / volume * n)
        };
        let flat = r.facets.iter().map(|f| f.area).sum::<f64>();
        let scale = rad.max(centroid.length());
        worst = worst
            .max(rel_diff(r.volume, volume))
            .max(rel_diff(r.free_surface_area, surface))
            .max(rel_diff(flat, disk))
            .max((r.centroid - centroid).length() / scale);
    }
    worst
}

pub fn run(opts: &GeometryOptions) -> SuiteReport {
    let t0 = Instant::now();
    let mut all_z = Vec::new();
    let mut worst_name = String::new();
    let mut worst_z = 0.0f64;
    for k in 0..opts.configs {
        let seed = opts.seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
        let c = random_config(seed);
        for (name, z) in config_z_scores(&c, opts.samples, seed) {
            if z > worst_z {
                worst_z = z;
                worst_name = format!("config {k} {name}");
            }
            all_z.push(z);
        }
    }
    let beyond = all_z.iter().filter(|z| !(**z <= 3.0)).count();
    let frac = beyond as f64 / all_z.len().max(1) as f64;
    let closed = closed_form_error(opts.seed, 400);
    SuiteReport {
        suite: "geometry",
        checks: vec![
            Check::at_most("closed_form_rel_error", closed, 1e-10, "400 full/half/cap cases"),
            Check::at_most(
                "mc_fraction_beyond_3sigma",
                frac,
                0.01,
                format!("{beyond} of {} comparisons, {} configs, {} samples", all_z.len(), opts.configs, opts.samples),
            ),
            Check::below("mc_max_z", worst_z, 5.0, worst_name),
        ],
        elapsed: t0.elapsed(),
    }
}
