//! Brute-force verifiers: Monte-Carlo volumes, areas and centroids, and
//! central finite differences.
//!
//! Samples are drawn in fixed-size batches; batch `b` uses a ChaCha8
//! stream seeded by `(seed, b)`, and batch results are summed in batch
//! order, so estimates are identical for any thread count.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::geom::{frame, Vec3};
use crate::par::Exec;
use crate::restricted::Sphere;

const BATCH: u64 = 1 << 16;

/// Monte-Carlo estimate with its one-sigma standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl McEstimate {
    /// `|value - estimate|` in units of the standard error. An exact
    /// match against a zero-variance estimate gives 0.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = (value - self.estimate).abs();
        if d == 0.0 {
            0.0
        } else if self.std_error == 0.0 {
            f64::INFINITY
        } else {
            d / self.std_error
        }
    }

    pub fn within_sigma(&self, value: f64, k: f64) -> bool {
        self.z_score(value) <= k
    }
}

fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

fn batches(samples: u64) -> Vec<u64> {
    let full = samples / BATCH;
    let rest = samples % BATCH;
    let mut sizes = vec![BATCH; full as usize];
    if rest > 0 {
        sizes.push(rest);
    }
    sizes
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: Vec3, hi: Vec3) -> Vec3 {
    Vec3::new(
        rng.random_range(lo.x..hi.x),
        rng.random_range(lo.y..hi.y),
        rng.random_range(lo.z..hi.z),
    )
}

fn hit_fraction(samples: u64, seed: u64, draw: impl Fn(&mut ChaCha8Rng) -> bool + Sync + Send) -> (u64, u64) {
    let sizes = batches(samples);
    let hits = Exec::Parallel.map(&sizes, |b, &size| {
        let mut rng = batch_rng(seed, b as u64);
        (0..size).filter(|_| draw(&mut rng)).count() as u64
    });
    (hits.iter().sum(), sizes.iter().sum())
}

fn scaled(hits: u64, total: u64, measure: f64) -> McEstimate {
    if total == 0 {
        return McEstimate {
            estimate: 0.0,
            std_error: 0.0,
        };
    }
    let p = hits as f64 / total as f64;
    McEstimate {
        estimate: measure * p,
        std_error: measure * (p * (1.0 - p) / total as f64).sqrt(),
    }
}

/// Hit-or-miss volume of `{x in [lo, hi] : inside(x)}`.
pub fn mc_volume(inside: impl Fn(Vec3) -> bool + Sync + Send, lo: Vec3, hi: Vec3, samples: u64, seed: u64) -> McEstimate {
    let (hits, total) = hit_fraction(samples, seed, |rng| inside(uniform_in(rng, lo, hi)));
    let ext = hi - lo;
    scaled(hits, total, ext.x * ext.y * ext.z)
}

/// Centroid of `{x in [lo, hi] : inside(x)}` with per-axis standard errors
/// from the delta method for a ratio estimator.
pub fn mc_centroid(inside: impl Fn(Vec3) -> bool + Sync + Send, lo: Vec3, hi: Vec3, samples: u64, seed: u64) -> (Vec3, Vec3) {
    let sizes = batches(samples);
    let parts = Exec::Parallel.map(&sizes, |b, &size| {
        let mut rng = batch_rng(seed, b as u64);
        let (mut n, mut s1, mut s2) = (0u64, Vec3::ZERO, Vec3::ZERO);
        for _ in 0..size {
            let x = uniform_in(&mut rng, lo, hi);
            if inside(x) {
                n += 1;
                s1 += x;
                s2 += x * x;
            }
        }
        (n, s1, s2)
    });
    let (mut n, mut s1, mut s2) = (0u64, Vec3::ZERO, Vec3::ZERO);
    for (a, b, c) in parts {
        n += a;
        s1 += b;
        s2 += c;
    }
    if n == 0 {
        return (Vec3::ZERO, Vec3::splat(f64::INFINITY));
    }
    let nf = n as f64;
    let c = s1 / nf;
    let spread = (s2 - 2.0 * c * s1 + nf * c * c).max(Vec3::ZERO);
    (c, Vec3::new(spread.x.sqrt(), spread.y.sqrt(), spread.z.sqrt()) / nf)
}

fn sphere_point(rng: &mut ChaCha8Rng, sphere: &Sphere) -> (Vec3, Vec3) {
    let u: [f64; 3] = UnitSphere.sample(rng);
    let n = Vec3::from_array(u);
    (sphere.center + sphere.radius() * n, n)
}

/// Area of the part of the sphere where `inside` holds.
pub fn mc_sphere_patch_area(sphere: &Sphere, inside: impl Fn(Vec3) -> bool + Sync + Send, samples: u64, seed: u64) -> McEstimate {
    let (hits, total) = hit_fraction(samples, seed, |rng| inside(sphere_point(rng, sphere).0));
    scaled(hits, total, sphere.area())
}

/// Integral of the outward unit normal over the part of the sphere where
/// `inside` holds, with per-axis standard errors.
pub fn mc_sphere_normal_integral(
    sphere: &Sphere,
    inside: impl Fn(Vec3) -> bool + Sync + Send,
    samples: u64,
    seed: u64,
) -> (Vec3, Vec3) {
    let sizes = batches(samples);
    let parts = Exec::Parallel.map(&sizes, |b, &size| {
        let mut rng = batch_rng(seed, b as u64);
        let (mut s1, mut s2) = (Vec3::ZERO, Vec3::ZERO);
        for _ in 0..size {
            let (x, n) = sphere_point(&mut rng, sphere);
            if inside(x) {
                s1 += n;
                s2 += n * n;
            }
        }
        (s1, s2)
    });
    let (s1, s2) = parts.into_iter().fold((Vec3::ZERO, Vec3::ZERO), |(a, b), (c, d)| (a + c, b + d));
    let total = samples.max(1) as f64;
    let mean = s1 / total;
    let var = (s2 / total - mean * mean).max(Vec3::ZERO);
    let area = sphere.area();
    (area * mean, area * Vec3::new(var.x.sqrt(), var.y.sqrt(), var.z.sqrt()) / total.sqrt())
}

/// Area of `{x in plane : inside(x)}` by sampling the square of half-size
/// `half` centered at `center` in the plane with normal `normal`.
pub fn mc_planar_area(
    center: Vec3,
    normal: Vec3,
    half: f64,
    inside: impl Fn(Vec3) -> bool + Sync + Send,
    samples: u64,
    seed: u64,
) -> McEstimate {
    let (e1, e2) = frame(normal.normalize());
    let (hits, total) = hit_fraction(samples, seed, |rng| {
        let u = rng.random_range(-half..half);
        let v = rng.random_range(-half..half);
        inside(center + u * e1 + v * e2)
    });
    scaled(hits, total, 4.0 * half * half)
}

/// Central-difference gradient of `f` with per-component steps `h`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, psi: &[f64], h: &[f64]) -> Vec<f64> {
    let mut x = psi.to_vec();
    (0..psi.len())
        .map(|j| {
            x[j] = psi[j] + h[j];
            let fp = f(&x);
            x[j] = psi[j] - h[j];
            let fm = f(&x);
            x[j] = psi[j];
            (fp - fm) / (2.0 * h[j])
        })
        .collect()
}

/// Central-difference Jacobian `J[i][j] = dF_i / dpsi_j`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, psi: &[f64], h: &[f64]) -> Vec<Vec<f64>> {
    let n = psi.len();
    let mut x = psi.to_vec();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        x[j] = psi[j] + h[j];
        let fp = f(&x);
        x[j] = psi[j] - h[j];
        let fm = f(&x);
        x[j] = psi[j];
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h[j])).collect::<Vec<f64>>());
    }
    let m = cols.first().map_or(0, |c| c.len());
    (0..m).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// Volume of a ball, used by oracle self-checks.
pub fn ball_volume(r: f64) -> f64 {
    4.0 / 3.0 * PI * r * r * r
}
