use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::geom::Vec3;

/// Uniform bucket grid over a bounding box; each point index is stored in
/// exactly one bucket.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    items: Vec<usize>,
    points: Vec<Vec3>,
}

const MAX_DIM: usize = 128;

impl SpatialGrid {
    /// Grid over `[lo, hi]` with bucket size about `(volume / n)^(1/3)`.
    pub fn new(points: &[Vec3], lo: Vec3, hi: Vec3) -> Self {
        let n = points.len().max(1);
        let (lo, hi) = points.iter().fold((lo, hi), |(l, h), p| (l.min(*p), h.max(*p)));
        let ext = (hi - lo).max(Vec3::splat(1e-12));
        let volume = ext.x * ext.y * ext.z;
        let mut cell = (volume / n as f64).cbrt();
        let longest = ext.max_element();
        if longest / cell > MAX_DIM as f64 {
            cell = longest / MAX_DIM as f64;
        }
        let dim = |e: f64| ((e / cell).ceil() as usize).clamp(1, MAX_DIM);
        let dims = [dim(ext.x), dim(ext.y), dim(ext.z)];
        let mut grid = SpatialGrid {
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            items: Vec::new(),
            points: points.to_vec(),
        };
        let nb = dims[0] * dims[1] * dims[2];
        let keys: Vec<usize> = points.iter().map(|p| grid.flat(grid.coords(*p))).collect();
        let mut counts = vec![0usize; nb + 1];
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for b in 0..nb {
            counts[b + 1] += counts[b];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k]] = i;
            fill[k] += 1;
        }
        grid.starts = counts;
        grid.items = items;
        grid
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn bucket_size(&self) -> f64 {
        self.cell
    }

    fn coords(&self, p: Vec3) -> [usize; 3] {
        let r = (p - self.origin) / self.cell;
        let c = |x: f64, d: usize| (x.floor().max(0.0) as usize).min(d - 1);
        [c(r.x, self.dims[0]), c(r.y, self.dims[1]), c(r.z, self.dims[2])]
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn bucket(&self, c: [usize; 3]) -> &[usize] {
        let f = self.flat(c);
        &self.items[self.starts[f]..self.starts[f + 1]]
    }

    /// Iterator over all points by increasing distance to `q`; ties are
    /// broken by index.
    pub fn nearest(&self, q: Vec3) -> NearestIter<'_> {
        NearestIter {
            grid: self,
            q,
            center: self.coords(q),
            ring: 0,
            heap: BinaryHeap::new(),
            exhausted: false,
        }
    }

    /// Exact `k` nearest points, ordered by increasing distance.
    pub fn knn(&self, q: Vec3, k: usize) -> Vec<usize> {
        self.nearest(q).take(k).map(|(i, _)| i).collect()
    }

    /// Points whose bucket intersects the box `[lo, hi]`.
    pub fn in_box(&self, lo: Vec3, hi: Vec3, mut f: impl FnMut(usize)) {
        let a = self.coords(lo);
        let b = self.coords(hi);
        for z in a[2]..=b[2] {
            for y in a[1]..=b[1] {
                for x in a[0]..=b[0] {
                    for &i in self.bucket([x, y, z]) {
                        f(i);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Ring-expansion nearest-neighbor stream; see [`SpatialGrid::nearest`].
pub struct NearestIter<'a> {
    grid: &'a SpatialGrid,
    q: Vec3,
    center: [usize; 3],
    ring: usize,
    heap: BinaryHeap<Reverse<Candidate>>,
    exhausted: bool,
}

impl NearestIter<'_> {
    /// Lower bound on the distance from the query to any bucket not yet
    /// pushed (rings `0..self.ring`).
    fn covered_distance(&self) -> f64 {
        if self.ring == 0 {
            return 0.0;
        }
        let g = self.grid;
        let r = self.ring as isize - 1;
        let mut bound = f64::INFINITY;
        for axis in 0..3 {
            let c = self.center[axis] as isize;
            let q = self.q[axis];
            if c - r > 0 {
                let face = g.origin[axis] + (c - r) as f64 * g.cell;
                bound = bound.min((q - face).max(0.0));
            }
            if c + r + 1 < g.dims[axis] as isize {
                let face = g.origin[axis] + (c + r + 1) as f64 * g.cell;
                bound = bound.min((face - q).max(0.0));
            }
        }
        bound
    }

    fn push_ring(&mut self, r: usize) -> bool {
        let g = self.grid;
        let c = self.center;
        let ri = r as isize;
        let mut touched = false;
        let dims = g.dims;
        let in_range = |v: isize, d: usize| v >= 0 && (v as usize) < d;
        for dz in -ri..=ri {
            let z = c[2] as isize + dz;
            if !in_range(z, dims[2]) {
                continue;
            }
            for dy in -ri..=ri {
                let y = c[1] as isize + dy;
                if !in_range(y, dims[1]) {
                    continue;
                }
                let on_shell = dz.abs() == ri || dy.abs() == ri;
                let step = if on_shell || ri == 0 { 1 } else { (2 * ri) as usize };
                let mut dx = -ri;
                while dx <= ri {
                    let x = c[0] as isize + dx;
                    if in_range(x, dims[0]) {
                        touched = true;
                        for &i in g.bucket([x as usize, y as usize, z as usize]) {
                            self.heap.push(Reverse(Candidate {
                                dist2: g.points[i].distance_squared(self.q),
                                index: i,
                            }));
                        }
                    }
                    dx += step as isize;
                }
            }
        }
        touched
    }
}

impl Iterator for NearestIter<'_> {
    /// `(index, distance)`
    type Item = (usize, f64);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(Reverse(top)) = self.heap.peek() {
                let bound = self.covered_distance();
                if self.exhausted || top.dist2 <= bound * bound {
                    let Reverse(c) = self.heap.pop().unwrap();
                    return Some((c.index, c.dist2.sqrt()));
                }
            } else if self.exhausted {
                return None;
            }
            if self.exhausted {
                continue;
            }
            let touched = self.push_ring(self.ring);
            let max_ring = self.grid.dims.iter().copied().max().unwrap_or(1);
            if !touched && self.ring > max_ring {
                self.exhausted = true;
            } else {
                self.ring += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_site() {
        let g = SpatialGrid::new(&[Vec3::splat(0.5)], Vec3::ZERO, Vec3::ONE);
        assert_eq!(g.knn(Vec3::new(0.1, 0.9, 0.3), 1), vec![0]);
    }

    #[test]
    fn lattice_axis_neighbors() {
        let mut pts = Vec::new();
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    pts.push(Vec3::new(x as f64, y as f64, z as f64) * 0.3 + Vec3::splat(0.2));
                }
            }
        }
        let g = SpatialGrid::new(&pts, Vec3::ZERO, Vec3::ONE);
        let center = Vec3::splat(0.5);
        let nn = g.knn(center, 7);
        assert_eq!(nn[0], 13);
        let mut axis: Vec<usize> = nn[1..].to_vec();
        axis.sort();
        assert_eq!(axis, vec![4, 10, 12, 14, 16, 22]);
    }

    #[test]
    fn matches_exhaustive_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec3> = (0..100).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let g = SpatialGrid::new(&pts, Vec3::ZERO, Vec3::ONE);
        for _ in 0..50 {
            let q = Vec3::new(rng.random::<f64>() * 1.4 - 0.2, rng.random(), rng.random());
            let mut brute: Vec<usize> = (0..pts.len()).collect();
            brute.sort_by(|&a, &b| pts[a].distance_squared(q).total_cmp(&pts[b].distance_squared(q)).then(a.cmp(&b)));
            assert_eq!(g.knn(q, 10), brute[..10].to_vec());
            let all: Vec<usize> = g.nearest(q).map(|(i, _)| i).collect();
            assert_eq!(all, brute);
        }
    }
}
