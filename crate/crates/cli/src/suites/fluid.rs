//! Fluid-step invariants: fixed points, viscosity conservation, Laplacian
//! structure and volume conservation.

use std::time::Instant;

use potflow::fluid::{assemble_viscosity_system, laplacian_weights, FluidState, Phase, SimParams, Simulation};
use potflow::geom::{box_halfspaces, Vec3};
use potflow::ot::{cg_solve, SparseSpd};
use potflow::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Check, SuiteReport};

#[derive(Debug, Clone, Copy)]
pub struct FluidOptions {
    pub steps: usize,
    pub seed: u64,
}

impl Default for FluidOptions {
    fn default() -> Self {
        FluidOptions { steps: 20, seed: 1 }
    }
}

fn water(viscosity: f64, surface_tension: f64) -> Phase {
    Phase {
        id: 0,
        density: 1000.0,
        viscosity,
        surface_tension,
        boundary_affinity: Vec::new(),
    }
}

/// Jittered `side^3` lattice of spacing `h` centered in the unit box, with
/// random velocities of magnitude up to `speed`.
pub fn blob(side: usize, h: f64, speed: f64, seed: u64) -> FluidState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = Vec3::splat(0.5 - 0.5 * side as f64 * h);
    let mut pos = Vec::new();
    let mut vel = Vec::new();
    for a in 0..side {
        for b in 0..side {
            for c in 0..side {
                let j = Vec3::new(
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.05..0.05),
                );
                pos.push(lo + h * (Vec3::new(a as f64, b as f64, c as f64) + Vec3::splat(0.5) + j));
                vel.push(speed * Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
        }
    }
    let n = pos.len();
    FluidState::new(pos, vel, vec![h * h * h; n], vec![0; n])
}

fn unit_box_sim(phase: Phase, gravity: Vec3) -> Simulation {
    let params = SimParams {
        gravity,
        ..SimParams::default()
    };
    Simulation::new(box_halfspaces(Vec3::ZERO, Vec3::ONE), vec![phase], params).expect("valid simulation")
}

/// Largest speed of a lone particle started at rest at its cell centroid.
pub fn fixed_point_speed(steps: usize) -> f64 {
    let sim = unit_box_sim(water(1.0, 1.0), Vec3::ZERO);
    let mut st = FluidState::new(vec![Vec3::splat(0.5)], vec![Vec3::ZERO], vec![1e-4], vec![0]);
    sim.prepare(&mut st).expect("prepare");
    let mut worst = 0.0f64;
    for _ in 0..steps {
        sim.step(&mut st).expect("step");
        worst = worst.max(st.velocities[0].length());
    }
    worst
}

/// Largest per-step viscosity momentum drift with gravity, surface
/// tension and boundary terms off.
pub fn viscosity_drift(steps: usize, seed: u64) -> f64 {
    let sim = unit_box_sim(water(20.0, 0.0), Vec3::ZERO);
    let mut st = blob(8, 0.04, 0.5, seed);
    sim.prepare(&mut st).expect("prepare");
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let r = sim.step(&mut st).expect("step");
        worst = worst.max(r.viscosity_momentum_drift);
    }
    worst
}

/// Solved-velocity shift under a uniform velocity offset, relative to the
/// offset, plus the weight-graph asymmetry and the smallest Cholesky pivot
/// of the viscosity matrix.
pub fn laplacian_structure(seed: u64) -> (f64, f64, f64) {
    let sim = unit_box_sim(water(5.0, 0.0), Vec3::ZERO);
    let mut st = blob(5, 0.05, 0.3, seed);
    sim.prepare(&mut st).expect("prepare");
    let mass = sim.masses(&st);
    let w = laplacian_weights(&st.positions, &st.cells, &sim.planes, |_, _| 0.0);
    let zero = vec![Vec3::ZERO; st.len()];
    let shift = Vec3::new(0.7, -1.3, 2.1);
    let shifted: Vec<Vec3> = st.velocities.iter().map(|v| *v + shift).collect();
    let a = assemble_viscosity_system(&mass, &st.velocities, &zero, 0.005, &w, |_, _| 5.0);
    let b = assemble_viscosity_system(&mass, &shifted, &zero, 0.005, &w, |_, _| 5.0);
    let mut galilean = 0.0f64;
    for k in 0..3 {
        let xa = cg_solve(&a.matrix, &a.rhs[k], 1e-13, 1000, Exec::Sequential).x;
        let xb = cg_solve(&b.matrix, &b.rhs[k], 1e-13, 1000, Exec::Sequential).x;
        for (u, v) in xa.iter().zip(&xb) {
            galilean = galilean.max(((v - u) - shift[k]).abs() / shift.length());
        }
    }
    let mut asym = 0.0f64;
    for (i, row) in w.pairs.iter().enumerate() {
        for &(j, wij) in row {
            let wji = w.pairs[j].iter().find(|e| e.0 == i).map_or(0.0, |e| e.1);
            asym = asym.max((wij - wji).abs());
        }
    }
    (galilean, asym.max(a.matrix.asymmetry()), min_cholesky_pivot(&a.matrix))
}

/// Smallest pivot of a dense Cholesky factorization; negative or zero
/// when the matrix is not positive definite.
pub fn min_cholesky_pivot(m: &SparseSpd) -> f64 {
    let mut a = m.to_dense();
    let n = a.len();
    let mut min = f64::INFINITY;
    for k in 0..n {
        let d = a[k][k] - (0..k).map(|j| a[k][j] * a[k][j]).sum::<f64>();
        min = min.min(d);
        if d <= 0.0 {
            return d;
        }
        let l = d.sqrt();
        a[k][k] = l;
        for i in k + 1..n {
            let s = a[i][k] - (0..k).map(|j| a[i][j] * a[k][j]).sum::<f64>();
            a[i][k] = s / l;
        }
    }
    min
}

/// Worst relative total-volume error and worst per-cell error over a short
/// falling-blob run with walls and gravity.
pub fn volume_conservation(steps: usize, seed: u64) -> (f64, f64, usize) {
    let sim = unit_box_sim(water(0.001, 0.0), Vec3::new(0.0, 0.0, -9.81));
    let mut st = blob(6, 0.04, 0.2, seed);
    sim.prepare(&mut st).expect("prepare");
    let (mut total, mut cell, mut failures) = (0.0f64, 0.0f64, 0);
    for _ in 0..steps {
        match sim.step(&mut st) {
            Ok(r) => {
                total = total.max((r.total_volume - r.prescribed_volume).abs() / r.prescribed_volume);
                cell = cell.max(r.worst_rel_error);
            }
            Err(_) => failures += 1,
        }
    }
    (total, cell, failures)
}

pub fn run(opts: &FluidOptions) -> SuiteReport {
    let t0 = Instant::now();
    let still = fixed_point_speed(opts.steps);
    let drift = viscosity_drift(opts.steps, opts.seed);
    let (galilean, asym, pivot) = laplacian_structure(opts.seed);
    let (total, cell, failures) = volume_conservation(opts.steps, opts.seed);
    SuiteReport {
        suite: "fluid",
        checks: vec![
            Check::at_most("lone_particle_speed", still, 1e-12, "particle at its own centroid"),
            Check::below("viscosity_momentum_drift", drift, 1e-8, "per step, no boundary terms"),
            Check::below("galilean_viscosity", galilean, 1e-8, "relative to the offset"),
            Check::at_most("laplacian_asymmetry", asym, 0.0, ""),
            Check {
                name: "cholesky_min_pivot".into(),
                measured: pivot,
                limit: 0.0,
                passed: pivot > 0.0,
                detail: "must be positive".into(),
            },
            Check::below("total_volume_rel_error", total, 0.01, ""),
            Check::at_most("worst_cell_rel_error", cell, 0.01, ""),
            Check::at_most("nonconverged_steps", failures as f64, 0.0, ""),
        ],
        elapsed: t0.elapsed(),
    }
}
