use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use potflow::geom::{ConvexCell, Vec3};
use potflow::laguerre::{build_diagram, site_grid, CellScope};
use potflow::ot::{init_weights, newton_solve, PotProblem};
use potflow::restricted::evaluate_all;
use potflow::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Jittered block of `nx * ny * nz` particles resting in a corner of the
/// box, like the start of a dam break.
fn dam_problem(nx: usize, ny: usize, nz: usize) -> PotProblem {
    let h = 0.04;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut positions = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let jitter = Vec3::new(
                    rng.random_range(-0.01..0.01),
                    rng.random_range(-0.01..0.01),
                    rng.random_range(-0.01..0.01),
                );
                positions.push(h * (Vec3::new(i as f64, j as f64, k as f64) + Vec3::splat(0.5) + jitter));
            }
        }
    }
    let n = positions.len();
    let hi = Vec3::new(nx as f64 * h / 0.8, ny as f64 * h, 2.0 * nz as f64 * h);
    PotProblem::new(positions, vec![h * h * h; n], ConvexCell::axis_box(Vec3::ZERO, hi)).unwrap()
}

fn stages(c: &mut Criterion) {
    let mut problem = dam_problem(20, 10, 10);
    let (psi0, _) = init_weights(&problem, None).unwrap();
    let psi = newton_solve(&problem, &psi0).unwrap().psi;
    let grid = site_grid(&problem.positions, &problem.domain);

    let mut group = c.benchmark_group("dam_break_2000");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let name = format!("{exec:?}");
        group.bench_with_input(BenchmarkId::new("diagram", &name), &exec, |b, &exec| {
            b.iter(|| build_diagram(&grid, &psi, &problem.domain, CellScope::Ball, exec))
        });
        let cells = build_diagram(&grid, &psi, &problem.domain, CellScope::Ball, exec);
        group.bench_with_input(BenchmarkId::new("evaluation", &name), &exec, |b, &exec| {
            b.iter(|| evaluate_all(&cells, &problem.positions, &psi, exec).unwrap())
        });
        problem.exec = exec;
        group.bench_with_input(BenchmarkId::new("newton_cold", &name), &problem, |b, p| {
            b.iter(|| newton_solve(p, &psi0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
