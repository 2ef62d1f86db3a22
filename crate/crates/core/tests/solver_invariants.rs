use potflow::geom::{ConvexCell, Vec3};
use potflow::ot::{assemble_gradient, assemble_hessian, cg_solve, init_weights, kantorovich, newton_solve, PotProblem};
use potflow::Exec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Jittered `side³` lattice in the middle of the unit box with volumes
/// around the lattice cell volume.
fn lattice_problem(side: usize, seed: u64) -> PotProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 0.5 / side as f64;
    let mut positions = Vec::new();
    for a in 0..side {
        for b in 0..side {
            for c in 0..side {
                let jitter = Vec3::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                );
                positions.push(Vec3::splat(0.25) + h * (Vec3::new(a as f64, b as f64, c as f64) + Vec3::splat(0.5) + jitter));
            }
        }
    }
    let nu = (0..positions.len()).map(|_| h.powi(3) * rng.random_range(0.7..1.3)).collect();
    let mut p = PotProblem::new(positions, nu, ConvexCell::axis_box(Vec3::ZERO, Vec3::ONE)).unwrap();
    p.exec = Exec::Sequential;
    p
}

fn random_weights(p: &PotProblem, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = 0.6 * (p.len() as f64).powf(-1.0 / 3.0);
    (0..p.len()).map(|_| (r * rng.random_range(0.5..1.5)).powi(2)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hessian_is_a_symmetric_diagonally_dominant_m_matrix(side in 2..5usize, seed in any::<u64>()) {
        let p = lattice_problem(side, seed);
        let psi = random_weights(&p, seed ^ 1);
        let cells = p.evaluate(&psi).unwrap().cells;
        let h = assemble_hessian(&p.positions, &psi, &cells, p.psi_floor());
        prop_assert!(h.asymmetry() <= 1e-14);
        for i in 0..h.dim() {
            let mut off = 0.0;
            for (j, v) in h.row(i) {
                if j != i {
                    prop_assert!(v <= 0.0);
                    off -= v;
                }
            }
            prop_assert!(h.get(i, i) >= off * (1.0 - 1e-14));
        }
    }

    #[test]
    fn kantorovich_is_concave_along_lines(side in 2..4usize, seed in any::<u64>(), t in 1e-4..1e-3f64) {
        let p = lattice_problem(side, seed);
        let psi = random_weights(&p, seed ^ 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let dir: Vec<f64> = psi.iter().map(|w| w * rng.random_range(-1.0..1.0)).collect();
        let at = |s: f64| -> f64 {
            let q: Vec<f64> = psi.iter().zip(&dir).map(|(w, d)| w + s * d).collect();
            let cells = p.evaluate(&q).unwrap().cells;
            kantorovich(&p.positions, &p.nu, &q, &cells)
        };
        let (k0, kp, km) = (at(0.0), at(t), at(-t));
        let scale = k0.abs() + kp.abs() + km.abs();
        prop_assert!(kp + km - 2.0 * k0 <= 1e-12 * scale);
    }

    #[test]
    fn newton_reaches_the_prescribed_volumes(side in 2..5usize, seed in any::<u64>()) {
        let p = lattice_problem(side, seed);
        let (psi0, _) = init_weights(&p, None).unwrap();
        let state = newton_solve(&p, &psi0).unwrap();
        prop_assert!(state.converged());
        prop_assert!(state.worst_rel_error <= p.tolerance);
        let g = assemble_gradient(&p.nu, &state.cells);
        for (gi, nu) in g.iter().zip(&p.nu) {
            prop_assert!(gi.abs() <= p.tolerance * nu);
        }
    }
}

#[test]
fn sequential_and_parallel_solves_agree_bitwise() {
    let mut p = lattice_problem(5, 9);
    let (psi0, _) = init_weights(&p, None).unwrap();
    let seq = newton_solve(&p, &psi0).unwrap();
    p.exec = Exec::Parallel;
    let par = newton_solve(&p, &psi0).unwrap();
    assert_eq!(seq.psi, par.psi);
    assert_eq!(seq.newton_iters, par.newton_iters);
}

#[test]
fn conjugate_gradient_solves_the_newton_system() {
    let p = lattice_problem(4, 5);
    let psi = random_weights(&p, 6);
    let cells = p.evaluate(&psi).unwrap().cells;
    let h = assemble_hessian(&p.positions, &psi, &cells, p.psi_floor());
    let g = assemble_gradient(&p.nu, &cells);
    let res = cg_solve(&h, &g, 1e-12, 1000, Exec::Sequential);
    let r = h.matvec(&res.x, Exec::Sequential);
    let err: f64 = r.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(err <= 1e-10 * norm, "residual {err:e} of {norm:e}");
}
