//! Gradient and Hessian against central finite differences, and damped
//! Newton convergence on random problems.

use std::time::Instant;

use potflow::geom::{ConvexCell, Vec3};
use potflow::oracle::fd_jacobian;
use potflow::ot::{assemble_gradient, assemble_hessian, init_weights, kantorovich, newton_solve, PotProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{rel_diff, Check, SuiteReport};

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub instances: usize,
    pub max_sites: usize,
    pub newton_problems: usize,
    pub newton_sites: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            instances: 50,
            max_sites: 20,
            newton_problems: 10,
            newton_sites: 300,
            seed: 1,
        }
    }
}

/// Random weights and prescribed volumes for `n` sites in the unit box.
/// Ball radii are comparable to the site spacing, so cells mix free
/// surface with Laguerre and domain facets.
#[derive(Debug, Clone)]
pub struct DerivativeInstance {
    pub problem: PotProblem,
    pub psi: Vec<f64>,
}

pub fn random_instance(seed: u64, max_sites: usize) -> DerivativeInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        if let Some(inst) = try_instance(&mut rng, max_sites) {
            return inst;
        }
    }
}

/// `None` when some cell is empty: its Hessian row is a regularization,
/// not a derivative.
fn try_instance(rng: &mut ChaCha8Rng, max_sites: usize) -> Option<DerivativeInstance> {
    let n = rng.random_range(2..=max_sites.max(2));
    let positions: Vec<Vec3> = (0..n)
        .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
        .collect();
    let r = 0.6 * (n as f64).powf(-1.0 / 3.0);
    let psi: Vec<f64> = (0..n).map(|_| (r * rng.random_range(0.6..1.4)).powi(2)).collect();
    let domain = ConvexCell::axis_box(Vec3::ZERO, Vec3::ONE);
    let placeholder = vec![1e-6; n];
    let probe = PotProblem::new(positions.clone(), placeholder, domain.clone()).expect("valid sites");
    let cells = probe.evaluate(&psi).ok()?.cells;
    if cells.iter().any(|c| c.is_empty()) {
        return None;
    }
    // Prescribed volumes away from the current ones keep every gradient
    // entry well above the finite-difference noise.
    let nu: Vec<f64> = cells
        .iter()
        .map(|c| {
            let s: f64 = rng.random_range(0.3..0.7);
            c.volume * if rng.random_bool(0.5) { 1.0 + s } else { 1.0 - s }
        })
        .collect();
    let mut problem = PotProblem::new(positions, nu, domain).ok()?;
    problem.exec = potflow::Exec::Sequential;
    Some(DerivativeInstance { problem, psi })
}

/// Worst relative mismatch of the analytic gradient and Hessian against
/// central differences, over entries larger than `floor`. Returns
/// `(gradient error, hessian error, entries compared)`.
pub fn derivative_errors(inst: &DerivativeInstance, floor: f64) -> (f64, f64, usize) {
    let p = &inst.problem;
    let cells = p.evaluate(&inst.psi).expect("evaluation").cells;
    let h: Vec<f64> = inst.psi.iter().map(|x| 1e-5 * x).collect();

    // Differencing the per-cell terms and summing afterwards keeps the
    // untouched cells out of the cancellation.
    let terms = |psi: &[f64]| -> Vec<f64> {
        let c = p.evaluate(psi).expect("evaluation").cells;
        (0..c.len())
            .map(|i| kantorovich(&p.positions[i..=i], &p.nu[i..=i], &psi[i..=i], &c[i..=i]))
            .collect()
    };
    let term_jac = fd_jacobian(terms, &inst.psi, &h);
    let g_fd: Vec<f64> = (0..inst.psi.len()).map(|j| term_jac.iter().map(|row| row[j]).sum()).collect();
    let g = assemble_gradient(&p.nu, &cells);
    let mut compared = 0;
    let mut g_err = 0.0f64;
    for (a, b) in g.iter().zip(&g_fd) {
        if a.abs().max(b.abs()) > floor {
            compared += 1;
            g_err = g_err.max(rel_diff(*a, *b));
        }
    }

    let vols = |psi: &[f64]| -> Vec<f64> {
        p.evaluate(psi).expect("evaluation").cells.iter().map(|c| c.volume).collect()
    };
    let jac = fd_jacobian(vols, &inst.psi, &h);
    let hess = assemble_hessian(&p.positions, &inst.psi, &cells, p.psi_floor());
    let mut h_err = 0.0f64;
    for (i, row) in jac.iter().enumerate() {
        for (j, fd) in row.iter().enumerate() {
            let a = hess.get(i, j);
            if a.abs().max(fd.abs()) > floor {
                compared += 1;
                h_err = h_err.max(rel_diff(a, *fd));
            }
        }
    }
    (g_err, h_err, compared)
}

/// Jittered lattice blob with partial-transport volumes; returns the
/// Newton iteration count and final worst error, or `None` when the
/// solve did not converge.
pub fn newton_trial(seed: u64, n: usize) -> Option<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (n as f64).cbrt().ceil() as usize;
    let h = 0.5 / side as f64;
    let mut positions = Vec::with_capacity(n);
    'fill: for a in 0..side {
        for b in 0..side {
            for c in 0..side {
                if positions.len() == n {
                    break 'fill;
                }
                let jitter = Vec3::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                );
                let node = Vec3::new(a as f64, b as f64, c as f64) + Vec3::splat(0.5) + jitter;
                positions.push(Vec3::splat(0.25) + h * node);
            }
        }
    }
    let nu: Vec<f64> = (0..n).map(|_| h.powi(3) * rng.random_range(0.7..1.3)).collect();
    let domain = ConvexCell::axis_box(Vec3::ZERO, Vec3::ONE);
    let problem = PotProblem::new(positions, nu, domain).ok()?;
    let (psi0, _) = init_weights(&problem, None).ok()?;
    let state = newton_solve(&problem, &psi0).ok()?;
    state.converged().then_some((state.newton_iters, state.worst_rel_error))
}

pub fn run(opts: &SolverOptions) -> SuiteReport {
    let t0 = Instant::now();
    let (mut g_worst, mut h_worst, mut compared) = (0.0f64, 0.0f64, 0);
    for k in 0..opts.instances {
        let inst = random_instance(opts.seed.wrapping_mul(7919).wrapping_add(k as u64), opts.max_sites);
        let (g, h, c) = derivative_errors(&inst, 1e-8);
        g_worst = g_worst.max(g);
        h_worst = h_worst.max(h);
        compared += c;
    }
    let mut failures = 0;
    let mut max_iters = 0;
    for k in 0..opts.newton_problems {
        match newton_trial(opts.seed.wrapping_add(1000 + k as u64), opts.newton_sites) {
            Some((iters, _)) => max_iters = max_iters.max(iters),
            None => failures += 1,
        }
    }
    let detail = format!("{} instances, {compared} entries", opts.instances);
    SuiteReport {
        suite: "solver",
        checks: vec![
            Check::at_most("gradient_fd_rel_error", g_worst, 1e-4, detail.clone()),
            Check::at_most("hessian_fd_rel_error", h_worst, 1e-4, detail),
            Check::at_most(
                "newton_failures",
                failures as f64,
                0.0,
                format!("{} problems of {} sites, max {max_iters} iterations", opts.newton_problems, opts.newton_sites),
            ),
        ],
        elapsed: t0.elapsed(),
    }
}
