//! Semi-discrete partial optimal transport: find weights whose restricted
//! Laguerre cells carry prescribed volumes, by damped Newton iterations.

mod sparse;

pub use sparse::{cg_solve, CgResult, SparseSpd};

use std::f64::consts::PI;
use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::geom::{ConvexCell, NeighborTag, Vec3};
use crate::laguerre::{build_diagram, site_grid, CellScope, SpatialGrid};
use crate::par::Exec;
use crate::restricted::{evaluate_all, polar_second_moment, RestrictError, RestrictedCell, Sphere};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("could not find non-empty initial cells (scale factor exceeded {max_kappa})")]
    InitFailure { max_kappa: f64 },
    #[error(transparent)]
    Evaluation(#[from] RestrictError),
}

/// Sites, their prescribed volumes and the domain.
#[derive(Debug, Clone)]
pub struct PotProblem {
    pub positions: Vec<Vec3>,
    pub nu: Vec<f64>,
    pub domain: ConvexCell,
    /// Target worst relative volume error.
    pub tolerance: f64,
    pub max_newton: usize,
    pub scope: CellScope,
    pub exec: Exec,
    grid: SpatialGrid,
}

impl PotProblem {
    pub fn new(positions: Vec<Vec3>, nu: Vec<f64>, domain: ConvexCell) -> Result<Self, OtError> {
        if positions.len() != nu.len() {
            return Err(OtError::InvalidProblem(format!(
                "{} positions but {} volumes",
                positions.len(),
                nu.len()
            )));
        }
        if positions.is_empty() {
            return Err(OtError::InvalidProblem("no sites".into()));
        }
        if let Some(i) = nu.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(OtError::InvalidProblem(format!("volume of site {i} is {}", nu[i])));
        }
        if let Some(i) = positions.iter().position(|p| !p.is_finite()) {
            return Err(OtError::InvalidProblem(format!("site {i} has a non-finite position")));
        }
        let total: f64 = nu.iter().sum();
        let dv = domain.volume();
        if total >= dv {
            return Err(OtError::InvalidProblem(format!(
                "prescribed volume {total} does not fit in domain volume {dv}"
            )));
        }
        let grid = site_grid(&positions, &domain);
        Ok(PotProblem {
            positions,
            nu,
            domain,
            tolerance: 0.01,
            max_newton: 100,
            scope: CellScope::Ball,
            exec: Exec::Parallel,
            grid,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Weight floor used to guard `1/sqrt(psi)` terms.
    pub fn psi_floor(&self) -> f64 {
        let d = self.domain.diagonal();
        1e-12 * d * d
    }

    /// Builds the diagram and evaluates every restricted cell.
    pub fn evaluate(&self, psi: &[f64]) -> Result<Evaluation, OtError> {
        let t0 = Instant::now();
        let diagram = build_diagram(&self.grid, psi, &self.domain, self.scope, self.exec);
        let t1 = Instant::now();
        let cells = evaluate_all(&diagram, &self.positions, psi, self.exec)?;
        let t2 = Instant::now();
        Ok(Evaluation {
            cells,
            diagram_time: t1 - t0,
            evaluation_time: t2 - t1,
        })
    }

    /// Largest `|nu_i - |V_i|| / nu_i`.
    pub fn worst_rel_error(&self, cells: &[RestrictedCell]) -> f64 {
        cells
            .iter()
            .zip(&self.nu)
            .map(|(c, nu)| (nu - c.volume).abs() / nu)
            .fold(0.0, f64::max)
    }
}

/// Restricted cells for one weight vector, with stage timings.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cells: Vec<RestrictedCell>,
    pub diagram_time: Duration,
    pub evaluation_time: Duration,
}

/// Why the Newton loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    DampingStall,
}

/// One line of the per-iteration diagnostics stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub worst_rel_error: f64,
    pub alpha: f64,
    pub cg_iters: usize,
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {:.6e}, {}, {}", self.iter, self.worst_rel_error, self.alpha, self.cg_iters)
    }
}

/// Accumulated wall time per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub diagram: Duration,
    pub evaluation: Duration,
    pub solve: Duration,
}

impl StageTimings {
    fn add_eval(&mut self, e: &Evaluation) {
        self.diagram += e.diagram_time;
        self.evaluation += e.evaluation_time;
    }

    pub fn total(&self) -> Duration {
        self.diagram + self.evaluation + self.solve
    }
}

/// Weights, their restricted cells and convergence diagnostics.
#[derive(Debug, Clone)]
pub struct PotState {
    pub psi: Vec<f64>,
    pub cells: Vec<RestrictedCell>,
    pub worst_rel_error: f64,
    pub newton_iters: usize,
    pub status: SolveStatus,
    pub diagnostics: Vec<IterationRecord>,
    pub timings: StageTimings,
}

impl PotState {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Kantorovich functional `K(psi) = Σ_i ∫_{V_i} (|x - p_i|^2 - psi_i) dx
/// + Σ_i psi_i nu_i`, whose gradient is [`assemble_gradient`].
pub fn kantorovich(positions: &[Vec3], nu: &[f64], psi: &[f64], cells: &[RestrictedCell]) -> f64 {
    cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let sphere = Sphere::new(positions[i], psi[i]);
            polar_second_moment(c, &sphere) - psi[i] * c.volume + psi[i] * nu[i]
        })
        .sum()
}

/// `g_i = nu_i - |V_i|`.
pub fn assemble_gradient(nu: &[f64], cells: &[RestrictedCell]) -> Vec<f64> {
    nu.iter().zip(cells).map(|(nu, c)| nu - c.volume).collect()
}

/// Symmetric neighbor weights `½|B_ij| / |p_j - p_i|`, averaged over the
/// two sides of each facet. Row `i` lists `(j, w_ij)` with `j` sorted.
pub fn neighbor_weights(positions: &[Vec3], cells: &[RestrictedCell]) -> Vec<Vec<(usize, f64)>> {
    let n = cells.len();
    let mut half: Vec<Vec<(usize, f64)>> = cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut row: Vec<(usize, f64)> = c
                .facets
                .iter()
                .filter_map(|f| match f.tag {
                    NeighborTag::Site(j) if j != i => {
                        let l = positions[i].distance(positions[j]);
                        Some((j, 0.5 * f.area / l))
                    }
                    _ => None,
                })
                .collect();
            row.sort_by_key(|e| e.0);
            row
        })
        .collect();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, row) in half.iter().enumerate() {
        for &(j, w) in row {
            incoming[j].push((i, w));
        }
    }
    for (i, row) in half.iter_mut().enumerate() {
        let mut merged: Vec<(usize, f64)> = row.iter().map(|&(j, w)| (j, 0.5 * w)).collect();
        merged.extend(incoming[i].iter().map(|&(j, w)| (j, 0.5 * w)));
        merged.sort_by_key(|e| e.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(merged.len());
        for (j, w) in merged {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 += w,
                _ => out.push((j, w)),
            }
        }
        *row = out;
    }
    half
}

/// `H = -∇²K`: off-diagonal `-w_ij`, diagonal `Σ_j w_ij + ½|K_i|/sqrt(psi_i)`.
/// An empty cell gets the diagonal of a ball of radius `sqrt(psi_i)`.
pub fn assemble_hessian(positions: &[Vec3], psi: &[f64], cells: &[RestrictedCell], psi_floor: f64) -> SparseSpd {
    let weights = neighbor_weights(positions, cells);
    let rows = weights
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let guarded = psi[i].max(psi_floor);
            let mut diag = if cells[i].is_empty() {
                2.0 * PI * guarded.sqrt()
            } else {
                0.5 * cells[i].free_surface_area / guarded.sqrt()
            };
            let mut out = Vec::with_capacity(row.len() + 1);
            for (j, w) in row {
                diag += w;
                out.push((j, -w));
            }
            out.push((i, diag));
            out
        })
        .collect();
    SparseSpd::from_rows(rows)
}

/// Counters from [`init_weights`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InitReport {
    /// Cells whose weight had to be raised or doubled.
    pub rescues: usize,
    /// Largest per-cell scale factor applied.
    pub max_kappa: f64,
}

const MAX_KAPPA: f64 = 1024.0;
const MAX_RESCUE_ROUNDS: usize = 256;

/// Initial weights with every restricted cell non-empty.
///
/// Cold start: `psi_i = (3 nu_i / 4π)^(2/3)`. Warm start: the previous
/// weights, raised to at least the squared radius `r_i^2` of a ball of
/// volume `nu_i / 2`. Cells that still come out empty are lifted so their
/// site beats every other site at its own position by `r_i^2` (or half the
/// squared distance to the strongest rival, if smaller); a cell that
/// is already that high has its weight doubled instead, up to a factor of
/// 1024.
pub fn init_weights(problem: &PotProblem, previous: Option<&[f64]>) -> Result<(Vec<f64>, InitReport), OtError> {
    let ball_r2 = |v: f64| (3.0 * v / (4.0 * PI)).powf(2.0 / 3.0);
    let mut report = InitReport {
        rescues: 0,
        max_kappa: 1.0,
    };
    let floor: Vec<f64> = problem.nu.iter().map(|&nu| ball_r2(0.5 * nu)).collect();
    let mut psi: Vec<f64> = match previous {
        Some(prev) if prev.len() == problem.len() => prev
            .iter()
            .zip(&floor)
            .map(|(&p, &f)| {
                if !(p >= f) {
                    report.rescues += 1;
                    f
                } else {
                    p
                }
            })
            .collect(),
        _ => problem.nu.iter().map(|&nu| ball_r2(nu)).collect(),
    };
    let mut kappa = vec![1.0f64; problem.len()];
    for _ in 0..MAX_RESCUE_ROUNDS {
        let eval = problem.evaluate(&psi)?;
        let empty: Vec<usize> = (0..problem.len()).filter(|&i| eval.cells[i].is_empty()).collect();
        if empty.is_empty() {
            return Ok((psi, report));
        }
        let snapshot = psi.clone();
        for i in empty {
            let p = problem.positions[i];
            let (dominance, d2) = problem
                .positions
                .iter()
                .zip(&snapshot)
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, (q, &w))| {
                    let d2 = (*q - p).length_squared();
                    (w - d2, d2)
                })
                .fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a });
            // A margin below half the squared gap cannot hand the dominating
            // site's own position over to this one.
            let lifted = dominance + floor[i].min(0.5 * d2);
            report.rescues += 1;
            if lifted > psi[i] {
                psi[i] = lifted;
            } else {
                kappa[i] *= 2.0;
                if kappa[i] > MAX_KAPPA {
                    return Err(OtError::InitFailure { max_kappa: MAX_KAPPA });
                }
                psi[i] *= 2.0;
                report.max_kappa = report.max_kappa.max(kappa[i]);
            }
        }
    }
    Err(OtError::InitFailure { max_kappa: report.max_kappa })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const MIN_ALPHA: f64 = 1.0 / (1u64 << 20) as f64;

/// Damped Newton iterations from `psi_init`.
///
/// Each step solves `H u = g` by CG, then halves the step length until
/// every cell keeps at least half of `min(min nu, min |V(psi_init)|)` and
/// the gradient norm decreases by the factor `1 - alpha/2`. Running out of
/// iterations or step length returns a flagged state, not an error.
pub fn newton_solve(problem: &PotProblem, psi_init: &[f64]) -> Result<PotState, OtError> {
    let mut timings = StageTimings::default();
    let mut psi = psi_init.to_vec();
    let eval = problem.evaluate(&psi)?;
    timings.add_eval(&eval);
    let mut cells = eval.cells;
    let min_nu = problem.nu.iter().copied().fold(f64::INFINITY, f64::min);
    let min_v0 = cells.iter().map(|c| c.volume).fold(f64::INFINITY, f64::min);
    let floor = 0.5 * min_nu.min(min_v0);
    let psi_floor = problem.psi_floor();
    let mut diagnostics = Vec::new();
    let mut iters = 0;
    let mut status = SolveStatus::MaxIterations;
    let mut worst = problem.worst_rel_error(&cells);
    while iters < problem.max_newton {
        if worst <= problem.tolerance {
            status = SolveStatus::Converged;
            break;
        }
        let g = assemble_gradient(&problem.nu, &cells);
        let gnorm = norm(&g);
        let t0 = Instant::now();
        let h = assemble_hessian(&problem.positions, &psi, &cells, psi_floor);
        let rtol = if worst < 10.0 * problem.tolerance { 1e-4 } else { 1e-3 };
        let cg = cg_solve(&h, &g, rtol, 10 * problem.len() + 100, problem.exec);
        timings.solve += t0.elapsed();

        let mut alpha = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = psi.iter().zip(&cg.x).map(|(p, u)| p + alpha * u).collect();
            if let Ok(e) = problem.evaluate(&trial) {
                timings.add_eval(&e);
                let min_v = e.cells.iter().map(|c| c.volume).fold(f64::INFINITY, f64::min);
                let g_new = assemble_gradient(&problem.nu, &e.cells);
                if min_v >= floor && norm(&g_new) <= (1.0 - 0.5 * alpha) * gnorm {
                    break Some((trial, e.cells));
                }
            }
            alpha *= 0.5;
            if alpha < MIN_ALPHA {
                break None;
            }
        };
        iters += 1;
        match accepted {
            Some((p, c)) => {
                psi = p;
                cells = c;
                worst = problem.worst_rel_error(&cells);
                diagnostics.push(IterationRecord {
                    iter: iters,
                    worst_rel_error: worst,
                    alpha,
                    cg_iters: cg.iterations,
                });
            }
            None => {
                diagnostics.push(IterationRecord {
                    iter: iters,
                    worst_rel_error: worst,
                    alpha: 0.0,
                    cg_iters: cg.iterations,
                });
                status = SolveStatus::DampingStall;
                break;
            }
        }
    }
    if status == SolveStatus::MaxIterations && worst <= problem.tolerance {
        status = SolveStatus::Converged;
    }
    Ok(PotState {
        psi,
        cells,
        worst_rel_error: worst,
        newton_iters: iters,
        status,
        diagnostics,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_newton_is_exact_on_the_ball() {
        let domain = ConvexCell::axis_box(Vec3::splat(-10.0), Vec3::splat(10.0));
        let nu = 4.0 / 3.0 * PI * 1e-3;
        let mut problem = PotProblem::new(vec![Vec3::ZERO], vec![nu], domain).unwrap();
        problem.tolerance = 1e-12;
        let (psi0, report) = init_weights(&problem, None).unwrap();
        assert_eq!(report.rescues, 0);
        assert!((psi0[0] - 1e-2).abs() < 1e-15);
        let state = newton_solve(&problem, &psi0).unwrap();
        assert!(state.converged());
        assert!(state.newton_iters <= 1);
        assert!((state.psi[0] - 1e-2).abs() < 1e-14);
    }

    #[test]
    fn single_site_hessian_is_ball_derivative() {
        let domain = ConvexCell::axis_box(Vec3::splat(-10.0), Vec3::splat(10.0));
        let problem = PotProblem::new(vec![Vec3::ZERO], vec![1.0], domain).unwrap();
        let psi = [0.04];
        let e = problem.evaluate(&psi).unwrap();
        let h = assemble_hessian(&problem.positions, &psi, &e.cells, problem.psi_floor());
        assert!((h.get(0, 0) - 2.0 * PI * 0.2).abs() < 1e-14);
        let g = assemble_gradient(&problem.nu, &e.cells);
        assert!((g[0] - (1.0 - 4.0 / 3.0 * PI * 0.008)).abs() < 1e-15);
    }

    #[test]
    fn rejects_overfilled_domain() {
        let domain = ConvexCell::axis_box(Vec3::ZERO, Vec3::ONE);
        assert!(matches!(
            PotProblem::new(vec![Vec3::splat(0.5)], vec![1.5], domain),
            Err(OtError::InvalidProblem(_))
        ));
    }
}
