//! Free-surface fluid time stepping on top of the partial transport solver.
//!
//! Each step moves the sites, restores prescribed volumes with a Newton
//! solve, then applies a spring pull toward cell centroids, gravity and
//! surface tension, with viscosity integrated implicitly.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::geom::{ConvexCell, GeomError, NeighborTag, Plane, Vec3};
use crate::laguerre::CellScope;
use crate::ot::{
    cg_solve, init_weights, neighbor_weights, newton_solve, IterationRecord, OtError, PotProblem, SolveStatus, SparseSpd,
    StageTimings,
};
use crate::par::Exec;
use crate::restricted::RestrictedCell;

#[derive(Debug, Error)]
pub enum FluidError {
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error("invalid simulation setup: {0}")]
    Invalid(String),
    #[error("volume solve did not converge at step {}: worst error {:.3e} after {} iterations", .report.step, .report.worst_rel_error, .report.newton_iters)]
    NonConvergence { report: Box<StepReport> },
}

/// Material parameters of one fluid.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub id: u32,
    pub density: f64,
    pub viscosity: f64,
    pub surface_tension: f64,
    /// Affinity to each domain face, in domain-face order. Missing entries
    /// repeat the last one; an empty list means no boundary coupling.
    pub boundary_affinity: Vec<f64>,
}

impl Phase {
    pub fn affinity(&self, face: usize) -> f64 {
        self.boundary_affinity
            .get(face)
            .or(self.boundary_affinity.last())
            .copied()
            .unwrap_or(0.0)
    }
}

/// Time-integration parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub dt: f64,
    /// Spring length scale of the centroid pull.
    pub epsilon: f64,
    pub gravity: Vec3,
    /// Optional phase-by-phase viscosity table; defaults to the smaller of
    /// the two phase viscosities.
    pub viscosity_table: Option<Vec<Vec<f64>>>,
    /// Relative residual for the implicit viscosity solves.
    pub viscosity_tol: f64,
    pub ot_tolerance: f64,
    pub max_newton: usize,
    pub scope: CellScope,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.005,
            epsilon: 0.02,
            gravity: Vec3::new(0.0, 0.0, -9.81),
            viscosity_table: None,
            viscosity_tol: 1e-12,
            ot_tolerance: 0.01,
            max_newton: 100,
            scope: CellScope::Ball,
        }
    }
}

/// Per-particle simulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub nu: Vec<f64>,
    /// Index into the simulation's phase list.
    pub phase: Vec<u32>,
    /// Weights carried over as the next warm start.
    pub psi: Vec<f64>,
    pub step: u64,
    pub time: f64,
    /// Restricted cells at the current positions and weights.
    pub cells: Vec<RestrictedCell>,
}

impl FluidState {
    pub fn new(positions: Vec<Vec3>, velocities: Vec<Vec3>, nu: Vec<f64>, phase: Vec<u32>) -> Self {
        FluidState {
            positions,
            velocities,
            nu,
            phase,
            psi: Vec::new(),
            step: 0,
            time: 0.0,
            cells: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Diagnostics of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub time: f64,
    pub status: SolveStatus,
    pub worst_rel_error: f64,
    pub newton_iters: usize,
    pub init_rescues: usize,
    pub total_volume: f64,
    pub prescribed_volume: f64,
    pub kinetic_energy: f64,
    pub momentum: Vec3,
    pub free_surface_area: f64,
    pub viscosity_cg_iters: usize,
    /// Momentum change caused by the viscosity solve, relative to
    /// `Σ m |v|`. Nonzero only through boundary terms and solver residual.
    pub viscosity_momentum_drift: f64,
    pub empty_cell_forces: usize,
    pub timings: StageTimings,
    pub wall: Duration,
    /// Per-iteration record of the step's Newton solve.
    pub newton_diagnostics: Vec<IterationRecord>,
}

/// Outcome of the volume solve inside a step.
struct VolumeSolve {
    status: SolveStatus,
    worst: f64,
    iters: usize,
    rescues: usize,
    timings: StageTimings,
    diagnostics: Vec<IterationRecord>,
}

impl StepReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Spring force per unit mass pulling a site toward its cell centroid.
pub fn pressure_force(cell: &RestrictedCell, x: Vec3, epsilon: f64) -> Option<Vec3> {
    if cell.is_empty() {
        return None;
    }
    Some((cell.centroid - x) / (epsilon * epsilon))
}

/// A Laplacian coupling between a particle and one domain face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryWeight {
    pub face: usize,
    pub weight: f64,
    /// Ghost position used by surface tension.
    pub ghost: Vec3,
}

/// Cotan-style Laplacian weights over the restricted diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianWeights {
    /// Symmetric fluid-fluid weights `½|B_ij| / |p_j - p_i|`.
    pub pairs: Vec<Vec<(usize, f64)>>,
    /// Fluid-boundary weights `½ μ |B_iΩ| / (d |V_i|)`.
    pub boundary: Vec<Vec<BoundaryWeight>>,
}

/// Builds the fluid-fluid and fluid-boundary weights. `affinity(i, face)`
/// gives the boundary coefficient of particle `i`. The wall distance is
/// floored at a quarter of the cell size so the explicit ghost pull stays
/// bounded for particles touching a wall.
pub fn laplacian_weights(
    positions: &[Vec3],
    cells: &[RestrictedCell],
    domain_planes: &[Plane],
    affinity: impl Fn(usize, usize) -> f64,
) -> LaplacianWeights {
    let pairs = neighbor_weights(positions, cells);
    let boundary = cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if c.volume <= 0.0 {
                return Vec::new();
            }
            let size = c.volume.cbrt();
            c.facets
                .iter()
                .filter_map(|f| match f.tag {
                    NeighborTag::DomainFace(k) if k < domain_planes.len() => {
                        let mu = affinity(i, k);
                        if mu == 0.0 || f.area == 0.0 {
                            return None;
                        }
                        let plane = domain_planes[k];
                        let d = (-plane.signed_distance(positions[i])).max(0.25 * size);
                        let foot = plane.project(positions[i]);
                        Some(BoundaryWeight {
                            face: k,
                            weight: 0.5 * mu * f.area / (d * c.volume),
                            ghost: foot - size * plane.normal,
                        })
                    }
                    _ => None,
                })
                .collect()
        })
        .collect();
    LaplacianWeights { pairs, boundary }
}

/// `γ_i (Σ_j w_ij (x_j - x_i) + Σ_b w_b (ghost_b - x_i))`.
pub fn surface_tension_force(positions: &[Vec3], weights: &LaplacianWeights, gamma: f64, i: usize) -> Vec3 {
    if gamma == 0.0 {
        return Vec3::ZERO;
    }
    let x = positions[i];
    let mut f = Vec3::ZERO;
    for &(j, w) in &weights.pairs[i] {
        f += w * (positions[j] - x);
    }
    for b in &weights.boundary[i] {
        f += b.weight * (b.ghost - x);
    }
    gamma * f
}

/// Implicit viscosity system `(m/dt I + L_μ + B) v = m/dt v_k + F`, shared
/// by the three axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ViscositySystem {
    pub matrix: SparseSpd,
    /// Right-hand sides for x, y and z.
    pub rhs: [Vec<f64>; 3],
}

/// Assembles the viscosity system. `mu(i, j)` is the fluid-fluid
/// viscosity between particles; boundary rows add their weight to the
/// diagonal (zero wall velocity).
pub fn assemble_viscosity_system(
    mass: &[f64],
    velocities: &[Vec3],
    forces: &[Vec3],
    dt: f64,
    weights: &LaplacianWeights,
    mu: impl Fn(usize, usize) -> f64,
) -> ViscositySystem {
    let n = mass.len();
    let rows = (0..n)
        .map(|i| {
            let mut diag = mass[i] / dt;
            let mut row = Vec::with_capacity(weights.pairs[i].len() + 1);
            for &(j, w) in &weights.pairs[i] {
                let c = mu(i, j) * w;
                if c != 0.0 {
                    diag += c;
                    row.push((j, -c));
                }
            }
            diag += weights.boundary[i].iter().map(|b| b.weight).sum::<f64>();
            row.push((i, diag));
            row
        })
        .collect();
    let rhs_axis = |k: usize| -> Vec<f64> { (0..n).map(|i| mass[i] / dt * velocities[i][k] + forces[i][k]).collect() };
    ViscositySystem {
        matrix: SparseSpd::from_rows(rows),
        rhs: [rhs_axis(0), rhs_axis(1), rhs_axis(2)],
    }
}

/// Fixed simulation setup: domain, materials and parameters.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub planes: Vec<Plane>,
    pub domain: ConvexCell,
    pub phases: Vec<Phase>,
    pub params: SimParams,
    pub exec: Exec,
}

impl Simulation {
    pub fn new(planes: Vec<Plane>, phases: Vec<Phase>, params: SimParams) -> Result<Self, FluidError> {
        let domain = ConvexCell::from_halfspaces(&planes)?;
        if phases.is_empty() {
            return Err(FluidError::Invalid("no phases".into()));
        }
        if !(params.dt > 0.0) || !(params.epsilon > 0.0) {
            return Err(FluidError::Invalid("dt and epsilon must be positive".into()));
        }
        for p in &phases {
            if !(p.density > 0.0) || p.viscosity < 0.0 || p.surface_tension < 0.0 {
                return Err(FluidError::Invalid(format!("phase {} has invalid material values", p.id)));
            }
        }
        if let Some(t) = &params.viscosity_table {
            if t.len() != phases.len() || t.iter().any(|r| r.len() != phases.len()) {
                return Err(FluidError::Invalid("viscosity table must be phases x phases".into()));
            }
        }
        Ok(Simulation {
            planes,
            domain,
            phases,
            params,
            exec: Exec::Parallel,
        })
    }

    fn phase_of(&self, state: &FluidState, i: usize) -> &Phase {
        &self.phases[state.phase[i] as usize]
    }

    pub fn masses(&self, state: &FluidState) -> Vec<f64> {
        (0..state.len()).map(|i| self.phase_of(state, i).density * state.nu[i]).collect()
    }

    fn pair_viscosity(&self, a: u32, b: u32) -> f64 {
        match &self.params.viscosity_table {
            Some(t) => t[a as usize][b as usize],
            None => self.phases[a as usize].viscosity.min(self.phases[b as usize].viscosity),
        }
    }

    /// Reflects a point back into the domain. Returns the outward normals
    /// of the walls it crossed.
    fn reflect(&self, x: &mut Vec3, tol: f64) -> Vec<Vec3> {
        let mut hit = Vec::new();
        for _ in 0..4 {
            let mut moved = false;
            for pl in &self.planes {
                let s = pl.signed_distance(*x);
                if s > -tol {
                    *x -= (2.0 * s.max(0.0) + tol) * pl.normal;
                    hit.push(pl.normal);
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
        if !self.planes.iter().all(|pl| pl.signed_distance(*x) < 0.0) {
            // Overshoot through a corner: pull onto the interior.
            for pl in &self.planes {
                let s = pl.signed_distance(*x);
                if s > -tol {
                    *x -= (s + tol) * pl.normal;
                }
            }
        }
        hit
    }

    /// Checks the initial state and solves for its volumes.
    pub fn prepare(&self, state: &mut FluidState) -> Result<StepReport, FluidError> {
        let n = state.len();
        if state.velocities.len() != n || state.nu.len() != n || state.phase.len() != n {
            return Err(FluidError::Invalid("per-particle arrays differ in length".into()));
        }
        if let Some(i) = state.phase.iter().position(|&p| p as usize >= self.phases.len()) {
            return Err(FluidError::Invalid(format!("particle {i} references missing phase {}", state.phase[i])));
        }
        let t0 = Instant::now();
        let solve = self.solve_volumes(state)?;
        self.finish_report(state, solve, 0, 0.0, 0, t0)
    }

    fn solve_volumes(&self, state: &mut FluidState) -> Result<VolumeSolve, FluidError> {
        let mut problem = PotProblem::new(state.positions.clone(), state.nu.clone(), self.domain.clone())?;
        problem.tolerance = self.params.ot_tolerance;
        problem.max_newton = self.params.max_newton;
        problem.scope = self.params.scope;
        problem.exec = self.exec;
        let prev = (state.psi.len() == state.len()).then_some(state.psi.as_slice());
        let (psi0, init) = init_weights(&problem, prev)?;
        let pot = newton_solve(&problem, &psi0)?;
        state.psi = pot.psi;
        state.cells = pot.cells;
        Ok(VolumeSolve {
            status: pot.status,
            worst: pot.worst_rel_error,
            iters: pot.newton_iters,
            rescues: init.rescues,
            timings: pot.timings,
            diagnostics: pot.diagnostics,
        })
    }

    fn finish_report(
        &self,
        state: &FluidState,
        solve: VolumeSolve,
        visc_iters: usize,
        drift: f64,
        empty_forces: usize,
        t0: Instant,
    ) -> Result<StepReport, FluidError> {
        let VolumeSolve {
            status,
            worst,
            iters,
            rescues,
            timings,
            diagnostics,
        } = solve;
        let mass = self.masses(state);
        let report = StepReport {
            step: state.step,
            time: state.time,
            status,
            worst_rel_error: worst,
            newton_iters: iters,
            init_rescues: rescues,
            total_volume: state.cells.iter().map(|c| c.volume).sum(),
            prescribed_volume: state.nu.iter().sum(),
            kinetic_energy: state.velocities.iter().zip(&mass).map(|(v, m)| 0.5 * m * v.length_squared()).sum(),
            momentum: state.velocities.iter().zip(&mass).map(|(v, m)| *m * *v).sum(),
            free_surface_area: state.cells.iter().map(|c| c.free_surface_area).sum(),
            viscosity_cg_iters: visc_iters,
            viscosity_momentum_drift: drift,
            empty_cell_forces: empty_forces,
            timings,
            wall: t0.elapsed(),
            newton_diagnostics: diagnostics,
        };
        if status != SolveStatus::Converged {
            return Err(FluidError::NonConvergence { report: Box::new(report) });
        }
        Ok(report)
    }

    /// Advances one time step. On a failed volume solve the state is still
    /// advanced and the error carries the step report.
    pub fn step(&self, state: &mut FluidState) -> Result<StepReport, FluidError> {
        let t0 = Instant::now();
        let p = &self.params;
        let n = state.len();
        let tol = crate::geom::REL_TOL * self.domain.diagonal();

        for i in 0..n {
            let mut x = state.positions[i] + p.dt * state.velocities[i];
            for normal in self.reflect(&mut x, tol) {
                let vn = state.velocities[i].dot(normal);
                if vn > 0.0 {
                    state.velocities[i] -= vn * normal;
                }
            }
            state.positions[i] = x;
        }
        state.step += 1;
        state.time += p.dt;

        let solve = self.solve_volumes(state)?;
        let t_forces = Instant::now();

        let mass = self.masses(state);
        let weights = laplacian_weights(&state.positions, &state.cells, &self.planes, |i, k| {
            self.phase_of(state, i).affinity(k)
        });
        let forces: Vec<Option<Vec3>> = self.exec.map_range(n, |i| {
            let phase = self.phase_of(state, i);
            let spring = pressure_force(&state.cells[i], state.positions[i], p.epsilon)?;
            let tension = surface_tension_force(&state.positions, &weights, phase.surface_tension, i);
            Some(mass[i] * (spring + p.gravity) + tension)
        });
        let empty_forces = forces.iter().filter(|f| f.is_none()).count();
        let forces: Vec<Vec3> = forces
            .into_iter()
            .enumerate()
            .map(|(i, f)| f.unwrap_or(mass[i] * p.gravity))
            .collect();

        let sys = assemble_viscosity_system(&mass, &state.velocities, &forces, p.dt, &weights, |i, j| {
            self.pair_viscosity(state.phase[i], state.phase[j])
        });
        let mut visc_iters = 0;
        let mut new_v = vec![Vec3::ZERO; n];
        for (k, rhs) in sys.rhs.iter().enumerate() {
            let r = cg_solve(&sys.matrix, rhs, p.viscosity_tol, 10 * n + 100, self.exec);
            visc_iters += r.iterations;
            for i in 0..n {
                new_v[i][k] = r.x[i];
            }
        }
        let before: Vec3 = (0..n).map(|i| mass[i] * state.velocities[i] + p.dt * forces[i]).sum();
        let after: Vec3 = (0..n).map(|i| mass[i] * new_v[i]).sum();
        let scale: f64 = (0..n)
            .map(|i| (mass[i] * state.velocities[i] + p.dt * forces[i]).length())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        let drift = (after - before).length() / scale;
        state.velocities = new_v;

        let mut solve = solve;
        solve.timings.solve += t_forces.elapsed();
        self.finish_report(state, solve, visc_iters, drift, empty_forces, t0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::restricted::{CellStatus, RestrictedCell};

    #[test]
    fn spring_force_scaling() {
        let mut c = RestrictedCell::empty(Vec3::ZERO);
        c.status = CellStatus::Clipped;
        c.centroid = Vec3::new(4e-4, 0.0, 0.0);
        let f = pressure_force(&c, Vec3::ZERO, 0.02).unwrap();
        assert!((f - Vec3::X).length() < 1e-12);
        c.centroid = Vec3::ZERO;
        assert_eq!(pressure_force(&c, Vec3::ZERO, 0.02).unwrap(), Vec3::ZERO);
        assert!(pressure_force(&RestrictedCell::empty(Vec3::ZERO), Vec3::ZERO, 1.0).is_none());
    }

    #[test]
    fn inviscid_system_is_explicit() {
        let w = LaplacianWeights {
            pairs: vec![vec![(1, 0.3)], vec![(0, 0.3)]],
            boundary: vec![vec![], vec![]],
        };
        let v = [Vec3::X, -Vec3::Y];
        let f = [Vec3::Z, Vec3::X];
        let sys = assemble_viscosity_system(&[2.0, 1.0], &v, &f, 0.1, &w, |_, _| 0.0);
        for k in 0..3 {
            let r = cg_solve(&sys.matrix, &sys.rhs[k], 1e-14, 10, Exec::Sequential);
            for i in 0..2 {
                let expect = v[i][k] + 0.1 / [2.0, 1.0][i] * f[i][k];
                assert!((r.x[i] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn strong_viscosity_averages_two_particles() {
        let w = LaplacianWeights {
            pairs: vec![vec![(1, 1.0)], vec![(0, 1.0)]],
            boundary: vec![vec![], vec![]],
        };
        let v = [Vec3::X, -Vec3::X];
        let sys = assemble_viscosity_system(&[1.0, 1.0], &v, &[Vec3::ZERO; 2], 0.01, &w, |_, _| 1e8);
        let r = cg_solve(&sys.matrix, &sys.rhs[0], 1e-14, 10, Exec::Sequential);
        assert!(r.x[0].abs() < 1e-6 && r.x[1].abs() < 1e-6);
        assert!((r.x[0] + r.x[1]).abs() < 1e-12);
    }
}
