use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::fluid::{FluidState, Phase, SimParams, Simulation};
use crate::geom::{box_halfspaces, Plane, Vec3};
use crate::laguerre::CellScope;

/// A complete simulation scene as stored on disk (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub name: String,
    pub domain: DomainConfig,
    pub phases: Vec<PhaseConfig>,
    pub blocks: Vec<BlockConfig>,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
}

/// Convex domain, either a box or an intersection of halfspaces
/// `normal . x <= offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Box { min: [f64; 3], max: [f64; 3] },
    Halfspaces(Vec<PlaneConfig>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneConfig {
    pub normal: [f64; 3],
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub id: u32,
    pub density: f64,
    #[serde(default)]
    pub viscosity: f64,
    #[serde(default)]
    pub surface_tension: f64,
    /// One affinity per domain face; the last entry repeats.
    #[serde(default)]
    pub boundary_affinity: Vec<f64>,
}

/// Region filled with a cubic lattice of particles, each of volume
/// `spacing^3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub shape: ShapeConfig,
    pub spacing: f64,
    pub phase: u32,
    #[serde(default)]
    pub velocity: [f64; 3],
    /// Adds `radial_velocity * (x - center) / extent` to every particle,
    /// where `extent` is the block's half-diagonal or radius.
    #[serde(default)]
    pub radial_velocity: f64,
    /// Uniform random offset per axis, as a fraction of the spacing.
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    Box { min: [f64; 3], max: [f64; 3] },
    Ball { center: [f64; 3], radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeConfig {
    Ball,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub dt: f64,
    pub epsilon: f64,
    pub gravity: [f64; 3],
    /// Square table in phase-list order; `null` uses the smaller viscosity.
    pub viscosity_table: Option<Vec<Vec<f64>>>,
    pub viscosity_tol: f64,
    pub ot_tolerance: f64,
    pub max_newton: usize,
    pub scope: ScopeConfig,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        let p = SimParams::default();
        ParamsConfig {
            dt: p.dt,
            epsilon: p.epsilon,
            gravity: p.gravity.to_array(),
            viscosity_table: None,
            viscosity_tol: p.viscosity_tol,
            ot_tolerance: p.ot_tolerance,
            max_newton: p.max_newton,
            scope: ScopeConfig::Ball,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub steps: u64,
    /// Write a frame every `frame_stride` steps.
    pub frame_stride: u64,
    pub directory: String,
    /// Store the measured step time in frame footers. Off by default so
    /// frames are reproducible byte for byte.
    pub frame_wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            steps: 100,
            frame_stride: 1,
            directory: "frames".into(),
            frame_wall_time: false,
        }
    }
}

fn field(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

fn finite3(v: [f64; 3]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl SceneConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: SceneConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }

    /// Canonical text form: pretty JSON in field order with a trailing
    /// newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene config always serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Domain halfspaces with unit normals.
    pub fn planes(&self) -> Result<Vec<Plane>, ConfigError> {
        match &self.domain {
            DomainConfig::Box { min, max } => {
                if !(finite3(*min) && finite3(*max)) || (0..3).any(|k| min[k] >= max[k]) {
                    return Err(field("domain.box", "min must be below max on every axis"));
                }
                Ok(box_halfspaces(Vec3::from_array(*min), Vec3::from_array(*max)))
            }
            DomainConfig::Halfspaces(list) => list
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    Plane::new(Vec3::from_array(p.normal), p.offset)
                        .map_err(|e| field(format!("domain.halfspaces[{k}]"), e.to_string()))
                })
                .collect(),
        }
    }

    fn phase_index(&self) -> HashMap<u32, usize> {
        self.phases.iter().enumerate().map(|(k, p)| (p.id, k)).collect()
    }

    /// Checks everything that does not need the particle lattice.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.planes()?;
        if self.phases.is_empty() {
            return Err(field("phases", "at least one phase is required"));
        }
        let mut seen = HashMap::new();
        for (k, p) in self.phases.iter().enumerate() {
            if let Some(prev) = seen.insert(p.id, k) {
                return Err(field(format!("phases[{k}].id"), format!("id {} already used by phases[{prev}]", p.id)));
            }
            if !(p.density > 0.0 && p.density.is_finite()) {
                return Err(field(format!("phases[{k}].density"), "must be positive"));
            }
            if !(p.viscosity >= 0.0 && p.viscosity.is_finite()) {
                return Err(field(format!("phases[{k}].viscosity"), "must be non-negative"));
            }
            if !(p.surface_tension >= 0.0 && p.surface_tension.is_finite()) {
                return Err(field(format!("phases[{k}].surface_tension"), "must be non-negative"));
            }
            if p.boundary_affinity.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                return Err(field(format!("phases[{k}].boundary_affinity"), "entries must be non-negative"));
            }
        }
        if self.blocks.is_empty() {
            return Err(field("blocks", "at least one block is required"));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if !seen.contains_key(&b.phase) {
                return Err(field(format!("blocks[{k}].phase"), format!("no phase with id {}", b.phase)));
            }
            if !(b.spacing > 0.0 && b.spacing.is_finite()) {
                return Err(field(format!("blocks[{k}].spacing"), "must be positive"));
            }
            if !(0.0..0.5).contains(&b.jitter) {
                return Err(field(format!("blocks[{k}].jitter"), "must lie in [0, 0.5)"));
            }
            match b.shape {
                ShapeConfig::Box { min, max } if !(finite3(min) && finite3(max)) || (0..3).any(|a| min[a] >= max[a]) => {
                    return Err(field(format!("blocks[{k}].shape.box"), "min must be below max on every axis"));
                }
                ShapeConfig::Ball { radius, .. } if !(radius > 0.0) => {
                    return Err(field(format!("blocks[{k}].shape.ball.radius"), "must be positive"));
                }
                _ => {}
            }
        }
        let p = &self.params;
        if !(p.dt > 0.0) {
            return Err(field("params.dt", "must be positive"));
        }
        if !(p.epsilon > 0.0) {
            return Err(field("params.epsilon", "must be positive"));
        }
        if !finite3(p.gravity) {
            return Err(field("params.gravity", "must be finite"));
        }
        if !(p.ot_tolerance > 0.0) {
            return Err(field("params.ot_tolerance", "must be positive"));
        }
        if !(p.viscosity_tol > 0.0) {
            return Err(field("params.viscosity_tol", "must be positive"));
        }
        if let Some(t) = &p.viscosity_table {
            let n = self.phases.len();
            if t.len() != n || t.iter().any(|r| r.len() != n) {
                return Err(field("params.viscosity_table", format!("must be {n} x {n}")));
            }
            for a in 0..n {
                for b in 0..n {
                    if !(t[a][b] >= 0.0) || t[a][b] != t[b][a] {
                        return Err(field(
                            format!("params.viscosity_table[{a}][{b}]"),
                            "entries must be non-negative and symmetric",
                        ));
                    }
                }
            }
        }
        if self.output.frame_stride == 0 {
            return Err(field("output.frame_stride", "must be at least 1"));
        }
        Ok(())
    }

    pub fn sim_params(&self) -> SimParams {
        let p = &self.params;
        SimParams {
            dt: p.dt,
            epsilon: p.epsilon,
            gravity: Vec3::from_array(p.gravity),
            viscosity_table: p.viscosity_table.clone(),
            viscosity_tol: p.viscosity_tol,
            ot_tolerance: p.ot_tolerance,
            max_newton: p.max_newton,
            scope: match p.scope {
                ScopeConfig::Ball => CellScope::Ball,
                ScopeConfig::Full => CellScope::Full,
            },
        }
    }

    /// Builds the simulation and its initial particles.
    pub fn build(&self) -> Result<(Simulation, FluidState), ConfigError> {
        self.validate()?;
        let planes = self.planes()?;
        let phases: Vec<Phase> = self
            .phases
            .iter()
            .map(|p| Phase {
                id: p.id,
                density: p.density,
                viscosity: p.viscosity,
                surface_tension: p.surface_tension,
                boundary_affinity: p.boundary_affinity.clone(),
            })
            .collect();
        let index = self.phase_index();
        let mut pos = Vec::new();
        let mut vel = Vec::new();
        let mut nu = Vec::new();
        let mut phase = Vec::new();
        for (k, b) in self.blocks.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(k as u64);
            let (lo, hi, center, extent, inside): (Vec3, Vec3, Vec3, f64, Box<dyn Fn(Vec3) -> bool>) = match b.shape {
                ShapeConfig::Box { min, max } => {
                    let (lo, hi) = (Vec3::from_array(min), Vec3::from_array(max));
                    (lo, hi, 0.5 * (lo + hi), 0.5 * (hi - lo).length(), Box::new(|_| true))
                }
                ShapeConfig::Ball { center, radius } => {
                    let c = Vec3::from_array(center);
                    (
                        c - Vec3::splat(radius),
                        c + Vec3::splat(radius),
                        c,
                        radius,
                        Box::new(move |x: Vec3| x.distance(c) <= radius),
                    )
                }
            };
            let counts = ((hi - lo) / b.spacing).round().max(Vec3::ONE);
            let start = pos.len();
            for z in 0..counts.z as usize {
                for y in 0..counts.y as usize {
                    for x in 0..counts.x as usize {
                        let node = lo + b.spacing * (Vec3::new(x as f64, y as f64, z as f64) + Vec3::splat(0.5));
                        if !inside(node) {
                            continue;
                        }
                        let mut p = node;
                        if b.jitter > 0.0 {
                            let j = b.jitter * b.spacing;
                            p += Vec3::new(rng.random_range(-j..j), rng.random_range(-j..j), rng.random_range(-j..j));
                        }
                        if let Some(plane) = planes.iter().find(|pl| pl.signed_distance(p) >= 0.0) {
                            return Err(field(
                                format!("blocks[{k}].shape"),
                                format!("particle at {p} lies outside the domain face with normal {}", plane.normal),
                            ));
                        }
                        pos.push(p);
                        vel.push(Vec3::from_array(b.velocity) + b.radial_velocity * (node - center) / extent);
                        nu.push(b.spacing.powi(3));
                        phase.push(index[&b.phase] as u32);
                    }
                }
            }
            if pos.len() == start {
                return Err(field(format!("blocks[{k}]"), "block produces no particles"));
            }
        }
        let sim = Simulation::new(planes, phases, self.sim_params()).map_err(|e| field("domain", e.to_string()))?;
        let total: f64 = nu.iter().sum();
        let dv = sim.domain.volume();
        if total >= dv {
            return Err(field("blocks", format!("particles need volume {total} but the domain holds {dv}")));
        }
        Ok((sim, FluidState::new(pos, vel, nu, phase)))
    }
}
