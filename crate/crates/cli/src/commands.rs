//! Library side of the `simulate`, `render` and `bench` subcommands.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use potflow::fluid::{FluidError, StepReport};
use potflow::geom::{ConvexCell, Vec3};
use potflow::io::{
    BlockConfig, ConfigError, DomainConfig, FrameError, FrameRecord, OutputConfig, ParamsConfig, PhaseConfig,
    SceneConfig, ShapeConfig,
};
use potflow::ot::StageTimings;
use potflow::render::{render, sample_surface, write_point_cloud, Camera, RenderError, RenderMode, RenderOptions, RenderScene};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("step {step} did not converge (worst relative volume error {worst:.3e})")]
    NonConvergence { step: u64, worst: f64 },
    #[error("validation failed")]
    Validation,
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonConvergence { .. } => 3,
            CliError::Validation => 4,
            _ => 1,
        }
    }
}

/// One row of `stats.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub step: u64,
    pub time: f64,
    pub converged: bool,
    pub worst_rel_error: f64,
    pub newton_iters: usize,
    pub total_volume: f64,
    pub prescribed_volume: f64,
    pub kinetic_energy: f64,
    pub free_surface_area: f64,
    pub viscosity_momentum_drift: f64,
    pub wall_ms: f64,
}

impl StatsRow {
    fn new(r: &StepReport) -> Self {
        StatsRow {
            step: r.step,
            time: r.time,
            converged: r.converged(),
            worst_rel_error: r.worst_rel_error,
            newton_iters: r.newton_iters,
            total_volume: r.total_volume,
            prescribed_volume: r.prescribed_volume,
            kinetic_energy: r.kinetic_energy,
            free_surface_area: r.free_surface_area,
            viscosity_momentum_drift: r.viscosity_momentum_drift,
            wall_ms: r.wall.as_secs_f64() * 1e3,
        }
    }
}

pub fn read_stats(path: impl AsRef<Path>) -> Result<Vec<StatsRow>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    pub config: PathBuf,
    /// Overrides `output.directory`.
    pub out: Option<PathBuf>,
    /// Overrides `output.steps`.
    pub steps: Option<u64>,
    pub verbose: bool,
    /// Keep going after a step fails to converge.
    pub best_effort: bool,
}

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    pub out: PathBuf,
    pub rows: Vec<StatsRow>,
    pub frames: usize,
    pub failed_steps: usize,
}

pub fn frame_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("frame_{step:05}.potf"))
}

/// Runs a scene, writing `scene.json`, `stats.csv` and frames (the
/// prepared state as step 0, then every `frame_stride` steps and the last
/// step) into the output directory.
/// Newton iterations of one step as `iter, worst_rel_error, alpha, cg_iters`.
fn print_iterations(report: &StepReport) {
    for rec in &report.newton_diagnostics {
        eprintln!("  {rec}");
    }
}

pub fn simulate(opts: &SimulateOptions) -> Result<SimulateSummary, CliError> {
    let cfg = SceneConfig::load(&opts.config)?;
    let (sim, mut state) = cfg.build()?;
    let out = opts.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    fs::create_dir_all(&out)?;
    cfg.save(out.join("scene.json"))?;
    let steps = opts.steps.unwrap_or(cfg.output.steps);
    let stride = cfg.output.frame_stride.max(1);
    let wall = cfg.output.frame_wall_time;

    let prep = match sim.prepare(&mut state) {
        Ok(r) => r,
        Err(FluidError::NonConvergence { report }) if opts.best_effort => *report,
        Err(FluidError::NonConvergence { report }) => {
            return Err(CliError::NonConvergence {
                step: 0,
                worst: report.worst_rel_error,
            })
        }
        Err(e) => return Err(e.into()),
    };
    FrameRecord::from_state(&state, &prep, wall).write(frame_path(&out, 0))?;
    let mut frames = 1;
    if opts.verbose {
        print_iterations(&prep);
        eprintln!("prepared {} particles, worst error {:.3e}", state.len(), prep.worst_rel_error);
    }

    let mut csv = csv::Writer::from_writer(BufWriter::new(fs::File::create(out.join("stats.csv"))?));
    let mut rows = Vec::new();
    let mut failed = 0;
    for _ in 0..steps {
        let (report, ok) = match sim.step(&mut state) {
            Ok(r) => (r, true),
            Err(FluidError::NonConvergence { report }) => (*report, false),
            Err(e) => return Err(e.into()),
        };
        let row = StatsRow::new(&report);
        csv.serialize(&row)?;
        if opts.verbose {
            print_iterations(&report);
            eprintln!(
                "step {:5} worst {:.3e} newton {:2} volume {:.6} area {:.5} {:.1} ms{}",
                row.step,
                row.worst_rel_error,
                row.newton_iters,
                row.total_volume / row.prescribed_volume,
                row.free_surface_area,
                row.wall_ms,
                if ok { "" } else { " NOT CONVERGED" }
            );
        }
        rows.push(row);
        if report.step % stride == 0 || report.step == steps || !ok {
            FrameRecord::from_state(&state, &report, wall).write(frame_path(&out, report.step))?;
            frames += 1;
        }
        if !ok {
            failed += 1;
            if !opts.best_effort {
                csv.flush()?;
                return Err(CliError::NonConvergence {
                    step: report.step,
                    worst: report.worst_rel_error,
                });
            }
        }
    }
    csv.flush()?;
    Ok(SimulateSummary {
        out,
        rows,
        frames,
        failed_steps: failed,
    })
}

#[derive(Debug, Clone)]
pub struct RenderCommand {
    pub frame: PathBuf,
    /// Scene file providing the domain; defaults to `scene.json` next to
    /// the frame.
    pub scene: Option<PathBuf>,
    pub mode: RenderMode,
    pub eye: Option<Vec3>,
    pub look_at: Option<Vec3>,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
    pub blend: Option<f64>,
    pub out: PathBuf,
    /// Also write this many oriented surface samples next to the image.
    pub points: Option<usize>,
    pub seed: u64,
}

impl Default for RenderCommand {
    fn default() -> Self {
        RenderCommand {
            frame: PathBuf::new(),
            scene: None,
            mode: RenderMode::Raw,
            eye: None,
            look_at: None,
            up: Vec3::Z,
            fov_deg: 45.0,
            width: 640,
            height: 480,
            blend: None,
            out: PathBuf::from("frame.ppm"),
            points: None,
            seed: 0,
        }
    }
}

/// Domain of the scene file, or the padded bounding box of the balls when
/// there is none.
fn render_domain(cmd: &RenderCommand, frame: &FrameRecord) -> Result<ConvexCell, CliError> {
    let scene = cmd
        .scene
        .clone()
        .or_else(|| cmd.frame.parent().map(|d| d.join("scene.json")).filter(|p| p.exists()));
    if let Some(path) = scene {
        let cfg = SceneConfig::load(path)?;
        return Ok(ConvexCell::from_halfspaces(&cfg.planes()?).map_err(|e| CliError::Usage(e.to_string()))?);
    }
    let r = frame.psi.iter().fold(0.0f64, |m, p| m.max(p.max(0.0).sqrt()));
    let (mut lo, mut hi) = (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY));
    for p in &frame.positions {
        lo = lo.min(*p);
        hi = hi.max(*p);
    }
    let pad = Vec3::splat(r.max(1e-6) * 1.01);
    Ok(ConvexCell::axis_box(lo - pad, hi + pad))
}

/// Renders a frame to a PPM file. Returns the image and, when requested,
/// the number of surface samples written.
pub fn render_frame(cmd: &RenderCommand) -> Result<(potflow::render::Image, Option<usize>), CliError> {
    let frame = FrameRecord::read(&cmd.frame)?;
    let domain = render_domain(cmd, &frame)?;
    let (lo, hi) = domain.bbox();
    let center = 0.5 * (lo + hi);
    let diag = (hi - lo).length();
    let look_at = cmd.look_at.unwrap_or(center);
    let eye = cmd
        .eye
        .unwrap_or_else(|| center + 1.3 * diag * Vec3::new(0.9, -1.5, 0.8).normalize());
    let camera = Camera::new(eye, look_at, cmd.up, cmd.fov_deg.to_radians(), cmd.width, cmd.height)?;
    let scene = RenderScene::new(frame.positions, frame.psi, domain, potflow::Exec::Parallel)?;
    let opts = RenderOptions {
        mode: cmd.mode,
        blend: cmd.blend,
        ..RenderOptions::default()
    };
    let (image, _) = render(&scene, &camera, &opts);
    image.write_ppm(BufWriter::new(fs::File::create(&cmd.out)?))?;
    let points = match cmd.points {
        Some(count) => {
            let s = sample_surface(&scene, count, cmd.seed);
            let path = cmd.out.with_extension("xyz");
            write_point_cloud(&s.samples, BufWriter::new(fs::File::create(path)?))?;
            Some(s.samples.len())
        }
        None => None,
    };
    Ok((image, points))
}

/// Dam-break scene with about `n` particles: the block keeps the 2:1:1
/// proportions of the bundled scene and the spring length follows the
/// particle spacing.
pub fn dam_break_scene(n: usize) -> SceneConfig {
    let block = Vec3::new(0.8, 0.4, 0.4);
    let spacing = (block.x * block.y * block.z / n as f64).cbrt();
    let counts = (block / spacing).round();
    let extent = counts * spacing;
    SceneConfig {
        name: format!("dam_break_{n}"),
        domain: DomainConfig::Box {
            min: [0.0; 3],
            max: [extent.x / 0.8, extent.y, 2.0 * extent.z],
        },
        phases: vec![PhaseConfig {
            id: 0,
            density: 1000.0,
            viscosity: 0.001,
            surface_tension: 0.0,
            boundary_affinity: Vec::new(),
        }],
        blocks: vec![BlockConfig {
            shape: ShapeConfig::Box {
                min: [0.0; 3],
                max: extent.to_array(),
            },
            spacing,
            phase: 0,
            velocity: [0.0; 3],
            radial_velocity: 0.0,
            jitter: 0.01,
        }],
        params: ParamsConfig {
            epsilon: 0.5 * spacing,
            ..ParamsConfig::default()
        },
        output: OutputConfig::default(),
        seed: 7,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub particles: usize,
    pub steps: usize,
    /// Mean per-step stage times.
    pub diagram: Duration,
    pub evaluation: Duration,
    pub solve: Duration,
    pub step: Duration,
    pub newton_iters: f64,
    pub converged: usize,
}

fn mean(d: Duration, n: usize) -> Duration {
    d / n.max(1) as u32
}

/// Times `steps` simulation steps of the synthetic dam break at each size.
pub fn bench(sizes: &[usize], steps: usize) -> Result<Vec<BenchRow>, CliError> {
    let mut rows = Vec::new();
    for &n in sizes {
        let (sim, mut state) = dam_break_scene(n).build()?;
        sim.prepare(&mut state)?;
        let mut total = StageTimings::default();
        let mut wall = Duration::ZERO;
        let mut iters = 0;
        let mut converged = 0;
        for _ in 0..steps {
            let t0 = Instant::now();
            let r = match sim.step(&mut state) {
                Ok(r) => r,
                Err(FluidError::NonConvergence { report }) => *report,
                Err(e) => return Err(e.into()),
            };
            wall += t0.elapsed();
            total.diagram += r.timings.diagram;
            total.evaluation += r.timings.evaluation;
            total.solve += r.timings.solve;
            iters += r.newton_iters;
            converged += r.converged() as usize;
        }
        rows.push(BenchRow {
            particles: state.len(),
            steps,
            diagram: mean(total.diagram, steps),
            evaluation: mean(total.evaluation, steps),
            solve: mean(total.solve, steps),
            step: mean(wall, steps),
            newton_iters: iters as f64 / steps.max(1) as f64,
            converged,
        });
    }
    Ok(rows)
}
