use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use potflow::render::RenderMode;
use potflow::Vec3;
use potflow_cli::commands::{bench, render_frame, simulate, CliError, RenderCommand, SimulateOptions};
use potflow_cli::suites::{self, SuiteReport};

#[derive(Parser)]
#[command(name = "potflow", version, about = "Free-surface fluids on ball-restricted Laguerre diagrams")]
struct Cli {
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, env = "POTFLOW_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scene and write frames plus stats.csv.
    Simulate {
        config: PathBuf,
        /// Output directory (defaults to the scene's output.directory).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, short)]
        verbose: bool,
        /// Continue after a step fails to converge.
        #[arg(long)]
        best_effort: bool,
    },
    /// Render a frame file to a binary PPM image.
    Render {
        frame: PathBuf,
        /// Scene file for the domain (defaults to scene.json next to the frame).
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Raw)]
        mode: Mode,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        eye: Option<Vec3>,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        look_at: Option<Vec3>,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, default_value = "0,0,1")]
        up: Vec3,
        /// Vertical field of view in degrees.
        #[arg(long, default_value_t = 45.0)]
        fov: f64,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
        /// Smooth-union blend radius.
        #[arg(long)]
        blend: Option<f64>,
        #[arg(long, short, default_value = "frame.ppm")]
        out: PathBuf,
        /// Also write this many oriented surface samples (.xyz).
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an oracle suite.
    Validate {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Monte-Carlo samples per estimate (geometry suite).
        #[arg(long, default_value_t = 10_000_000)]
        samples: u64,
        /// Configurations or instances to draw.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Time simulation steps of synthetic dam breaks.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        steps: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Raw,
    Smooth,
    Depth,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Geometry,
    Solver,
    Fluid,
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(format!("expected x,y,z but got {s:?}")),
    }
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            steps,
            verbose,
            best_effort,
        } => {
            let s = simulate(&SimulateOptions {
                config,
                out,
                steps,
                verbose,
                best_effort,
            })?;
            let worst = s.rows.iter().map(|r| r.worst_rel_error).fold(0.0, f64::max);
            println!(
                "{} steps, {} frames in {}, worst relative volume error {worst:.3e}, {} unconverged",
                s.rows.len(),
                s.frames,
                s.out.display(),
                s.failed_steps
            );
        }
        Command::Render {
            frame,
            scene,
            mode,
            eye,
            look_at,
            up,
            fov,
            width,
            height,
            blend,
            out,
            points,
            seed,
        } => {
            let cmd = RenderCommand {
                frame,
                scene,
                mode: match mode {
                    Mode::Raw => RenderMode::Raw,
                    Mode::Smooth => RenderMode::Smooth,
                    Mode::Depth => RenderMode::Depth,
                },
                eye,
                look_at,
                up,
                fov_deg: fov,
                width,
                height,
                blend,
                out: out.clone(),
                points,
                seed,
            };
            let (_, samples) = render_frame(&cmd)?;
            println!("wrote {}", out.display());
            if let Some(n) = samples {
                println!("wrote {n} surface samples to {}", out.with_extension("xyz").display());
            }
        }
        Command::Validate {
            suite,
            samples,
            count,
            seed,
        } => {
            let report: SuiteReport = match suite {
                Suite::Geometry => {
                    let mut o = suites::geometry::GeometryOptions {
                        samples,
                        seed,
                        ..Default::default()
                    };
                    o.configs = count.unwrap_or(o.configs);
                    suites::geometry::run(&o)
                }
                Suite::Solver => {
                    let mut o = suites::solver::SolverOptions {
                        seed,
                        ..Default::default()
                    };
                    o.instances = count.unwrap_or(o.instances);
                    suites::solver::run(&o)
                }
                Suite::Fluid => {
                    let mut o = suites::fluid::FluidOptions {
                        seed,
                        ..Default::default()
                    };
                    o.steps = count.unwrap_or(o.steps);
                    suites::fluid::run(&o)
                }
            };
            println!("{report}");
            if !report.passed() {
                return Err(CliError::Validation);
            }
        }
        Command::Bench { sizes, steps } => {
            let rows = bench(&sizes, steps)?;
            println!(
                "{:>9} {:>12} {:>14} {:>10} {:>15} {:>8} {:>9}",
                "particles", "laguerre_ms", "evaluation_ms", "solve_ms", "complete_step_ms", "newton", "converged"
            );
            for r in &rows {
                println!(
                    "{:>9} {:>12.2} {:>14.2} {:>10.2} {:>15.2} {:>8.2} {:>6}/{}",
                    r.particles,
                    ms(r.diagram),
                    ms(r.evaluation),
                    ms(r.solve),
                    ms(r.step),
                    r.newton_iters,
                    r.converged,
                    r.steps
                );
            }
            if let (Some(a), Some(b)) = (rows.first(), rows.last()) {
                if rows.len() > 1 {
                    println!(
                        "step time ratio {}/{}: {:.2}",
                        b.particles,
                        a.particles,
                        b.step.as_secs_f64() / a.step.as_secs_f64()
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads;
    let result = if threads > 0 {
        potflow::par::with_threads(threads, || run(cli))
    } else {
        run(cli)
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::Validation) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
