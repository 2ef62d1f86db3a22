//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails. `POTFLOW_CRITERIA=3,9` runs a subset;
//! `POTFLOW_BLESS=1` rewrites the golden depth image.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use potflow::geom::{frame, ray_ball, ConvexCell, Vec3};
use potflow::io::{FrameRecord, SceneConfig};
use potflow::render::{render, Camera, Image, Ray, RenderMode, RenderOptions, RenderScene, TraverseMode};
use potflow::Exec;
use potflow_cli::commands::{bench, read_stats, render_frame, simulate, RenderCommand, SimulateOptions, StatsRow};
use potflow_cli::suites::{fluid, geometry, solver};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

struct Outcome {
    id: u32,
    passed: bool,
    summary: String,
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scene(name: &str) -> PathBuf {
    repo().join("scenes").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("potflow_acceptance_{}", std::process::id())).join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

/// Writes a report line to the stderr handle directly, which the test
/// harness does not capture.
fn emit(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn run_binary(config: &Path, out: &Path, threads: usize) -> (bool, Duration) {
    let t0 = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_potflow"))
        .args(["--threads", &threads.to_string(), "simulate"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .status()
        .expect("spawn potflow");
    (status.success(), t0.elapsed())
}

fn criterion_1() -> Outcome {
    let r = geometry::run(&geometry::GeometryOptions::default());
    let passed = r.passed() && r.elapsed < Duration::from_secs(600);
    let get = |n: &str| r.check(n).unwrap();
    Outcome {
        id: 1,
        passed,
        summary: format!(
            "geometry oracles: closed-form rel err {:.2e} (<= 1e-10), beyond 3 sigma {:.4} (<= 0.01; {}), max z {:.2} (< 5), {:.0}s (< 600s)",
            get("closed_form_rel_error").measured,
            get("mc_fraction_beyond_3sigma").measured,
            get("mc_fraction_beyond_3sigma").detail,
            get("mc_max_z").measured,
            secs(r.elapsed)
        ),
    }
}

fn criterion_2() -> Outcome {
    let r = solver::run(&solver::SolverOptions {
        newton_problems: 0,
        ..Default::default()
    });
    let g = r.check("gradient_fd_rel_error").unwrap();
    let h = r.check("hessian_fd_rel_error").unwrap();
    Outcome {
        id: 2,
        passed: g.passed && h.passed && r.elapsed < Duration::from_secs(300),
        summary: format!(
            "derivatives vs central differences: gradient {:.2e}, Hessian {:.2e} (<= 1e-4; {}), {:.1}s (< 300s)",
            g.measured,
            h.measured,
            g.detail,
            secs(r.elapsed)
        ),
    }
}

struct DamRuns {
    one: PathBuf,
    eight: PathBuf,
    t_one: Duration,
    ok_one: bool,
    ok_eight: bool,
}

fn dam_runs() -> DamRuns {
    let one = scratch("dam_t1");
    let eight = scratch("dam_t8");
    let (ok_one, t_one) = run_binary(&scene("dam_break.json"), &one, 1);
    let (ok_eight, _) = run_binary(&scene("dam_break.json"), &eight, 8);
    DamRuns {
        one,
        eight,
        t_one,
        ok_one,
        ok_eight,
    }
}

fn particles_in(dir: &Path) -> usize {
    FrameRecord::read(dir.join("frame_00000.potf")).map_or(0, |f| f.len())
}

fn criterion_3(runs: &DamRuns) -> Outcome {
    let rows = read_stats(runs.one.join("stats.csv")).unwrap_or_default();
    let n = particles_in(&runs.one);
    let worst = rows.iter().map(|r| r.worst_rel_error).fold(0.0, f64::max);
    let iters = rows.iter().map(|r| r.newton_iters).max().unwrap_or(usize::MAX);
    let converged = rows.iter().filter(|r| r.converged).count();
    Outcome {
        id: 3,
        passed: runs.ok_one
            && n == 2000
            && rows.len() == 100
            && converged == 100
            && iters <= 100
            && worst <= 0.01
            && runs.t_one < Duration::from_secs(900),
        summary: format!(
            "dam break {n} cells: {converged}/{} steps converged, max Newton iterations {iters} (<= 100), worst cell error {worst:.3e} (<= 0.01), {:.0}s (< 900s)",
            rows.len(),
            secs(runs.t_one)
        ),
    }
}

fn criterion_4() -> Outcome {
    let out = scratch("splash");
    let t0 = Instant::now();
    let s = simulate(&SimulateOptions {
        config: scene("splash.json"),
        out: Some(out.clone()),
        best_effort: true,
        ..Default::default()
    });
    let n = particles_in(&out);
    match s {
        Ok(s) => {
            let steps = s.rows.len();
            Outcome {
                id: 4,
                passed: n == 1000 && s.rows.len() == 100 && s.failed_steps == 0,
                summary: format!(
                    "explosive splash {n} cells: {} of {steps} steps converged, {} failures (0 allowed), {:.0}s",
                    steps - s.failed_steps,
                    s.failed_steps,
                    secs(t0.elapsed())
                ),
            }
        }
        Err(e) => Outcome {
            id: 4,
            passed: false,
            summary: format!("explosive splash aborted: {e}"),
        },
    }
}

fn criterion_5(runs: &DamRuns) -> Outcome {
    let rows = read_stats(runs.one.join("stats.csv")).unwrap_or_default();
    let vol = rows
        .iter()
        .map(|r: &StatsRow| (r.total_volume - r.prescribed_volume).abs() / r.prescribed_volume)
        .fold(0.0, f64::max);
    let drift = fluid::viscosity_drift(100, 1);
    Outcome {
        id: 5,
        passed: rows.len() == 100 && vol < 0.01 && drift < 1e-8,
        summary: format!(
            "conservation: max total-volume deviation {vol:.3e} over {} dam-break steps (< 0.01), viscosity-only momentum drift {drift:.3e} per step (< 1e-8)",
            rows.len()
        ),
    }
}

fn criterion_6() -> Outcome {
    let out = scratch("droplet");
    let t0 = Instant::now();
    let s = match simulate(&SimulateOptions {
        config: scene("droplet.json"),
        out: Some(out.clone()),
        best_effort: true,
        ..Default::default()
    }) {
        Ok(s) => s,
        Err(e) => {
            return Outcome {
                id: 6,
                passed: false,
                summary: format!("droplet aborted: {e}"),
            }
        }
    };
    let elapsed = t0.elapsed();
    let n = particles_in(&out);
    let volume: f64 = s.rows.first().map_or(0.0, |r| r.prescribed_volume);
    let sphere = (36.0 * PI * volume * volume).cbrt();
    let mut worst_rise = 0.0f64;
    let mut worst_step = 0;
    for w in s.rows.windows(2) {
        if w[1].step > 10 {
            let rise = w[1].free_surface_area / w[0].free_surface_area - 1.0;
            if rise > worst_rise {
                worst_rise = rise;
                worst_step = w[1].step;
            }
        }
    }
    let last = s.rows.last().map_or(f64::INFINITY, |r| r.free_surface_area);
    let ratio = last / sphere;
    Outcome {
        id: 6,
        passed: n == 500
            && s.rows.len() == 2000
            && worst_rise <= 0.005
            && (ratio - 1.0).abs() <= 0.05
            && elapsed < Duration::from_secs(1200),
        summary: format!(
            "zero-g droplet {n} cells, {} steps: largest area rise after step 10 {:.3}% at step {worst_step} (<= 0.5%), final area / sphere area {ratio:.4} (within 5%), {} unconverged, {:.0}s (< 1200s)",
            s.rows.len(),
            100.0 * worst_rise,
            s.failed_steps,
            secs(elapsed)
        ),
    }
}

fn criterion_7() -> Outcome {
    match bench(&[1000, 2000, 4000, 8000], 10) {
        Ok(rows) => {
            for r in &rows {
                emit(&format!(
                    "    bench {:5} particles: laguerre {:.1} ms, evaluation {:.1} ms, solve {:.1} ms, step {:.1} ms, {:.1} Newton iterations",
                    r.particles,
                    1e3 * secs(r.diagram),
                    1e3 * secs(r.evaluation),
                    1e3 * secs(r.solve),
                    1e3 * secs(r.step),
                    r.newton_iters
                ));
            }
            let ratio = secs(rows[3].step) / secs(rows[0].step);
            let staged = rows.iter().all(|r| r.diagram > Duration::ZERO && r.evaluation > Duration::ZERO);
            Outcome {
                id: 7,
                passed: ratio < 12.0 && staged,
                summary: format!(
                    "scaling: t({})/t({}) = {ratio:.2} (< 12), per-stage breakdown reported",
                    rows[3].particles, rows[0].particles
                ),
            }
        }
        Err(e) => Outcome {
            id: 7,
            passed: false,
            summary: format!("bench failed: {e}"),
        },
    }
}

/// Fluid length along `[t0, t1]` by brute force: for each ball the ray
/// meets, the part of its chord where its site is power-nearest.
fn oracle_fluid_length(positions: &[Vec3], psi: &[f64], ray: &Ray, t0: f64, t1: f64) -> f64 {
    let mut total = 0.0;
    for (i, (&p, &w)) in positions.iter().zip(psi).enumerate() {
        let Some((a, b)) = ray_ball(ray.origin, ray.dir, p, w) else {
            continue;
        };
        let (mut lo, mut hi) = (a.max(t0), b.min(t1));
        for (j, (&q, &v)) in positions.iter().zip(psi).enumerate() {
            if j == i || lo >= hi {
                continue;
            }
            // pow_i - pow_j = c0 + c1 t <= 0 inside cell i.
            let c1 = 2.0 * ray.dir.dot(q - p);
            let c0 = 2.0 * ray.origin.dot(q - p) + p.length_squared() - q.length_squared() - w + v;
            if c1 > 0.0 {
                hi = hi.min(-c0 / c1);
            } else if c1 < 0.0 {
                lo = lo.max(-c0 / c1);
            } else if c0 > 0.0 {
                hi = lo;
            }
        }
        total += (hi - lo).max(0.0);
    }
    total
}

fn silhouette_error() -> f64 {
    let c = Vec3::new(0.5, 0.5, 0.45);
    let r2: f64 = 0.04;
    let domain = ConvexCell::axis_box(Vec3::ZERO, Vec3::ONE);
    let scene = RenderScene::new(vec![c], vec![r2], domain, Exec::Sequential).unwrap();
    let eye = Vec3::new(1.4, -1.1, 0.9);
    let cam = Camera::new(eye, Vec3::splat(0.5), Vec3::Z, 0.6, 160, 120).unwrap();
    let (img, _) = render(&scene, &cam, &RenderOptions::default());
    let bg = RenderOptions::default().background;
    let hit = |x: usize, y: usize| img.get(x, y) != bg;
    // Tangency circle seen from the eye.
    let d = c - eye;
    let l = d.length();
    let rad = r2.sqrt();
    let center = c - (rad * rad / l) * (d / l);
    let rho = rad * (1.0 - rad * rad / (l * l)).sqrt();
    let (e1, e2) = frame(d / l);
    let curve: Vec<(f64, f64)> = (0..4000)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / 4000.0;
            cam.project(center + rho * (a.cos() * e1 + a.sin() * e2)).unwrap()
        })
        .collect();
    let mut worst = 0.0f64;
    for y in 0..img.height {
        for x in 0..img.width {
            let edge = hit(x, y)
                && [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|&(dx, dy)| {
                    let (u, v) = (x as i64 + dx, y as i64 + dy);
                    u < 0 || v < 0 || u >= img.width as i64 || v >= img.height as i64 || !hit(u as usize, v as usize)
                });
            if edge {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let dist = curve.iter().map(|(u, v)| (u - px).hypot(v - py)).fold(f64::INFINITY, f64::min);
                worst = worst.max(dist);
            }
        }
    }
    worst
}

fn criterion_8() -> Outcome {
    let out = scratch("render");
    let summary = simulate(&SimulateOptions {
        config: scene("dam_break.json"),
        out: Some(out.clone()),
        steps: Some(20),
        ..Default::default()
    });
    if let Err(e) = summary {
        return Outcome {
            id: 8,
            passed: false,
            summary: format!("could not produce a frame: {e}"),
        };
    }
    let frame_path = out.join("frame_00020.potf");
    let frame = FrameRecord::read(&frame_path).unwrap();
    let cfg = SceneConfig::load(out.join("scene.json")).unwrap();
    let domain = ConvexCell::from_halfspaces(&cfg.planes().unwrap()).unwrap();
    let scene = RenderScene::new(frame.positions.clone(), frame.psi.clone(), domain, Exec::Parallel).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut chord_err, mut fluid_err, mut aborted) = (0.0f64, 0.0f64, 0);
    for _ in 0..10_000 {
        let o = Vec3::new(rng.random_range(-0.2..1.2), rng.random_range(-0.2..0.6), rng.random_range(-0.2..1.0));
        let d = Vec3::from_array(UnitSphere.sample(&mut rng));
        let ray = Ray::new(o, d);
        let tr = scene.traverse(&ray, TraverseMode::Volume);
        if tr.aborted {
            aborted += 1;
            continue;
        }
        let Some((t0, t1)) = scene.domain_interval(&ray) else {
            chord_err = chord_err.max(tr.length());
            continue;
        };
        chord_err = chord_err.max((tr.length() - (t1 - t0)).abs());
        let expect = oracle_fluid_length(&frame.positions, &frame.psi, &ray, t0, t1);
        fluid_err = fluid_err.max((tr.fluid_length() - expect).abs());
    }

    let silhouette = silhouette_error();

    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/dam_break_depth.ppm");
    let image = out.join("depth.ppm");
    let cmd = RenderCommand {
        frame: frame_path,
        mode: RenderMode::Depth,
        eye: Some(Vec3::new(1.6, -1.2, 1.0)),
        look_at: Some(Vec3::new(0.5, 0.2, 0.2)),
        width: 160,
        height: 120,
        out: image.clone(),
        ..Default::default()
    };
    let rendered = render_frame(&cmd).map(|(img, _)| img);
    if std::env::var("POTFLOW_BLESS").is_ok_and(|v| v == "1") {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::copy(&image, &golden).unwrap();
    }
    let golden_diff = match (&rendered, fs::read(&golden), fs::read(&image)) {
        (Ok(_), Ok(a), Ok(b)) if a == b => Some(0),
        (Ok(img), Ok(a), _) => Image::read_ppm(&a[..]).ok().map(|g| g.diff_count(img)).or(Some(usize::MAX)),
        _ => None,
    };
    let golden_ok = golden_diff == Some(0);
    Outcome {
        id: 8,
        passed: chord_err <= 1e-8 && fluid_err <= 1e-8 && aborted == 0 && silhouette <= 1.0 && golden_ok,
        summary: format!(
            "renderer: 1e4 rays, chord sum error {chord_err:.2e}, fluid length error {fluid_err:.2e} (<= 1e-8), {aborted} aborted; silhouette distance {silhouette:.3} px (<= 1); golden depth image {}",
            match golden_diff {
                Some(0) => "bit-exact".to_owned(),
                Some(usize::MAX) => "unreadable".to_owned(),
                Some(n) => format!("differs in {n} pixels"),
                None => "missing".to_owned(),
            }
        ),
    }
}

fn criterion_9(runs: &DamRuns) -> Outcome {
    let a = read_stats(runs.one.join("stats.csv")).unwrap_or_default();
    let b = read_stats(runs.eight.join("stats.csv")).unwrap_or_default();
    let worst = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x.worst_rel_error - y.worst_rel_error).abs())
        .fold(0.0, f64::max);
    let names: BTreeSet<_> = fs::read_dir(&runs.one)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.file_name()))
        .filter(|n| n.to_string_lossy().ends_with(".potf"))
        .collect();
    let identical = names
        .iter()
        .filter(|n| fs::read(runs.one.join(n)).ok() == fs::read(runs.eight.join(n)).ok())
        .count();
    Outcome {
        id: 9,
        passed: runs.ok_one
            && runs.ok_eight
            && a.len() == 100
            && a.len() == b.len()
            && worst < 1e-12
            && identical == names.len()
            && names.len() == 101,
        summary: format!(
            "determinism 1 vs 8 threads: max worst_rel_error difference {worst:.1e} (< 1e-12), {identical}/{} frame files bit-identical",
            names.len()
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let wanted: BTreeSet<u32> = match std::env::var("POTFLOW_CRITERIA") {
        Ok(s) => s.split(',').filter_map(|t| t.trim().parse().ok()).collect(),
        Err(_) => (1..=9).collect(),
    };
    let mut outcomes = Vec::new();
    let mut report = |o: Outcome| {
        emit(&format!("criterion {} {} {}", o.id, if o.passed { "PASS" } else { "FAIL" }, o.summary));
        outcomes.push(o);
    };
    if wanted.contains(&1) {
        report(criterion_1());
    }
    if wanted.contains(&2) {
        report(criterion_2());
    }
    let runs = [3, 5, 9].iter().any(|k| wanted.contains(k)).then(dam_runs);
    if let (true, Some(r)) = (wanted.contains(&3), &runs) {
        report(criterion_3(r));
    }
    if wanted.contains(&4) {
        report(criterion_4());
    }
    if let (true, Some(r)) = (wanted.contains(&5), &runs) {
        report(criterion_5(r));
    }
    if wanted.contains(&6) {
        report(criterion_6());
    }
    if wanted.contains(&7) {
        report(criterion_7());
    }
    if wanted.contains(&8) {
        report(criterion_8());
    }
    if let (true, Some(r)) = (wanted.contains(&9), &runs) {
        report(criterion_9(r));
    }
    let _ = fs::remove_dir_all(std::env::temp_dir().join(format!("potflow_acceptance_{}", std::process::id())));
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
