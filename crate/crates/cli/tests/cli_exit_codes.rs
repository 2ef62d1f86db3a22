use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use potflow::io::FrameRecord;
use potflow_cli::commands::read_stats;

fn workdir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("potflow_cli_{}_{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn potflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_potflow"))
        .args(args)
        .env_remove("POTFLOW_THREADS")
        .output()
        .expect("spawn potflow")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Eight particles in the middle of the unit box.
fn tiny_scene(dir: &Path, params: &str) -> PathBuf {
    let path = dir.join("tiny.json");
    let text = format!(
        r#"{{
  "name": "tiny",
  "domain": {{"box": {{"min": [0.0, 0.0, 0.0], "max": [1.0, 1.0, 1.0]}}}},
  "phases": [{{"id": 0, "density": 1000.0, "viscosity": 0.001, "surface_tension": 0.0}}],
  "blocks": [{{"shape": {{"box": {{"min": [0.4, 0.4, 0.4], "max": [0.6, 0.6, 0.6]}}}}, "spacing": 0.1, "phase": 0}}],
  "params": {{{params}}},
  "output": {{"steps": 3, "frame_stride": 2, "directory": "frames"}},
  "seed": 1
}}"#
    );
    fs::write(&path, text).unwrap();
    path
}

const PARAMS: &str = r#""dt": 0.005, "epsilon": 0.05, "gravity": [0.0, 0.0, -9.81]"#;

#[test]
fn simulate_then_render_succeeds() {
    let dir = workdir("ok");
    let scene = tiny_scene(&dir, PARAMS);
    let frames = dir.join("out");
    let out = potflow(&["simulate", scene.to_str().unwrap(), "--out", frames.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let rows = read_stats(frames.join("stats.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.converged));
    for step in [0, 2, 3] {
        let f = FrameRecord::read(frames.join(format!("frame_{step:05}.potf"))).unwrap();
        assert_eq!(f.len(), 8);
        assert_eq!(f.step, step);
    }
    assert!(!frames.join("frame_00001.potf").exists());
    assert!(frames.join("scene.json").exists());

    let image = dir.join("last.ppm");
    let out = potflow(&[
        "--threads",
        "2",
        "render",
        frames.join("frame_00003.potf").to_str().unwrap(),
        "--width",
        "32",
        "--height",
        "24",
        "--points",
        "50",
        "--out",
        image.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read(&image).unwrap().starts_with(b"P6"));
    let xyz = fs::read_to_string(image.with_extension("xyz")).unwrap();
    assert_eq!(xyz.lines().count(), 50);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verbose_prints_newton_iterations() {
    let dir = workdir("verbose");
    let scene = tiny_scene(&dir, PARAMS);
    let frames = dir.join("out");
    let out = potflow(&["simulate", scene.to_str().unwrap(), "--out", frames.to_str().unwrap(), "--steps", "1", "-v"]);
    assert_eq!(code(&out), 0);
    let log = String::from_utf8_lossy(&out.stderr);
    let iteration = log.lines().find(|l| l.starts_with("  ")).expect("an iteration line");
    assert_eq!(iteration.trim().split(", ").count(), 4, "{iteration}");
    assert!(log.lines().any(|l| l.starts_with("step     1")), "{log}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = workdir("config");
    let missing = dir.join("missing.json");
    assert_eq!(code(&potflow(&["simulate", missing.to_str().unwrap()])), 2);

    let broken = dir.join("broken.json");
    fs::write(&broken, "{ \"name\": ").unwrap();
    assert_eq!(code(&potflow(&["simulate", broken.to_str().unwrap()])), 2);

    let negative = tiny_scene(&dir, r#""dt": -0.005, "epsilon": 0.05, "gravity": [0.0, 0.0, 0.0]"#);
    assert_eq!(code(&potflow(&["simulate", negative.to_str().unwrap()])), 2);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn non_convergence_exits_with_3_unless_best_effort() {
    let dir = workdir("nonconv");
    let strict = format!(r#"{PARAMS}, "ot_tolerance": 1e-15, "max_newton": 1"#);
    let scene = tiny_scene(&dir, &strict);
    let frames = dir.join("out");
    let out = potflow(&["simulate", scene.to_str().unwrap(), "--out", frames.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    let out = potflow(&["simulate", scene.to_str().unwrap(), "--out", frames.to_str().unwrap(), "--best-effort"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_stats(frames.join("stats.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| !r.converged));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn usage_errors_and_validation() {
    assert_eq!(code(&potflow(&["simulate"])), 2);
    assert_eq!(code(&potflow(&["frobnicate"])), 2);
    assert_eq!(code(&potflow(&["render", "/nonexistent/frame.potf"])), 1);

    let out = potflow(&["validate", "--suite", "fluid", "--count", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn exit_codes_map_error_kinds() {
    use potflow_cli::commands::CliError;
    assert_eq!(CliError::NonConvergence { step: 1, worst: 0.5 }.exit_code(), 3);
    assert_eq!(CliError::Validation.exit_code(), 4);
    assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
}
