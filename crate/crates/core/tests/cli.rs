use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tactile_rom::mpm::io::read_trajectory;
use tactile_rom::mpm::*;
use tactile_rom::render::SensorConfig;

fn tiny_press() -> SimConfig {
    let mut c = SimConfig::with_fitted_grid([6e-3, 6e-3, 2e-3], 1e-3, [4, 4, 2], 2, 4);
    c.indenter = Indenter {
        shape: IndenterShape::Sphere { radius: 2e-3 },
        ..Indenter::default()
    };
    c.press.depth = 0.2e-3;
    c.press.speed = 0.05;
    c.press.hold_time = 1e-3;
    c.press.frame_interval = 1e-3;
    c.damping = 1000.0;
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tactile-rom"))
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, value: &Value) {
    std::fs::write(dir.join(name), serde_json::to_vec_pretty(value).unwrap()).unwrap();
}

#[test]
fn zero_frames_writes_a_header_only_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "sim.json", &json!({ "sim": tiny_press() }));
    let out = run(dir.path(), &["simulate", "--config", "sim.json", "--frames", "0", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = read_trajectory(&dir.path().join("o/trajectory.traj")).unwrap();
    assert!(t.frames.is_empty());
    let summary: Value = serde_json::from_slice(&std::fs::read(dir.path().join("o/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["frames"], 0);
}

#[test]
fn simulate_writes_every_frame_and_reports_displacement() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny_press();
    write(dir.path(), "sim.json", &json!({ "sim": c }));
    let out = run(dir.path(), &["simulate", "--config", "sim.json", "--deterministic", "--out", "o"]);
    assert!(out.status.success());
    let t = read_trajectory(&dir.path().join("o/trajectory.traj")).unwrap();
    assert_eq!(t.frames.len(), c.press.frame_count());
    let summary: Value = serde_json::from_slice(&std::fs::read(dir.path().join("o/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["wall_time_s"], 0.0);
    assert!(summary["max_displacement"].as_f64().unwrap() > 0.0);
}

#[test]
fn cfl_violation_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny_press();
    c.dt = Some(10.0 * c.cfl_limit());
    write(dir.path(), "sim.json", &json!({ "sim": c }));
    let out = run(dir.path(), &["simulate", "--config", "sim.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CFL"));
}

#[test]
fn unknown_keys_and_bad_arguments_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut sim = serde_json::to_value(tiny_press()).unwrap();
    sim["press"]["velocity"] = json!(1.0);
    write(dir.path(), "sim.json", &json!({ "sim": sim }));
    let out = run(dir.path(), &["simulate", "--config", "sim.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sim.json:"));
    assert_eq!(run(dir.path(), &["simulate"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["teleport", "--config", "sim.json"]).status.code(), Some(2));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate", "--config", "absent.json"]);
    assert_eq!(out.status.code(), Some(4));
    write(
        dir.path(),
        "eval.json",
        &json!({ "depth": { "reference": "nowhere", "prediction": "nowhere" } }),
    );
    assert_eq!(run(dir.path(), &["eval", "--config", "eval.json"]).status.code(), Some(4));
}

#[test]
fn invalid_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "sim.json", &json!({ "sim": tiny_press() }));
    let out = Command::new(env!("CARGO_BIN_EXE_tactile-rom"))
        .current_dir(dir.path())
        .env("TACTILE_ROM_THREADS", "zero")
        .args(["simulate", "--config", "sim.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rendering_a_trajectory_against_itself_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny_press();
    let centre = c.elastomer_center();
    write(dir.path(), "sim.json", &json!({ "sim": c }));
    assert!(run(dir.path(), &["simulate", "--config", "sim.json", "--deterministic", "--out", "sim"]).status.success());
    let sensor = SensorConfig::covering([centre.x, centre.y], 32, 32, 0.15e-3, 0.0);
    write(
        dir.path(),
        "render.json",
        &json!({ "trajectory": "sim/trajectory.traj", "sim": c, "sensor": sensor }),
    );
    for out in ["a", "b"] {
        let r = run(dir.path(), &["render", "--config", "render.json", "--frames", "3", "--out", out]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let frames: Value = serde_json::from_slice(&std::fs::read(dir.path().join("a/render.json")).unwrap()).unwrap();
    assert_eq!(frames.as_array().unwrap().len(), 3);
    write(
        dir.path(),
        "eval.json",
        &json!({
            "depth": { "reference": "a", "prediction": "b" },
            "trajectories": { "reference": "sim/trajectory.traj", "prediction": "sim/trajectory.traj", "sim": c },
        }),
    );
    let r = run(dir.path(), &["eval", "--config", "eval.json", "--deterministic", "--out", "e"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(dir.path().join("e/image_metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let cols: Vec<f64> = row.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert!((cols[0] - 1.0).abs() < 1e-12, "{row}");
        assert_eq!(cols[1], 0.0);
    }
    let chamfer = std::fs::read_to_string(dir.path().join("e/chamfer.csv")).unwrap();
    assert!(chamfer.starts_with("frame,chamfer_mm2"));
    assert!(chamfer.lines().skip(1).all(|l| l.ends_with(",0.000000000e0")));
}

#[test]
fn ablation_table_has_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let mut coarse = tiny_press();
    coarse.dt = Some(0.9 * coarse.cfl_limit());
    let mut fine = coarse.refined(0.5e-3, [8, 8, 4]);
    fine.dt = Some(0.9 * fine.cfl_limit());
    let scenarios = json!([
        { "id": 0, "offset": [0.0, 0.0], "depth": 0.2e-3 },
        { "id": 1, "offset": [0.5e-3, 0.0], "depth": 0.15e-3 },
    ]);
    write(
        dir.path(),
        "data.json",
        &json!({ "dataset": { "fine": fine, "coarse": coarse, "scenarios": scenarios } }),
    );
    assert!(run(dir.path(), &["gen-data", "--config", "data.json", "--deterministic", "--out", "data"]).status.success());
    for (name, latent, v) in [("full", 4, 0.4), ("no_physics", 4, 0.0), ("r2", 2, 0.4)] {
        write(
            dir.path(),
            "train.json",
            &json!({ "dataset": "data", "train": {
                "hidden": [16], "latent": latent, "epochs": 2, "batch_size": 4,
                "weights": { "rec": 1.0, "v": v, "f": v, "multiscale": 0.0 },
                "validation": [1],
            }}),
        );
        let r = run(dir.path(), &["train", "--config", "train.json", "--deterministic", "--out", name]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let mut setup_fine = fine.clone();
    setup_fine.press.offset = [0.5e-3, 0.0];
    setup_fine.press.depth = 0.15e-3;
    let mut setup_coarse = coarse.clone();
    setup_coarse.press.offset = [0.5e-3, 0.0];
    setup_coarse.press.depth = 0.15e-3;
    write(
        dir.path(),
        "ablate.json",
        &json!({ "ablation": {
            "setup": { "fine": setup_fine, "coarse": setup_coarse },
            "reference": "data/scenario_1/fine.traj",
            "variants": [
                { "name": "full", "checkpoint": "full/model.romw" },
                { "name": "no_physics", "checkpoint": "no_physics/model.romw" },
                { "name": "no_multiscale", "checkpoint": "full/model.romw" },
                { "name": "r2", "checkpoint": "r2/model.romw" },
            ],
            "frames": 3,
        }}),
    );
    let r = run(dir.path(), &["eval", "--config", "ablate.json", "--ablate", "--out", "table"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(dir.path().join("table/ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,time_s,peak_rss_mb,chamfer_mm2,frames");
    assert_eq!(lines.len(), 5);
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["full", "no_physics", "no_multiscale", "r2"]);
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        assert!(cols[1].parse::<f64>().unwrap() > 0.0, "timed outside deterministic mode: {line}");
        assert!(cols[3].parse::<f64>().unwrap().is_finite());
        assert_eq!(cols[4], "3");
    }
    // The same checkpoint under two names scores identically.
    let score = |l: &str| l.split(',').nth(3).unwrap().to_string();
    assert_eq!(score(lines[1]), score(lines[3]));
}
