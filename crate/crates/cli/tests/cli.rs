use std::path::Path;
use std::process::{Command, Output};

use nalgebra::Vector3;
use raypose::bench::{generate_city, generate_scene, SceneConfig};
use raypose::geometry::{Correspondence, Ray};
use raypose::io;

fn raypose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raypose"))
        .args(args)
        .env_remove("RAYPOSE_THREADS")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Rays from a single center: scale is unobservable.
fn central_file(dir: &Path) -> std::path::PathBuf {
    let (cs, truth) = generate_scene(&SceneConfig {
        n_correspondences: 8,
        seed: 3,
        ..SceneConfig::default()
    })
    .unwrap();
    let central: Vec<Correspondence<f64>> = cs
        .iter()
        .map(|c| {
            let local = truth.apply(&c.point);
            Correspondence::new(Ray::new(Vector3::zeros(), local).unwrap(), c.point).unwrap()
        })
        .collect();
    let path = dir.join("central.json");
    io::save_correspondences(&path, &central).unwrap();
    path
}

#[test]
fn solve_central_needs_fixed_scale() {
    let dir = tempfile::tempdir().unwrap();
    let input = central_file(dir.path());
    let free = raypose(&["solve", "--input", path_str(&input)]);
    assert_eq!(free.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&free.stderr).contains("scale fixed"));

    let fixed = raypose(&["solve", "--input", path_str(&input), "--fix-scale"]);
    assert_eq!(fixed.status.code(), Some(0), "{}", String::from_utf8_lossy(&fixed.stderr));
    let record: io::SolveRecord = serde_json::from_slice(&fixed.stdout).unwrap();
    assert_eq!(record.best.scale, 1.0);
    assert!(!record.candidates.is_empty());
}

#[test]
fn solve_writes_to_out() {
    let dir = tempfile::tempdir().unwrap();
    let (cs, truth) = generate_scene(&SceneConfig {
        n_correspondences: 20,
        seed: 4,
        ..SceneConfig::default()
    })
    .unwrap();
    let input = dir.path().join("c.json");
    io::save_correspondences(&input, &cs).unwrap();
    let out = dir.path().join("solution.json");
    let run = raypose(&["solve", "--input", path_str(&input), "--out", path_str(&out)]);
    assert_eq!(run.status.code(), Some(0));
    assert!(run.stdout.is_empty());
    let record: io::SolveRecord = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((record.best.scale - truth.scale).abs() <= 1e-9 * truth.scale);
}

#[test]
fn merge_two_halves() {
    let dir = tempfile::tempdir().unwrap();
    let city = generate_city(2, 15, 0.3, 0.0, 5).unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    io::save_reconstruction(&a, &city.subsets[0].camera).unwrap();
    io::save_reconstruction(&b, &city.subsets[1].camera).unwrap();
    let out = dir.path().join("m.json");
    let run = raypose(&["merge", path_str(&a), path_str(&b), "--out", path_str(&out)]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let merged = io::load_reconstruction(&out).unwrap().value;
    assert_eq!(merged.cameras().len(), 30);
    let report: io::MergeRecord =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json.report.json")).unwrap()).unwrap();
    assert!(report.failed_members.is_empty());
    assert_eq!(report.transform_log.len(), 2);
}

#[test]
fn align_reports_transform_or_failure() {
    let dir = tempfile::tempdir().unwrap();
    let city = generate_city(3, 10, 0.3, 0.0, 6).unwrap();
    let paths: Vec<_> = (0..3)
        .map(|i| {
            let p = dir.path().join(format!("s{i}.json"));
            io::save_reconstruction(&p, &city.subsets[i].camera).unwrap();
            p
        })
        .collect();
    let ok = raypose(&["align", path_str(&paths[0]), path_str(&paths[1])]);
    assert_eq!(ok.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    let expected = city.true_relative(1, 0);
    assert!((v["other_to_base"]["scale"].as_f64().unwrap() - expected.scale).abs() <= 1e-6 * expected.scale);

    let disjoint = raypose(&["align", path_str(&paths[0]), path_str(&paths[2])]);
    assert_eq!(disjoint.status.code(), Some(1));
}

#[test]
fn bench_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let r = raypose(&[
            "bench",
            "--experiment",
            "noise",
            "--seed",
            "7",
            "--config",
            "trials=20",
            "--config",
            "levels=0,1,2",
            "--out",
            path_str(&out),
        ]);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
        assert!(dir.path().join(format!("{name}.meta.json")).exists());
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with(raypose::bench::CSV_HEADER));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn stability_smoke_with_thread_env() {
    let out = Command::new(env!("CARGO_BIN_EXE_raypose"))
        .args(["stability", "--trials", "20"])
        .env("RAYPOSE_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("stability,gdls+++,4,"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fraction_below_1e-9"));
}

#[test]
fn usage_errors_exit_2() {
    let unknown = raypose(&["solve", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));

    assert_eq!(raypose(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(raypose(&["bench", "--experiment", "noise", "--config", "nope=1"]).status.code(), Some(2));
    assert_eq!(raypose(&["solve", "--input", "/nonexistent/c.json"]).status.code(), Some(2));
}

#[test]
fn integrity_error_names_the_id() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"version": 1, "cameras": [{"id": 1, "center": [0,0,0], "orientation": [1,0,0,0]}],
            "points": [], "observations": [{"camera_id": 1, "point_id": 31337, "direction": [0,0,1]}]}"#,
    )
    .unwrap();
    let out = dir.path().join("m.json");
    let run = raypose(&["merge", path_str(&bad), "--out", path_str(&out)]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("31337"));
}
