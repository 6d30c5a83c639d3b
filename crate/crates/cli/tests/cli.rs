use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_marsbench"));
    c.env("RUST_LOG", "warn");
    c
}

fn demo(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/demo").join(file)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "terrain": { "width": 41, "height": 41, "cell_size": 0.5, "z_scale": 2.0 },
        "rocks": [{ "density": 0.02, "diameter_min": 0.8, "diameter_max": 2.0, "seed": 1 }],
        "path": { "waypoints": [[5.0, 5.0], [15.0, 6.0], [9.0, 14.0]], "closed": true, "speed": 2.0 },
        "sensor": { "kind": "lidar", "az_fov": 360.0, "az_res": 1.0, "el_fov": 32.0, "el_res": 2.0, "range_noise_sigma": 0.0 },
        "eval": { "segment_len": 5.0 },
        "seed": 5
    });
    let p = dir.join("config.json");
    fs::write(&p, cfg.to_string()).unwrap();
    p
}

#[test]
fn evaluate_identical_files_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let gt = demo("groundtruth.tum");
    let o = run(bin()
        .args(["--out"])
        .arg(dir.path().join("run"))
        .args(["--json", "evaluate", "--gt"])
        .arg(&gt)
        .arg("--est")
        .arg(&gt));
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report["ate_rms"].as_f64().unwrap() <= 1e-12);
    assert!(report["drift_median"].as_f64().unwrap() <= 1e-12);
    for f in ["report.json", "ate.csv", "drift.csv", "ate_vs_distance.dat", "drift_vs_distance.dat"] {
        assert!(dir.path().join("run/eval").join(f).is_file(), "{f}");
    }
}

#[test]
fn evaluate_flags_override_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin()
        .arg("--out")
        .arg(dir.path())
        .args(["--json", "evaluate", "--segment-len", "5", "--align-fraction", "1", "--max-dt", "0.01", "--gt"])
        .arg(demo("groundtruth.tum"))
        .arg("--est")
        .arg(demo("estimate.tum")));
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["metadata"]["segment_len"], 5.0);
    assert_eq!(r["metadata"]["align_fraction"], 1.0);
    assert_eq!(r["metadata"]["max_dt"], 0.01);
    assert_eq!(r["alignment"]["pairs_used"], r["metadata"]["pairs"]);
    assert!(r["drift_median"].as_f64().unwrap() < 0.02);

    let human = run(bin().arg("--out").arg(dir.path()).arg("evaluate").arg("--gt").arg(demo("groundtruth.tum")).arg("--est").arg(demo("estimate.tum")));
    assert!(human.status.success());
    assert!(stdout(&human).contains("ATE rms"));
}

#[test]
fn invalid_parameters_fail_with_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin()
        .arg("--out")
        .arg(dir.path())
        .args(["evaluate", "--segment-len", "-1", "--gt"])
        .arg(demo("groundtruth.tum"))
        .arg("--est")
        .arg(demo("estimate.tum")));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/eval/segment_len"), "{}", stderr(&o));

    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"eval": {"segment_length": 10}}"#).unwrap();
    let o = run(bin().arg("--config").arg(&cfg).arg("gen-path"));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("segment_length"), "{}", stderr(&o));
}

#[test]
fn missing_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin().arg("--out").arg(dir.path()).arg("simulate"));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing prerequisite"), "{}", stderr(&o));
    let o = run(bin().arg("--out").arg(dir.path()).args(["evaluate", "--gt", "/nonexistent.tum", "--est", "/nonexistent.tum"]));
    assert!(!o.status.success());
}

#[test]
fn stages_skip_until_forced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let step = |extra: &[&str]| {
        let mut c = bin();
        c.arg("--config").arg(&cfg).arg("--out").arg(&out).args(extra);
        run(&mut c)
    };
    let a = step(&["gen-terrain"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(stdout(&a).contains("ran            gen_terrain"));
    for f in ["world.obj", "world.stl", "world.sdf", "rocks.json"] {
        assert!(out.join("world").join(f).is_file());
    }
    let manifest = fs::read(out.join("manifest.json")).unwrap();
    let b = step(&["gen-terrain"]);
    assert!(stdout(&b).contains("up to date     gen_terrain"));
    assert_eq!(fs::read(out.join("manifest.json")).unwrap(), manifest);
    let c = step(&["--force", "gen-terrain"]);
    assert!(stdout(&c).contains("ran            gen_terrain"));
    assert_eq!(fs::read(out.join("manifest.json")).unwrap(), manifest);
    let d = step(&["--seed", "6", "gen-terrain"]);
    assert!(stdout(&d).contains("ran            gen_terrain"));
    assert_ne!(fs::read(out.join("manifest.json")).unwrap(), manifest);
}

#[test]
fn full_run_produces_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let o = run(bin().arg("--config").arg(&cfg).arg("--out").arg(&out).args(["--json", "run"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(r["ate_rms"].as_f64().unwrap().is_finite());
    for d in ["world", "path", "dataset", "odom", "eval"] {
        assert!(out.join(d).is_dir(), "{d}");
    }
    let partial = run(bin().arg("--config").arg(&cfg).arg("--out").arg(&out).args(["run", "--stages", "gen,eval"]));
    assert!(partial.status.success());
    assert!(stdout(&partial).contains("up to date     gen_terrain, gen_path, eval"));
    let bad = run(bin().args(["run", "--stages", "teleport"]));
    assert!(!bad.status.success());
}

#[test]
fn help_lists_subcommands() {
    let o = run(bin().arg("--help"));
    assert!(o.status.success());
    let text = stdout(&o);
    for sub in ["gen-terrain", "gen-path", "simulate", "odom", "evaluate", "run", "--config", "--out", "--seed", "--force"] {
        assert!(text.contains(sub), "{sub}");
    }
}
