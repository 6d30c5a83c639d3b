mod common;

use std::fs;

use common::*;
use marsbench::harness::*;
use marsbench::pathgen::write_tum;
use marsbench::BenchConfig;

fn config_with_external(dir: &std::path::Path, gt: &str, est: &str) -> BenchConfig {
    let text = serde_json::json!({
        "external": { "groundtruth": gt, "estimate": est },
        "output_dir": dir.join("run"),
    })
    .to_string();
    parse_config(&text, dir).unwrap()
}

#[test]
fn eval_only_on_identical_trajectories_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    write_tum(&random_walk(300, 0.5, 1), dir.path().join("gt.tum")).unwrap();
    let cfg = config_with_external(dir.path(), "gt.tum", "gt.tum");
    let out = run_pipeline(&cfg, &[Stage::Eval], false).unwrap();
    let report = out.report.unwrap();
    assert!(report.ate_rms <= 1e-12);
    assert!(report.drift_median <= 1e-12);
    assert!(dir.path().join("run").join(EVAL_DIR).join("report.json").is_file());
    assert_eq!(out.executed, vec![Stage::Eval]);
}

#[test]
fn eval_only_rerun_is_skipped_and_force_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let gt = random_walk(300, 0.5, 2);
    write_tum(&gt, dir.path().join("gt.tum")).unwrap();
    write_tum(&add_noise(&gt, 0.05, 3), dir.path().join("est.tum")).unwrap();
    let cfg = config_with_external(dir.path(), "gt.tum", "est.tum");
    let first = run_pipeline(&cfg, &[Stage::Eval], false).unwrap();
    let manifest_path = dir.path().join("run").join(MANIFEST_FILE);
    let bytes = fs::read(&manifest_path).unwrap();

    let second = run_pipeline(&cfg, &[Stage::Eval], false).unwrap();
    assert_eq!(second.skipped, vec![Stage::Eval]);
    assert!(second.executed.is_empty());
    assert_eq!(second.report.unwrap().ate_rms, first.report.as_ref().unwrap().ate_rms);
    assert_eq!(fs::read(&manifest_path).unwrap(), bytes);

    let forced = run_pipeline(&cfg, &[Stage::Eval], true).unwrap();
    assert_eq!(forced.executed, vec![Stage::Eval]);
    assert_eq!(fs::read(&manifest_path).unwrap(), bytes);

    // A changed input invalidates the stage.
    write_tum(&add_noise(&gt, 0.05, 4), dir.path().join("est.tum")).unwrap();
    let third = run_pipeline(&cfg, &[Stage::Eval], false).unwrap();
    assert_eq!(third.executed, vec![Stage::Eval]);
    // So does a tampered output.
    fs::write(dir.path().join("run").join(EVAL_DIR).join("ate.csv"), "x").unwrap();
    let fourth = run_pipeline(&cfg, &[Stage::Eval], false).unwrap();
    assert_eq!(fourth.executed, vec![Stage::Eval]);
}

#[test]
fn missing_prerequisites_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("run"));
    for stage in [Stage::Simulate, Stage::Odom, Stage::Eval] {
        match run_pipeline(&cfg, &[stage], false) {
            Err(HarnessError::MissingPrerequisite { stage: s, path }) => {
                assert_eq!(s, stage);
                assert!(!path.is_empty());
            }
            other => panic!("{stage}: {other:?}"),
        }
    }
}

#[test]
fn generation_stages_skip_when_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(&dir.path().join("run"));
    let gen = Stage::parse_list("gen").unwrap();
    let a = run_pipeline(&cfg, &gen, false).unwrap();
    assert_eq!(a.executed, gen);
    let b = run_pipeline(&cfg, &gen, false).unwrap();
    assert_eq!(b.skipped, gen);

    cfg.path.speed = 1.5;
    let c = run_pipeline(&cfg, &gen, false).unwrap();
    assert_eq!(c.skipped, vec![Stage::GenTerrain]);
    assert_eq!(c.executed, vec![Stage::GenPath]);
    assert_ne!(a.manifest.config_hash, c.manifest.config_hash);
}

#[test]
fn output_dir_does_not_affect_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_config(&dir.path().join("a"));
    let b = small_config(&dir.path().join("b"));
    assert_eq!(a.canonical_json(), b.canonical_json());
}

#[test]
fn full_pipeline_runs_and_records_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("run"));
    let out = run_pipeline(&cfg, &Stage::ALL, false).unwrap();
    assert_eq!(out.executed, Stage::ALL.to_vec());
    let report = out.report.unwrap();
    assert!(report.ate_rms.is_finite() && report.drift_median.is_finite());
    let m = Manifest::load(&out.run_dir).unwrap();
    assert_eq!(m.stages.len(), 5);
    assert_eq!(m.seeds.global, 11);
    assert_eq!(m.seeds.sensor, Some(3 ^ 11u64.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    for rec in m.stages.values() {
        for o in &rec.outputs {
            assert_eq!(o.sha256.len(), 64);
        }
    }
    let again = run_pipeline(&cfg, &Stage::ALL, false).unwrap();
    assert_eq!(again.skipped, Stage::ALL.to_vec());
}

#[test]
fn config_errors_carry_pointers() {
    let err = parse_config(r#"{"eval": {"segment_len": -1}}"#, ".").unwrap_err();
    assert_eq!(err.pointer, "/eval/segment_len");
    let err = parse_config(r#"{"sensor": {"kind": "lidar", "az_res": "fine"}}"#, ".").unwrap_err();
    assert_eq!(err.pointer, "/sensor/az_res");
    let err = parse_config(r#"{"bogus": 1}"#, ".").unwrap_err();
    assert!(err.to_string().contains("bogus"), "{err}");
    assert!(Stage::parse_list("gen,nope").is_err());
    assert_eq!(Stage::parse_list("eval,gen").unwrap(), vec![Stage::GenTerrain, Stage::GenPath, Stage::Eval]);
}
