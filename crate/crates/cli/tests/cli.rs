//! End-to-end checks of the `kpdiff` binary: exit codes, JSON output
//! stability, and the full train -> sample -> interpolate flow on a tiny
//! configuration.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kpdiff(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpdiff"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

const TINY_CONFIG: &str = r#"{
  "train": {"epochs": 2, "batch_size": 4, "accum_steps": 2, "shapes": 8, "points": 48, "seed": 7},
  "model": {"keypoints": 4, "latent_aux": 3, "feature_dim": 12, "embed_dim": 12,
            "fourier_count": 4, "noise_embed_dim": 8, "film_pre": 1, "film_post": 1},
  "edm": {"ladder_steps": 8}
}"#;

#[test]
fn cd_of_identical_files_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("x.xyz"), "0 0 0\n1 0 0\n").unwrap();
    let out = kpdiff(&["metrics", "cd", "--a", "x.xyz", "--b", "x.xyz"], dir.path());
    assert!(out.status.success());
    let text = stdout_of(&out);
    assert!(text.starts_with(r#"{"cd": 0.0"#), "{text}");
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed["cd"], 0.0);
    assert!(parsed["config_hash"].is_string());
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = kpdiff(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_error_exits_one_with_json_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = kpdiff(
        &["metrics", "cd", "--a", "missing.xyz", "--b", "missing.xyz"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let parsed: serde_json::Value =
        serde_json::from_str(stderr.trim()).expect("stderr is JSON");
    assert!(parsed["error"].is_string());
}

#[test]
fn metric_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.xyz"), "0 0 0\n0.5 0.25 0\n1 0 1\n").unwrap();
    fs::write(dir.path().join("b.xyz"), "0 0.5 0\n1 0 0\n0 0 1\n").unwrap();
    let first = kpdiff(&["metrics", "emd", "--a", "a.xyz", "--b", "b.xyz"], dir.path());
    let second = kpdiff(&["metrics", "emd", "--a", "a.xyz", "--b", "b.xyz"], dir.path());
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn schedule_dump_covers_curriculum_and_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let out = kpdiff(&["schedule-dump", "--epochs", "10"], dir.path());
    assert!(out.status.success());
    let text = stdout_of(&out);
    assert!(text.contains("curriculum,0,"));
    assert!(text.contains("curriculum,9,"));
    assert!(text.contains("ladder,0,"));
    assert!(text.lines().next().unwrap().starts_with("# config_hash="));
}

#[test]
fn synth_writes_labeled_clouds_and_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let out = kpdiff(
        &["synth", "--count", "3", "--points", "64", "--seed", "5", "--out", "data"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let anno: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("data/annotations.json")).unwrap())
            .unwrap();
    assert!(anno.get("shape_0000").is_some());
    let cloud = fs::read_to_string(dir.path().join("data/shape_0000.xyz")).unwrap();
    let fields = cloud.lines().next().unwrap().split_whitespace().count();
    assert_eq!(fields, 4, "labeled clouds need a 4th column");
}

#[test]
fn deform_dumps_replayable_chain() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.xyz"), "0 0 0\n1 0 0\n0 1 0\n0 0 1\n").unwrap();
    let out = kpdiff(
        &[
            "deform", "--in", "a.xyz", "--seed", "9", "--out", "b.xyz",
            "--chain-json", "chain.json",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let chain: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("chain.json")).unwrap()).unwrap();
    assert_eq!(chain["seed"], 9);
    assert_eq!(chain["chain"]["specs"].as_array().unwrap().len(), 5);
    assert_eq!(chain["matrix"].as_array().unwrap().len(), 3);
    assert!(dir.path().join("b.xyz").exists());
}

#[test]
fn train_sample_interpolate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.json"), TINY_CONFIG).unwrap();
    let out = kpdiff(
        &["train", "--config", "tiny.json", "--out", "run"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["config.json", "loss.csv", "params.bin", "manifest.json", "prior.json"] {
        assert!(dir.path().join("run").join(file).exists(), "{file}");
    }

    let out = kpdiff(
        &["sample", "--run", "run", "--count", "2", "--points", "24", "--seed", "1", "--out", "gen"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("gen/gen_0001.ply").exists());

    // two shapes to interpolate between
    let out = kpdiff(
        &["synth", "--count", "2", "--points", "48", "--seed", "3", "--out", "shapes"],
        dir.path(),
    );
    assert!(out.status.success());
    let out = kpdiff(
        &[
            "interpolate", "--run", "run", "--a", "shapes/shape_0000.xyz",
            "--b", "shapes/shape_0001.xyz", "--steps", "3", "--seed", "2", "--out", "interp",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("interp/interp_002.ply").exists());
}

#[test]
fn gradcheck_reports_pass() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.json"), TINY_CONFIG).unwrap();
    let out = kpdiff(
        &["gradcheck", "--tol", "1e-4", "--seed", "7", "--config", "tiny.json"],
        dir.path(),
    );
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(parsed["pass"], 1);
    assert!(parsed["max_rel_error"].as_f64().unwrap() < 1e-4);
}
