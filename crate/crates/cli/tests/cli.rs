use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sfda(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfda"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = sfda(args, dir);
    assert!(
        out.status.success(),
        "sfda {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn pretrained(dir: &Path) {
    ok(
        &["pretrain", "--data", "moons:n=60,seed=3", "--epochs", "30", "--out", "src.json"],
        dir,
    );
}

const SMALL_TARGET: &str = "moons:n=60,rot=30,seed=4";

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pretrain_writes_a_checkpoint_and_reports_accuracy() {
    let dir = TempDir::new().unwrap();
    let out = ok(
        &["pretrain", "--data", "moons:n=60", "--epochs", "5", "--h1", "7", "--out", "m.json"],
        dir.path(),
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["accuracy"].as_f64().unwrap() >= 0.0);
    let ck = json(&dir.path().join("m.json"));
    assert_eq!(ck["dims"]["h1"], 7);
    assert_eq!(ck["dims"]["d_in"], 2);
}

#[test]
fn adapt_twice_is_bit_identical() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    pretrained(d);
    for tag in ["a", "b"] {
        let hist = format!("h{tag}.json");
        let ckpt = format!("c{tag}.json");
        ok(
            &[
                "adapt", "--ckpt", "src.json", "--target", SMALL_TARGET, "--epochs", "4",
                "--batch-size", "16", "--seed", "9", "--out-history", &hist, "--out-ckpt", &ckpt,
            ],
            d,
        );
    }
    assert_eq!(fs::read(d.join("ca.json")).unwrap(), fs::read(d.join("cb.json")).unwrap());
    let (a, b) = (json(&d.join("ha.json")), json(&d.join("hb.json")));
    for key in ["loss", "lambda", "acc", "snd", "ratio_same", "ratio_correct"] {
        assert_eq!(a[key], b[key], "{key}");
    }
    // 120 samples in batches of 16 → 7 iterations per epoch
    assert_eq!(a["loss"].as_array().unwrap().len(), 4 * 7);
    assert_eq!(a["snd"].as_array().unwrap().len(), 4);
    assert_eq!(a["checkpoint"], "ca.json");
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    pretrained(d);
    fs::write(
        d.join("cfg.json"),
        r#"{"adapt": {"epochs": 2, "batch_size": 16, "beta": 1.0, "objective": "attract-only"}}"#,
    )
    .unwrap();
    ok(
        &["adapt", "--ckpt", "src.json", "--target", SMALL_TARGET, "--config", "cfg.json", "--out-history", "h1.json"],
        d,
    );
    let h = json(&d.join("h1.json"));
    assert_eq!(h["snd"].as_array().unwrap().len(), 2);
    // attract-only never weights the dispersion term, but λ is still recorded
    assert_eq!(h["lambda"][0], 1.0);

    ok(
        &[
            "adapt", "--ckpt", "src.json", "--target", SMALL_TARGET, "--config", "cfg.json",
            "--epochs", "3", "--objective", "aad-no-decay", "--out-history", "h2.json",
        ],
        d,
    );
    let h = json(&d.join("h2.json"));
    assert_eq!(h["snd"].as_array().unwrap().len(), 3);
    assert!(h["lambda"].as_array().unwrap().iter().all(|l| l == 1.0));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    pretrained(d);
    fs::write(d.join("cfg.json"), r#"{"adapt": {"epochz": 2}}"#).unwrap();
    let out = sfda(
        &["adapt", "--ckpt", "src.json", "--config", "cfg.json", "--out-history", "h.json"],
        d,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));
}

#[test]
fn sweep_writes_one_row_per_run_and_a_flagged_mean() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    pretrained(d);
    ok(
        &[
            "sweep", "--ckpt", "src.json", "--target", SMALL_TARGET, "--betas", "0,2", "--seeds", "2",
            "--epochs", "2", "--batch-size", "16", "--out", "sweep.csv",
        ],
        d,
    );
    let csv = fs::read_to_string(d.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "beta,seed,snd,accuracy,selected");
    assert_eq!(lines.len(), 1 + 4 + 2);
    let means: Vec<&str> = lines.iter().copied().filter(|l| l.contains(",mean,")).collect();
    assert_eq!(means.len(), 2);
    assert_eq!(means.iter().filter(|l| l.ends_with(",1")).count(), 1);
}

#[test]
fn eval_and_boundary_outputs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    pretrained(d);
    let out = ok(&["eval", "--ckpt", "src.json", "--data", SMALL_TARGET], d);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["accuracy"].is_f64());
    assert!(report["snd"].is_f64());
    assert!(report["ratios"]["same_pred"].is_f64());
    assert!(report["hos"].is_null());

    ok(
        &[
            "eval", "--ckpt", "src.json", "--data", "moons:n=60,unknown=20",
            "--open-set-threshold", "0.9", "--out", "open.json",
        ],
        d,
    );
    assert!(json(&d.join("open.json"))["hos"].is_f64());

    ok(
        &["boundary", "--ckpt", "src.json", "--out", "grid.csv", "--resolution", "4", "--x-range", "-1,2"],
        d,
    );
    let grid = fs::read_to_string(d.join("grid.csv")).unwrap();
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines[0], "x,y,label");
    assert_eq!(lines.len(), 1 + 16);
    assert!(lines[1].starts_with("-1,-2,"));
}

#[test]
fn csv_data_is_accepted() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut csv = String::from("d=2,labels=1\n");
    for i in 0..40 {
        let (x, y) = if i % 2 == 0 { (-1.0 - i as f64 * 0.01, 0.0) } else { (1.0 + i as f64 * 0.01, 0.0) };
        csv.push_str(&format!("{x},{y},{}\n", i % 2));
    }
    fs::write(d.join("src.csv"), csv).unwrap();
    let out = ok(&["pretrain", "--data", "src.csv", "--epochs", "50", "--out", "m.json"], d);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["accuracy"], 1.0);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert!(!sfda(&["pretrain", "--data", "moons:bogus=1", "--out", "m.json"], d).status.success());
    assert!(!sfda(&["pretrain", "--data", "missing.csv", "--out", "m.json"], d).status.success());
    assert!(!sfda(&["eval", "--ckpt", "missing.json", "--data", "moons"], d).status.success());
    pretrained(d);
    let out = sfda(
        &["adapt", "--ckpt", "src.json", "--bank", "ring:2", "--out-history", "h.json"],
        d,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ring capacity"));
}
