use std::path::Path;
use std::process::{Command, Output};

use sceneseg_core::audio::sdr;
use sceneseg_core::manifest::read_manifests;
use serde_json::Value;

fn sceneseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sceneseg"))
        .args(args)
        .env_remove("SCENESEG_BANK")
        .output()
        .expect("spawn sceneseg")
}

fn ok(args: &[&str]) -> Output {
    let out = sceneseg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn mix(dir: &Path, count: &str, seed: &str) {
    ok(&[
        "mix",
        "--out",
        p(dir),
        "--count",
        count,
        "--seed",
        seed,
        "--duration",
        "0.25",
        "--sample-rate",
        "8000",
        "--workers",
        "2",
    ]);
}

#[test]
fn iteration_guard_exits_one_with_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    mix(&scenes, "1", "1");
    let out = sceneseg(&[
        "run",
        "--manifest",
        p(&scenes.join("scenes.jsonl")),
        "--iterations",
        "9",
        "--out",
        p(&dir.path().join("r")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.lines().last().unwrap();
    let v: Value = serde_json::from_str(line).unwrap();
    assert!(v["error"].as_str().unwrap().contains("guard"), "{line}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(sceneseg(&["run", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(sceneseg(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn oracle_run_evaluates_at_the_clamp_ceiling() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    let results = dir.path().join("results");
    mix(&scenes, "4", "11");
    let manifest = scenes.join("scenes.jsonl");
    ok(&[
        "run",
        "--manifest",
        p(&manifest),
        "--backend",
        "oracle",
        "--out",
        p(&results),
    ]);
    for m in read_manifests(&manifest).unwrap() {
        for j in 1..=3 {
            assert!(results.join(&m.scene_id).join(format!("fg{j}.wav")).is_file());
        }
    }
    assert!(results.join("decisions.jsonl").is_file());
    assert!(results.join("run.json").is_file());

    let report_path = dir.path().join("eval").join("report.json");
    ok(&[
        "eval",
        "--truth",
        p(&manifest),
        "--pred",
        p(&results),
        "--out",
        p(&report_path),
    ]);
    let report = read_json(&report_path);
    assert_eq!(report["acc_src"], 1.0);
    assert_eq!(report["acc_mix"], 1.0);
    let mut expected = 0.0;
    let manifests = read_manifests(&manifest).unwrap();
    for m in &manifests {
        let scene = m.load(&scenes).unwrap();
        let fg = scene.foreground();
        expected += fg
            .iter()
            .map(|(_, s)| 60.0 - sdr(s, &scene.mixture).unwrap())
            .sum::<f64>()
            / fg.len() as f64;
    }
    expected /= manifests.len() as f64;
    let got = report["mean_ca_sdri"].as_f64().unwrap();
    assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");

    let csv = std::fs::read_to_string(report_path.with_extension("csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scene_id,ca_sdri,snri,exact_match,src_correct_count"
    );
    assert_eq!(lines.count(), manifests.len());
    assert_eq!(read_json(&dir.path().join("eval").join("run.json"))["command"], "eval");
}

#[test]
fn dumped_outputs_replay_through_the_file_backend() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    mix(&scenes, "3", "5");
    let manifest = scenes.join("scenes.jsonl");
    let dump = dir.path().join("dump");
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    ok(&[
        "run",
        "--manifest",
        p(&manifest),
        "--backend",
        "oracle-degraded:12",
        "--seed",
        "3",
        "--dump",
        p(&dump),
        "--out",
        p(&r1),
    ]);
    let files = format!("files:{}", p(&dump));
    ok(&["run", "--manifest", p(&manifest), "--backend", &files, "--out", p(&r2)]);
    let e1 = dir.path().join("e1.json");
    let e2 = dir.path().join("e2.json");
    ok(&["eval", "--truth", p(&manifest), "--pred", p(&r1), "--out", p(&e1)]);
    ok(&["eval", "--truth", p(&manifest), "--pred", p(&r2), "--out", p(&e2)]);
    assert_eq!(std::fs::read(&e1).unwrap(), std::fs::read(&e2).unwrap());

    let first = read_manifests(&manifest).unwrap()[0].scene_id.clone();
    std::fs::remove_file(dump.join(&first).join("logits.json")).unwrap();
    let out = sceneseg(&["run", "--manifest", p(&manifest), "--backend", &files, "--out", p(&r2)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains(&first) && err.contains("logits.json"), "{err}");
}

#[test]
fn calibrate_writes_named_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.jsonl");
    let mut lines = String::new();
    // argmax class 0; active rows have energy about -10, silent rows about -2.9
    for i in 0..6 {
        let mut l = vec![0.0; 18];
        l[0] = if i % 2 == 0 { 10.0 } else { 0.1 };
        lines.push_str(&serde_json::json!({"logits": l, "silence": i % 2 == 1}).to_string());
        lines.push('\n');
    }
    std::fs::write(&scores, lines).unwrap();
    let out = dir.path().join("t").join("thresholds.json");
    ok(&["calibrate", "--scores", p(&scores), "--out", p(&out)]);
    let t = read_json(&out);
    let obj = t.as_object().unwrap();
    assert_eq!(obj.len(), 18);
    let th = obj["class_00"].as_f64().unwrap();
    assert!(th > -10.0 && th < -2.9, "{th}");

    // fitted table feeds back into run
    let scenes = dir.path().join("scenes");
    mix(&scenes, "1", "2");
    ok(&[
        "run",
        "--manifest",
        p(&scenes.join("scenes.jsonl")),
        "--thresholds",
        p(&out),
        "--out",
        p(&dir.path().join("r")),
    ]);
}

#[test]
fn losses_command_prints_values() {
    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("case.json");
    std::fs::write(
        &case,
        r#"[{"loss":"sa_sdr","refs":[[1,0],[0,1]],"ests":[[1,0],[0,0]]},
            {"loss":"kl_uniform","p":[0,0,1]},
            {"loss":"energy_hinge","in":[-5],"out":[]},
            {"loss":"sc_stage","arcface":1,"kl":2,"energy":3,"stage":2}]"#,
    )
    .unwrap();
    let out = ok(&["losses", "--case", p(&case), "--out", p(&dir.path().join("o.json"))]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v[0]["value"].as_f64().unwrap() + 3.010_299_956_639_812).abs() < 1e-9);
    assert_eq!(v[0]["gradient"].as_array().unwrap().len(), 4);
    assert!((v[1]["value"].as_f64().unwrap() - 3f64.ln()).abs() < 1e-12);
    assert_eq!(v[2]["value"], 1.0);
    assert!((v[3]["value"].as_f64().unwrap() - 3.003).abs() < 1e-12);
    assert!(dir.path().join("run.json").is_file());

    std::fs::write(&case, r#"{"loss":"sc_stage","arcface":1,"kl":2,"energy":3,"stage":4}"#).unwrap();
    assert_eq!(sceneseg(&["losses", "--case", p(&case)]).status.code(), Some(1));
}

#[test]
fn bank_from_environment_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sceneseg"))
        .args(["mix", "--out", p(&dir.path().join("s")), "--count", "1"])
        .env("SCENESEG_BANK", dir.path().join("missing-bank.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing-bank.json"));
}
