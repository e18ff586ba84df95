//! End-to-end runs of the `handover` binary.

use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn handover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handover")).args(args).output().expect("binary runs")
}

fn json_out(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn fixture_run_replay_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (scene, gaze, session, traj) =
        (dir.path().join("scene.json"), dir.path().join("gaze.log"), dir.path().join("session.json"), dir.path().join("traj.ndjson"));
    let fx = json_out(&handover(&["fixture", "mug-handle", "--scene-out", p(&scene), "--gaze-out", p(&gaze)]));
    let say = fx["utterance"].as_str().unwrap();

    let run = json_out(&handover(&[
        "run", "--scene", p(&scene), "--gaze-log", p(&gaze), "--say", say, "--out", p(&session), "--trajectory", p(&traj),
    ]));
    assert_eq!(run["status"]["state"], "executed");
    assert_eq!(run["selected"], "mug-0");
    assert_eq!(run["parsed"]["holder"], "human");
    let rows = handover_core::motion::read_trajectory_rows(&std::fs::read_to_string(&traj).unwrap()).unwrap();
    let steps = run["motion"]["approach_steps"].as_u64().unwrap() + run["motion"]["deliver_steps"].as_u64().unwrap();
    // the phases share their boundary sample
    assert_eq!(rows.len() as u64, steps - 1);
    assert!(rows.windows(2).all(|w| w[1].t > w[0].t));

    let again = json_out(&handover(&["replay", p(&session), "--check"]));
    assert_eq!(again["identical_to_recording"], true);
    assert!(again["derived_from"].is_null());

    // a config override makes a derived session
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"pregrasp_offset": 0.12}"#).unwrap();
    let derived = json_out(&handover(&["replay", p(&session), "--config", p(&cfg)]));
    assert_eq!(derived["derived_from"], run["id"]);

    // corrupt the file: the error names a line
    let text = std::fs::read_to_string(&session).unwrap().replacen("\"utterance\":", "\"utterance\" ", 1);
    std::fs::write(&session, text).unwrap();
    let bad = handover(&["replay", p(&session)]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line"), "{}", String::from_utf8_lossy(&bad.stderr));
}

#[test]
fn cursor_run_and_failed_status_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let (scene, gaze) = (dir.path().join("scene.json"), dir.path().join("gaze.log"));
    json_out(&handover(&["fixture", "two-flashlights", "--scene-out", p(&scene), "--gaze-out", p(&gaze)]));
    let out = handover(&["run", "--scene", p(&scene), "--cursor", "320,240", "--say", "give me the banana"]);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"]["state"], "failed");
    assert_eq!(v["status"]["stage"], "selection");
}

#[test]
fn gen_scene_is_seeded() {
    let a = handover(&["gen-scene", "--seed", "5", "--objects", "4"]);
    let b = handover(&["gen-scene", "--objects", "4", "--seed", "5"]);
    assert_eq!(a.stdout, b.stdout);
    let v = json_out(&a);
    assert_eq!(v["format_version"], 1);
    assert_eq!(v["objects"].as_array().unwrap().len(), 4);
}

#[test]
fn parse_prints_the_triple() {
    let v = json_out(&handover(&["parse", "Grab the screwdriver's shaft."]));
    assert_eq!(v["object_phrase"], "screwdriver");
    assert_eq!(v["part"], "shaft");
    assert_eq!(v["holder"], "robot");
}

#[test]
fn small_evaluations_emit_reports() {
    let v = json_out(&handover(&["eval-selection", "--trials", "10", "--seed", "3"]));
    assert_eq!(v["report"]["trials"], 10);
    assert!(v["dominance"]["fused_at_least_90"].is_boolean());
    let v = json_out(&handover(&["eval-grasp", "--scenes", "2"]));
    assert!(v["preference_rate"].is_number());
    let v = json_out(&handover(&["eval-motion", "--targets", "3"]));
    assert_eq!(v["report"]["targets"], 3);
    let v = json_out(&handover(&["eval-timing", "--runs", "1"]));
    assert_eq!(v["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"gaze": {"params": {"alpha": 3.0, "beta": 0.3, "sigma_px": 57.0}}}"#).unwrap();
    let out = handover(&["parse", "give me the cup", "--config", p(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid config"));
}
