mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::{edit_config, ok, run, s, snapshot, synth};
use serde_json::json;

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn synth_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    synth(&tmp.path().join("a"), 42);
    synth(&tmp.path().join("b"), 42);
    synth(&tmp.path().join("c"), 7);
    let a = snapshot(&tmp.path().join("a"));
    assert!(!a.is_empty());
    assert_eq!(a, snapshot(&tmp.path().join("b")));
    assert_ne!(a, snapshot(&tmp.path().join("c")));
}

#[test]
fn flow_signal_steps_at_planted_reaction() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(&tmp.path().join("data"), 42);
    let out = tmp.path().join("out");
    ok(&[
        "signals",
        "--config",
        s(&config),
        "--videos",
        "synth_00",
        "--out",
        s(&out),
    ]);
    // synth_00 starts shifting the background by 2 px per frame at frame 30.
    let rows = read_csv(&out.join("flow/synth_00.csv"));
    assert_eq!(rows.len(), 60);
    for row in &rows {
        let (frame, magnitude): (usize, f64) = (row[0].parse().unwrap(), row[1].parse().unwrap());
        if frame < 28 {
            assert!(magnitude < 0.5, "frame {frame}: {magnitude}");
        } else if frame > 31 {
            assert!(magnitude > 1.0, "frame {frame}: {magnitude}");
        }
    }
    assert!(out.join("plots/synth_00.svg").is_file());
}

#[test]
fn signal_subset_and_rerun_are_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(&tmp.path().join("data"), 42);
    edit_config(&config, |c| c["signals"] = json!(["object_size"]));
    let out = tmp.path().join("out");
    let args = [
        "signals",
        "--config",
        s(&config),
        "--videos",
        "synth_0[01]",
        "--out",
        s(&out),
    ];
    ok(&args);
    let first = snapshot(&out.join("signals"));
    let names: Vec<_> = first.keys().map(|p| p.to_str().unwrap().to_string()).collect();
    assert_eq!(names, ["synth_00_object_size.csv", "synth_01_object_size.csv"]);
    assert!(!out.join("flow").exists());
    ok(&args);
    assert_eq!(first, snapshot(&out.join("signals")));
}

#[test]
fn flow_without_frames_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(&tmp.path().join("data"), 42);
    edit_config(&config, |c| c["paths"]["frames_root"] = json!(null));
    let out = run(&["signals", "--config", s(&config), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("synth_00") && stderr.contains("frames_root"),
        "{stderr}"
    );
}

#[test]
fn run_without_ground_truth_skips_report() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(&tmp.path().join("data"), 42);
    edit_config(&config, |c| c["paths"]["ground_truth"] = json!(null));
    let out = tmp.path().join("out");
    ok(&["run", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(read_csv(&out.join("submission.csv")).len(), 3 * 60);
    assert!(!out.join("report.json").exists());
}

#[test]
fn nearest_one_picks_the_track_closest_to_center() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let config = synth(&data, 42);
    edit_config(&config, |c| c["hazards"]["filters"] = json!([]));
    let out = tmp.path().join("out");
    ok(&[
        "hazards",
        "--config",
        s(&config),
        "--strategy",
        "nearest_k(1)",
        "--out",
        s(&out),
    ]);

    let ann: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("annotations.json")).unwrap()).unwrap();
    let mut expected = BTreeMap::new();
    for video in ann["videos"].as_array().unwrap() {
        let cx = video["width"].as_f64().unwrap() / 2.0;
        let cy = video["height"].as_f64().unwrap() / 2.0;
        for frame in video["frames"].as_array().unwrap() {
            let best = frame["detections"]
                .as_array()
                .unwrap()
                .iter()
                .map(|d| {
                    let b: Vec<f64> = d["bbox"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|x| x.as_f64().unwrap())
                        .collect();
                    let d2 = ((b[0] + b[2]) / 2.0 - cx).powi(2) + ((b[1] + b[3]) / 2.0 - cy).powi(2);
                    (d2, d["track_id"].as_str().unwrap().to_string())
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
                .unwrap();
            let key = (
                video["video_id"].as_str().unwrap().to_string(),
                frame["frame_index"].as_u64().unwrap(),
            );
            expected.insert(key, best.1);
        }
    }
    let mut got = BTreeMap::new();
    for row in read_csv(&out.join("hazards.csv")) {
        assert!(got
            .insert((row[0].clone(), row[1].parse::<u64>().unwrap()), row[2].clone())
            .is_none());
    }
    assert_eq!(got, expected);
}

#[test]
fn eval_reproduces_run_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let config = synth(&data, 42);
    let before = snapshot(&data);
    let out = tmp.path().join("out");
    ok(&["run", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(before, snapshot(&data), "run modified its inputs");

    let again = tmp.path().join("eval");
    let submission = out.join("submission.csv");
    ok(&[
        "eval",
        "--config",
        s(&config),
        "--submission",
        s(&submission),
        "--out",
        s(&again),
    ]);
    assert_eq!(
        std::fs::read(out.join("report.json")).unwrap(),
        std::fs::read(again.join("report.json")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("nope.json");
    assert_eq!(
        run(&["run", "--config", s(&missing), "--out", s(&out)]).status.code(),
        Some(2)
    );

    let config = synth(&tmp.path().join("data"), 42);
    let bad = run(&[
        "react",
        "--config",
        s(&config),
        "--strategy",
        "coin_flip",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad.status.code(), Some(2));
    let none = run(&[
        "signals",
        "--config",
        s(&config),
        "--videos",
        "other_*",
        "--out",
        s(&out),
    ]);
    assert_eq!(none.status.code(), Some(2));

    edit_config(&config, |c| {
        c["captions"]["mode"] = json!("live");
        c["captions"]["retry_attempts"] = json!(1);
        c["captioner_url"] = json!(common::dead_url());
    });
    let dead = run(&[
        "caption",
        "--config",
        s(&config),
        "--videos",
        "synth_00",
        "--out",
        s(&out),
    ]);
    assert_eq!(dead.status.code(), Some(3), "{}", String::from_utf8_lossy(&dead.stderr));
}
