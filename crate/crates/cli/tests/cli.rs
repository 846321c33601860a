use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn parkwatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parkwatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn synth(name: &str, dir: &Path) {
    let out = parkwatch(&["synth", name, dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
}

fn event_kinds(jsonl: &str) -> Vec<String> {
    jsonl
        .lines()
        .map(|l| {
            let start = l.find("\"event_type\":\"").unwrap() + 14;
            l[start..].split('"').next().unwrap().to_string()
        })
        .collect()
}

#[test]
fn synth_writes_frames_and_guards_the_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("frames");
    let pgm_count = |dir: &Path| {
        fs::read_dir(dir)
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .ends_with(".pgm")
            })
            .count()
    };
    synth("removal", &dir);
    assert_eq!(pgm_count(&dir), 520);
    assert!(dir.join("ground_truth.jsonl").is_file());

    let again = parkwatch(&["synth", "park-and-stay", dir.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--overwrite"));
    assert_eq!(pgm_count(&dir), 520);

    // a shorter scene replaces the old frames entirely, foreign files survive
    fs::write(dir.join("notes.txt"), "keep").unwrap();
    let over = parkwatch(&[
        "synth",
        "park-and-stay",
        dir.to_str().unwrap(),
        "--overwrite",
    ]);
    assert!(over.status.success(), "{}", stderr(&over));
    assert_eq!(pgm_count(&dir), 400);
    assert!(dir.join("notes.txt").is_file());
}

#[test]
fn invalid_script_names_the_offending_field() {
    let tmp = tempfile::tempdir().unwrap();
    let script = tmp.path().join("bad.json");
    fs::write(
        &script,
        r#"{"width": 64, "height": 32, "frames": 10, "fps": 30,
            "background": {"kind": "flat", "level": 50},
            "actors": [{"size": [8, 8], "texture_seed": 1, "waypoints": [[0, 0, 0], ["x", 1, 1]]}]}"#,
    )
    .unwrap();
    let out = parkwatch(&[
        "synth",
        script.to_str().unwrap(),
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("actors[0].waypoints[1]"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn run_reports_stages_for_both_pipelines() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("frames");
    synth("park-and-stay", &dir);
    let mut sets = Vec::new();
    for pipeline in ["single", "dual"] {
        let out = parkwatch(&[
            "run",
            "--input",
            dir.to_str().unwrap(),
            "--set",
            &format!("pipeline={pipeline}"),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let kinds = event_kinds(&stdout(&out));
        assert_eq!(kinds, ["stopped", "parked"], "{pipeline}");
        assert!(stderr(&out).contains("maximum parking time"));
        sets.push(kinds);
    }
    assert_eq!(sets[0], sets[1]);
}

#[test]
fn run_with_event_file_prints_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("frames");
    synth("removal", &dir);
    let events = tmp.path().join("events.jsonl");
    let config = tmp.path().join("config.json");
    fs::write(
        &config,
        format!(
            r#"{{"input": {{"mode": "directory", "path": {:?}}}, "output": {{"events": {:?}}}}}"#,
            dir.to_str().unwrap(),
            events.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = parkwatch(&["run", "-c", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("moved"));
    assert_eq!(
        event_kinds(&fs::read_to_string(&events).unwrap()),
        ["stopped", "parked", "moved"]
    );
}

#[test]
fn config_errors_exit_with_two_and_name_the_key() {
    let swapped = parkwatch(&[
        "run",
        "--set",
        "background.alpha_fast=0.002",
        "--set",
        "background.alpha_slow=0.02",
    ]);
    assert_eq!(swapped.status.code(), Some(2));
    assert!(
        stderr(&swapped).contains("background.alpha_slow"),
        "{}",
        stderr(&swapped)
    );

    let unknown = parkwatch(&["run", "--set", "ncc.treshold=0.8"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(
        stderr(&unknown).contains("ncc.treshold"),
        "{}",
        stderr(&unknown)
    );
}

#[test]
fn missing_input_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = parkwatch(&[
        "run",
        "--input",
        tmp.path().join("absent").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn bench_prints_a_csv() {
    let out = parkwatch(&[
        "bench",
        "--scene",
        "bench-street",
        "--frames",
        "10",
        "--repetitions",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("pipeline,roi_w,roi_h,fps"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        assert!(["noop", "single", "dual"].contains(&row[0]));
        assert!(["658", "329"].contains(&row[1]));
        assert!(row[3].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn scenarios_are_listed() {
    let out = parkwatch(&["scenarios"]);
    assert!(out.status.success());
    assert!(stdout(&out).lines().any(|l| l == "park-and-stay"));
}
