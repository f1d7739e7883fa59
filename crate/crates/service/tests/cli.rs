mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use classcode_core::synth::{classroom_scene, render_scene, single_code_scene, ClassroomOptions};
use classcode_core::Answer;
use common::*;
use serde_json::{json, Value};

fn classcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_classcode"))
        .args(args)
        .env_remove("CLASSCODE_CLOCK")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn svg_pages(dir: &Path) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with(".svg")
        })
        .count()
}

fn write_frames(dir: &Path, frames: &[Vec<u8>]) {
    fs::create_dir_all(dir).unwrap();
    for (i, png) in frames.iter().enumerate() {
        fs::write(dir.join(format!("frame-{:04}.png", i + 1)), png).unwrap();
    }
}

fn answer_lines(log: &str) -> Vec<Value> {
    log.lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v["type"] == "answer")
        .collect()
}

#[test]
fn cards_for_a_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = classcode(&["cards", "--range", "1..30", "--out-dir", p(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(svg_pages(dir.path()), 15);
    let index = fs::read_to_string(dir.path().join("index.csv")).unwrap();
    let rows: Vec<&str> = index.lines().collect();
    assert_eq!(rows[0], "ordinal,file,page,slot");
    assert_eq!(rows.len(), 31);
    assert_eq!(rows[1], "1,page-001.svg,1,1");
    assert_eq!(rows[30], "30,page-015.svg,15,2");
}

#[test]
fn cards_six_per_page() {
    let dir = tempfile::tempdir().unwrap();
    let out = classcode(&[
        "cards",
        "--range",
        "1..99",
        "--per-page",
        "6",
        "-o",
        p(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(svg_pages(dir.path()), 17);
    let svg = fs::read_to_string(dir.path().join("page-017.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn cards_reject_bad_ordinals() {
    let dir = tempfile::tempdir().unwrap();
    for args in [["--range", "0..5"], ["--ordinals", "3,100"]] {
        let out = classcode(&["cards", args[0], args[1], "-o", p(dir.path())]);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(stderr(&out).contains("ordinal"), "{}", stderr(&out));
    }
    assert_eq!(svg_pages(dir.path()), 0, "nothing written on error");
}

#[test]
fn scan_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = classcode(&["scan", "/nonexistent/video.mp4", "-o", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let bad = dir.path().join("bad");
    fs::create_dir(&bad).unwrap();
    fs::write(bad.join("a.png"), b"not a png").unwrap();
    let out = classcode(&["scan", p(&bad), "-o", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = classcode(&["scan", p(&empty), "-o", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(!dir.path().join("answers.ndjson").exists());
}

#[test]
fn single_image_warns_unless_single_shot() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = render_scene(&single_code_scene(
        12,
        80.0,
        Answer::D.orientation().radians(),
    ))
    .unwrap();
    let photo = dir.path().join("photo.png");
    img.save_png(&photo).unwrap();

    let out = classcode(&["scan", p(&photo), "--students", "20", "-o", p(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("--single-shot"), "{}", stderr(&out));
    let log = fs::read_to_string(dir.path().join("answers.ndjson")).unwrap();
    assert!(answer_lines(&log).is_empty());

    let out = classcode(&[
        "scan",
        p(&photo),
        "--students",
        "20",
        "--single-shot",
        "-o",
        p(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(!stderr(&out).contains("warning"));
    let log = fs::read_to_string(dir.path().join("answers.ndjson")).unwrap();
    let answers = answer_lines(&log);
    assert_eq!(answers.len(), 1);
    assert_eq!(answers[0]["student_ordinal"], 12);
    assert_eq!(answers[0]["answer"], "D");
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(
        summary,
        "question_number,tag,A,B,C,D,unknown\n1,,0,0,0,1,19\n"
    );
}

#[test]
fn classroom_video_matches_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (img, truth) = render_scene(&classroom_scene(&ClassroomOptions::default(), 1)).unwrap();
    let png = img.encode_png();
    let frames = dir.path().join("video");
    write_frames(&frames, &vec![png; 123]);
    let out_dir = dir.path().join("out");
    let out = classcode(&[
        "scan",
        p(&frames),
        "--students",
        "99",
        "--tag",
        "q1",
        "-o",
        p(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("123 frames"), "{report}");
    assert!(report.contains("fps"), "{report}");
    assert!(report.contains("binarize"), "{report}");

    let log = fs::read_to_string(out_dir.join("answers.ndjson")).unwrap();
    let got: BTreeMap<u64, String> = answer_lines(&log)
        .iter()
        .map(|v| {
            (
                v["student_ordinal"].as_u64().unwrap(),
                v["answer"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    let want: BTreeMap<u64, String> = truth
        .codes
        .iter()
        .map(|c| (c.ordinal as u64, c.answer.to_string()))
        .collect();
    assert_eq!(got, want);

    let mut counts = [0usize; 4];
    for c in &truth.codes {
        counts[c.answer.index()] += 1;
    }
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let expected = format!(
        "question_number,tag,A,B,C,D,unknown\n1,q1,{},{},{},{},{}\n",
        counts[0],
        counts[1],
        counts[2],
        counts[3],
        99 - truth.codes.len()
    );
    assert_eq!(summary, expected);

    let report = classcode(&["report", p(&out_dir.join("answers.ndjson"))]);
    assert!(report.status.success());
    assert_eq!(String::from_utf8_lossy(&report.stdout), expected);
}

#[test]
fn gif_input_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = render_scene(&single_code_scene(
        30,
        64.0,
        Answer::A.orientation().radians(),
    ))
    .unwrap();
    let gif = dir.path().join("clip.gif");
    classcode_service::frames::write_gif(&gif, &vec![img; 12]).unwrap();
    let out = classcode(&[
        "scan",
        p(&gif),
        "--students",
        "30",
        "--clock",
        "logical",
        "-o",
        p(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let log_path = dir.path().join("answers.ndjson");
    let first = fs::read_to_string(&log_path).unwrap();
    assert_eq!(answer_lines(&first).len(), 1);

    let (img, _) = render_scene(&single_code_scene(
        30,
        64.0,
        Answer::C.orientation().radians(),
    ))
    .unwrap();
    let gif2 = dir.path().join("clip2.gif");
    classcode_service::frames::write_gif(&gif2, &vec![img; 12]).unwrap();
    let out = classcode(&[
        "scan",
        p(&gif2),
        "--resume",
        p(&log_path),
        "--clock",
        "logical",
        "-o",
        p(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let second = fs::read_to_string(&log_path).unwrap();
    assert!(
        second.starts_with(&first),
        "resumed log extends the original"
    );
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(
        summary,
        "question_number,tag,A,B,C,D,unknown\n1,,1,0,0,0,29\n2,,0,0,1,0,29\n"
    );
}

#[test]
fn report_rejects_corrupt_logs() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("x.ndjson");
    fs::write(&log, "{\"type\":\"answer\"}\n").unwrap();
    assert_eq!(classcode(&["report", p(&log)]).status.code(), Some(2));
    assert_eq!(
        classcode(&["report", "/nonexistent.ndjson"]).status.code(),
        Some(2)
    );
}

#[test]
fn synth_writes_frames_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = classcode(&[
        "synth",
        "--classroom",
        "4",
        "--frames",
        "2",
        "-o",
        p(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("frame-0002.png").exists());
    let truth: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["codes"].as_array().unwrap().len(), 40);
}

#[test]
fn offline_scan_and_served_session_log_identically() {
    let dir = tempfile::tempdir().unwrap();
    let frames = flicker_frames(7);
    let pngs: Vec<Vec<u8>> = frames.iter().map(|f| f.encode_png()).collect();
    let video = dir.path().join("video");
    write_frames(&video, &pngs);
    let out = classcode(&[
        "scan",
        p(&video),
        "--class-id",
        "7b",
        "--students",
        "40",
        "--clock",
        "logical",
        "-o",
        p(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let offline: Vec<String> = fs::read_to_string(dir.path().join("answers.ndjson"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();

    let server = start_server(None);
    let mut ws = connect(server.addr());
    let roster: Vec<_> = (1..=40).map(|o| json!({ "ordinal": o })).collect();
    request(
        &mut ws,
        &json!({"type": "start_session", "class_id": "7b", "roster": roster}),
    );
    request(&mut ws, &json!({"type": "start_question"}));
    request(&mut ws, &json!({"type": "begin_take"}));
    for png in pngs {
        send_frame(&mut ws, png);
    }
    request(&mut ws, &json!({"type": "end_take"}));
    close(ws);
    assert_eq!(server.log().unwrap(), offline);
    assert_eq!(answer_lines(&offline.join("\n")).len(), 1);
}
