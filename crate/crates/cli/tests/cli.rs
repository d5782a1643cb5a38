use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_holoboard"));
    c.env("HOLO_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn holoboard")
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Served {
    child: Child,
    tcp: String,
    http: String,
}

impl Served {
    fn start(extra: &[&str]) -> Served {
        let mut child = bin()
            .args(["serve", "--port", "0", "--http-port", "0"])
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let mut tcp = String::new();
        let mut http = String::new();
        for part in line.split_whitespace() {
            if let Some(a) = part.strip_prefix("tcp=") {
                tcp = a.into();
            }
            if let Some(a) = part.strip_prefix("http=") {
                http = a.into();
            }
        }
        assert!(!tcp.is_empty() && !http.is_empty(), "unexpected banner {line:?}");
        Served { child, tcp, http }
    }

    /// Sends SIGTERM and waits for a clean exit.
    fn stop(mut self) -> i32 {
        let status = Command::new("kill").args(["-TERM", &self.child.id().to_string()]).status().unwrap();
        assert!(status.success());
        for _ in 0..100 {
            if let Some(s) = self.child.try_wait().unwrap() {
                return s.code().unwrap_or(-1);
            }
            std::thread::sleep(Duration::from_millis(50));
        }
        self.child.kill().unwrap();
        panic!("server did not stop");
    }
}

#[test]
fn serve_reports_port_in_use_and_stops_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let first = Served::start(&["--event-log", p(&log)]);
    let port = first.tcp.rsplit(':').next().unwrap().to_string();

    let second = run(&["serve", "--port", &port, "--http-port", "0"]);
    assert_eq!(second.status.code(), Some(3), "{}", stderr(&second));
    assert!(stderr(&second).contains("already in use"), "{}", stderr(&second));

    let sent = run(&["send", "--server", &format!("http://{}", first.http), r#"{"name":"next_slide"}"#]);
    assert!(sent.status.success(), "{}", stderr(&sent));
    let ack: Value = serde_json::from_slice(&sent.stdout).unwrap();
    assert_eq!(ack["events"][0]["kind"], "slide_changed");

    let watched = run(&["watch", "--addr", &first.tcp, "--count", "2"]);
    assert!(watched.status.success(), "{}", stderr(&watched));
    let text = String::from_utf8(watched.stdout).unwrap();
    let snaps: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v["type"] == "state_snapshot")
        .collect();
    assert_eq!(snaps.len(), 2);
    assert_eq!(snaps[0]["payload"]["slide_index"], 1);

    assert_eq!(first.stop(), 0);
    // The log was flushed on shutdown and replays.
    let replayed = run(&["replay", "--log", p(&log)]);
    assert!(replayed.status.success(), "{}", stderr(&replayed));
    assert!(String::from_utf8_lossy(&replayed.stdout).contains("identical"));
}

#[test]
fn send_rejects_invalid_command() {
    let out = run(&["send", "--server", "http://127.0.0.1:9", r#"{"name":"warp"}"#]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"screen":{"width":-4.0,"height":3.0}}"#).unwrap();
    let out = run(&["serve", "--config", p(&cfg), "--port", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("screen.width"), "{}", stderr(&out));
}

#[test]
fn empty_script_gives_idle_stable_digests() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("empty.jsonl");
    fs::write(&script, "").unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["simulate", "--script", p(&script), "--out", p(&out_dir), "--ticks", "10"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let digests = fs::read_to_string(out_dir.join("digests.txt")).unwrap();
    let lines: Vec<&str> = digests.lines().collect();
    assert_eq!(lines.len(), 10);
    let first = lines[0].split(' ').nth(1).unwrap();
    assert!(lines.iter().all(|l| l.split(' ').nth(1) == Some(first)));
    assert!(out_dir.join("final_snapshot.json").exists());
}

#[test]
fn bad_script_line_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bad.jsonl");
    fs::write(
        &script,
        "{\"message\":{\"payload\":{\"name\":\"next_slide\"},\"seq\":1,\"type\":\"command\"},\"t_us\":0}\n{\"t_us\":5}\n",
    )
    .unwrap();
    let out = run(&["simulate", "--script", p(&script), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn role_play_script_shows_an_avatar_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let script = repo().join("crates/core/scenarios/role_play_afterimage.jsonl");
    let mut digests = Vec::new();
    for run_id in 0..2 {
        let out_dir = dir.path().join(format!("run{run_id}"));
        let out = run(&["simulate", "--script", p(&script), "--out", p(&out_dir), "--seed", "3"]);
        assert!(out.status.success(), "{}", stderr(&out));
        digests.push(fs::read(out_dir.join("digests.txt")).unwrap());
        if run_id == 0 {
            let log = fs::read_to_string(out_dir.join("session.jsonl")).unwrap();
            let avatar = log
                .lines()
                .map(|l| serde_json::from_str::<Value>(l).unwrap())
                .any(|v| v["type"] == "state_snapshot" && v["payload"]["avatar"].is_object());
            assert!(avatar);
        }
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn analyze_bundled_dataset_writes_all_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["analyze", "--in", p(&repo().join("data/synthetic")), "--out", p(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 28);
    assert!(fs::read_to_string(dir.path().join("report.txt")).unwrap().contains("close_posture"));
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &to.join(e.file_name()));
        } else {
            fs::copy(e.path(), to.join(e.file_name())).unwrap();
        }
    }
}

#[test]
fn analyze_without_audio_marks_acoustic_rows_absent() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let gen = run(&["gen-dataset", "--out", p(&data), "--no-audio"]);
    assert!(gen.status.success(), "{}", stderr(&gen));
    let out_dir = dir.path().join("out");
    let out = run(&["analyze", "--in", p(&data), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    for row in report["rows"].as_array().unwrap() {
        if row["family"] == "audio" {
            assert_eq!(row["status"], "absent", "{row}");
        }
    }
}

#[test]
fn malformed_event_line_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    copy_dir(&repo().join("data/synthetic"), &data);
    let events = data.join("group_b/behavior.jsonl");
    let mut text = fs::read_to_string(&events).unwrap();
    text.push_str("{\"student_id\":\"b01\",\"category\":\"posture\"}\n");
    let line = text.lines().count();
    fs::write(&events, text).unwrap();
    let out = run(&["analyze", "--in", p(&data)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(&format!("behavior.jsonl:{line}")), "{}", stderr(&out));
}

#[test]
fn remote_analysis_matches_local() {
    let served = Served::start(&[]);
    let data = repo().join("data/synthetic");
    let dir = tempfile::tempdir().unwrap();
    let local = run(&["analyze", "--in", p(&data), "--out", p(&dir.path().join("local"))]);
    let remote = run(&[
        "analyze",
        "--in",
        p(&data),
        "--out",
        p(&dir.path().join("remote")),
        "--remote",
        &format!("http://{}", served.http),
    ]);
    assert!(local.status.success() && remote.status.success(), "{}", stderr(&remote));
    let read = |d: &str| fs::read_to_string(dir.path().join(d).join("report.json")).unwrap();
    assert_eq!(read("local"), read("remote"));
    assert_eq!(local.stdout, remote.stdout);
    assert_eq!(served.stop(), 0);
}

#[test]
fn generated_datasets_are_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for (i, seed) in ["5", "5", "6"].iter().enumerate() {
        let d = dir.path().join(i.to_string());
        assert!(run(&["gen-dataset", "--out", p(&d), "--seed", seed, "--no-audio"]).status.success());
        texts.push(fs::read(d.join("group_b/behavior.jsonl")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    assert_ne!(texts[0], texts[2]);
}
