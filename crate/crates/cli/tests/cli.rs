use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_episync"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn summary(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("summary.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn undisturbed_run_exits_zero_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["run", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.jsonl", "trace.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let s = summary(dir.path());
    assert_eq!(s["satisfied"], true);
    assert_eq!(s["disturbances"], 0);
    assert_eq!(s["conditions"]["c1"], true);
}

#[test]
fn format_flag_selects_one_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&["run", "--out", d, "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("trace.csv").exists());
    assert!(!dir.path().join("trace.jsonl").exists());
}

#[test]
fn unrecoverable_script_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--scenario",
        fixture("tight.json").to_str().unwrap(),
        "--disturbance-script",
        fixture("unrecoverable_script.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let s = summary(dir.path());
    assert_eq!(s["aborted"], true);
    assert_eq!(s["abort_reason"], "unrecoverable");
}

#[test]
fn tight_scenario_without_script_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--scenario",
        fixture("tight.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn missing_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["run", "--scenario", "does/not/exist.json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exist.json"));
}

#[test]
fn unknown_scenario_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--scenario",
        fixture("bad_key.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("map.cell_size"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["run", "--mode", "alg2"]).status.code(), Some(1));
    assert_eq!(run(&["run", "--disturbance-prob", "1.5"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_disturbance_script_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.json");
    std::fs::write(&script, r#"[{"agent": 0, "step": 1}]"#).unwrap();
    let out = run(&[
        "run",
        "--disturbance-script",
        script.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run(&[
            "run",
            "--disturbance-prob",
            "0.1",
            "--seed",
            "11",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(matches!(out.status.code(), Some(0) | Some(2)));
    }
    for f in ["trace.jsonl", "trace.csv", "summary.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn sweep_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep",
        "--levels",
        "0,0.1",
        "--episodes",
        "2",
        "--seed",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let levels = std::fs::read_to_string(dir.path().join("levels.csv")).unwrap();
    assert_eq!(levels.lines().count(), 3);
    let episodes = std::fs::read_to_string(dir.path().join("episodes.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 5);
}

#[test]
fn sweep_rejects_unsorted_levels() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["sweep", "--levels", "0.2,0.1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn render_lists_every_agent_each_step() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(run(&["run", "--out", d]).status.code(), Some(0));
    let csv_path = dir.path().join("render.csv");
    let out = run(&[
        "render",
        "--trace",
        dir.path().join("trace.jsonl").to_str().unwrap(),
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,agent,x,y,e,synced,event"));
    let task_time = summary(dir.path())["task_time"].as_u64().unwrap() as usize;
    assert_eq!(lines.count(), 3 * (task_time + 1));
}

#[test]
fn render_rejects_corrupt_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.jsonl");
    std::fs::write(&path, "{\"schema\":\"episync-trace/1\"}\nnot json\n").unwrap();
    let out = run(&["render", "--trace", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
