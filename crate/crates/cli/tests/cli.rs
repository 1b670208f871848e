use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;
use std::time::Duration;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metertwin"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn metertwin")
}

fn scenario_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/residential-day.json")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_prints_summary_and_writes_state() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    let o = run(&[
        "simulate",
        scenario_path().to_str().unwrap(),
        "--state",
        state.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["name"], "residential-day");
    assert_eq!(summary["rate_partition_holds"], true);
    assert_eq!(summary["clock"], "2024-05-06T09:45:00");
    assert!(state.exists());
}

#[test]
fn resume_continues_from_saved_clock() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    let sc = scenario_path();
    assert!(
        run(&["simulate", sc.to_str().unwrap(), "--state", state.to_str().unwrap()])
            .status
            .success()
    );
    let o = run(&["simulate", sc.to_str().unwrap(), "--resume", state.to_str().unwrap()]);
    assert!(o.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["clock"], "2024-05-06T13:30:00");
}

#[test]
fn analyze_writes_spectrum_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("spectrum.csv");
    let o = run(&[
        "analyze",
        scenario_path().to_str().unwrap(),
        "--spectrum",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("segment,phase,order,"));
    assert_eq!(text.lines().count(), 1 + 2 * 49);
    assert!(stdout(&o).contains("49.8000 Hz"));
}

#[test]
fn bench_passes_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let cmp = dir.path().join("compare.csv");
    let o = run(&[
        "bench",
        "--class",
        "0.2S",
        "--out",
        out.to_str().unwrap(),
        "--compare",
        cmp.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("class 0.2S: PASS"));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1 + 4 * 3);
    assert_eq!(std::fs::read_to_string(&cmp).unwrap().lines().count(), 1 + 4 * 8);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["bench", "--class", "0.3"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "/nonexistent/scenario.json"]).status.code(), Some(2));
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

#[test]
fn serve_and_client_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("meter.json");
    let port = free_port();
    let mut server = bin()
        .args(["serve", "--port", &port.to_string(), "--state", state.to_str().unwrap()])
        .spawn()
        .unwrap();
    let addr = format!("127.0.0.1:{port}");
    let mut ready = false;
    for _ in 0..100 {
        if std::net::TcpStream::connect(&addr).is_ok() {
            ready = true;
            break;
        }
        thread::sleep(Duration::from_millis(50));
    }
    assert!(ready, "server did not start");

    let read = run(&["client", "--addr", &addr, "read", "--di", "0x00010000"]);
    assert_eq!(read.status.code(), Some(0));
    assert!(stdout(&read).contains("value: 0.00"));

    let freeze = run(&["client", "--addr", &addr, "freeze", "--password", "4"]);
    assert_eq!(freeze.status.code(), Some(0));
    let denied = run(&["client", "--addr", &addr, "zero", "--kind", "demand", "--password", "7"]);
    assert_eq!(denied.status.code(), Some(1));
    assert!(stdout(&denied).contains("AuthFailure"));
    let unknown = run(&["client", "--addr", &addr, "read", "--di", "0x7F000000"]);
    assert_eq!(unknown.status.code(), Some(1));

    server.kill().unwrap();
    server.wait().unwrap();
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&state).unwrap()).unwrap();
    assert!(saved["freezes"].is_object());
}
