use std::fs;
use std::net::SocketAddr;
use std::path::Path;
use std::process::{Command, Output};

use rankq_core::WindowConfig;
use rankq_server::AppState;

const SMALL: &[&str] = &[
    "--ticks",
    "1500",
    "--service-start",
    "300",
    "--sketches",
    "8",
    "--query-fraction",
    "0.01",
];

fn rankq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankq"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = rankq(args);
    assert!(
        out.status.success(),
        "rankq {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn ok_at(url: &str, rest: &[&str]) -> String {
    let mut args = vec!["--server", url];
    args.extend_from_slice(rest);
    ok(&args)
}

fn simulate(out: &Path, extra: &[&str]) -> String {
    let mut args = vec!["simulate", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn same_seed_same_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    simulate(&a, &["--seed", "9"]);
    simulate(&b, &["--seed", "9"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(a.with_extension("snap")).unwrap(),
        fs::read(b.with_extension("snap")).unwrap()
    );
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(a.with_extension("json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 9);
    assert_eq!(summary["sketches"], 8);

    let c = dir.path().join("c.csv");
    simulate(&c, &["--seed", "10"]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn no_arrivals_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty.csv");
    let stdout = simulate(&out, &["--arrival-rate", "0"]);
    assert!(stdout.contains("queries 0"), "{stdout}");
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 1, "{csv}");

    let report = rankq(&["report", "--in", out.to_str().unwrap()]);
    assert!(!report.status.success());
    assert!(String::from_utf8_lossy(&report.stderr).contains("empty_report"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let missing_dir = dir.path().join("no/such/dir/x.csv");
    let out = rankq(&["simulate", "--out", missing_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("creating"));

    let target = dir.path().join("x.csv");
    let out = rankq(&[
        "simulate",
        "--out",
        target.to_str().unwrap(),
        "--width",
        "wide",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("width"));

    let out = rankq(&[
        "simulate",
        "--out",
        target.to_str().unwrap(),
        "--renewal",
        "100",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("renewal"));

    let out = rankq(&["simulate"]);
    assert!(!out.status.success());

    let junk = dir.path().join("junk.snap");
    fs::write(&junk, b"not a snapshot").unwrap();
    let out = rankq(&["sketch-dump", "--in", junk.to_str().unwrap()]);
    assert!(!out.status.success());

    let out = rankq(&["status"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--server"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-file.csv");
    let conf = dir.path().join("sim.conf");
    fs::write(
        &conf,
        format!(
            "# small run\nticks = 1500\nservice-start = 300\nsketches = 8\nquery-fraction = 0.01\nseed = 3\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    ok(&[
        "simulate",
        "--config",
        conf.to_str().unwrap(),
        "--seed",
        "4",
    ]);
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 4);
    assert_eq!(summary["config"]["ticks"], 1500);
}

#[test]
fn report_and_dump_read_simulate_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    simulate(&out, &[]);
    let text = ok(&["report", "--in", out.to_str().unwrap(), "--eps-n", "50"]);
    assert!(text.starts_with("records: "), "{text}");
    assert!(text.contains("< 50.000"), "{text}");

    let json = ok(&["report", "--in", out.to_str().unwrap(), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v["records"].as_u64().unwrap() > 0);

    let snap = out.with_extension("snap");
    let dump = ok(&["sketch-dump", "--in", snap.to_str().unwrap()]);
    assert!(dump.starts_with("FMRK v1 kind=Window K=8 W=64"), "{dump}");
}

#[tokio::test(flavor = "multi_thread")]
async fn talks_to_a_running_server() {
    let config = WindowConfig {
        delta: 10,
        sketches: Some(16),
        ..WindowConfig::default()
    };
    let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let (local, _server) = rankq_server::spawn(addr, AppState::new(config).unwrap())
        .await
        .unwrap();
    let url = format!("http://{local}");
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("state.snap");
    let snap_arg = snap.to_str().unwrap().to_string();

    let out = tokio::task::spawn_blocking(move || {
        for c in 0..20 {
            let id = format!("c{c}");
            ok_at(
                &url,
                &["observe", "--client-id", &id, "--ts", "2", "--now", "3"],
            );
        }
        assert!(ok_at(&url, &["rotate", "--now", "10"]).contains("window 1"));
        let rank = ok_at(&url, &["rank", "--rho-ts", "2", "--t-cur", "11"]);
        let status = ok_at(&url, &["status"]);
        ok_at(&url, &["snapshot", "--out", &snap_arg]);
        ok_at(&url, &["restore", "--in", &snap_arg]);
        let stale = rankq(&["--server", &url, "rank", "--rho-ts", "2", "--t-cur", "99"]);
        (rank, status, stale)
    })
    .await
    .unwrap();

    assert!(out.0.starts_with("rank ~ "), "{}", out.0);
    assert_eq!(out.1.trim(), "window 1 now 10");
    assert!(!out.2.status.success());
    assert!(String::from_utf8_lossy(&out.2.stderr).contains("stale_window"));
    assert_eq!(&fs::read(&snap).unwrap()[..4], b"FMRK");
}
