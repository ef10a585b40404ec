use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use colfi_core::evaluation::{run_all_but_one, AllButOneOptions};
use colfi_core::ingest::{ingest_ratings, IngestOptions};
use colfi_core::persist::{load_snapshot, save_snapshot};
use colfi_core::predict::predict;
use colfi_core::protocol::CcpClient;
use colfi_core::synthetic::{matrix, taste_clusters, TasteConfig};
use colfi_core::*;

fn colfi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colfi")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_snapshot(dir: &Path) -> (std::path::PathBuf, RatingsMatrix) {
    let cfg = TasteConfig {
        users: 150,
        profiles: 90,
        ratings_per_user: (10, 30),
        ..TasteConfig::standard()
    };
    let m = matrix(cfg.scale, taste_clusters(&cfg, 6));
    let mut attrs = Attributes::new();
    for id in 0..150 {
        attrs.set(UserId(id), if id % 2 == 0 { Gender::Male } else { Gender::Female });
    }
    let p = dir.join("small.snap");
    save_snapshot(&p, &m, &attrs).unwrap();
    (p, m)
}

#[test]
fn ingest_writes_a_snapshot_equal_to_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let genders = dir.path().join("g.csv");
    std::fs::write(&csv, "1,10,3\n1,11,7\n2,10,9\n3,12,1\n2,10,4\n").unwrap();
    std::fs::write(&genders, "1,M\n2,F\n").unwrap();
    let snap = dir.path().join("out.snap");
    let o = colfi(&["ingest", "--ratings", csv.to_str().unwrap(), "--genders", genders.to_str().unwrap(), "--out", snap.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("ratings: 5 accepted, 0 skipped"));
    let (m, attrs) = load_snapshot(&snap).unwrap();
    let (want, _) = ingest_ratings(std::fs::File::open(&csv).unwrap(), &IngestOptions::default()).unwrap();
    assert_eq!(m.iter().collect::<Vec<_>>(), want.iter().collect::<Vec<_>>());
    assert_eq!(m.get(UserId(2), ProfileId(10)), Some(4));
    assert_eq!(attrs.gender(UserId(2)), Gender::Female);
}

#[test]
fn usage_problems_exit_with_two_and_runtime_ones_with_one() {
    assert_eq!(colfi(&["ingest", "--ratings", "/no/such/file.csv", "--out", "/tmp/x.snap"]).status.code(), Some(2));
    assert_eq!(colfi(&["bench", "--preset", "uniform", "--algorithm", "slope-one"]).status.code(), Some(2));
    assert_eq!(colfi(&["bench", "--protocol", "leave-two-out"]).status.code(), Some(2));
    assert_eq!(colfi(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(colfi(&["stats"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2,3\n1,2,99\n").unwrap();
    let o = colfi(&["ingest", "--ratings", bad.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = colfi(&["ingest", "--skip-bad", "--ratings", bad.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(stdout(&o).contains("1 accepted, 1 skipped"));
}

#[test]
fn stats_prints_the_overview_block() {
    let dir = tempfile::tempdir().unwrap();
    let (snap, _) = small_snapshot(dir.path());
    let text = stdout(&colfi(&["stats", "--snapshot", snap.to_str().unwrap()]));
    for label in [
        "total users",
        "users with ratings",
        "items with ratings",
        "ratings",
        "density",
        "max ratings from 1 user",
        "max ratings for 1 profile",
        "rating (mean/med/sd)",
    ] {
        assert!(text.lines().any(|l| l.starts_with(label)), "{label} missing in\n{text}");
    }
    let empty = dir.path().join("empty.snap");
    save_snapshot(&empty, &RatingsMatrix::new(RatingScale::DEFAULT), &Attributes::new()).unwrap();
    let o = colfi(&["stats", "--snapshot", empty.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("undefined"));
}

#[test]
fn bench_matches_the_library_and_echoes_its_config() {
    let dir = tempfile::tempdir().unwrap();
    let (snap, m) = small_snapshot(dir.path());
    let out = dir.path().join("reports");
    let args = [
        "bench",
        "--snapshot",
        snap.to_str().unwrap(),
        "--algorithm",
        "mean",
        "--algorithm",
        "user-user:5:50",
        "--threads",
        "1",
        "--out-dir",
        out.to_str().unwrap(),
    ];
    let o = colfi(&args);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("# protocol\tall_but_one"));
    assert!(text.contains("# threads\t1"));
    assert!(text.contains(&format!("# source\tsnapshot {}", snap.display())));
    for spec in [AlgorithmSpec::mean(), AlgorithmSpec::user_user(SimilarityParams::new(5, 50).unwrap())] {
        let lib = run_all_but_one(&m, &spec, AllButOneOptions::default()).unwrap();
        let row = format!("{spec}\t{:.4}\t{}\t{}\ttrue", lib.overall_nmae.unwrap(), lib.counted, lib.skipped);
        assert!(text.lines().any(|l| l == row), "{row:?} not in\n{text}");
    }
    assert!(text.contains("User-User (5,50)\t"));
    let report = std::fs::read_to_string(out.join("all_but_one_user-user-5-50.tsv")).unwrap();
    assert!(report.starts_with("# protocol\tall_but_one\n# algorithm\tUser-User (5,50)\n"));
    assert!(report.contains("# route\tfast"));
    // same config, same bytes
    assert_eq!(stdout(&colfi(&args)), text);
}

#[test]
fn flags_win_over_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let (snap, _) = small_snapshot(dir.path());
    let cfg = dir.path().join("colfi.toml");
    std::fs::write(
        &cfg,
        format!("[bench]\nsnapshot = {:?}\nalgorithms = [\"mean\"]\nprotocol = \"all-but-one\"\nthreads = 1\n", snap.to_str().unwrap()),
    )
    .unwrap();
    let from_file = stdout(&colfi(&["--config", cfg.to_str().unwrap(), "bench"]));
    assert!(from_file.lines().any(|l| l.starts_with("Mean\t")));
    let flagged = stdout(&colfi(&["--config", cfg.to_str().unwrap(), "bench", "--algorithm", "random:3"]));
    assert!(flagged.lines().any(|l| l.starts_with("Random\t")));
    assert!(!flagged.lines().any(|l| l.starts_with("Mean\t")));
    std::fs::write(&cfg, "[bench]\nalgoritms = [\"mean\"]\n").unwrap();
    assert_eq!(colfi(&["--config", cfg.to_str().unwrap(), "bench"]).status.code(), Some(2));
}

fn spawn(args: &[&str]) -> (Child, BufReader<std::process::ChildStdout>) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_colfi"))
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .unwrap();
    let out = BufReader::new(child.stdout.take().unwrap());
    (child, out)
}

fn read_until(out: &mut BufReader<std::process::ChildStdout>, pred: impl Fn(&str) -> bool) -> Vec<String> {
    let mut lines = Vec::new();
    loop {
        let mut line = String::new();
        assert!(out.read_line(&mut line).unwrap() > 0, "process ended early; saw {lines:?}");
        let done = pred(line.trim_end());
        lines.push(line.trim_end().to_string());
        if done {
            return lines;
        }
    }
}

fn terminate(child: &mut Child) -> std::process::ExitStatus {
    Command::new("kill").arg("-TERM").arg(child.id().to_string()).status().unwrap();
    child.wait().unwrap()
}

#[test]
fn serve_answers_like_the_library_and_stops_on_sigterm() {
    let dir = tempfile::tempdir().unwrap();
    let (snap, m) = small_snapshot(dir.path());
    let (mut child, mut out) = spawn(&[
        "serve",
        "--snapshot",
        snap.to_str().unwrap(),
        "--algorithm",
        "mean",
        "--algorithm",
        "user-user:3:20",
        "--recommender",
        "127.0.0.1:0",
        "--data",
        "127.0.0.1:0",
        "--stats",
        "127.0.0.1:0",
    ]);
    let lines = read_until(&mut out, |l| l.starts_with("stats listening"));
    let rec = lines.iter().find_map(|l| l.strip_prefix("recommender listening on ")).unwrap();
    assert!(lines.contains(&"algorithm 1\tUser-User (3,20)".to_string()));
    let mut c = CcpClient::connect(rec).unwrap();
    let spec = AlgorithmSpec::user_user(SimilarityParams::new(3, 20).unwrap());
    for i in 0..30 {
        let (a, j) = (UserId(i * 5 % 150), ProfileId(i * 7 % 90));
        assert_eq!(c.predict(1, a, j).unwrap().0, predict(&m, None, &spec, a, j));
    }
    let status = terminate(&mut child);
    assert!(status.success(), "{status:?}");
    let rest = read_until(&mut out, |l| l == "shut down");
    assert_eq!(rest.last().unwrap(), "shut down");
}

#[test]
fn serve_reports_a_port_conflict() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().to_string();
    let o = colfi(&["serve", "--recommender", &port, "--data", "127.0.0.1:0", "--stats", "127.0.0.1:0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot bind"));
}

fn http(addr: &str, method: &str, path: &str, body: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    resp
}

#[test]
fn experiment_serves_http_and_keeps_its_log() {
    let dir = tempfile::tempdir().unwrap();
    let (snap, _) = small_snapshot(dir.path());
    let log = dir.path().join("events.ndjson");
    let (mut child, mut out) = spawn(&[
        "experiment",
        "--snapshot",
        snap.to_str().unwrap(),
        "--listen",
        "127.0.0.1:0",
        "--event-log",
        log.to_str().unwrap(),
        "--rating-target",
        "5",
    ]);
    let line = read_until(&mut out, |l| l.starts_with("experiment listening"));
    let addr = line[0].rsplit("http://").next().unwrap().to_string();
    let resp = http(&addr, "POST", "/sessions", r#"{"gender":"F"}"#);
    assert!(resp.starts_with("HTTP/1.1 201"), "{resp}");
    assert!(resp.contains("\"phase\":\"rating\""));
    assert!(http(&addr, "GET", "/tally.csv", "").contains("algorithm,Random,Mean,\"User-User (10,50)\""));
    assert!(terminate(&mut child).success());
    let text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("\"event\":\"started\""));
    let o = colfi(&["tally", "--event-log", log.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("algorithm,Random,Mean,"));
}
