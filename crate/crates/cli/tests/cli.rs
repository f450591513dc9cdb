//! End-to-end tests of the `convbid` binary: every command, the exit-code
//! contract, config hashing and worker-count determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use convbid::bidmodels::BidSet;
use convbid::synthetic::{generate_records, write_csv, SyntheticConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_convbid"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a small synthetic raw CSV and returns (dir, raw_path, cache_path).
fn fixture() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("prices.csv");
    let records = generate_records(&SyntheticConfig {
        num_nodes: 2,
        group_size: 1,
        num_days: 40,
        ..SyntheticConfig::default()
    });
    let mut buf = Vec::new();
    write_csv(&records, &mut buf).unwrap();
    fs::write(&raw, buf).unwrap();
    let cache = dir.path().join("panel.csv");
    (dir, raw, cache)
}

fn ingest(raw: &Path, cache: &Path) {
    let out = run(&[
        "ingest",
        "--input",
        raw.to_str().unwrap(),
        "--cache",
        cache.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn ingest_writes_versioned_cache_with_hash() {
    let (_dir, raw, cache) = fixture();
    let out = run(&[
        "ingest",
        "--input",
        raw.to_str().unwrap(),
        "--cache",
        cache.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("2 nodes"), "{text}");
    assert!(text.contains("960 hours"), "{text}");
    assert_eq!(first_line(&cache), "#convbid-panel-cache v1");
    let body = fs::read_to_string(&cache).unwrap();
    assert!(body.lines().nth(1).unwrap().starts_with("#config_hash="));
}

#[test]
fn ingest_dry_run_writes_nothing() {
    let (_dir, raw, cache) = fixture();
    let out = run(&[
        "ingest",
        "--input",
        raw.to_str().unwrap(),
        "--cache",
        cache.to_str().unwrap(),
        "--dry-run",
    ]);
    assert!(out.status.success());
    assert!(!cache.exists());
}

#[test]
fn ingest_malformed_row_exits_1_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("bad.csv");
    fs::write(
        &raw,
        "node,timestamp,da_lmp,rt_lmp\nA,2020-01-01T00:00:00Z,10,9\nA,not-a-time,10,9\n",
    )
    .unwrap();
    let out = run(&["ingest", "--input", raw.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn missing_input_path_exits_1() {
    let out = run(&["ingest", "--input", "/nonexistent/prices.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_model_is_a_usage_error() {
    let (_dir, raw, cache) = fixture();
    ingest(&raw, &cache);
    let out = run(&[
        "optimize",
        "--cache",
        cache.to_str().unwrap(),
        "--hour",
        "2019-02-05T07:00:00Z",
        "--model",
        "sample-q",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cluster_writes_representatives() {
    let (dir, raw, cache) = fixture();
    ingest(&raw, &cache);
    let out_csv = dir.path().join("clusters.csv");
    let out = run(&[
        "cluster",
        "--cache",
        cache.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let body = fs::read_to_string(&out_csv).unwrap();
    assert!(body.starts_with("#config_hash="));
    assert!(body.contains("node,representative"));
    assert!(body.contains("NODE000,"));
}

#[test]
fn optimize_writes_bids_and_solve_log() {
    let (dir, raw, cache) = fixture();
    ingest(&raw, &cache);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "optimize",
        "--cache",
        cache.to_str().unwrap(),
        "--hour",
        "2019-02-05T07:00:00Z",
        "--model",
        "sample-v",
        "--lookback-days",
        "20",
        "--alpha",
        "0.2",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let bids_csv = out_dir.join("bids-20190205T0700Z.csv");
    // the hash comment line must not break read-back
    let bids = BidSet::read_csv(fs::File::open(&bids_csv).unwrap()).unwrap();
    assert!(!bids.is_empty());
    let log: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("solve-log-20190205T0700Z.json")).unwrap())
            .unwrap();
    assert_eq!(log["status"], "optimal");
    assert!(log["config_hash"].is_string());
    assert!(log["in_sample_mean_normalized_revenue"].is_number());
    assert!(out_dir.join("bids-20190205T0700Z.json").exists());
}

#[test]
fn optimize_without_history_exits_2() {
    let (dir, raw, cache) = fixture();
    ingest(&raw, &cache);
    let out = run(&[
        "optimize",
        "--cache",
        cache.to_str().unwrap(),
        "--hour",
        "2019-01-05T07:00:00Z", // only 4 days of history
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

fn backtest_args<'a>(cache: &'a str, out_dir: &'a str) -> Vec<&'a str> {
    vec![
        "backtest",
        "--cache",
        cache,
        "--start",
        "2019-02-05T00:00:00Z",
        "--days",
        "1",
        "--model",
        "sample-p",
        "--lookback-days",
        "20",
        "--alpha",
        "0.2",
        "--out-dir",
        out_dir,
    ]
}

#[test]
fn backtest_writes_all_artifacts() {
    let (dir, raw, cache) = fixture();
    ingest(&raw, &cache);
    let out_dir = dir.path().join("out");
    let out = run(&backtest_args(
        cache.to_str().unwrap(),
        out_dir.to_str().unwrap(),
    ));
    assert!(out.status.success(), "{}", stderr(&out));
    for name in [
        "report.json",
        "outcomes.csv",
        "table-revenue.csv",
        "table-volumes.csv",
        "table-bids.csv",
        "ci.csv",
        "solve-times.csv",
        "daily-cleared-volume.csv",
        "summary.txt",
    ] {
        let path = out_dir.join(name);
        assert!(path.exists(), "missing {name}");
        let body = fs::read_to_string(&path).unwrap();
        assert!(body.contains("config_hash"), "{name} lacks the config hash");
    }
    // 24 per-hour files enable resume
    assert_eq!(fs::read_dir(out_dir.join("hours")).unwrap().count(), 24);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["partial"], false);
    assert_eq!(report["report"]["outcomes"].as_array().unwrap().len(), 24);
}

#[test]
fn worker_count_does_not_change_outputs() {
    let (dir, raw, cache) = fixture();
    ingest(&raw, &cache);
    let mut bodies = Vec::new();
    for workers in ["1", "4"] {
        let out_dir = dir.path().join(format!("out-{workers}"));
        let mut args = backtest_args(cache.to_str().unwrap(), out_dir.to_str().unwrap());
        args.extend(["--workers", workers]);
        let out = run(&args);
        assert!(out.status.success(), "{}", stderr(&out));
        // everything except wall-clock solve times must be byte-identical,
        // including the config hash in the first line of each file
        bodies.push((
            strip_solve_times(&fs::read_to_string(out_dir.join("outcomes.csv")).unwrap()),
            fs::read_to_string(out_dir.join("table-revenue.csv")).unwrap(),
            fs::read_to_string(out_dir.join("table-volumes.csv")).unwrap(),
            fs::read_to_string(out_dir.join("table-bids.csv")).unwrap(),
            fs::read_to_string(out_dir.join("ci.csv")).unwrap(),
            fs::read_to_string(out_dir.join("daily-cleared-volume.csv")).unwrap(),
        ));
    }
    assert_eq!(bodies[0], bodies[1], "worker count changed the outputs");
}

/// Blanks the solve_time_ms column of outcomes.csv; wall-clock timings are
/// the one legitimately nondeterministic output.
fn strip_solve_times(outcomes: &str) -> String {
    outcomes
        .lines()
        .map(|line| {
            if line.starts_with('#') || line.starts_with("target_hour") {
                return line.to_string();
            }
            let mut fields: Vec<&str> = line.split(',').collect();
            if fields.len() >= 9 {
                fields[8] = "-";
            }
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn resume_reuses_finished_hours() {
    let (dir, raw, cache) = fixture();
    ingest(&raw, &cache);
    let out_dir = dir.path().join("out");
    let mut args = backtest_args(cache.to_str().unwrap(), out_dir.to_str().unwrap());
    args.push("--resume");
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let reference = strip_solve_times(&fs::read_to_string(out_dir.join("outcomes.csv")).unwrap());

    // Poison one finished hour; resume must trust and reuse the others,
    // recompute the damaged one, and reproduce the same report.
    let poisoned = out_dir.join("hours/20190205T0500Z.json");
    fs::write(&poisoned, "{not json").unwrap();
    let before: Vec<(PathBuf, std::time::SystemTime)> = fs::read_dir(out_dir.join("hours"))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.path(), e.metadata().unwrap().modified().unwrap())
        })
        .collect();
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        strip_solve_times(&fs::read_to_string(out_dir.join("outcomes.csv")).unwrap()),
        reference
    );
    // untouched hours were not rewritten
    for (path, mtime) in before {
        if path != poisoned {
            assert_eq!(
                fs::metadata(&path).unwrap().modified().unwrap(),
                mtime,
                "{} was recomputed",
                path.display()
            );
        }
    }
}

#[test]
fn backtest_without_history_exits_2_and_marks_partial() {
    let (dir, raw, cache) = fixture();
    ingest(&raw, &cache);
    let out_dir = dir.path().join("out");
    let mut args = backtest_args(cache.to_str().unwrap(), out_dir.to_str().unwrap());
    args[4] = "2019-01-05T00:00:00Z"; // start with only 4 days of history
    let out = run(&args);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["partial"], true);
    assert!(fs::read_to_string(out_dir.join("outcomes.csv"))
        .unwrap()
        .contains("#partial=true"));
}

#[test]
fn report_regenerates_tables_from_report_json() {
    let (dir, raw, cache) = fixture();
    ingest(&raw, &cache);
    let out_dir = dir.path().join("out");
    let out = run(&backtest_args(
        cache.to_str().unwrap(),
        out_dir.to_str().unwrap(),
    ));
    assert!(out.status.success(), "{}", stderr(&out));
    let ci_before = fs::read_to_string(out_dir.join("ci.csv")).unwrap();

    let fresh = dir.path().join("tables");
    let out = run(&[
        "report",
        "--report",
        out_dir.join("report.json").to_str().unwrap(),
        "--out-dir",
        fresh.to_str().unwrap(),
        "--block-days",
        "1",
        "--alpha",
        "0.2",
    ]);
    // --alpha is not a report flag; expect usage error
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));

    let out = run(&[
        "report",
        "--report",
        out_dir.join("report.json").to_str().unwrap(),
        "--out-dir",
        fresh.to_str().unwrap(),
        "--block-days",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ci_after = fs::read_to_string(fresh.join("ci.csv")).unwrap();
    assert_ne!(ci_before, ci_after, "block length change must move the CI");
    assert!(fresh.join("table-revenue.csv").exists());
}

#[test]
fn config_file_drives_a_run_and_flags_override_it() {
    let (dir, raw, cache) = fixture();
    ingest(&raw, &cache);
    let out_dir = dir.path().join("out");
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        format!(
            r#"
[data]
cache = "{cache}"

[model]
kind = "sample-p"
alpha = 0.2
total_volume = 500.0

[backtest]
start = "2019-02-05T00:00:00Z"
num_days = 1
lookback_days = 20

[output]
dir = "{out}"
"#,
            cache = cache.display(),
            out = out_dir.display()
        ),
    )
    .unwrap();
    let out = run(&["backtest", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let hash_a = fs::read_to_string(out_dir.join("outcomes.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();

    // A flag override must change the effective config and thus the hash.
    let out = run(&[
        "backtest",
        "--config",
        config.to_str().unwrap(),
        "--total-volume",
        "400",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let hash_b = fs::read_to_string(out_dir.join("outcomes.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_ne!(hash_a, hash_b);
}
