use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bench(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaxed-bench"))
        .args(args)
        .env("RELAXED_OUT_DIR", out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Column header and rows, without the `#` config lines.
fn body(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn misspelled_keys_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(dir.path(), &["seq", "--stepz", "10"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("stepz"), "{}", stderr(&o));

    let file = dir.path().join("bad.toml");
    fs::write(&file, "bins = 8\nsnapshot_evry = 2\n").unwrap();
    let o = bench(dir.path(), &["seq", "--config", file.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("snapshot_evry"));

    let o = bench(dir.path(), &["sim", "--threads", "four"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("threads"));

    fs::write(&file, "bins = 8\n").unwrap();
    let o = bench(dir.path(), &["run", "--config", file.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("experiment"));
}

#[test]
fn empty_config_runs_on_defaults_and_records_them() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("empty.toml");
    fs::write(&file, "").unwrap();
    let o = bench(dir.path(), &["queue", "--config", file.to_str().unwrap(), "--prefill", "2000", "--dequeues", "500"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(dir.path(), "queue_ranks.csv");
    assert!(csv.contains("# bins = 64 (default)"));
    assert!(csv.contains("# prefill = 2000 (explicit)"));
    let rows = body(&csv);
    assert_eq!(rows[0], "seq,rank,queue,stamp");
    assert_eq!(rows.len(), 501);
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("seq.toml");
    fs::write(&file, "experiment = \"seq\"\nbins = 16\nsteps = 4000\nsnapshot_every = 100\n").unwrap();
    let o = bench(dir.path(), &["run", "--config", file.to_str().unwrap(), "--bins=32"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(dir.path(), "seq_seed1.csv");
    assert!(csv.contains("# bins = 32 (explicit)"));
    assert!(csv.contains("# steps = 4000 (explicit)"));
    assert_eq!(body(&csv).len(), 1 + 40);
    let summary = read(dir.path(), "seq_summary.csv");
    assert!(body(&summary)[1].ends_with(",4000"), "{summary}");
}

#[test]
fn simulator_and_sequential_outputs_are_reproducible() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let o = bench(dir.path(), &["sim", "--ops", "20000", "--reads-per-update", "1", "--adversary", "block-reset"]);
            assert!(o.status.success(), "{}", stderr(&o));
            let o = bench(dir.path(), &["seq", "--steps", "20000", "--seeds", "2"]);
            assert!(o.status.success(), "{}", stderr(&o));
            dir
        })
        .collect();
    for name in ["sim_trajectory.csv", "sim_windows.csv", "sim_summary.csv", "sim_tail.csv", "seq_seed2.csv"] {
        assert_eq!(read(runs[0].path(), name), read(runs[1].path(), name), "{name}");
    }
    let summary = read(runs[0].path(), "sim_summary.csv");
    assert!(body(&summary)[1].starts_with("block-reset(64),20000,"), "{summary}");
}

#[test]
fn live_runs_report_mean_and_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(
        dir.path(),
        &["stm", "--runs", "3", "--duration-ms", "30", "--objects", "1000", "--threads", "1,2", "--pin", "false"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read(dir.path(), "stm_summary.csv");
    let rows = body(&summary);
    assert_eq!(rows.len(), 1 + 4);
    assert!(rows[1..].iter().all(|r| r.ends_with(",true")));
    let per_run = read(dir.path(), "stm_M1000.csv");
    assert_eq!(body(&per_run).len(), 1 + 4 * 3);

    let o = bench(dir.path(), &["counter", "--runs", "2", "--duration-ms", "20", "--threads", "2", "--kinds", "multi"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read(dir.path(), "counter_throughput.csv");
    assert_eq!(body(&rows).len(), 1 + 3);

    let o = bench(dir.path(), &["queue", "--mode", "stress", "--runs", "1", "--duration-ms", "50", "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read(dir.path(), "queue_stress.csv");
    assert!(body(&rows)[1].contains(",0,0,0,"), "{rows}");
}

#[test]
fn quality_and_history_modes() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(dir.path(), &["counter", "--mode", "quality", "--increments", "6400", "--every", "64"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read(dir.path(), "counter_quality.csv");
    let rows = body(&rows);
    assert_eq!(rows.len(), 1 + 100);
    assert!(rows[100].starts_with("6400,"));

    let o = bench(dir.path(), &["queue", "--mode", "history", "--history-ops", "500", "--history-threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(body(&read(dir.path(), "queue_history.csv")).len(), 1 + 1000);
    assert!(body(&read(dir.path(), "queue_tail.csv"))[1].starts_with("1000,"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        relaxed_bench::parse_config(None, Some(&text), &[], 4).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 5);
}
