use std::fs;
use std::process::Command;

use cachegym::harness::read_results;
use cachegym::trace::read_trace;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cachegym"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn gen_trace_writes_a_readable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.trace");
    run_ok(cli().args(["gen-trace", "--num-contents", "50", "--requests", "300", "--seed", "4", "--out"]).arg(&path));
    let trace = read_trace(&path).unwrap();
    assert_eq!((trace.num_contents, trace.len(), trace.seed), (50, 300, 4));

    let dynamic = dir.path().join("d.trace");
    run_ok(
        cli()
            .args(["gen-trace", "--num-contents", "50", "--requests", "300", "--dynamic", "--change-interval", "100", "--out"])
            .arg(&dynamic),
    );
    assert_eq!(read_trace(&dynamic).unwrap().change_log.len(), 3);
}

#[test]
fn run_writes_results_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let stdout = run_ok(
        cli()
            .args(["run", "--capacity", "5,10", "--num-contents", "60", "--requests", "800", "--policy", "lru,lfu,fifo"])
            .args(["--seeds", "2", "--out"])
            .arg(&out),
    );
    let rows = read_results(&out).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 3);
    assert!(rows.iter().all(|r| r.experiment == "capacity-sweep" && r.window_end == 640));
    assert!(dir.path().join("r.aggregate.csv").exists());
    assert!(stdout.starts_with("policy,capacity"));
    assert_eq!(stdout.lines().count(), 1 + 2 * 3);
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.txt");
    fs::write(&config, "# smaller run\ncapacity = 3\npolicy = lru\n").unwrap();
    let out = dir.path().join("r.csv");
    run_ok(
        cli()
            .args(["run", "--capacity", "7", "--policy", "fifo", "--num-contents", "40", "--requests", "500", "--seeds", "1"])
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out),
    );
    let rows = read_results(&out).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].policy.as_str(), rows[0].capacity), ("lru", 3));
}

#[test]
fn checkpoint_can_be_inspected() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt");
    run_ok(
        cli()
            .args(["run", "--capacity", "4", "--policy", "drl", "--num-contents", "30", "--requests", "600", "--seeds", "1"])
            .arg("--checkpoint-dir")
            .arg(&ckpt),
    );
    let cell = ckpt.join("drl_0.15-c4-s1");
    let stdout = run_ok(cli().arg("inspect-checkpoint").arg(&cell));
    assert!(stdout.contains("config digest:"));
    assert!(stdout.contains("actor.mlp") && stdout.contains("critic.mlp"));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = cli().args(["run", "--experiment", "nope"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = cli().args(["run", "--policy", "lru", "--capacity", "0", "--seeds", "1"]).output().unwrap();
    assert!(!out.status.success());
}
