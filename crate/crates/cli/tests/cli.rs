use std::path::Path;
use std::process::{Command, Output};

use tsn_elevate::harness::config::{grid_default, SchedulabilitySpec};
use tsn_elevate::harness::export::parse_schedule_text;
use tsn_elevate::time::US;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsn-elevate"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn small_config(dir: &Path) -> String {
    let mut c = grid_default();
    c.streams[0].count = 6;
    c.sporadic[0].count = 2;
    c.simulation.hypercycles = 50;
    c.schedulability = Some(SchedulabilitySpec {
        sporadic_counts: vec![0, 4],
        instances: 3,
        sporadic_min_inter_event: 200 * US,
    });
    let path = dir.join("small.toml");
    std::fs::write(&path, c.to_toml()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn generate_writes_scenario_and_config() {
    let d = tempfile::tempdir().unwrap();
    let o = cli(d.path(), &["generate", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("scenario.json").exists());
    let cfg = std::fs::read_to_string(d.path().join("config.toml")).unwrap();
    assert!(cfg.contains("seed = 3"));
}

#[test]
fn augment_writes_a_readable_schedule() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let o = cli(d.path(), &["augment", "--config", &cfg, "--graph"]);
    assert!(matches!(code(&o), 0 | 3), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.path().join("schedule.txt")).unwrap();
    let s = parse_schedule_text(&text).unwrap();
    assert!(!s.gcl.is_empty());
    assert!(d.path().join("graph.dot").exists());
}

#[test]
fn json_lines_output() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let o = cli(d.path(), &["buckets", "--config", &cfg, "--format", "json-lines"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.path().join("buckets.jsonl")).unwrap();
    for line in text.lines() {
        assert!(line.starts_with('{') && line.contains("\"size_bits\""), "{line}");
    }
}

#[test]
fn simulate_honours_the_horizon() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let o = cli(d.path(), &["simulate", "--config", &cfg, "--horizon", "7", "--trace"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("7 hypercycles"));
    let events = std::fs::read_to_string(d.path().join("events.csv")).unwrap();
    assert!(events.starts_with("time_ns,event,stream,frame_index,node,pcp,detail"));
}

#[test]
fn study_output_is_byte_identical_across_runs() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let a = d.path().join("a");
    let b = d.path().join("b");
    assert_eq!(code(&cli(&a, &["study-schedulability", "--config", &cfg, "--seed", "9"])), 0);
    assert_eq!(code(&cli(&b, &["study-schedulability", "--config", &cfg, "--seed", "9"])), 0);
    let x = std::fs::read(a.join("schedulability.csv")).unwrap();
    let y = std::fs::read(b.join("schedulability.csv")).unwrap();
    assert!(!x.is_empty());
    assert_eq!(x, y);
}

#[test]
fn config_errors_exit_with_4() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.toml");
    std::fs::write(&bad, "this is = = not toml").unwrap();
    assert_eq!(code(&cli(d.path(), &["schedule", "--config", bad.to_str().unwrap()])), 4);
    assert_eq!(code(&cli(d.path(), &["schedule", "--config", "/nonexistent/x.toml"])), 4);
    assert_eq!(code(&cli(d.path(), &["simulate", "--horizon", "0"])), 4);
}

#[test]
fn infeasible_schedules_exit_with_2() {
    let d = tempfile::tempdir().unwrap();
    let mut c = grid_default();
    c.streams[0].latency_factors = vec![];
    c.streams[0].latency = Some(5 * US);
    let path = d.path().join("tight.toml");
    std::fs::write(&path, c.to_toml()).unwrap();
    let o = cli(d.path(), &["schedule", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verification_failures_exit_with_3() {
    // seed 4 of the default grid schedules but misses bounds once augmented
    let d = tempfile::tempdir().unwrap();
    let o = cli(d.path(), &["verify", "--seed", "4"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("latency.csv").exists());
}
