use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fpm-balance"));
    cmd.env_remove("FPM_BALANCE_LOG");
    cmd
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

const TWO_NODES: &str = r#"{"name": "two", "n": 30, "profiles": [{"peak_speed": 2.0}, {"peak_speed": 1.0}], "epsilon": 0.05}"#;

const PAGING: &str = r#"{
  "name": "paging",
  "n": 10000,
  "profiles": [
    {"peak_speed": 1e4}, {"peak_speed": 1e4}, {"peak_speed": 1e4},
    {"peak_speed": 1e4, "ram_size": 2000, "paging_decay": 0.05}
  ]
}"#;

const GRID: &str = r#"{
  "name": "grid",
  "m": 60, "n": 60, "p": 2, "q": 2,
  "profiles": [{"peak_speed": 300}, {"peak_speed": 100}, {"peak_speed": 200}, {"peak_speed": 200}]
}"#;

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn run_writes_one_row_per_round_and_processor() {
    let dir = TempDir::new().unwrap();
    write(&dir, "s.json", TWO_NODES);
    let o = run(&["run", "--mode", "sim", "--dim", "1d", "--scenario", "s.json", "--eps", "0.025", "--out", "trace.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "round,processor,d,time_s,speed,imbalance,status");
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines[4].ends_with(",converged"));
}

#[test]
fn data_goes_to_stdout_only_on_request() {
    let dir = TempDir::new().unwrap();
    write(&dir, "s.json", TWO_NODES);
    let o = run(&["run", "--scenario", "s.json", "--out", "-", "--format", "json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim_start().starts_with('{'));
    assert!(stderr(&o).contains("converged"));
}

#[test]
fn zero_epsilon_is_rejected() {
    let dir = TempDir::new().unwrap();
    write(&dir, "s.json", TWO_NODES);
    let o = run(&["run", "--scenario", "s.json", "--eps", "0", "--out", "t.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epsilon"));
    assert!(!dir.path().join("t.csv").exists());
}

#[test]
fn missing_scenario() {
    let dir = TempDir::new().unwrap();
    let o = run(&["run", "--scenario", "absent.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scenario not found"));
}

#[test]
fn malformed_scenario_names_the_field() {
    let dir = TempDir::new().unwrap();
    write(&dir, "bad.json", "{\"n\": 30,\n \"profiles\": [{\"peak_speed\": true}]}");
    let o = run(&["run", "--scenario", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("profiles[0].peak_speed") && err.contains("line 2"), "{err}");
}

#[test]
fn round_limit_exits_with_two() {
    let dir = TempDir::new().unwrap();
    write(&dir, "s.json", r#"{"n": 31, "profiles": [{"peak_speed": 2.0}, {"peak_speed": 1.0}]}"#);
    let o = run(&["run", "--scenario", "s.json", "--eps", "1e-6", "--max-rounds", "4", "--out", "t.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("s: max_iterations"), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(csv.lines().last().unwrap().ends_with(",max_iterations"));
}

#[test]
fn grid_run_writes_cells() {
    let dir = TempDir::new().unwrap();
    write(&dir, "g.json", GRID);
    let o = run(&["run", "--dim", "2d", "--scenario", "g.json", "--eps", "0.05", "--out", "g.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert!(csv.starts_with("outer_round,column,processor,m_ij,n_j,time_s,speed,censored,global_imbalance\n"));
    assert_eq!((csv.lines().count() - 1) % 4, 0);
}

#[test]
fn plotdata_from_json_and_csv() {
    let dir = TempDir::new().unwrap();
    write(&dir, "s.json", TWO_NODES);
    run(&["run", "--scenario", "s.json", "--out", "t.json"], dir.path());
    let o = run(&["plotdata", "t.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 2 * 2);
    assert!(text.contains("0,2,20,2,10,0.1"));

    run(&["run", "--scenario", "s.json", "--out", "t.csv"], dir.path());
    let o = run(&["plotdata", "t.csv", "--out", "p.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(dir.path().join("p.csv")).unwrap().lines().count(), 5);
}

#[test]
fn plotdata_rejects_malformed_trace() {
    let dir = TempDir::new().unwrap();
    write(&dir, "t.json", "{\"rounds\": [");
    let o = run(&["plotdata", "t.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("malformed trace"));
}

#[test]
fn compare_reports_constant_model_gap() {
    let dir = TempDir::new().unwrap();
    write(&dir, "p.json", PAGING);
    let o = run(&["compare", "--scenario", "p.json", "--out", "-", "--format", "json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("\"cpm\"") && text.contains("\"ffmpa\"") && text.contains("\"dfpa\""));
    let o = run(&["compare", "--scenario", "p.json", "--out", "cmp.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    let makespan = |name: &str| -> f64 {
        let line = csv.lines().find(|l| l.starts_with(name)).unwrap();
        line.split(',').nth(1).unwrap().parse().unwrap()
    };
    assert!(makespan("cpm") > 1.2 * makespan("dfpa"));
}

#[test]
fn compare_rejects_noisy_scenarios() {
    let dir = TempDir::new().unwrap();
    write(&dir, "n.json", r#"{"n": 30, "profiles": [{"peak_speed": 2.0, "noise_rel": 0.1}, {"peak_speed": 1.0}]}"#);
    let o = run(&["compare", "--scenario", "n.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_prints_optimum() {
    let dir = TempDir::new().unwrap();
    write(&dir, "s.json", TWO_NODES);
    let o = run(&["oracle", "--scenario", "s.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("\"makespan\": 10.0"), "{text}");
}

#[test]
fn same_seed_same_trace() {
    let dir = TempDir::new().unwrap();
    write(
        &dir,
        "noisy.json",
        r#"{"n": 500, "seed": 7, "profiles": [{"peak_speed": 5.0, "noise_rel": 0.05}, {"peak_speed": 2.0, "noise_rel": 0.05, "ram_size": 150, "paging_decay": 0.01}]}"#,
    );
    run(&["run", "--scenario", "noisy.json", "--out", "a.csv"], dir.path());
    run(&["run", "--scenario", "noisy.json", "--out", "b.csv"], dir.path());
    run(&["run", "--scenario", "noisy.json", "--seed", "8", "--out", "c.csv"], dir.path());
    let read = |f: &str| fs::read_to_string(dir.path().join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
}

#[test]
fn real_mode_runs_kernels() {
    let dir = TempDir::new().unwrap();
    write(&dir, "r.json", r#"{"n": 64, "p": 2, "epsilon": 0.5, "max_rounds": 3}"#);
    let o = run(&["run", "--mode", "real", "--scenario", "r.json", "--out", "t.csv"], dir.path());
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(csv.lines().count() >= 3);
}
