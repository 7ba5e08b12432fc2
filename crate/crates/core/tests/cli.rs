use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inventor-did"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 4] = ["--set", "synth.n_treated_firms=8", "--placebo", "20"];

#[test]
fn simulate_then_stages_succeed_and_echo_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = bin(&[&["simulate", "--out", &out][..], &SMALL].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("recovered = true"));
    for cmd in ["ingest", "match", "panel", "estimate", "geo"] {
        let o = bin(&[&[cmd, "--out", &out][..], &SMALL].concat());
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
    }
    for f in [
        "ingest/audit.txt",
        "match/pairs.csv",
        "match/balance.txt",
        "panel/panel.csv",
        "estimate/table3.txt",
        "estimate/table4.txt",
        "estimate/splits.txt",
        "estimate/naive.txt",
        "estimate/placebo_all.csv",
        "estimate/predictions.csv",
        "estimate/relocation_summary.txt",
        "geo/relocation.csv",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let echo = std::fs::read_to_string(dir.path().join("effective_config.txt")).unwrap();
    assert!(echo.contains("synth.n_treated_firms = 8"));
    assert!(echo.contains("estimate.placebo_n = 20"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "synth.n_treated_firms = 4\nwindow.a = 3\nestimate.placebo_n = 0\n").unwrap();
    let out = out_arg(&dir.path().join("out"));
    let o = bin(&["simulate", "--config", cfg.to_str().unwrap(), "--out", &out, "--set", "window.a=5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let echo = std::fs::read_to_string(dir.path().join("out/effective_config.txt")).unwrap();
    assert!(echo.contains("window.a = 5"));
    assert!(echo.contains("synth.n_treated_firms = 4"));
}

#[test]
fn missing_input_exits_with_io_code_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["ingest", "--out", &out_arg(dir.path()), "--patents", "/nonexistent/patents.csv", "--deals", "/nonexistent/deals.csv"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("/nonexistent/patents.csv"));
}

#[test]
fn malformed_row_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let patents = dir.path().join("patents.csv");
    let deals = dir.path().join("deals.csv");
    std::fs::write(
        &patents,
        "patent_id,application_year,assignee_id,assignee_name,inventor_id,ipc_main_groups,latitude,longitude\n\
         P1,1990,F1,Firm,I1,C08G063,,\n\
         P2,19x0,F1,Firm,I1,C08G063,,\n",
    )
    .unwrap();
    std::fs::write(&deals, "acquired_id,acquired_name,acquirer_id,acquirer_name,deal_year,deal_type\n").unwrap();
    let o = bin(&[
        "ingest",
        "--out",
        &out_arg(&dir.path().join("out")),
        "--patents",
        patents.to_str().unwrap(),
        "--deals",
        deals.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
}

#[test]
fn bad_config_and_out_of_bounds_synth_are_clean_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = bin(&["simulate", "--out", &out, "--set", "weights.tau=0.9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("weights"), "{}", stderr(&o));
    let o = bin(&["simulate", "--out", &out, "--set", "synth.treatment_effect_stay=-0.9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stay.after.treated"), "{}", stderr(&o));
    let o = bin(&["simulate", "--out", &out, "--set", "no.such.key=1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn zero_cohorts_is_diagnosed() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = bin(&["simulate", "--out", &out, "--set", "synth.n_treated_firms=3", "--placebo", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(bin(&["ingest", "--out", &out]).status.code(), Some(0));
    let o = bin(&["match", "--out", &out, "--set", "span.start=2010", "--set", "span.end=2012"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("zero cohorts"), "{}", stderr(&o));
}
