//! End-to-end runs of the compiled binary against the checked-in fixtures,
//! pinning output schemas, alarm escalation dates, exit codes, and byte
//! determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epitrend"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).expect("artifact exists")).expect("valid JSON")
}

#[test]
fn fit_recovers_fade_then_resurgence() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "fit",
        "--input",
        fixture("advanced.csv").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--nu",
        "2",
    ]);
    let fit = read_json(&dir.path().join("fit.json"));
    let pieces = fit["pieces"].as_array().unwrap();
    assert_eq!(pieces.len(), 2);
    assert!(pieces[0]["slope_per_day"].as_f64().unwrap() < 0.0);
    assert!(pieces[1]["slope_per_day"].as_f64().unwrap() > 0.0);
    assert!(pieces[0]["doubling_days"].is_null());
    assert!(pieces[1]["doubling_days"].as_f64().unwrap() > 0.0);
    let breaks = fit["breakpoints"].as_array().unwrap();
    assert_eq!(breaks.len(), 1);
    // breakpoints are calendar dates, never raw day indices
    assert!(breaks[0].as_str().unwrap().starts_with("2020-02-0"));
}

#[test]
fn eig_reports_flat_growth_for_balanced_scenario() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "eig",
        "--config",
        fixture("delay_critical.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let growth = read_json(&dir.path().join("growth.json"));
    let phases = growth["phases"].as_array().unwrap();
    assert_eq!(phases.len(), 1);
    assert!(phases[0]["growth_rate_per_day"].as_f64().unwrap().abs() <= 1e-8);
    assert!(phases[0]["doubling_days"].is_null());
    let vectors = fs::read_to_string(dir.path().join("eigenvectors.csv")).unwrap();
    assert!(vectors.starts_with("phase,stage,age,value\n"));
}

#[test]
fn eig_checks_phase_hops_against_rate_gap_bound() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "eig",
        "--config",
        fixture("two_phase.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let growth = read_json(&dir.path().join("growth.json"));
    let hops = growth["hops"].as_array().unwrap();
    assert_eq!(hops.len(), 1);
    assert!(hops[0]["within_bound"].as_bool().unwrap());
    assert!(
        hops[0]["profile_distance"].as_f64().unwrap()
            <= hops[0]["rate_gap_bound"].as_f64().unwrap() + 1e-6
    );
}

#[test]
fn monitor_escalates_through_the_levels() {
    let expect = [
        ("2020-01-20", "none", false),
        ("2020-02-04", "warning", false),
        ("2020-02-05", "alarm", false),
        ("2020-02-12", "confirmed", true),
    ];
    for (date, level, doubling) in expect {
        let dir = tempfile::tempdir().unwrap();
        run_ok(&[
            "monitor",
            "--input",
            fixture("advanced.csv").to_str().unwrap(),
            "--input-disp",
            fixture("displaced.csv").to_str().unwrap(),
            "--config",
            fixture("alarm.json").to_str().unwrap(),
            "--as-of",
            date,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        let report = read_json(&dir.path().join("monitor.json"));
        assert_eq!(report["level"].as_str().unwrap(), level, "as of {date}");
        assert_eq!(report["doubling_alarm"].as_bool().unwrap(), doubling, "as of {date}");
        assert_eq!(report["as_of"].as_str().unwrap(), date);
        // window endpoints are dates too
        assert!(report["window"][1].as_str().unwrap().starts_with("2020-"));
    }
}

#[test]
fn monitor_confirmed_report_has_pooled_slope_and_intervals() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "monitor",
        "--input",
        fixture("advanced.csv").to_str().unwrap(),
        "--input-disp",
        fixture("displaced.csv").to_str().unwrap(),
        "--as-of",
        "2020-02-12",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let report = read_json(&dir.path().join("monitor.json"));
    let pooled = report["combined_slope_per_day"].as_f64().unwrap();
    let adv = report["advanced"]["slope_per_day"].as_f64().unwrap();
    let disp = report["displaced"]["slope_per_day"].as_f64().unwrap();
    let (lo, hi) = if adv < disp { (adv, disp) } else { (disp, adv) };
    assert!(pooled > lo && pooled < hi);
    let intervals = report["doubling_time_intervals"].as_array().unwrap();
    assert_eq!(intervals[0][0].as_f64().unwrap(), 0.0);
    assert!(intervals[1][1].is_null() || intervals[1][1].as_f64().unwrap() > 0.0);
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let once = tempfile::tempdir().unwrap();
    let twice = tempfile::tempdir().unwrap();
    for dir in [&once, &twice] {
        let out = dir.path().to_str().unwrap();
        run_ok(&[
            "simulate",
            "--config",
            fixture("two_phase.json").to_str().unwrap(),
            "--out",
            out,
        ]);
        run_ok(&[
            "fit",
            "--input",
            fixture("advanced.csv").to_str().unwrap(),
            "--out",
            out,
        ]);
        run_ok(&[
            "monitor",
            "--input",
            fixture("advanced.csv").to_str().unwrap(),
            "--input-disp",
            fixture("displaced.csv").to_str().unwrap(),
            "--as-of",
            "2020-02-10",
            "--out",
            out,
        ]);
        run_ok(&["validate", "--out", out, "--seed", "9"]);
    }
    for name in [
        "trajectory.csv",
        "observables.csv",
        "fit.json",
        "fit.svg",
        "monitor.json",
        "monitor.svg",
        "validation.json",
    ] {
        let a = fs::read(once.path().join(name)).unwrap();
        let b = fs::read(twice.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn validate_passes_and_reports_every_suite() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["validate", "--out", dir.path().to_str().unwrap()]);
    let report = read_json(&dir.path().join("validation.json"));
    assert!(report["pass"].as_bool().unwrap());
    let suites = report["suites"].as_array().unwrap();
    assert_eq!(suites.len(), 6);
    assert!(suites.iter().all(|s| s["pass"].as_bool().unwrap()));
}

#[test]
fn usage_errors_exit_1_with_one_line_diagnostic() {
    let out = bin().args(["fit", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.starts_with("usage error:"));
}

#[test]
fn data_errors_exit_2_with_one_line_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "fit",
            "--input",
            dir.path().join("absent.csv").to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.starts_with("data error:"));

    // malformed header is a data problem, not a crash
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "when,how_many\n2020-01-01,5\n").unwrap();
    let out = bin()
        .args([
            "fit",
            "--input",
            bad.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("monitor"));
}

#[test]
fn plots_embed_build_and_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "fit",
        "--input",
        fixture("advanced.csv").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let svg = fs::read_to_string(dir.path().join("fit.svg")).unwrap();
    assert!(svg.contains("config-sha256="));
    assert!(svg.contains("build="));
    // x axis is labelled with the anchor date, not bare day indices
    assert!(svg.contains("days since 2020-01-01"));
}

#[test]
fn fixtures_match_their_generator() {
    let (adv, disp) = epitrend_core::synth::resurgence_pair(42);
    let fading = epitrend_core::synth::decaying_series("fading", 7);
    for (name, series) in [("advanced.csv", adv), ("displaced.csv", disp), ("fading.csv", fading)]
    {
        let on_disk = fs::read_to_string(fixture(name)).unwrap();
        assert_eq!(on_disk, series.to_csv(), "{name} drifted from its generator");
    }
}
