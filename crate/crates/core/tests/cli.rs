use std::path::Path;
use std::process::{Command, Output};

use ibgp_transient::cli::ExperimentReport;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ibgp-transient"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Violation rows without the exact column, which only the simulator fills.
fn estimate_columns(csv: &Path) -> Vec<String> {
    std::fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

fn simulate(out: &Path) {
    let o = bin(&["simulate", "--scenario", "preset:path3", "--out", path(out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_then_analyze_agree() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim);
    for f in ["report.json", "samples.csv", "violations.csv", "exact.csv", "summary.csv", "propagation.csv", "mapping.toml", "scenario.toml", "traces/sample-000.trace"] {
        assert!(sim.join(f).is_file(), "{f} missing");
    }
    let stdout = String::from_utf8(bin(&["simulate", "--scenario", "preset:path3", "--out", path(&dir.path().join("again"))]).stdout).unwrap();
    assert!(stdout.starts_with("path3: 1/1 samples valid"), "{stdout}");

    let ana = dir.path().join("ana");
    let trace = sim.join("traces/sample-000.trace");
    let o = bin(&["analyze", "--trace", path(&trace), "--mapping", path(&sim.join("mapping.toml")), "--out", path(&ana)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(estimate_columns(&sim.join("violations.csv")), estimate_columns(&ana.join("violations.csv")));

    let a = ExperimentReport::load(&sim.join("report.json")).unwrap();
    let b = ExperimentReport::load(&ana.join("report.json")).unwrap();
    assert_eq!(a.meta.scenario_hash, b.meta.scenario_hash);
    assert_eq!(a.samples[0].convergence, b.samples[0].convergence);
    assert_eq!(a.pooled, b.pooled);

    let o = bin(&["stats", path(&sim.join("report.json")), path(&ana.join("report.json"))]);
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("scenario,router,n,"), "{csv}");
    assert!(csv.lines().any(|l| l.starts_with("path3,*,")), "{csv}");
}

#[test]
fn corrupted_trace_is_an_invalid_sample() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim);
    let trace = sim.join("traces/sample-000.trace");
    let text = std::fs::read_to_string(&trace).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let post = lines.iter().position(|l| l.contains(" stage=post ")).expect("a post-delay record");
    let mut kept = lines.clone();
    kept.remove(post);
    let broken = dir.path().join("broken.trace");
    std::fs::write(&broken, kept.join("\n") + "\n").unwrap();
    let mapping = sim.join("mapping.toml");

    let o = bin(&["validate", "--trace", path(&broken), "--mapping", path(&mapping)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
    let o = bin(&["analyze", "--trace", path(&broken), "--mapping", path(&mapping), "--out", path(&dir.path().join("a"))]);
    assert_eq!(o.status.code(), Some(2));

    let truncated = dir.path().join("truncated.trace");
    std::fs::write(&truncated, lines[..lines.len() / 2].join("\n")).unwrap();
    let o = bin(&["analyze", "--trace", path(&truncated), "--mapping", path(&mapping), "--out", path(&dir.path().join("b"))]);
    assert_eq!(o.status.code(), Some(2));

    let o = bin(&["validate", "--trace", path(&trace), "--mapping", path(&mapping)]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "version = 1\nname = \"x\"\n").unwrap();
    let out = dir.path().join("out");
    for scenario in [path(&bad), "preset:no-such-preset", "/does/not/exist.toml"] {
        let o = bin(&["simulate", "--scenario", scenario, "--out", path(&out)]);
        assert_eq!(o.status.code(), Some(1), "{scenario}");
    }
    assert_eq!(bin(&["simulate"]).status.code(), Some(1));
    assert_eq!(bin(&["propagation", "--scenario", "preset:abilene-announce"]).status.code(), Some(1));
}

#[test]
fn propagation_and_presets() {
    let o = bin(&["propagation", "--scenario", "preset:path3"]);
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().next(), Some("router,to_egress_ms,egress_to_backup_ms,backup_to_router_ms,total_ms"));
    assert_eq!(csv.lines().nth(3), Some("r3,30.000,30.000,0.000,60.000"));

    let list = String::from_utf8(bin(&["presets"]).stdout).unwrap();
    assert!(list.lines().any(|l| l == "abilene-withdraw-rr-se"));
    let shown = String::from_utf8(bin(&["presets", "--show", "path3"]).stdout).unwrap();
    assert!(shown.contains("name = \"path3\""));
}

#[test]
fn overrides_change_the_scenario_hash() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    simulate(&a);
    let o = bin(&["simulate", "--scenario", "preset:path3", "--rate", "2000", "--seed", "9", "--traces", "none", "--out", path(&b)]);
    assert!(o.status.success());
    assert!(!b.join("traces").exists() || std::fs::read_dir(b.join("traces")).unwrap().next().is_none());
    let ra = ExperimentReport::load(&a.join("report.json")).unwrap();
    let rb = ExperimentReport::load(&b.join("report.json")).unwrap();
    assert_ne!(ra.meta.scenario_hash, rb.meta.scenario_hash);
    assert_eq!((rb.meta.rate_pps, rb.meta.seed), (2000, 9));
}
