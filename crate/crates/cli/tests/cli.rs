use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn walras(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_walras")).args(args).output().expect("binary runs")
}

fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_every_fixture() {
    for name in ["symmetric.json", "scarf.json", "symmetric_50x10.json", "two_stage.json", "two_stage_replicated.json", "finance_9_scenarios.json"] {
        let out = walras(&["validate", path_str(&fixture(name))]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok:"));
    }
}

#[test]
fn validate_reports_bad_beliefs_by_agent() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("two_stage_replicated.json")).unwrap();
    let bad = text.replacen("\"b\": 0.5", "\"b\": 0.3", 1);
    assert_ne!(bad, text);
    let path = dir.path().join("bad.json");
    fs::write(&path, bad).unwrap();
    let out = walras(&["validate", path_str(&path)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("agents[0].beliefs") && err.contains("agent 0 beliefs must sum to 1"), "{err}");
}

#[test]
fn syntax_errors_exit_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{\n  \"model\": \"exchange\",\n  \"goods\": [1]\n}\n").unwrap();
    let out = walras(&["validate", path_str(&path)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":3:") && err.contains("goods[0]"), "{err}");
}

#[test]
fn missing_file_and_bad_flags_exit_one() {
    assert_eq!(walras(&["validate", "/nonexistent/economy.json"]).status.code(), Some(1));
    let sym = fixture("symmetric.json");
    assert_eq!(walras(&["solve", path_str(&sym), "--augmenting", "l2"]).status.code(), Some(1));
    assert_eq!(walras(&["solve", path_str(&sym), "--epsilon", "-1"]).status.code(), Some(1));
}

#[test]
fn solve_symmetric_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let summary = dir.path().join("summary.json");
    let out = walras(&[
        "solve",
        path_str(&fixture("symmetric.json")),
        "--epsilon",
        "1e-6",
        "--trajectory",
        path_str(&csv),
        "--summary",
        path_str(&summary),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    let iterations = report["iterations"].as_u64().unwrap() as usize;
    assert_eq!(report["status"], "converged");
    assert!(report.get("wall_clock_ms").is_none());

    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), iterations + 1);
    assert_eq!(lines[0], "nu,r,residual,W_value,Waug_value,p0_g1,p0_g2,p0_g3,s0_g1,s0_g2,s0_g3");
    for line in &lines[1..] {
        for cell in line.split(',') {
            cell.parse::<f64>().unwrap_or_else(|_| panic!("not a number: {cell}"));
        }
    }
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!(last[2] <= 1e-6);

    let prices: Vec<f64> = report["prices"]["stage0"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((prices.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let s: Vec<f64> = report["excess_supply"]["stage0"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let worst = s.iter().fold(0.0f64, |m, &x| m.max(-x));
    assert_eq!(worst, report["residual"].as_f64().unwrap());
}

#[test]
fn solve_scarf_reaches_one_percent() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("summary.json");
    let out = walras(&["solve", path_str(&fixture("scarf.json")), "--epsilon", "1e-2", "--summary", path_str(&summary)]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert!(report["residual"].as_f64().unwrap() <= 1e-2);
    let scaled: f64 = report["prices_x100"]["stage0"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((scaled - 100.0).abs() < 1e-9);
}

#[test]
fn iteration_limit_exits_two() {
    let out = walras(&["solve", path_str(&fixture("scarf.json")), "--epsilon", "1e-9", "--max-iters", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("iteration limit"));
}

#[test]
fn stochastic_summary_lists_every_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let summary = dir.path().join("summary.json");
    let out = walras(&[
        "solve",
        path_str(&fixture("finance_9_scenarios.json")),
        "--max-iters",
        "1",
        "--trajectory",
        path_str(&csv),
        "--summary",
        path_str(&summary),
        "--report-timings",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(report["prices"]["stage1"].as_array().unwrap().len(), 9);
    assert_eq!(report["agents"][0]["y"].as_array().unwrap().len(), 7);
    assert!(report["wall_clock_ms"].as_f64().unwrap() > 0.0);
    let header = fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header.split(',').count(), 5 + 2 * 7 * 10);
    assert!(header.contains(",p1_xi9_g7,s0_g1,") && header.ends_with("s1_xi9_g7"));
}

#[test]
fn recourse_reports_each_agent() {
    let out = walras(&["recourse", path_str(&fixture("finance_9_scenarios.json"))]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().filter(|l| l.contains("feasible")).count(), 5);
}

#[test]
fn recourse_flags_short_floors() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("two_stage.json")).unwrap();
    // Agent 0 owns 0.5 of good 1 at stage 0; a floor of 0.6 cannot be met alone.
    let bad = text.replacen("\"survival_lb\": [\n        0.001,", "\"survival_lb\": [\n        0.6,", 1);
    assert_ne!(bad, text);
    let path = dir.path().join("short.json");
    fs::write(&path, bad).unwrap();
    let out = walras(&["recourse", path_str(&path)]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("agent 0: survival plan infeasible") && stdout.contains("stage 0, good g1"), "{stdout}");
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let csv = dir.path().join(format!("{tag}.csv"));
        let summary = dir.path().join(format!("{tag}.json"));
        let out = walras(&[
            "solve",
            path_str(&fixture("symmetric.json")),
            "--start",
            "random",
            "--seed",
            "11",
            "--epsilon",
            "1e-4",
            "--trajectory",
            path_str(&csv),
            "--summary",
            path_str(&summary),
        ]);
        assert_eq!(out.status.code(), Some(0));
        (fs::read(csv).unwrap(), fs::read(summary).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}
