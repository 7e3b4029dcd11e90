use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn grainsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grainsched"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    grainsched(&args)
}

#[test]
fn simulate_exp1_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate(dir.path(), &["--preset", "exp1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["jobs"].as_array().unwrap().len(), 10);
    assert!(fs::read_to_string(dir.path().join("trace.log")).unwrap().contains("event=bind"));
    assert!(dir.path().join("gantt.csv").is_file());
    assert!(String::from_utf8_lossy(&o.stdout).contains("jobs                10"));
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = simulate(d.path(), &["--preset", "exp2", "--seed", "7", "--format", "csv"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["report.csv", "summary.csv", "trace.log", "gantt.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn scenario_file_and_partial_params() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("mine.toml");
    fs::write(
        &scenario,
        r#"
name = "mine"
planner = "scale"
scheduler = "taskgroup"
kubelet = { cpu_manager = "static", topology_manager = "best-effort" }

[cluster]
worker_nodes = 2
sockets = 2
cores_per_socket = 18
reserved_per_socket = 2
memory_gib = 256

[workload]
arrivals = [
  { benchmark = "MiniFE", submit_time_s = 0.0 },
  { benchmark = "G-FFT", submit_time_s = 12.5 },
]
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = simulate(&out, &["--scenario", scenario.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["scenario"], "mine");
    assert_eq!(report["jobs"].as_array().unwrap().len(), 2);

    // parameter files must be complete
    let params = dir.path().join("params.toml");
    fs::write(&params, "alpha_net_network = 1.0\n").unwrap();
    let o = simulate(&out, &["--preset", "exp1", "--params", params.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha_net_other"));
}

#[test]
fn user_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate(dir.path(), &["--preset", "exp9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("exp9"));

    let o = simulate(dir.path(), &["--preset", "exp1", "--scenario", "FAST"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("FAST"));

    let o = simulate(dir.path(), &["--preset", "exp1", "--format", "xml"]);
    assert_eq!(o.status.code(), Some(2));

    let o = simulate(dir.path(), &["--scenario", "/nonexistent/file.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_tabulates_scenarios_and_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = grainsched(&[
        "compare",
        "--scenario",
        "NONE,CM,CM_G_TG",
        "--seed",
        "1,2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    // header, then per-seed and mean rows for each scenario
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    assert_eq!(String::from_utf8_lossy(&o.stdout), csv);
    let table: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("compare.json")).unwrap()).unwrap();
    assert_eq!(table["baseline"], "NONE");
    let none_mean = table["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["scenario"] == "NONE" && r["seed"].is_null())
        .unwrap();
    assert_eq!(none_mean["delta_response"], 0.0);

    let o = grainsched(&[
        "compare",
        "--scenario",
        "NONE,CM",
        "--baseline",
        "CM_S",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("CM_S"));
}

#[test]
fn calibrate_writes_params_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let targets = dir.path().join("targets.toml");
    fs::write(
        &targets,
        r#"
preset = "exp2"
seeds = [1]

[[target]]
name = "makespan CM_G_TG vs CM"
metric = "makespan"
scenario = "CM_G_TG"
baseline = "CM"
reduction = 0.11
tolerance = 0.10
"#,
    )
    .unwrap();
    let out = dir.path().join("cal");
    let o = grainsched(&[
        "calibrate",
        "--targets",
        targets.to_str().unwrap(),
        "--budget",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let params = fs::read_to_string(out.join("params.toml")).unwrap();
    assert!(params.contains("domain_bandwidth_gbps"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("calibration.json")).unwrap()).unwrap();
    assert_eq!(report["residuals"].as_array().unwrap().len(), 1);

    // the written file is accepted back as parameters
    let sim = dir.path().join("sim");
    let o = simulate(&sim, &["--preset", "exp1", "--params", out.join("params.toml").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    fs::write(&targets, "preset = \"exp2\"\nseeds = [1]\ntarget = []\n").unwrap();
    let o = grainsched(&["calibrate", "--targets", targets.to_str().unwrap(), "--budget", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
