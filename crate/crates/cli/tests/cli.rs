use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn capire(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capire")).args(args).env_remove("CAPIRE_OUT").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn small_run(out: &Path, scenarios: &str) -> Output {
    let cfg = data("capire.cfg");
    capire(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--scenarios",
        scenarios,
        "--replications",
        "2",
        "--n-students",
        "50",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn validate_prints_graph_statistics() {
    let o = capire(&["validate", "--config", data("capire.cfg").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("courses=34 edges=53 acyclic=yes\n"), "{text}");
    assert!(text.contains("total_credits=34 grad_predecessors=PF"));
    assert!(text.lines().any(|l| l.starts_with("bottleneck(min_in_degree=4,quantile=0.1)=") && l.contains("CV1")));
    assert!(text.contains("a1: courses=34 edges=49 acyclic=yes"));
}

#[test]
fn validate_reports_broken_inputs() {
    let dir = tempfile::tempdir().unwrap();
    for f in [
        "courses.csv",
        "redesign_a1.csv",
        "reassign.csv",
        "archetypes.csv",
        "engine_params.csv",
        "course_pass.csv",
        "policy_params.csv",
        "targets.csv",
        "bounds.csv",
        "capire.cfg",
    ] {
        std::fs::copy(data(f), dir.path().join(f)).unwrap();
    }
    let edges = std::fs::read_to_string(data("edges.csv")).unwrap() + "PF,AN1\n";
    std::fs::write(dir.path().join("edges.csv"), edges).unwrap();
    let o = capire(&["validate", "--config", dir.path().join("capire.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: kind=graph msg=\"prerequisite cycle"), "{err}");
}

#[test]
fn missing_config_is_a_one_line_error() {
    let o = capire(&["validate", "--config", "/nonexistent/capire.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).lines().count(), 1);
    assert!(stderr(&o).starts_with("error: kind="));
}

#[test]
fn unknown_command_exits_with_usage() {
    let o = capire(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn bad_override_fails_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = small_run(&out, "A2B0C0");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: kind="), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn run_writes_records_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = small_run(&out, "A0B0C0");
    assert!(o.status.success(), "{}", stderr(&o));
    let records = files(&out.join("records"));
    assert_eq!(records.keys().cloned().collect::<Vec<_>>(), ["A0B0C0_0.csv.gz", "A0B0C0_1.csv.gz"]);
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    for line in [
        "setting.master_seed=7",
        "setting.n_students=50",
        "setting.n_replications=2",
        "setting.scenarios=A0B0C0",
        "setting.compress=true",
        "record_files=2",
        "record_agents=100",
    ] {
        assert!(manifest.lines().any(|l| l == line), "missing {line} in\n{manifest}");
    }
    assert!(manifest.lines().any(|l| l.starts_with("runtime.workers=")));
    assert!(manifest.lines().any(|l| l.starts_with("input.curriculum_edges=")));
    for t in ["table2.csv", "scenario_summary.csv", "table3_semester8.csv", "archetype_breakdown.csv"] {
        assert!(out.join(t).exists(), "{t}");
    }
    // Only the full design has main effects.
    assert!(!out.join("factorial_effects.csv").exists());
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    let base = data("capire.cfg");
    let body = format!(
        "curriculum_courses = {d}/courses.csv\ncurriculum_edges = {d}/edges.csv\nredesign_a1 = {d}/redesign_a1.csv\n\
         reassign_a1 = {d}/reassign.csv\narchetypes = {d}/archetypes.csv\nengine_params = {d}/engine_params.csv\n\
         course_pass = {d}/course_pass.csv\npolicy_params = {d}/policy_params.csv\ntargets = {d}/targets.csv\n\
         bounds = {d}/bounds.csv\nn_students = 30\nn_replications = 1\nscenarios = A1B1C1\ncompress = false\n",
        d = base.parent().unwrap().display()
    );
    std::fs::write(&cfg, body).unwrap();
    let out = dir.path().join("out");
    let o = capire(&["run", "--config", cfg.to_str().unwrap(), "--n-students", "20", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("setting.n_students=20\n"));
    assert!(manifest.contains("setting.scenarios=A1B1C1\n"));
    assert!(manifest.contains("setting.master_seed=20240601\n"));
    assert!(out.join("records/A1B1C1_0.csv").exists());
}

#[test]
fn aggregate_is_idempotent_and_matches_run_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(small_run(&out, "all").status.success());
    let rec = out.join("records");
    let (t1, t2) = (dir.path().join("t1"), dir.path().join("t2"));
    for t in [&t1, &t2] {
        let o = capire(&["aggregate", "--in", rec.to_str().unwrap(), "--out", t.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (a, b) = (files(&t1), files(&t2));
    assert_eq!(a, b);
    assert_eq!(a.len(), 5);
    let run_tables = files(&out);
    for (name, body) in &a {
        assert_eq!(run_tables.get(name), Some(body), "{name} differs from the run's copy");
    }
}

#[test]
fn report_data_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(small_run(&out, "all").status.success());
    let rep = dir.path().join("report");
    let o = capire(&["report-data", "--in", out.join("records").to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let mut r = csv::Reader::from_path(rep.join("figure1_backbone.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["scenario_id", "semester", "backbone_mean"]);
    let mut per_scenario: BTreeMap<String, Vec<(u32, f64)>> = BTreeMap::new();
    for row in r.records() {
        let row = row.unwrap();
        let (t, m): (u32, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
        assert!((0.0..=1.0).contains(&m));
        per_scenario.entry(row[0].to_string()).or_default().push((t, m));
    }
    assert_eq!(per_scenario.len(), 8);
    for series in per_scenario.values() {
        assert_eq!(series.iter().map(|s| s.0).collect::<Vec<_>>(), (1..=12).collect::<Vec<_>>());
    }

    let mut r = csv::Reader::from_path(rep.join("figure2_effects.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["factor", "outcome", "effect"]);
    let rows: Vec<(String, String, f64)> =
        r.records().map(|x| x.unwrap()).map(|x| (x[0].to_string(), x[1].to_string(), x[2].parse().unwrap())).collect();
    let keys: Vec<(&str, &str)> = rows.iter().map(|x| (x.0.as_str(), x.1.as_str())).collect();
    assert_eq!(
        keys,
        [
            ("A", "dropout_rate"),
            ("A", "mean_courses"),
            ("B", "dropout_rate"),
            ("B", "mean_courses"),
            ("C", "dropout_rate"),
            ("C", "mean_courses"),
        ]
    );
}

#[test]
fn aggregate_rejects_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o =
        capire(&["aggregate", "--in", dir.path().to_str().unwrap(), "--out", dir.path().join("t").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: kind=io"));
}

#[test]
fn calibrate_writes_trace_and_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("capire.cfg");
    let out = dir.path().join("cal");
    let o = capire(&["calibrate", "--config", cfg.to_str().unwrap(), "--budget", "6", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("evaluations=6 "), "{}", stdout(&o));
    let params = std::fs::read_to_string(out.join("calibrated_params.csv")).unwrap();
    for k in ["eta0", "eta6", "vulnerable.pass_logit_shift", "exam_conversion_prob"] {
        assert!(params.lines().any(|l| l.starts_with(&format!("{k},"))), "{k} missing from\n{params}");
    }
    let trace = std::fs::read_to_string(out.join("calibration_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 7);
    let noise = std::fs::read_to_string(out.join("calibration_noise.csv")).unwrap();
    assert!(noise.starts_with("quantity,sd\n"));
}
