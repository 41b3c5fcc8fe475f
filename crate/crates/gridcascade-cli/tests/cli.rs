//! End-to-end tests of the command-line interface: file formats, exit
//! codes, determinism, and cross-engine agreement.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gridcascade")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn tmp(name: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(name);
    (dir, path)
}

fn generate_obs61(dir: &Path) -> PathBuf {
    let path = dir.join("obs61.json");
    run_ok(&[
        "generate",
        "--fixture",
        "obs61",
        "--output",
        path.to_str().unwrap(),
        "--no-timestamp",
    ]);
    path
}

#[test]
fn solve_reports_flows_and_feasibility() {
    let (dir, out) = tmp("flows.json");
    let instance = generate_obs61(dir.path());
    run_ok(&[
        "solve",
        "--input",
        instance.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--no-timestamp",
    ]);
    let doc = read_json(&out);
    assert_eq!(doc["feasible"], Value::Bool(true));
    let f1 = doc["flows"]["1"].as_f64().unwrap();
    assert!((f1 - 910.0 / 43.0).abs() < 1e-9);

    // Reruns are byte-identical without the timestamp.
    let first = std::fs::read(&out).unwrap();
    run_ok(&[
        "solve",
        "--input",
        instance.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_eq!(first, std::fs::read(&out).unwrap());
}

#[test]
fn solve_rejects_imbalance_unless_shedding() {
    let (dir, out) = tmp("flows.json");
    let instance = dir.path().join("imbalanced.json");
    std::fs::write(
        &instance,
        r#"{"buses":[{"id":0,"power":2.0},{"id":1,"power":-1.0}],
            "lines":[{"id":0,"u":0,"v":1,"reactance":1.0,"capacity":5.0}]}"#,
    )
    .unwrap();
    let fail = run(&[
        "solve",
        "--input",
        instance.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(fail.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&fail.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "imbalance");

    run_ok(&[
        "solve",
        "--input",
        instance.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--shed",
    ]);
    let doc = read_json(&out);
    assert!((doc["flows"]["0"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn cascade_engines_write_equivalent_traces_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let instance = generate_obs61(dir.path());
    let mut docs = Vec::new();
    for engine in ["cfe", "cfe-pb"] {
        let out = dir.path().join(format!("trace_{engine}.json"));
        run_ok(&[
            "cascade",
            "--input",
            instance.to_str().unwrap(),
            "--f0",
            "1",
            "--engine",
            engine,
            "--output",
            out.to_str().unwrap(),
            "--no-timestamp",
        ]);
        docs.push((
            read_json(&out),
            read_json(&PathBuf::from(format!(
                "{}.metrics.json",
                out.to_str().unwrap()
            ))),
        ));
    }
    let (trace_a, metrics_a) = &docs[0];
    let (trace_b, metrics_b) = &docs[1];
    // Identical failure rounds; per-round flows agree to the documented
    // 1e-6 equivalence tolerance (the engines differ in rounding paths).
    assert_eq!(trace_a["rounds"], trace_b["rounds"]);
    assert_eq!(trace_a["rounds"], serde_json::json!([[1], [3, 4], [2]]));
    for (fa, fb) in trace_a["flows"]
        .as_array()
        .unwrap()
        .iter()
        .zip(trace_b["flows"].as_array().unwrap())
    {
        for (line, value) in fa.as_object().unwrap() {
            let a = value.as_f64().unwrap();
            let b = fb[line].as_f64().unwrap();
            assert!((a - b).abs() < 1e-6);
        }
    }
    assert_eq!(metrics_a["metrics"], metrics_b["metrics"]);
    assert_eq!(metrics_a["metrics"]["rounds"], 2);
    assert_eq!(metrics_a["metrics"]["failures"], 4);
    assert_eq!(metrics_a["metrics"]["yield_fraction"], 0.0);
}

#[test]
fn cascade_metrics_for_staggered_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let instance = dir.path().join("obs62.json");
    run_ok(&[
        "generate",
        "--fixture",
        "obs62",
        "--m",
        "4",
        "--eps",
        "0.2",
        "--output",
        instance.to_str().unwrap(),
        "--no-timestamp",
    ]);
    let out = dir.path().join("trace.json");
    run_ok(&[
        "cascade",
        "--input",
        instance.to_str().unwrap(),
        "--f0",
        "0",
        "--output",
        out.to_str().unwrap(),
        "--no-timestamp",
    ]);
    let metrics = read_json(&PathBuf::from(format!(
        "{}.metrics.json",
        out.to_str().unwrap()
    )));
    assert_eq!(metrics["metrics"]["rounds"], 3);
    assert_eq!(metrics["metrics"]["failures"], 4);
    assert_eq!(metrics["metrics"]["yield_fraction"], 0.0);
}

#[test]
fn cascade_rejects_unknown_line_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let instance = generate_obs61(dir.path());
    let out = dir.path().join("trace.json");
    let fail = run(&[
        "cascade",
        "--input",
        instance.to_str().unwrap(),
        "--f0",
        "99",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(fail.status.code(), Some(2));
}

#[test]
fn attack_brute_force_reports_chosen_set_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let instance = generate_obs61(dir.path());
    let out = dir.path().join("attack.json");
    run_ok(&[
        "attack",
        "--input",
        instance.to_str().unwrap(),
        "--method",
        "brute-force",
        "--k",
        "2",
        "--output",
        out.to_str().unwrap(),
        "--no-timestamp",
    ]);
    let doc = read_json(&out);
    assert_eq!(doc["chosen"], serde_json::json!([1]));
    assert_eq!(doc["yield"], 0.0);
    let trace_path = PathBuf::from(doc["trace_path"].as_str().unwrap());
    assert!(trace_path.exists());

    // Recomputing metrics from the stored trace reproduces the yield.
    let metrics_out = dir.path().join("metrics.json");
    run_ok(&[
        "metrics",
        "--input",
        instance.to_str().unwrap(),
        "--trace",
        trace_path.to_str().unwrap(),
        "--output",
        metrics_out.to_str().unwrap(),
        "--no-timestamp",
    ]);
    let metrics = read_json(&metrics_out);
    assert_eq!(metrics["metrics"]["yield_fraction"], 0.0);

    // A .csv output selects the one-row tabular form.
    let metrics_csv = dir.path().join("metrics.csv");
    run_ok(&[
        "metrics",
        "--input",
        instance.to_str().unwrap(),
        "--trace",
        trace_path.to_str().unwrap(),
        "--output",
        metrics_csv.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(&metrics_csv).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("yield,failures,rounds,min_consecutive_distance,per_round_distances")
    );
    assert_eq!(lines.next(), Some("0,4,2,0,0;0"));
}

#[test]
fn attack_exhaustive_cap_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let instance = generate_obs61(dir.path());
    let out = dir.path().join("attack.json");
    let fail = run(&[
        "attack",
        "--input",
        instance.to_str().unwrap(),
        "--method",
        "brute-force",
        "--k",
        "4",
        "--cap",
        "3",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(fail.status.code(), Some(4));
    let err: Value = serde_json::from_slice(&fail.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "too_large");
}

#[test]
fn generate_validates_fixture_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fixture.json");
    let fail = run(&[
        "generate",
        "--fixture",
        "obs62",
        "--m",
        "4",
        "--eps",
        "0.9",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(fail.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&fail.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "param_range");
}

#[test]
fn generate_ensemble_is_deterministic_and_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        run_ok(&[
            "generate",
            "--ensemble",
            "ws",
            "--n",
            "40",
            "--knn",
            "4",
            "--p",
            "0.1",
            "--seed",
            "7",
            "--dist",
            "pm1",
            "--nsd",
            "5",
            "--fos",
            "1.2",
            "--output",
            path.to_str().unwrap(),
            "--no-timestamp",
        ]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let flows = dir.path().join("flows.json");
    run_ok(&[
        "solve",
        "--input",
        a.to_str().unwrap(),
        "--output",
        flows.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_eq!(read_json(&flows)["feasible"], Value::Bool(true));
}

#[test]
fn bench_emits_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    run_ok(&[
        "bench",
        "--sizes",
        "40,60",
        "--fos-levels",
        "1.1,1.3",
        "--trials",
        "3",
        "--seed",
        "1",
        "--output",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 4); // header + |sizes| * |fos-levels|
    assert_eq!(
        lines[0],
        "n,fos,trials,t_median,cfe_ms_median,cfepb_ms_median,speedup"
    );
    for row in &lines[1..] {
        let speedup: f64 = row.split(',').next_back().unwrap().parse().unwrap();
        assert!(speedup.is_finite() && speedup > 0.0);
    }
}

#[test]
fn bench_rejects_too_few_trials() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let fail = run(&["bench", "--trials", "2", "--output", out.to_str().unwrap()]);
    assert_eq!(fail.status.code(), Some(2));
}

#[test]
fn figdata_writes_three_tables() {
    let dir = tempfile::tempdir().unwrap();
    let figs = dir.path().join("figs");
    let args = [
        "figdata",
        "--output-dir",
        figs.to_str().unwrap(),
        "--models",
        "er,ba",
        "--n",
        "24",
        "--trials",
        "4",
        "--nsd",
        "4",
        "--k-max",
        "2",
        "--attack-draws",
        "3",
        "--cap",
        "1",
        "--seed",
        "3",
    ];
    run_ok(&args);

    let scatter = std::fs::read_to_string(figs.join("distance_vs_resistance.csv")).unwrap();
    assert!(scatter.starts_with("graph,seed,i,j,d,r"));
    // One row per node pair per model.
    assert_eq!(scatter.lines().count(), 1 + 2 * (24 * 23 / 2));

    let ratios = std::fs::read_to_string(figs.join("flow_change_ratios.csv")).unwrap();
    assert!(ratios.starts_with("graph,seed,e,e_failed,d,r,s,m"));
    assert!(ratios.lines().count() > 1);

    let attack = std::fs::read_to_string(figs.join("attack_yield.csv")).unwrap();
    assert!(attack.starts_with("graph,seed,method,k,yield"));
    // mves_rb + 3 random draws, per k in {1,2}, per model; cap 1 skips the
    // exhaustive column.
    assert_eq!(attack.lines().count(), 1 + 2 * 2 * (1 + 3));
    assert!(!attack.contains("brute_force"));

    // CSV outputs carry no timestamps: a rerun is byte-identical.
    let before = std::fs::read(figs.join("flow_change_ratios.csv")).unwrap();
    run_ok(&args);
    assert_eq!(
        before,
        std::fs::read(figs.join("flow_change_ratios.csv")).unwrap()
    );
}
