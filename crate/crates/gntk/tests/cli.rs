use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gntk(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gntk"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn error_code(out: &Output) -> String {
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    v["error"]["code"].as_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// 12-node cycle with self-loops, small enough for quick end-to-end runs.
fn small_setup(dir: &Path, extra: &str) -> String {
    small_setup_with_times(dir, "[0, 0.1, 1, 10, 1000]", extra)
}

fn small_setup_with_times(dir: &Path, times: &str, extra: &str) -> String {
    let edges: Vec<String> = (0..12).flat_map(|i| [format!("[{i},{i}]"), format!("[{i},{}]", (i + 1) % 12)]).collect();
    std::fs::write(
        dir.join("graph.json"),
        format!(r#"{{"n": 12, "edges": [{}], "normalization": "symmetric"}}"#, edges.join(",")),
    )
    .unwrap();
    let cfg = format!(
        r#"{{
            "graph": {{"path": "graph.json"}},
            "split": {{"train_idx": [0, 4, 8], "y_b": [1.0, -0.5, 0.25]}},
            "times": {times},
            "oracle": {{"hidden_width": 64, "n_trials": 20, "mask_draws": 2000, "moment_samples": 20000}},
            "finite": {{"hidden_widths": [32], "n_networks": 3, "steps": [0, 1, 5]}}
            {extra}
        }}"#
    );
    std::fs::write(dir.join("cfg.json"), cfg).unwrap();
    "cfg.json".into()
}

#[test]
fn missing_graph_file_is_graph_not_found() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"graph": {"path": "missing.json"}}"#).unwrap();
    assert_eq!(error_code(&gntk(&["check", "cfg.json"], dir.path())), "graph_not_found");
    assert_eq!(error_code(&gntk(&["run", "cfg.json"], dir.path())), "graph_not_found");
}

#[test]
fn missing_config_and_bad_json() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(error_code(&gntk(&["check", "nope.json"], dir.path())), "config_not_found");
    std::fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(error_code(&gntk(&["check", "bad.json"], dir.path())), "config_parse_error");
}

#[test]
fn zero_inclusion_probability_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"schemes": [{"scheme": {"kind": "layer_without_replacement", "q": 0}}]}"#,
    )
    .unwrap();
    assert_eq!(error_code(&gntk(&["check", "cfg.json"], dir.path())), "invalid_sampling_prob");
}

#[test]
fn check_echoes_figure1_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = gntk(&["check", "--preset", "figure1"], dir.path());
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["eta"], 0.1);
    assert_eq!(v["config"]["hyper"]["sigma_w2"], 32.0);
    assert_eq!(v["config"]["hyper"]["sigma_b2"], 0.0);
    assert_eq!(v["n_nodes"], 100);
    assert_eq!(v["n_train"], 6);
}

#[test]
fn zero_time_grid_reports_exact_prior() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_setup_with_times(dir.path(), "[0]", "");
    let out = gntk(&["run", &cfg, "--out", "out"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&dir.path().join("out/summary.json"));
    let t0: Vec<&Value> = summary["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["name"] == "t0_prior_max_deviation")
        .collect();
    assert_eq!(t0.len(), 2);
    assert!(t0.iter().all(|c| c["value"] == 0.0));
    // the convergence checks do not apply at t = 0
    assert_eq!(summary["skipped"].as_array().unwrap().len(), 2);
}

#[test]
fn three_samplers_give_three_kernels_and_distances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_setup(
        dir.path(),
        r#", "schemes": [
            {"scheme": {"kind": "layer_with_replacement", "p": "uniform", "n_samples": 6}},
            {"scheme": {"kind": "layer_without_replacement", "q": 0.5}},
            {"scheme": {"kind": "node_wise", "fanout": 2}}
        ]"#,
    );
    let out = gntk(&["run", &cfg, "--out", "out"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let k = read_json(&dir.path().join("out/kernels.json"));
    assert_eq!(k["schemes"].as_array().unwrap().len(), 3);
    let d = k["distances"].as_array().unwrap();
    assert_eq!(d.len(), 3);
    assert!(d.iter().all(|x| x["k_frobenius"].as_f64().unwrap() > 0.0));
    let summary = read_json(&dir.path().join("out/summary.json"));
    assert_eq!(summary["all_pass"], true, "{summary}");
    let oracle = read_json(&dir.path().join("out/oracle_report.json"));
    let names: Vec<&str> = oracle["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"nodewise_mask_rel_max_error"));
    assert_eq!(names.iter().filter(|n| **n == "layer_mask_rel_max_error").count(), 2);
}

#[test]
fn reruns_are_byte_identical_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_setup(dir.path(), "");
    for out in ["a", "b"] {
        assert!(gntk(&["run", &cfg, "--out", out], dir.path()).status.success());
    }
    assert!(gntk(&["run", &cfg, "--out", "c", "--seed", "9"], dir.path()).status.success());
    for f in ["kernels.json", "evolution.csv", "paths.csv", "oracle_report.json", "summary.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    let a = std::fs::read(dir.path().join("a/paths.csv")).unwrap();
    let c = std::fs::read(dir.path().join("c/paths.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn evolution_csv_schema_and_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_setup(dir.path(), "");
    assert!(gntk(&["run", &cfg, "--out", "out"], dir.path()).status.success());
    let text = std::fs::read_to_string(dir.path().join("out/evolution.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scheme,t,node_index,node_coord,prior_mean,prior_std,post_mean,post_std"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 2 schemes x 5 times x 12 nodes, then 3 recorded steps for the finite networks
    assert_eq!(rows.len(), 2 * 5 * 12 + 3 * 12);
    let last: Vec<&Vec<&str>> = rows.iter().filter(|r| r[0] == "none" && r[1].parse::<f64>().unwrap() == 1000.0).collect();
    for (node, y) in [(0usize, 1.0), (4, -0.5), (8, 0.25)] {
        let r = last.iter().find(|r| r[2] == node.to_string()).unwrap();
        assert!((r[6].parse::<f64>().unwrap() - y).abs() <= 1e-4);
    }
    let paths = std::fs::read_to_string(dir.path().join("out/paths.csv")).unwrap();
    assert!(paths.starts_with("scheme,t,path,node_index,node_coord,value\n"));
}

#[test]
fn graphsage_and_program_architectures_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_setup(dir.path(), r#", "architecture": "graphsage""#);
    let out = gntk(&["run", &cfg, "--out", "sage"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let oracle = read_json(&dir.path().join("sage/oracle_report.json"));
    assert_eq!(oracle["skipped"].as_array().unwrap().len(), 1);

    let program = r#", "schemes": [{"scheme": {"kind": "none"}}],
        "architecture": {"program": [
            {"op": "input"}, {"op": "weight", "sigma_w2": 2.0}, {"op": "graph_conv"}, {"op": "bias", "sigma_b2": 0.1},
            {"op": "activation", "kind": "erf"}, {"op": "weight", "sigma_w2": 2.0}, {"op": "node_sample", "fanout": 2},
            {"op": "bias", "sigma_b2": 0.1}
        ]}"#;
    let cfg = small_setup(dir.path(), program);
    let out = gntk(&["run", &cfg, "--out", "prog"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let sampled_program = program.replace(r#"[{"scheme": {"kind": "none"}}]"#, r#"[{"scheme": {"kind": "node_wise", "fanout": 1}}]"#);
    let cfg = small_setup(dir.path(), &sampled_program);
    assert_eq!(error_code(&gntk(&["check", &cfg], dir.path())), "invalid_config");
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_setup(dir.path(), "");
    for (threads, out) in [("1", "one"), ("4", "four")] {
        let out = Command::new(env!("CARGO_BIN_EXE_gntk"))
            .args(["run", &cfg, "--out", out])
            .env("GNTK_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    for f in ["evolution.csv", "paths.csv", "oracle_report.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("one").join(f)).unwrap(),
            std::fs::read(dir.path().join("four").join(f)).unwrap()
        );
    }
}
