use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn geoplan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoplan")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = geoplan(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn schema_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"))
}

fn assert_schema(name: &str, doc: &Value) {
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(schema_path(name)).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

/// 96 px plus-shaped road, 8 px wide, with a 1 m sidecar.
fn write_cross(dir: &Path, name: &str, road: bool) {
    let n = 96;
    let mut bytes = format!("P5\n{n} {n}\n255\n").into_bytes();
    for y in 0..n {
        for x in 0..n {
            let on = road && ((44..52).contains(&x) || (44..52).contains(&y));
            bytes.push(if on { 255 } else { 0 });
        }
    }
    std::fs::write(dir.join(name), bytes).unwrap();
    std::fs::write(dir.join(format!("{name}.hdr")), "0 0 1\n").unwrap();
}

fn degrees(graph: &Value) -> Vec<usize> {
    let nodes = graph["nodes"].as_array().unwrap();
    let mut deg = vec![0; nodes.len()];
    for e in graph["edges"].as_array().unwrap() {
        deg[e["a"].as_u64().unwrap() as usize] += 1;
        deg[e["b"].as_u64().unwrap() as usize] += 1;
    }
    deg.sort_unstable();
    deg
}

#[test]
fn extract_cross_gives_one_junction_and_four_endpoints() {
    let tmp = TempDir::new().unwrap();
    write_cross(tmp.path(), "cross.pgm", true);
    let stdout = ok(tmp.path(), &["--seed", "1", "extract", "--raster", "cross.pgm", "--out", "g.json"]);
    assert!(stdout.contains("nodes 5 edges 4"), "{stdout}");
    let g = read(tmp.path(), "g.json");
    assert_schema("graph", &g);
    assert_eq!(degrees(&g), vec![1, 1, 1, 1, 4]);

    ok(tmp.path(), &["--seed", "1", "plan", "--graph", "g.json", "--start", "1", "--goal", "2", "--out", "p.json"]);
    let p = read(tmp.path(), "p.json");
    assert_schema("plan", &p);
    assert!(p["cost"].as_f64().unwrap() > 0.0);
}

#[test]
fn extract_empty_raster_is_an_empty_graph() {
    let tmp = TempDir::new().unwrap();
    write_cross(tmp.path(), "empty.pgm", false);
    ok(tmp.path(), &["--seed", "1", "extract", "--raster", "empty.pgm", "--out", "g.json"]);
    let g = read(tmp.path(), "g.json");
    assert_schema("graph", &g);
    assert_eq!(g, json!({"nodes": [], "edges": []}));
}

#[test]
fn missing_inputs_fail_with_the_path() {
    let tmp = TempDir::new().unwrap();
    let out = geoplan(tmp.path(), &["--seed", "1", "extract", "--raster", "nowhere.pgm", "--out", "g.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.pgm"));

    write_cross(tmp.path(), "cross.pgm", true);
    let out = geoplan(tmp.path(), &["extract", "--raster", "cross.pgm", "--out", "g.json"]);
    assert!(!out.status.success(), "a seed is required");
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn unreachable_plan_is_an_error() {
    let tmp = TempDir::new().unwrap();
    write_cross(tmp.path(), "cross.pgm", true);
    ok(tmp.path(), &["--seed", "1", "extract", "--raster", "cross.pgm", "--out", "g.json"]);
    let g = read(tmp.path(), "g.json");
    let all: Vec<String> = g["edges"].as_array().unwrap().iter().map(|e| e["id"].to_string()).collect();
    let out = geoplan(
        tmp.path(),
        &["--seed", "1", "plan", "--graph", "g.json", "--start", "1", "--goal", "2", "--disable-edges", &all.join(","), "--out", "p.json"],
    );
    assert!(!out.status.success());
}

fn gen_world(dir: &Path) {
    ok(dir, &["--seed", "5", "gen-world", "--out", "world.json", "--episodes", "eps.json", "--count", "5", "--stops", "2"]);
}

#[test]
fn oracle_episode_succeeds_and_matches_schemas() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    gen_world(d);
    assert_schema("world", &read(d, "world.json"));
    let eps = read(d, "eps.json");
    assert_schema("episodes", &eps);
    assert_eq!(eps.as_array().unwrap().len(), 10);
    for i in 0..10 {
        let name = format!("ep{i}.json");
        let idx = i.to_string();
        ok(d, &["--seed", "5", "episode", "--world", "world.json", "--policy", "oracle", "--episode", "eps.json", "--index", &idx, "--out", &name]);
        let rec = read(d, &name);
        assert_schema("episode", &rec);
        assert_eq!(rec["outcome"]["success"], json!(true), "{rec}");
        assert_eq!(rec["localization"]["correct"], json!(true));
        assert!(rec["steps"].as_array().unwrap().iter().all(|s| s["class"] == json!("optimal")));
    }
}

#[test]
fn blocked_goal_gives_a_failure_record() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    gen_world(d);
    let world = read(d, "world.json");
    let blocked = world["blocked"][0].clone();
    let mut eps = read(d, "eps.json");
    eps[0]["goal"] = blocked;
    std::fs::write(d.join("bad.json"), eps.to_string()).unwrap();
    ok(d, &["--seed", "5", "episode", "--world", "world.json", "--policy", "oracle", "--episode", "bad.json", "--out", "r.json"]);
    let rec = read(d, "r.json");
    assert_schema("episode", &rec);
    assert!(rec["failure"].is_string());
    assert!(rec["outcome"].is_null());
}

fn pipeline(d: &Path) -> Vec<(String, Vec<u8>)> {
    gen_world(d);
    ok(
        d,
        &[
            "--seed", "5", "train-plan", "--world", "world.json", "--episodes", "eps.json", "--out", "pol.bin", "--updates", "200",
            "--vpft-steps", "100", "--telemetry", "tel.csv", "--trace", "trace.csv", "--report", "rep.json", "--eval-episodes", "5",
        ],
    );
    for i in 0..3 {
        let (name, idx) = (format!("run{i}.json"), i.to_string());
        ok(
            d,
            &[
                "--seed", "5", "episode", "--world", "world.json", "--policy", "pol.bin", "--episode", "eps.json", "--index", &idx,
                "--sampling", "stochastic", "--out", &name,
            ],
        );
    }
    let runs: Vec<Value> = (0..3).map(|i| read(d, &format!("run{i}.json"))).collect();
    std::fs::write(d.join("runs.json"), Value::Array(runs).to_string()).unwrap();
    ok(d, &["--seed", "5", "evaluate", "--pred", "runs.json", "--ref", "runs.json", "--world", "world.json", "--report", "ev.json"]);
    ok(d, &["--seed", "5", "train-align", "--out", "align", "--steps", "20", "--pairs", "40"]);
    ["world.json", "eps.json", "pol.bin", "pol.bin.json", "tel.csv", "trace.csv", "rep.json", "runs.json", "ev.json", "align/align.bin", "align/index.json", "align/metrics.json"]
        .iter()
        .map(|n| (n.to_string(), std::fs::read(d.join(n)).unwrap()))
        .collect()
}

#[test]
fn pipeline_outputs_are_byte_identical_across_runs() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        assert!(x == y, "{name} differs between runs");
    }
    assert_schema("train-report", &read(a.path(), "rep.json"));
    assert_schema("evaluate-report", &read(a.path(), "ev.json"));
    assert_schema("align-metrics", &read(a.path(), "align/metrics.json"));
    let ev = read(a.path(), "ev.json");
    assert_eq!(ev["episodes"], json!(3));
    assert!(ev["top1"].is_null());
    let tel = String::from_utf8(first[4].1.clone()).unwrap();
    assert!(tel.starts_with("update,meanRTotal,objective,kl,clippedFraction\n"));
    assert_eq!(tel.lines().count(), 201);
}

#[test]
fn zero_step_alignment_writes_baseline_metrics() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["--seed", "2", "train-align", "--out", "a", "--steps", "0", "--pairs", "30"]);
    let m = read(tmp.path(), "a/metrics.json");
    assert_schema("align-metrics", &m);
    assert!(m["finalLoss"].is_null());
    assert_eq!(m["testPairs"], json!(6));
}

#[test]
fn evaluate_reads_retrieval_runs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    gen_world(d);
    let pred = json!({
        "retrieval": {
            "candidates": 200,
            "results": [
                {"queryId": 0, "rankedIds": [4, 1, 2], "truthIds": [4]},
                {"queryId": 1, "rankedIds": [0, 1, 2], "truthIds": [2]}
            ],
            "overlaps": {"0": 0.9, "1": 0.1}
        }
    });
    std::fs::write(d.join("pred.json"), pred.to_string()).unwrap();
    std::fs::write(d.join("ref.json"), json!({"trajectories": [], "goals": []}).to_string()).unwrap();
    ok(d, &["--seed", "5", "evaluate", "--pred", "pred.json", "--ref", "ref.json", "--world", "world.json", "--report", "ev.json"]);
    let ev = read(d, "ev.json");
    assert_schema("evaluate-report", &ev);
    assert_eq!(ev["top1"], json!(0.5));
    assert_eq!(ev["top5"], json!(1.0));
    assert_eq!(ev["top1pct"], json!(0.5));
    assert_eq!(ev["hitRate"], json!(0.5));
    assert!((ev["ap"].as_f64().unwrap() - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
    assert!(ev["sr"].is_null());
}
