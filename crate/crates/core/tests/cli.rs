use std::path::Path;
use std::process::{Command, Output};

use hjbounds::table::read_bounds;
use hjbounds::RunConfig;

const EXE: &str = env!("CARGO_BIN_EXE_hjbounds");

fn run(args: &[&str]) -> Output {
    Command::new(EXE).args(args).env_remove("HJB_THREADS").output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn one_d_config(dir: &Path) -> std::path::PathBuf {
    let file = dir.join("one.json");
    std::fs::write(
        &file,
        r#"{
  "system": {
    "a": [[0]], "b": [[1]], "e": [["0.5"]],
    "u": {"center": [0], "generators": [[1]]},
    "d": {"center": [0], "generators": [[1]]}
  },
  "cost": {"type": "euclidean_norm", "center": [0]},
  "levels": [0, 0.5, 1],
  "counts": [2, 2, 2],
  "grid": {"t0": 0, "t_final": 1, "step": 0.01}
}"#,
    )
    .unwrap();
    file
}

fn precomputed(dir: &Path) -> std::path::PathBuf {
    let bundle = dir.join("ex.hjb");
    let out = run(&["--preset", "paper-example-6", "precompute", "--out", path(&bundle)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    bundle
}

#[test]
fn check_accepts_the_example() {
    let out = run(&["--preset", "paper-example-6", "check"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("check passed"));
}

#[test]
fn check_rejects_a_dominant_disturbance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = hjbounds::presets::example_config();
    let mut v = serde_json::to_value(&cfg).unwrap();
    v["system"]["e"][1][0] = serde_json::json!("3*(0.5+0.5*sin(pi/2*t))");
    let file = dir.path().join("e3.json");
    std::fs::write(&file, v.to_string()).unwrap();
    let out = run(&["--config", path(&file), "check"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("violation"), "{err}");
    // precompute refuses the same config
    let out = run(&["--config", path(&file), "precompute", "--out", path(&dir.path().join("x.hjb"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = hjbounds::presets::example_config();
    cfg.grid.t_final = -1.0;
    let file = dir.path().join("bad.json");
    std::fs::write(&file, cfg.to_json()).unwrap();
    assert_eq!(run(&["--config", path(&file), "check"]).status.code(), Some(2));
    assert_eq!(run(&["check"]).status.code(), Some(2));
    assert_eq!(run(&["--preset", "nope", "check"]).status.code(), Some(2));
    std::fs::write(&file, "{\"system\": 1}").unwrap();
    assert_eq!(run(&["--config", path(&file), "check"]).status.code(), Some(2));
}

#[test]
fn eval_at_the_origin_is_tight() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = precomputed(dir.path());
    let out = run(&["eval", "--bundle", path(&bundle), "--time", "0", "--point", "0,0,0"]);
    assert!(out.status.success());
    let (n, rows) = read_bounds(&out.stdout[..]).unwrap();
    assert_eq!(n, 3);
    assert!(rows[0].upper - rows[0].lower <= 1e-6);
    assert!(rows[0].lower.abs() <= 1e-6);
}

#[test]
fn eval_at_the_final_time_brackets_the_cost() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = precomputed(dir.path());
    let out = run(&["eval", "--bundle", path(&bundle), "--time", "1.5", "--point", "0.3,-0.4,1.2"]);
    let (_, rows) = read_bounds(&out.stdout[..]).unwrap();
    assert!(rows[0].lower <= 1.3 + 1e-12 && 1.3 <= rows[0].upper + 1e-12);
}

#[test]
fn batch_eval_matches_single_points() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = precomputed(dir.path());
    let pts = ["0.1,0.2,-0.3", "-1,0.5,0.25", "0.9,-0.9,0"];
    let mut args = vec!["eval", "--bundle", path(&bundle), "--time", "0.4"];
    for p in &pts {
        args.extend(["--point", p]);
    }
    let batch = String::from_utf8(run(&args).stdout).unwrap();
    let lines: Vec<&str> = batch.lines().collect();
    for (i, p) in pts.iter().enumerate() {
        let single = String::from_utf8(run(&["eval", "--bundle", path(&bundle), "--time", "0.4", "--point", p]).stdout).unwrap();
        assert_eq!(single.lines().nth(1).unwrap(), lines[i + 1]);
    }
}

#[test]
fn grid_tables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = precomputed(dir.path());
    let csv = dir.path().join("g.csv");
    let out = run(&["grid", "--bundle", path(&bundle), "--time", "0", "--grid", "-1:1:5,-1:1:3,0:0:1", "--out", path(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(&csv).unwrap();
    let (n, rows) = read_bounds(&bytes[..]).unwrap();
    assert_eq!(rows.len(), 15);
    let mut again = Vec::new();
    hjbounds::table::write_bounds(&mut again, n, &rows).unwrap();
    assert_eq!(again, bytes);

    let slices = dir.path().join("slices");
    let out = run(&["grid", "--bundle", path(&bundle), "--time", "0", "--slices", "-1:1:151", "--out", path(&slices)]);
    assert!(out.status.success());
    for i in 1..=3 {
        let text = std::fs::read_to_string(slices.join(format!("slice_x{i}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 152);
    }
}

#[test]
fn reach_labels_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = precomputed(dir.path());
    let csv = dir.path().join("r.csv");
    let out = run(&["reach", "--bundle", path(&bundle), "--time", "0", "--gamma", "0.6", "--grid", "-1:1:11,-1:1:11,-1:1:11", "--out", path(&csv)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma 0.6: reach"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("x1,x2,x3,label\n"));
    assert_eq!(text.lines().count(), 1 + 11 * 11 * 11);
    // the origin is certified inside
    assert!(text.lines().any(|l| l == "0,0,0,1"));
}

#[test]
fn corrupted_bundle_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = precomputed(dir.path());
    let mut bytes = std::fs::read(&bundle).unwrap();
    let k = bytes.len() / 2;
    bytes[k] ^= 0x40;
    std::fs::write(&bundle, &bytes).unwrap();
    let out = run(&["eval", "--bundle", path(&bundle), "--time", "0", "--point", "0,0,0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn trivial_config_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = one_d_config(dir.path());
    let bundle = dir.path().join("one.hjb");
    let start = std::time::Instant::now();
    let out = run(&["--config", path(&cfg), "precompute", "--out", path(&bundle), "--json", path(&dir.path().join("one.json.dump"))]);
    assert!(out.status.success());
    assert!(start.elapsed().as_secs_f64() < 1.0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("characteristics 6"));
    let dump: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("one.json.dump")).unwrap()).unwrap();
    assert_eq!(dump["tuples"].as_array().unwrap().len(), 6);

    // v(0, x) = max(|x| - 0.5, 0)
    let out = run(&["eval", "--bundle", path(&bundle), "--time", "0", "--point", "1.25"]);
    let (_, rows) = read_bounds(&out.stdout[..]).unwrap();
    assert!((rows[0].lower - 0.75).abs() < 1e-9 && (rows[0].upper - 0.75).abs() < 1e-9);

    let csv = dir.path().join("o.csv");
    let out = run(&["--config", path(&cfg), "oracle-compare", "--bundle", path(&bundle), "--grid", "-2:2:41", "--out", path(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("x1,lower,oracle,upper,eps,flags\n"));
    assert!(!text.contains("violation3"));

    let report = dir.path().join("bench.json");
    let out = run(&["--config", path(&cfg), "--threads", "2", "bench", "--slices", "-1:1:11", "--out", path(&report)]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["points"], 11);
    assert_eq!(v["threads"], 2);
    assert!(v["bundle_bytes"].as_u64().unwrap() > 0);
}

#[test]
fn seed_flag_changes_the_bundle_hash() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.hjb");
    let b = dir.path().join("b.hjb");
    assert!(run(&["--preset", "double-integrator", "precompute", "--out", path(&a)]).status.success());
    assert!(run(&["--preset", "double-integrator", "--seed", "3", "precompute", "--out", path(&b)]).status.success());
    let (ba, bb) = (hjbounds::bundle_io::load_bundle(&a).unwrap(), hjbounds::bundle_io::load_bundle(&b).unwrap());
    let mut cfg = RunConfig::preset("double-integrator").unwrap();
    assert_eq!(ba.config_hash, cfg.hash());
    cfg.seed = 3;
    assert_eq!(bb.config_hash, cfg.hash());
    assert_eq!(bb.seed, 3);
}
