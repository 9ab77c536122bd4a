//! Behavioural tests of the `dpn` binary: exit codes, error wording, file
//! format handling, and the session edge cases the commands promise.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const HMM_MODEL: &str = r#"{
  "variables": [
    {"name": "x", "states": ["s0", "s1"]},
    {"name": "y", "states": ["o0", "o1"]}
  ],
  "initial": {
    "edges": [["y", "x"]],
    "cpts": {"x": [0.5, 0.5], "y": [0.9, 0.1, 0.2, 0.8]}
  },
  "transition": {
    "edges": [["y", "x"]],
    "temporal_edges": [["x", "x"]],
    "cpts": {"x": [0.7, 0.3, 0.3, 0.7], "y": [0.9, 0.1, 0.2, 0.8]}
  }
}"#;

struct Fixture {
    _dir: tempfile::TempDir,
    model: PathBuf,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let model = dir.path().join("model.json");
        std::fs::write(&model, HMM_MODEL).unwrap();
        Fixture { _dir: dir, model }
    }

    fn write(&self, name: &str, content: &str) -> PathBuf {
        let path = self._dir.path().join(name);
        std::fs::write(&path, content).unwrap();
        path
    }
}

fn dpn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpn")).args(args).output().unwrap()
}

fn stdout_lines(out: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("json line"))
        .collect()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_ok_exits_zero_with_empty_report() {
    let fx = Fixture::new();
    let out = dpn(&["validate", path(&fx.model)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn validate_bad_cpt_exits_one_with_violation_text() {
    let fx = Fixture::new();
    let bad = fx.write("bad.json", &HMM_MODEL.replace("[0.5, 0.5]", "[0.5, 0.4]"));
    let out = dpn(&["validate", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("sums to 0.9"), "report: {report}");
}

#[test]
fn malformed_json_exits_three_with_position() {
    let fx = Fixture::new();
    let broken = fx.write("broken.json", "{\n  \"variables\": [,]\n}");
    let out = dpn(&["validate", path(&broken)]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn missing_file_exits_three() {
    let out = dpn(&["validate", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn empty_evidence_emits_priors_per_slice() {
    let fx = Fixture::new();
    let ev = fx.write("empty.jsonl", "");
    let out = dpn(&["filter", path(&fx.model), "-e", path(&ev), "-w", "2"]);
    assert!(out.status.success());
    let lines = stdout_lines(&out);
    assert_eq!(lines.len(), 4); // 2 slices x 2 variables
    // Slice 0 prior of x is uniform.
    let x0 = &lines[0];
    assert_eq!(x0["t"], 0);
    assert_eq!(x0["variable"], "x");
    assert_eq!(x0["mode"], "filtered");
    assert_eq!(x0["distribution"][0][1], 0.5);
}

#[test]
fn filtered_records_carry_cumulative_mass() {
    let fx = Fixture::new();
    let ev = fx.write("ev.jsonl", "{\"t\": 0, \"var\": \"y\", \"state\": \"o0\"}\n");
    let out = dpn(&["filter", path(&fx.model), "-e", path(&ev)]);
    assert!(out.status.success());
    let lines = stdout_lines(&out);
    // p(y0 = o0) = 0.55
    let mass = lines[0]["evidence_mass"].as_f64().unwrap();
    assert!((mass - 0.55).abs() < 1e-12);
}

#[test]
fn evidence_behind_window_is_rejected_naming_the_slice() {
    let fx = Fixture::new();
    let ev = fx.write(
        "late.jsonl",
        "{\"t\": 4, \"var\": \"y\", \"state\": \"o0\"}\n{\"t\": 0, \"var\": \"y\", \"state\": \"o1\"}\n",
    );
    let out = dpn(&["filter", path(&fx.model), "-e", path(&ev), "-w", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("slice 0"), "stderr: {err}");
    assert!(err.contains("smooth"), "stderr must cite the smoothing path: {err}");
}

#[test]
fn out_of_order_evidence_within_window_is_accepted() {
    let fx = Fixture::new();
    let ev = fx.write(
        "disorder.jsonl",
        "{\"t\": 1, \"var\": \"y\", \"state\": \"o0\"}\n{\"t\": 0, \"var\": \"y\", \"state\": \"o1\"}\n",
    );
    let out = dpn(&["filter", path(&fx.model), "-e", path(&ev), "-w", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn contradictory_evidence_exits_two() {
    let fx = Fixture::new();
    // x pinned to s0 twice with contradicting hard findings via an impossible
    // likelihood: zero out both states of y's parent through x itself.
    let ev = fx.write(
        "contra.jsonl",
        "{\"t\": 0, \"var\": \"x\", \"state\": \"s0\"}\n{\"t\": 0, \"var\": \"x\", \"state\": \"s1\"}\n",
    );
    let out = dpn(&["filter", path(&fx.model), "-e", path(&ev)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("zero probability"), "stderr: {err}");
}

#[test]
fn unknown_state_label_exits_one() {
    let fx = Fixture::new();
    let ev = fx.write("bad.jsonl", "{\"t\": 0, \"var\": \"y\", \"state\": \"nope\"}\n");
    let out = dpn(&["filter", path(&fx.model), "-e", path(&ev)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn smooth_targets_inside_final_window_equal_filtered() {
    let fx = Fixture::new();
    let ev = fx.write(
        "ev.jsonl",
        "{\"t\": 0, \"var\": \"y\", \"state\": \"o0\"}\n{\"t\": 1, \"var\": \"y\", \"state\": \"o1\"}\n{\"t\": 2, \"var\": \"y\", \"state\": \"o1\"}\n",
    );
    let filtered = dpn(&["filter", path(&fx.model), "-e", path(&ev), "-w", "2"]);
    let smoothed = dpn(&[
        "smooth", path(&fx.model), "-e", path(&ev), "-w", "2", "--targets", "2:x",
    ]);
    assert!(smoothed.status.success());
    let f_lines = stdout_lines(&filtered);
    let s_lines = stdout_lines(&smoothed);
    assert_eq!(s_lines.len(), 1);
    let f_last_x = f_lines
        .iter()
        .rev()
        .find(|l| l["variable"] == "x" && l["t"] == 2)
        .unwrap();
    assert_eq!(s_lines[0]["distribution"], f_last_x["distribution"]);
    assert_eq!(s_lines[0]["mode"], "smoothed");
}

#[test]
fn smooth_without_targets_covers_every_slice_and_variable() {
    let fx = Fixture::new();
    let ev = fx.write(
        "ev.jsonl",
        "{\"t\": 0, \"var\": \"y\", \"state\": \"o0\"}\n{\"t\": 3, \"var\": \"y\", \"state\": \"o1\"}\n",
    );
    let out = dpn(&["smooth", path(&fx.model), "-e", path(&ev), "-w", "2"]);
    assert!(out.status.success());
    let lines = stdout_lines(&out);
    assert_eq!(lines.len(), 8); // 4 slices x 2 variables
}

#[test]
fn smooth_unknown_target_exits_one() {
    let fx = Fixture::new();
    let ev = fx.write("ev.jsonl", "{\"t\": 0, \"var\": \"y\", \"state\": \"o0\"}\n");
    let out = dpn(&["smooth", path(&fx.model), "-e", path(&ev), "--targets", "0:zz"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn forecast_unknown_method_exits_one() {
    let fx = Fixture::new();
    let ev = fx.write("ev.jsonl", "");
    let out = dpn(&[
        "forecast", path(&fx.model), "-e", path(&ev), "-k", "1", "--method", "magic",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn resource_cap_env_var_is_honored() {
    let fx = Fixture::new();
    let ev = fx.write("ev.jsonl", "");
    let out = Command::new(env!("CARGO_BIN_EXE_dpn"))
        .args(["forecast", path(&fx.model), "-e", path(&ev), "-k", "5"])
        .env("DPN_RESOURCE_CAP", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cap 2"), "stderr: {err}");
    assert!(err.contains("monte-carlo"), "stderr: {err}");
}

#[test]
fn csv_output_has_one_row_per_state() {
    let fx = Fixture::new();
    let ev = fx.write("ev.jsonl", "{\"t\": 0, \"var\": \"y\", \"state\": \"o0\"}\n");
    let out = dpn(&["filter", path(&fx.model), "-e", path(&ev), "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,variable,mode,state,probability,evidence_mass,std_error,samples,seed,rng,approximate");
    assert_eq!(lines.len(), 1 + 4); // header + 2 variables x 2 states
}

#[test]
fn truncated_series_file_reports_corruption() {
    let fx = Fixture::new();
    let ev = fx.write("ev.jsonl", "{\"t\": 0, \"var\": \"y\", \"state\": \"o0\"}\n");
    let series = fx._dir.path().join("series.bin");
    let out = dpn(&[
        "filter", path(&fx.model), "-e", path(&ev), "--save-series", path(&series),
    ]);
    assert!(out.status.success());
    let bytes = std::fs::read(&series).unwrap();
    std::fs::write(&series, &bytes[..bytes.len() - 5]).unwrap();
    let out = dpn(&["filter", "--load-series", path(&series), "-e", path(&ev)]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("corrupt"), "stderr: {err}");
}

#[test]
fn older_major_series_version_is_rejected_explicitly() {
    let fx = Fixture::new();
    let ev = fx.write("ev.jsonl", "");
    let series = fx._dir.path().join("series.bin");
    dpn(&["filter", path(&fx.model), "-e", path(&ev), "--save-series", path(&series)]);
    let mut bytes = std::fs::read(&series).unwrap();
    bytes[8] = 0; // major version -> 0
    std::fs::write(&series, &bytes).unwrap();
    let out = dpn(&["filter", "--load-series", path(&series), "-e", path(&ev)]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("version"), "stderr: {err}");
}

#[test]
fn forecast_records_embed_method_metadata() {
    let fx = Fixture::new();
    let ev = fx.write("ev.jsonl", "{\"t\": 0, \"var\": \"y\", \"state\": \"o0\"}\n");
    let out = dpn(&[
        "forecast", path(&fx.model), "-e", path(&ev), "-k", "2", "--method", "mc",
        "--samples", "500", "--seed", "9", "--targets", "1:x",
    ]);
    assert!(out.status.success());
    let lines = stdout_lines(&out);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["mode"], "forecast:monte-carlo");
    assert_eq!(lines[0]["samples"], 500);
    assert_eq!(lines[0]["seed"], 9);
    assert_eq!(lines[0]["rng"], "chacha12");
    assert!(lines[0]["std_error"].is_array());

    let out = dpn(&[
        "forecast", path(&fx.model), "-e", path(&ev), "-k", "1", "--method", "linear",
    ]);
    let lines = stdout_lines(&out);
    assert_eq!(lines[0]["mode"], "forecast:linear");
    assert_eq!(lines[0]["approximate"], true);
}

#[test]
fn forecast_linear_on_chain_equals_exact_via_cli() {
    let fx = Fixture::new();
    let ev = fx.write("ev.jsonl", "{\"t\": 0, \"var\": \"y\", \"state\": \"o0\"}\n");
    let exact = dpn(&[
        "forecast", path(&fx.model), "-e", path(&ev), "-k", "1", "--targets", "1:x",
    ]);
    let linear = dpn(&[
        "forecast", path(&fx.model), "-e", path(&ev), "-k", "1", "--method", "linear",
        "--targets", "1:x",
    ]);
    let e = stdout_lines(&exact);
    let l = stdout_lines(&linear);
    let ev_ = |v: &serde_json::Value, i: usize| v["distribution"][i][1].as_f64().unwrap();
    for i in 0..2 {
        assert!((ev_(&e[0], i) - ev_(&l[0], i)).abs() < 1e-10);
    }
}
