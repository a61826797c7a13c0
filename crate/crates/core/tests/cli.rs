use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_qedsim");

fn config(dir: &Path, model: &str, arrivals: &str, run: &str) -> std::path::PathBuf {
    let text = format!(
        "[model]\n{model}\n\n[arrivals]\n{arrivals}\n\n[run]\n{run}\n\n[output]\ndirectory = \"{}\"\n",
        dir.join("out").display()
    );
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn qedsim(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

const TWO_POINT: &str = "service = { 1 = 0.5, 2 = 0.5 }\nbeta = 1.0";
const POISSON: &str = "family = \"exponential\"";

#[test]
fn missing_beta_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "service = { 1 = 1.0 }", POISSON, "mode = \"limit\"\nseed = 1");
    let out = qedsim(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = json(&out.stderr);
    assert_eq!(err["kind"], "config");
    assert!(err["message"].as_str().unwrap().contains("model.beta"));
}

#[test]
fn model_prints_derived_constants() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), TWO_POINT, POISSON, "mode = \"limit\"\nseed = 1");
    let out = qedsim(&["model", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let v = json(&out.stdout);
    let sigma: Vec<Vec<f64>> = serde_json::from_value(v["sigma_matrix"].clone()).unwrap();
    assert_eq!(sigma, vec![vec![0.25, -0.25], vec![-0.25, 0.25]]);
    let psi: Vec<f64> = serde_json::from_value(v["psi"].clone()).unwrap();
    assert!((psi[0] - 2.0 / 3.0).abs() < 1e-12 && (psi[1] - 1.0 / 3.0).abs() < 1e-12);
    // c_s = 1/3 for the two-point law: θ* = 2/(1 + 1/9)
    assert!((v["theta_star"].as_f64().unwrap() - 1.8).abs() < 1e-12);
    assert!(tmp.path().join("out/manifest.json").exists());
}

#[test]
fn validate_default_config_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), TWO_POINT, POISSON, "mode = \"limit\"\nseed = 3");
    let out = qedsim(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&std::fs::read(tmp.path().join("out/validate.json")).unwrap());
    assert_eq!(report["violations"], 0);
}

#[test]
fn degenerate_noise_is_a_clean_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "service = { 1 = 1.0 }\nbeta = 1.0", "family = \"deterministic\"", "mode = \"limit\"\nseed = 1");
    let out = qedsim(&["exponent", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out.stderr)["kind"], "degenerate_noise");
    let on_disk = json(&std::fs::read(tmp.path().join("out/error.json")).unwrap());
    assert_eq!(on_disk["exit_code"], 3);
}

#[test]
fn overloaded_system_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "service = { 1 = 1.0 }\nbeta = 6.0", POISSON, "mode = \"finite\"\nn = 25\nseed = 1");
    let out = qedsim(&["simulate-finite", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out.stderr)["kind"], "overloaded");
}

#[test]
fn limit_run_writes_histogram_and_tail_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "service = { 1 = 1.0 }\nbeta = 0.5", POISSON, "mode = \"limit\"\nsamples = 1000000\nseed = 4");
    let out = qedsim(&["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    let hist = std::fs::read_to_string(dir.join("histogram.csv")).unwrap();
    assert!(hist.starts_with("bin_lo,bin_hi,count"));
    let fit = json(&std::fs::read(dir.join("tail_fit.json")).unwrap());
    assert!(fit["rel_error"].as_f64().unwrap() < 0.1, "{fit}");
    assert!(fit["regression"]["slope_se"].is_number());
}

#[test]
fn compare_writes_convergence_table() {
    let tmp = tempfile::tempdir().unwrap();
    let run = "mode = \"compare\"\nn = [25, 100, 400]\nsamples = 20000\nreplications = 4\nspacing = 5\nseed = 5";
    let cfg = config(tmp.path(), TWO_POINT, POISSON, run);
    let out = qedsim(&["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(tmp.path().join("out/convergence.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "n,ks,se,samples,finite_atom");
    assert_eq!(lines.len(), 4);
    let manifest = json(&std::fs::read(tmp.path().join("out/manifest.json")).unwrap());
    assert_eq!(manifest["config"]["run"]["n"], serde_json::json!([25, 100, 400]));
    assert_eq!(manifest["seeds"]["root"], 5);
}

#[test]
fn manifest_config_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), TWO_POINT, POISSON, "mode = \"finite\"\nn = 36\nsamples = 5000\nseed = 6");
    assert!(qedsim(&["simulate-finite", cfg.to_str().unwrap()]).status.success());
    let dir = tmp.path().join("out");
    let first = std::fs::read(dir.join("trace.csv")).unwrap();
    let manifest = json(&std::fs::read(dir.join("manifest.json")).unwrap());
    let again = tmp.path().join("again.toml");
    std::fs::write(&again, manifest["config_toml"].as_str().unwrap()).unwrap();
    let out2 = tmp.path().join("out2");
    assert!(qedsim(&["simulate-finite", again.to_str().unwrap(), "--out", out2.to_str().unwrap(), "--workers", "2"]).status.success());
    assert_eq!(first, std::fs::read(out2.join("trace.csv")).unwrap());
    let header = String::from_utf8_lossy(&first).lines().next().unwrap().to_string();
    assert_eq!(header, "t,Q,L_1,L_2,A_t,J_norm");
}
