use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const IID: &str = r#"
[experiment]
name = "iid"
n = 500
replicates = 400
master_seed = 7

[experiment.model_x]
type = "gaussian"
covariance = { kind = "identity" }

[experiment.model_y]
type = "ising"
beta = 0.0
graph = { kind = "curie_weiss", n = 500 }
"#;

fn nonsense(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonsense"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NONSENSE_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_line(o: &Output) -> Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    serde_json::from_str(lines[0]).unwrap()
}

#[test]
fn simulate_iid_writes_listed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("iid.toml"), IID).unwrap();
    let o = nonsense(
        &[
            "simulate",
            "--config",
            "iid.toml",
            "--out-dir",
            "out",
            "--csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{o:?}");
    let out = dir.path().join("out");
    let report = json(&out.join("iid.report.json"));
    let rho = &report["summaries"][1];
    assert_eq!(rho["statistic"], "scaled_correlation");
    let rate = rho["type1_rate"].as_f64().unwrap();
    assert!((0.02..=0.09).contains(&rate), "{rate}");
    assert_eq!(rho["prediction"]["law"], "normal");

    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["resolved_config"]["experiment"]["master_seed"], 7);
    let files = manifest["runs"][0]["outputs"].as_array().unwrap();
    assert!(files.len() >= 3);
    for f in files {
        assert!(out.join(f.as_str().unwrap()).is_file(), "{f}");
    }
    assert!(out
        .join(manifest["resolved_config_file"].as_str().unwrap())
        .is_file());

    let csv = fs::read_to_string(out.join("iid.replicates.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "replicate,t_n,scaled_t,rho_n,scaled_rho,beta_hat,naive_var,ci_low,ci_high"
    );
    assert_eq!(csv.lines().count(), 401);
}

#[test]
fn resolved_config_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("iid.toml"), IID).unwrap();
    let a = nonsense(
        &[
            "simulate",
            "--config",
            "iid.toml",
            "--out-dir",
            "a",
            "--threads",
            "1",
        ],
        dir.path(),
    );
    assert!(a.status.success());
    let b = nonsense(
        &[
            "simulate",
            "--config",
            "a/config.resolved.toml",
            "--out-dir",
            "b",
            "--threads",
            "3",
        ],
        dir.path(),
    );
    assert!(b.status.success(), "{b:?}");
    let read = |d: &str| fs::read(dir.path().join(d).join("iid.report.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    let read = |d: &str| fs::read(dir.path().join(d).join("iid.histogram.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn seed_flag_overrides_master_seed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("iid.toml"), IID).unwrap();
    let o = nonsense(
        &[
            "simulate",
            "--config",
            "iid.toml",
            "--out-dir",
            "out",
            "--seed",
            "99",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let report = json(&dir.path().join("out/iid.report.json"));
    assert_eq!(report["config"]["master_seed"], 99);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("iid.toml"), IID).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_nonsense"))
        .args(["simulate", "--config", "iid.toml"])
        .current_dir(dir.path())
        .env("NONSENSE_OUT_DIR", "from_env")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("from_env/manifest.json").is_file());
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[experiment]\nn = \"many\"\n").unwrap();
    let o = nonsense(
        &["simulate", "--config", "bad.toml", "--out-dir", "out"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"], "config");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn invalid_batch_member_blocks_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let good = IID
        .replace("[experiment]", "[[batch]]")
        .replace("[experiment.", "[batch.");
    let bad = good
        .replace("name = \"iid\"", "name = \"bad\"")
        .replace("n = 500\nrep", "n = 400\nrep");
    fs::write(dir.path().join("batch.toml"), format!("{good}\n{bad}")).unwrap();
    let o = nonsense(
        &["simulate", "--config", "batch.toml", "--out-dir", "out"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{o:?}");
    assert!(error_line(&o)["message"].as_str().unwrap().contains("bad"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn frozen_model_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = IID
        .replace("n = 500\n", "n = 20\n")
        .replace("replicates = 400", "replicates = 200")
        .replace(
            "beta = 0.0\ngraph = { kind = \"curie_weiss\", n = 500 }",
            "beta = 40.0\ngraph = { kind = \"curie_weiss\", n = 20 }",
        );
    fs::write(dir.path().join("frozen.toml"), cfg).unwrap();
    let o = nonsense(
        &["simulate", "--config", "frozen.toml", "--out-dir", "out"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{o:?}");
    assert_eq!(error_line(&o)["error"], "abort");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn sweep_histogram_has_one_block_per_beta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[experiment]
name = "../escape"
n = 256
replicates = 100
master_seed = 3
statistics = ["rho"]
model_x = { type = "ising", beta = 0.0, graph = { kind = "lattice", side = 16, dim = 2 } }
model_y = { type = "ising", beta = 0.0, graph = { kind = "lattice", side = 16, dim = 2 } }

[sweep]
grid = [0.0, 0.8, 1.6]
"#;
    fs::write(dir.path().join("sweep.toml"), cfg).unwrap();
    let o = nonsense(
        &["simulate", "--config", "sweep.toml", "--out-dir", "out"],
        dir.path(),
    );
    assert!(o.status.success(), "{o:?}");
    let out = dir.path().join("out");
    let hist = fs::read_to_string(out.join("_escape.histogram.csv")).unwrap();
    let mut blocks: Vec<&str> = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    blocks.dedup();
    assert_eq!(blocks, ["0", "0.8", "1.6"]);
    let trend = json(&out.join("_escape.trend.json"));
    assert_eq!(trend["points"].as_array().unwrap().len(), 3);
    assert!(!dir.path().join("escape.histogram.csv").exists());
}

#[test]
fn supercritical_sweep_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[experiment]
n = 256
replicates = 100
master_seed = 3
model_x = { type = "ising", beta = 0.0, graph = { kind = "lattice", side = 16, dim = 2 } }
model_y = { type = "ising", beta = 0.0, graph = { kind = "lattice", side = 16, dim = 2 } }

[sweep]
grid = [0.0, 1.9]
"#;
    fs::write(dir.path().join("sweep.toml"), cfg).unwrap();
    let o = nonsense(
        &["simulate", "--config", "sweep.toml", "--out-dir", "out"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dump_spins_writes_both_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = IID.replace(
        "type = \"gaussian\"\ncovariance = { kind = \"identity\" }",
        "type = \"ising\"\nbeta = 0.5\ngraph = { kind = \"curie_weiss\", n = 500 }",
    );
    fs::write(dir.path().join("cw.toml"), cfg).unwrap();
    let o = nonsense(
        &[
            "simulate",
            "--config",
            "cw.toml",
            "--out-dir",
            "out",
            "--dump-spins",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{o:?}");
    let bytes = fs::read(dir.path().join("out/iid.spins.bin")).unwrap();
    assert_eq!(bytes.len(), 400 * 2 * 500);
    assert!(bytes.iter().all(|&b| b == 1 || b == 0xff));
}

#[test]
fn unknown_preset_and_theorem_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = nonsense(&["simulate", "--preset", "figure9"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = nonsense(&["verify", "T9"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"], "config");
}

#[test]
fn verify_spike_theorem() {
    let dir = tempfile::tempdir().unwrap();
    let o = nonsense(&["verify", "t4ii", "--out-dir", "v"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(
        text.contains("[PASS]") && text.trim_end().ends_with("T4ii PASS"),
        "{text}"
    );
    assert!(fs::read_dir(dir.path().join("v")).unwrap().count() >= 1);
}

#[test]
fn ols_condition_examples() {
    let dir = tempfile::tempdir().unwrap();
    for (f, g, verdict) in [
        ("power:2", "exp:1", "Anticonservative"),
        ("power:2", "exp:-1", "Valid"),
        ("const:1", "exp:1", "Exact"),
    ] {
        let o = nonsense(&["ols-condition", f, g], dir.path());
        assert!(o.status.success());
        assert!(
            stdout(&o).contains(&format!("verdict: {verdict}")),
            "{}",
            stdout(&o)
        );
    }
    let o = nonsense(&["ols-condition", "power:2", "exp:1", "--json"], dir.path());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["int_fg"].as_f64().unwrap() - (std::f64::consts::E - 2.0)).abs() < 1e-9);
    let o = nonsense(&["ols-condition", "power:2", "wiggle:1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn assumptions_for_graphs_and_configs() {
    let dir = tempfile::tempdir().unwrap();
    let o = nonsense(
        &["assumptions", "curie_weiss", "n=100", "--json"],
        dir.path(),
    );
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["is_regular"], true);
    assert!((v[0]["common_row_sum"].as_f64().unwrap() - 0.99).abs() < 1e-12);

    let o = nonsense(
        &[
            "assumptions",
            "explicit_matrix",
            "n=3",
            "values=[0, 1, 0, 1, 0, 0, 0, 0, 0]",
            "--json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{o:?}");
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["is_regular"], false);

    fs::write(dir.path().join("iid.toml"), IID).unwrap();
    let o = nonsense(&["assumptions", "--config", "iid.toml"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("curie-weiss (n = 500)"));

    let o = nonsense(&["assumptions", "lattice", "side=4"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
