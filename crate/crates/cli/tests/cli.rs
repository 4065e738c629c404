use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn riskscape(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskscape"))
        .args(args)
        .current_dir(dir)
        .env_remove("RISKSCAPE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

const TINY_EXPERIMENT: &str = r#"
experiment = "fig3b"
replications = 3
dims = [3]
ratios = [10.0, 20.0]
max_iters = 300
radius = 5.0
"#;

#[test]
fn gen_is_deterministic_and_seed_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("gen.toml"), "family = \"classification\"\nn = 50\nd = 4\nseed = 1\n").unwrap();
    for (out, seed) in [("a.bin", "7"), ("b.bin", "7"), ("c.bin", "8")] {
        let o = riskscape(&["gen", "--config", "gen.toml", "--seed", seed, "--out", out], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |f: &str| fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.bin"), read("b.bin"));
    assert_ne!(read("a.bin"), read("c.bin"));

    let o = riskscape(&["gen", "--config", "gen.toml", "--out", "data.csv"], dir.path());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "experiment = \"fig3b\"\nreplications = 0\n").unwrap();
    fs::write(dir.path().join("typo.json"), r#"{"experiment": "fig3b", "replicatons": 3}"#).unwrap();
    fs::write(dir.path().join("cfg.yaml"), "experiment: fig3b\n").unwrap();
    let cases: [&[&str]; 6] = [
        &["experiment", "--config", "bad.toml"],
        &["experiment", "--config", "typo.json"],
        &["experiment", "--config", "cfg.yaml"],
        &["experiment", "--config", "absent.toml"],
        &["experiment", "--name", "fig99"],
        &["gen"],
    ];
    for args in cases {
        let o = riskscape(args, dir.path());
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn experiment_writes_curves_and_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.toml"), TINY_EXPERIMENT).unwrap();
    let o = riskscape(&["experiment", "--config", "exp.toml", "--out", "res", "--plotdata"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let res = dir.path().join("res");
    for f in ["fig3b_error.csv", "fig3b_summary.json", "fig3b_manifest.json", "fig3b_plotdata.csv"] {
        assert!(res.join(f).exists(), "missing {f}");
    }
    let csv = fs::read_to_string(res.join("fig3b_error.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn too_many_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "experiment = \"fig4b\"\nreplications = 2\ndims = [3]\nratios = [10.0]\nmax_iters = 3\ntarget = 1e-300\nmax_failure_rate = 0.5\n";
    fs::write(dir.path().join("exp.toml"), cfg).unwrap();
    let o = riskscape(&["experiment", "--config", "exp.toml", "--out", "res"], dir.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn thread_flag_beats_env_and_output_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.toml"), TINY_EXPERIMENT).unwrap();
    let run = |out: &str, env: &str, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_riskscape"));
        cmd.current_dir(dir.path())
            .env("RISKSCAPE_THREADS", env)
            .args(["experiment", "--config", "exp.toml", "--out", out]);
        if let Some(t) = flag {
            cmd.args(["--threads", t]);
        }
        let o = cmd.output().unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(out).join("fig3b_manifest.json")).unwrap()).unwrap();
        let csv = fs::read(dir.path().join(out).join("fig3b_error.csv")).unwrap();
        (manifest["threads"].as_u64().unwrap(), csv)
    };
    let (t_env, csv_env) = run("env", "1", None);
    let (t_flag, csv_flag) = run("flag", "1", Some("3"));
    assert_eq!(t_env, 1);
    if cfg!(feature = "parallel") {
        assert_eq!(t_flag, 3);
    }
    assert_eq!(csv_env, csv_flag);
}

#[test]
fn fit_landscape_and_oracle_run_from_configs() {
    let dir = tempfile::tempdir().unwrap();
    let fit = r#"
inits = 2
seed = 3
[data.generate]
family = "classification"
n = 200
d = 3
seed = 5
[model]
family = "classification"
radius = 5.0
[optimizer]
max_iters = 500
"#;
    fs::write(dir.path().join("fit.toml"), fit).unwrap();
    let o = riskscape(&["fit", "--config", "fit.toml", "--out", "fit"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit/fit.json")).unwrap()).unwrap();
    assert_eq!(doc["runs"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("fit/trajectory_1.csv").exists());

    let land = r#"
starts = 10
population = true
[data.generate]
family = "gmm2"
n = 400
d = 1
separation = 1.5
seed = 2
[model]
family = "gmm2"
radius = 4.0
"#;
    fs::write(dir.path().join("land.toml"), land).unwrap();
    let o = riskscape(&["landscape", "--config", "land.toml", "--out", "report.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(!report["criticalpoints"].as_array().unwrap().is_empty());

    let oracle = r#"{
        "law": {"family": "robust-regression", "n": 0, "d": 2, "seed": 1},
        "model": {"family": "robust-regression", "radius": 10.0},
        "thetas": [[0.0, 0.0], [0.5, -0.5]],
        "hessian": true
    }"#;
    fs::write(dir.path().join("oracle.json"), oracle).unwrap();
    let o = riskscape(&["oracle", "--config", "oracle.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["points"][1]["hessian"].as_array().unwrap().len(), 2);
}
