use std::path::Path;
use std::process::{Command, Output};

use bt_dpm::cli::io::read_archive;

const CONFIG: &str = r#"{
  "seed": 17,
  "n_observations": 60,
  "kernel": {"type": "home_ties", "alpha": 1.3, "theta": 1.5},
  "truth": {"components": [
    {"weight": 0.6, "mean": -0.8, "variance": 0.16},
    {"weight": 0.4, "mean": 1.0, "variance": 0.36}
  ]},
  "sampler": {"n_sweeps": 50, "burn_in": 20, "n_particles": 30},
  "estimate": {"n_nodes": 101},
  "championship": {"n_teams": 6, "n_replicates": 40},
  "diagnose": {"instances": 20, "horizon": 10, "chain_length": 20, "tail_replicates": 2000, "t_points": 5}
}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bt-dpm"));
    c.env_remove("BTDP_SEED").env_remove("BTDP_OUT");
    c
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn full_pipeline_writes_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, CONFIG).unwrap();
    let out = dir.path().join("out");
    for cmd in ["simulate", "fit", "estimate", "predict", "diagnose"] {
        let o = run(&[cmd], &config, &out);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(&out.join("outcomes.csv")).lines().count(), 61);
    assert_eq!(read(&out.join("strengths.csv")).lines().count(), 62);
    let archive = read_archive(&out.join("posterior.jsonl")).unwrap();
    assert_eq!(archive.len(), 30);
    assert_eq!(archive[0].0, 20);
    let density = read(&out.join("density.csv"));
    assert!(density.starts_with("v,pdf,lower,upper,aligned"));
    assert_eq!(density.lines().count(), 102);
    assert_eq!(read(&out.join("scores.csv")).lines().count(), 7);
    assert_eq!(read(&out.join("scores_raw.csv")).lines().count(), 6 * 40 + 1);
    let diag: serde_json::Value = serde_json::from_str(&read(&out.join("diagnostics.json"))).unwrap();
    assert_eq!(diag["forgetting"]["violations"], 0);
    assert_eq!(diag["truncation"]["violations"], 0);
    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 17);
    assert_eq!(manifest["retained"], 30);
}

#[test]
fn same_seed_same_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, CONFIG).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        for cmd in ["simulate", "fit"] {
            assert!(run(&[cmd], &config, out).status.success());
        }
    }
    for f in ["outcomes.csv", "strengths.csv", "posterior.jsonl"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let c = dir.path().join("c");
    assert!(run(&["simulate", "--seed", "18"], &config, &c).status.success());
    assert_ne!(read(&a.join("outcomes.csv")), read(&c.join("outcomes.csv")));
}

#[test]
fn environment_overrides_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, CONFIG).unwrap();
    let env_out = dir.path().join("env");
    let o = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .env("BTDP_SEED", "18")
        .env("BTDP_OUT", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    let flag_out = dir.path().join("flag");
    assert!(run(&["simulate", "--seed", "18"], &config, &flag_out).status.success());
    assert_eq!(read(&env_out.join("outcomes.csv")), read(&flag_out.join("outcomes.csv")));
    let both = dir.path().join("both");
    let o = bin()
        .args(["simulate", "--seed", "17", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&both)
        .env("BTDP_SEED", "18")
        .output()
        .unwrap();
    assert!(o.status.success());
    let base = dir.path().join("base");
    assert!(run(&["simulate"], &config, &base).status.success());
    assert_eq!(read(&both.join("outcomes.csv")), read(&base.join("outcomes.csv")));
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"seed": 1, "kernel": {"type": "home_ties", "alpha": 1.0, "theta": 0.5}}"#).unwrap();
    assert_eq!(run(&["simulate"], &bad, &out).status.code(), Some(2));

    let config = dir.path().join("run.json");
    std::fs::write(&config, CONFIG).unwrap();
    assert_eq!(run(&["fit"], &config, &out).status.code(), Some(3));

    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("outcomes.csv"), "index,outcome\n1,1\n2,5\n").unwrap();
    let o = run(&["fit"], &config, &out);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["simulate"], &missing, &out).status.code(), Some(3));
}
