use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rarl_core::disturbances::PerturbationBounds;
use rarl_core::environment::read_trace_csv;
use rarl_core::evaluation::read_results_csv;
use rarl_core::reference::PathCatalog;
use rarl_core::trim::TrimPoint;

fn rarl(args: &[&str], runs: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rarl"))
        .args(args)
        .env("RARL_RUNS_DIR", runs)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn trim_reports_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("trim.json");
    let stdout = ok(&rarl(&["trim", "--kappa", "0", "--gamma", "0", "--out", file.to_str().unwrap()], dir.path()));
    let printed: TrimPoint = serde_json::from_str(&stdout).unwrap();
    assert!(printed.residual < 1e-8);
    let saved: TrimPoint = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(saved, printed);

    let out = rarl(&["trim", "--kappa", "-0.012", "--gamma", "0.11"], dir.path());
    assert!(out.status.success());
}

#[test]
fn unflyable_trim_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = rarl(&["trim", "--kappa", "0.5", "--gamma", "0"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no trim"));
}

#[test]
fn unknown_config_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"ppo": {"n_env": 2}}"#).unwrap();
    let out = rarl(&["--config", cfg.to_str().unwrap(), "trim", "--kappa", "0", "--gamma", "0"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn gen_paths_and_zero_policy_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dir.path().join("paths.json");
    ok(&rarl(&["gen-paths", "--out", paths.to_str().unwrap()], dir.path()));
    let catalog = PathCatalog::from_json_file(&paths).unwrap();
    assert_eq!(catalog.len(), 20);

    let trace = dir.path().join("trace.csv");
    let p = paths.to_str().unwrap();
    ok(&rarl(
        &["--paths", p, "--no-noise", "--no-wind", "--no-gust", "simulate", "--path-id", "3", "--out", trace.to_str().unwrap()],
        dir.path(),
    ));
    let rows = read_trace_csv(&trace).unwrap();
    let reference = &catalog.paths[3];
    assert_eq!(rows.len(), reference.horizon() + 1);
    let (_, end) = reference.segments()[0];
    for row in &rows[..end] {
        assert!((row.x.p - reference.steps[row.k].x.p).norm() < 1e-3, "k={}", row.k);
    }

    let trace = dir.path().join("stochastic.csv");
    ok(&rarl(&["--paths", p, "simulate", "--adversary", "stochastic", "--out", trace.to_str().unwrap()], dir.path()));
    let bounds = PerturbationBounds::default();
    let rows = read_trace_csv(&trace).unwrap();
    for w in rows.windows(2) {
        assert!(bounds.contains(&w[1].perturbation));
        assert!(bounds.step_within_rate(&w[0].perturbation, &w[1].perturbation));
    }
}

fn run_dir(stdout: &str) -> PathBuf {
    PathBuf::from(stdout.lines().last().unwrap().trim())
}

#[test]
fn train_writes_checkpoints_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--seed", "5", "train", "--iters", "2", "--envs", "2", "--steps", "256"];
    let first = run_dir(&ok(&rarl(&args, dir.path())));
    for name in ["config.json", "manifest.json", "logs/metrics.csv"] {
        assert!(first.join(name).is_file(), "{name} missing");
    }
    let ckpt = first.join("checkpoints");
    for role in ["protagonist", "adversary"] {
        for it in 1..=2 {
            assert!(ckpt.join(format!("{role}_{it:04}.json")).is_file());
        }
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let second = run_dir(&ok(&rarl(&["--jobs", "1"].iter().chain(&args).copied().collect::<Vec<_>>(), dir.path())));
    assert_ne!(first, second);
    let metrics = |d: &Path| std::fs::read(d.join("logs/metrics.csv")).unwrap();
    assert_eq!(metrics(&first), metrics(&second));

    let resumed = run_dir(&ok(&rarl(
        &[&args[..], &["--resume", ckpt.join("state_0001.json").to_str().unwrap()]].concat(),
        dir.path(),
    )));
    assert_eq!(metrics(&resumed), metrics(&first));

    let plain = run_dir(&ok(&rarl(&["train", "--iters", "1", "--envs", "2", "--steps", "64", "--adversary", "none"], dir.path())));
    let text = String::from_utf8(metrics(&plain)).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().contains("protagonist"));

    let results = dir.path().join("results.csv");
    let policy = ckpt.join("protagonist_0002.json");
    let adversary = ckpt.join("adversary_0002.json");
    let eval = |jobs: &str| {
        ok(&rarl(
            &[
                "--jobs",
                jobs,
                "--seed",
                "3",
                "evaluate",
                "--checkpoint",
                policy.to_str().unwrap(),
                "--adversary",
                adversary.to_str().unwrap(),
                "--trials",
                "4",
                "--out",
                results.to_str().unwrap(),
            ],
            dir.path(),
        ));
        read_results_csv(&results).unwrap()
    };
    let a = eval("1");
    let b = eval("3");
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);
}
