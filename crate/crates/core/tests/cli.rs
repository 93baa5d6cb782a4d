//! End-to-end tests of the `flowcast` binary: artifact production,
//! determinism across reruns, flag overrides, and error reporting.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use flowcast::config::{
    EvalSettings, FlowParamsConfig, McmcSettings, ModelKind, NuMode, PredictSettings, RunConfig,
    SimulateSettings,
};
use flowcast::eval::ScenarioSpec;
use flowcast::flow::LikelihoodRange;
use flowcast::io::read_manifest_line;
use flowcast::waiting::BetaPrior;
use tempfile::TempDir;

fn d(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

fn test_config(out: &Path) -> RunConfig {
    RunConfig {
        seed: 7,
        order: 2,
        intervals: 4,
        likelihood_range: LikelihoodRange::AsPrinted,
        beta_prior: BetaPrior::FlatPositive,
        nu_mode: NuMode::Fixed { value: 7.0 },
        mcmc: McmcSettings {
            chains: 2,
            warmup_iters: 200,
            keep_iters: 200,
            ..McmcSettings::default()
        },
        scenario: Some(ScenarioSpec {
            label: "smoke".into(),
            train_start: d("2018-05-15"),
            train_end: d("2018-09-02"),
            test_start: d("2018-09-03"),
            test_end: d("2018-09-09"),
        }),
        models: vec![ModelKind::Bhml, ModelKind::Base, ModelKind::Prop],
        out_dir: out.to_path_buf(),
        simulate: Some(SimulateSettings {
            days: 120,
            start_date: d("2018-05-15"),
            school_holidays: vec![(d("2018-07-02"), d("2018-07-15"))],
            public_holidays: vec![d("2018-08-15")],
            flow: FlowParamsConfig {
                alpha_ord: 0.5,
                alpha_sch: 0.49,
                alpha_pwe: 0.51,
                eta_sch: 1.0,
                eta_pwe: 1.0,
                sigma2_eps: 4.0,
            },
            init_mean: 40.0,
            nu: 7.0,
            beta: vec![0.5, 0.2, 0.1, 0.3],
            replicates: 3,
        }),
        prophet: Default::default(),
        predict: PredictSettings { horizon: 7, draws: 150 },
        evaluate: EvalSettings { burn_in_weeks: 0, ..EvalSettings::default() },
    }
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowcast")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

fn error_kind(out: &Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let doc: serde_json::Value = serde_json::from_str(stderr.trim())
        .unwrap_or_else(|e| panic!("stderr is not an error JSON ({e}): {stderr}"));
    doc["error"]["kind"].as_str().expect("kind field").to_string()
}

const ARTIFACTS: &[&str] = &[
    "calendar.csv",
    "flows.csv",
    "waits.csv",
    "manifest.json",
    "scenario.json",
    "train_flows.csv",
    "test_flows.csv",
    "train_waits.csv",
    "test_waits.csv",
    "flow_draws.csv",
    "flow_diagnostics.json",
    "wait_draws.csv",
    "wait_diagnostics.json",
    "predictive_flows.csv",
    "predictive_waits.csv",
    "metrics.json",
];

fn run_all_stages(config: &Path) {
    for cmd in
        ["simulate", "scenario", "fit-flow", "fit-wait", "predict-flow", "predict-wait", "evaluate"]
    {
        run_ok(&[cmd, "--config", config.to_str().unwrap()]);
    }
}

fn snapshot(out: &Path) -> Vec<Vec<u8>> {
    ARTIFACTS.iter().map(|name| std::fs::read(out.join(name)).unwrap()).collect()
}

#[test]
fn pipeline_produces_all_artifacts_and_reruns_byte_identically() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = test_config(&out);
    let config = write_config(dir.path(), &cfg);

    run_all_stages(&config);
    for name in ARTIFACTS {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    // Every CSV artifact opens with the provenance comment.
    for name in ARTIFACTS.iter().filter(|n| n.ends_with(".csv")) {
        let m = read_manifest_line(&out.join(name)).unwrap().unwrap_or_else(|| {
            panic!("{name} lacks a manifest line");
        });
        assert_eq!(m.seed, 7);
        assert_eq!(m.config_hash, cfg.config_hash());
    }

    let before = snapshot(&out);
    run_all_stages(&config);
    let after = snapshot(&out);
    for ((name, b), a) in ARTIFACTS.iter().zip(&before).zip(&after) {
        assert_eq!(b, a, "{name} changed across reruns");
    }
}

#[test]
fn seed_override_changes_the_data() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = test_config(&out);
    let config = write_config(dir.path(), &cfg);

    run_ok(&["simulate", "--config", config.to_str().unwrap()]);
    let flows_seed7 = std::fs::read_to_string(out.join("flows.csv")).unwrap();

    run_ok(&["simulate", "--config", config.to_str().unwrap(), "--seed", "8"]);
    let flows_seed8 = std::fs::read_to_string(out.join("flows.csv")).unwrap();

    assert_ne!(flows_seed7, flows_seed8);
    let m = read_manifest_line(&out.join("flows.csv")).unwrap().unwrap();
    assert_eq!(m.seed, 8);
}

#[test]
fn out_override_redirects_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = test_config(&dir.path().join("ignored"));
    let config = write_config(dir.path(), &cfg);
    let other = dir.path().join("elsewhere");

    run_ok(&["simulate", "--config", config.to_str().unwrap(), "--out", other.to_str().unwrap()]);
    assert!(other.join("flows.csv").is_file());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn convergence_warnings_do_not_fail_the_run() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let mut cfg = test_config(&out);
    // Short chains so split-R̂ exceeds the threshold.
    cfg.mcmc.warmup_iters = 100;
    cfg.mcmc.keep_iters = 100;
    let config = write_config(dir.path(), &cfg);

    run_ok(&["simulate", "--config", config.to_str().unwrap()]);
    let fit = run_ok(&["fit-flow", "--config", config.to_str().unwrap()]);
    let stderr = String::from_utf8_lossy(&fit.stderr);
    assert!(stderr.contains("warning:"), "expected a convergence warning, got: {stderr}");
}

#[test]
fn zero_day_simulation_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut cfg = test_config(&dir.path().join("out"));
    cfg.simulate.as_mut().unwrap().days = 0;
    let path = dir.path().join("config.json");
    // Serialize through serde_json directly: `to_json` goes through the
    // same validation-free path, but keep the invalid value on disk.
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let out = run(&["simulate", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(error_kind(&out), "config");
}

#[test]
fn fit_on_too_few_days_reports_precondition() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let mut cfg = test_config(&out);
    cfg.scenario = None;
    cfg.order = 3;
    cfg.simulate.as_mut().unwrap().days = 3;
    let config = write_config(dir.path(), &cfg);

    run_ok(&["simulate", "--config", config.to_str().unwrap()]);
    let fit = run(&["fit-flow", "--config", config.to_str().unwrap()]);
    assert!(!fit.status.success());
    assert_eq!(error_kind(&fit), "too_few_days");
}

#[test]
fn missing_artifacts_and_config_are_machine_readable_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = test_config(&dir.path().join("out"));
    let config = write_config(dir.path(), &cfg);

    let eval = run(&["evaluate", "--config", config.to_str().unwrap()]);
    assert!(!eval.status.success());
    assert_eq!(error_kind(&eval), "missing_artifact");

    let missing = run(&["simulate", "--config", dir.path().join("nope.json").to_str().unwrap()]);
    assert!(!missing.status.success());
    assert_eq!(error_kind(&missing), "config");
}
