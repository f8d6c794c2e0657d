use std::path::Path;
use std::process::{Command, Output};

use vda_core::harness::{apply_overrides, ExperimentConfig, MetricsReport, OUTPUT_DIR_ENV};

const TINY: &[&str] = &[
    "--pretrain-epochs",
    "10",
    "--adapt-epochs",
    "2",
    "--set",
    "dataset.samples_per_class=40",
    "--set",
    "network.discriminator_widths=[16]",
];

fn vda(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vda")).args(args).env(OUTPUT_DIR_ENV, out).output().unwrap()
}

fn with_tiny<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(TINY.iter().copied()).collect()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn help_succeeds_and_usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&vda(dir.path(), &["--help"])), 0);
    assert_eq!(code(&vda(dir.path(), &["run", "--no-such-flag"])), 1);
    assert_eq!(code(&vda(dir.path(), &["run", "--lambda", "-1"])), 1);
    assert_eq!(code(&vda(dir.path(), &["run", "--set", "nonexistent=3"])), 1);
    assert_eq!(code(&vda(dir.path(), &["run", "--config", "/nonexistent/config.toml"])), 2);
    assert_eq!(code(&vda(dir.path(), &["sweep"])), 1);
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[dataset]\nkind = \"tabular\"\nsource = \"/nonexistent/s.csv\"\ntarget = \"/nonexistent/t.csv\"\n")
        .unwrap();
    let o = vda(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn run_writes_the_report_into_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = vda(dir.path(), &with_tiny(&["run", "--seed", "3"]));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = MetricsReport::load(dir.path().join("report.json")).unwrap();
    assert_eq!(report.seed, 3);
    assert!(dir.path().join("diagnostics.jsonl").exists());
    assert!(!dir.path().join("features.svg").exists());

    let o = vda(dir.path(), &with_tiny(&["run", "--seed", "3", "--plot"]));
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("features.svg").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "lambda = 4.0\nr_percent = 50.0\n").unwrap();
    let o = vda(dir.path(), &with_tiny(&["run", "--config", cfg.to_str().unwrap(), "--lambda", "8"]));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = MetricsReport::load(dir.path().join("report.json")).unwrap();

    let base = ExperimentConfig { lambda: 8.0, r_percent: 50.0, ..ExperimentConfig::default() };
    let expected = apply_overrides(
        &base,
        &[
            ("pretrain_epochs".into(), 10.into()),
            ("adapt_epochs".into(), 2.into()),
            ("dataset.samples_per_class".into(), 40.into()),
            ("network.discriminator_widths".into(), serde_json::json!([16])),
        ],
    )
    .unwrap();
    assert_eq!(report.config_hash, expected.config_hash());
}

#[test]
fn staged_commands_chain_through_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["pretrain", "adapt", "eval", "plot"] {
        let o = vda(dir.path(), &with_tiny(&[stage, "--seed", "5"]));
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["source_model.json", "adapted_model.json", "diagnostics.jsonl", "features.svg"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
    let o = vda(dir.path(), &with_tiny(&["eval", "--seed", "5"]));
    let eval: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(eval["average_accuracy"].as_f64().unwrap() >= 0.0);
}

#[test]
fn sweep_writes_one_file_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = vda(dir.path(), &with_tiny(&["sweep", "--grid", "lambda=4,8", "--per-point-seeds"]));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 2);
    for i in 0..2 {
        assert!(dir.path().join("sweep").join(format!("point-{i:04}.json")).exists());
    }

    let o = vda(dir.path(), &with_tiny(&["sweep", "--grid", "dataset.samples_per_class=0"]));
    assert_eq!(code(&o), 2);
}
