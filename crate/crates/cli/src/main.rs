//! `vda`: pretrain, adapt, evaluate, sweep and plot from the command line.
//!
//! Configuration is layered: defaults, then `--config <file>`, then flags.
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use vda_core::adaptation::{adapt, discriminator_view, AdaptEvent, ChannelObserver, StepRecord, TargetInputs};
use vda_core::datasets::{load_tabular, make_pair, DomainDataset, TabularSchema};
use vda_core::harness::{
    apply_overrides, emit_report, feature_plot, run_pipeline_full, run_sweep, scatter_svg,
    DatasetSource, ExperimentConfig, GridAxis, PointOutcome, SweepOptions, DIAGNOSTICS_FILE, OUTPUT_DIR_ENV, PLOT_FILE,
};
use vda_core::models::{evaluate, forward_features, load_checkpoint, pretrain_source, save_checkpoint};
use vda_core::rng;
use vda_core::virtual_domain::{build_virtual_domain, DistanceMetric};
use vda_core::VdaError;

const SOURCE_MODEL_FILE: &str = "source_model.json";
const ADAPTED_MODEL_FILE: &str = "adapted_model.json";

#[derive(Debug, Parser)]
#[command(name = "vda", version, about = "Source-free domain adaptation through a Gaussian-mixture virtual domain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the source model and save it as a checkpoint.
    Pretrain(Common),
    /// Adapt a source checkpoint to the target data.
    Adapt {
        #[command(flatten)]
        common: Common,
        /// Source checkpoint (default: <out>/source_model.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the labelled target data.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to score (default: <out>/adapted_model.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Full pipeline: pretrain, adapt, evaluate, write the report.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write a 2-D scatter of target and virtual features.
        #[arg(long)]
        plot: bool,
    },
    /// Run the pipeline over a grid of overrides.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Grid axis as PATH=V1,V2,... (repeatable).
        #[arg(long = "grid", required = true, value_name = "PATH=VALUES")]
        grid: Vec<String>,
        /// Derive a distinct seed for every grid point.
        #[arg(long)]
        per_point_seeds: bool,
    },
    /// Scatter plot of a checkpoint's target features next to virtual samples.
    Plot {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to plot (default: <out>/adapted_model.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = "vda-output")]
    out: PathBuf,
    /// Seed for the model, the adaptation streams and the synthetic data.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    r_percent: Option<f64>,
    #[arg(long)]
    eta0: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    extractor_lr_factor: Option<f64>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    adapt_epochs: Option<usize>,
    #[arg(long)]
    tc_enabled: Option<bool>,
    #[arg(long, value_parser = ["squared_euclidean", "cosine_distance"])]
    metric: Option<String>,
    #[arg(long)]
    normalize_target_features: Option<bool>,
    #[arg(long)]
    alpha_override: Option<f64>,
    /// Any other field as PATH=VALUE, e.g. network.feature_dim=8 (repeatable).
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn config(&self) -> vda_core::Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let mut overrides: Vec<(String, Value)> = Vec::new();
        let mut put = |path: &str, v: Value| overrides.push((path.to_string(), v));
        if let Some(s) = self.seed {
            put("seed", json!(s));
            if matches!(base.dataset, DatasetSource::Synthetic(_)) {
                put("dataset.seed", json!(s));
            }
        }
        let numbers = [
            ("lambda", self.lambda),
            ("r_percent", self.r_percent),
            ("eta0", self.eta0),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("extractor_lr_factor", self.extractor_lr_factor),
            ("alpha_override", self.alpha_override),
        ];
        for (path, v) in numbers {
            if let Some(v) = v {
                put(path, json!(v));
            }
        }
        for (path, v) in
            [("batch_size", self.batch_size), ("pretrain_epochs", self.pretrain_epochs), ("adapt_epochs", self.adapt_epochs)]
        {
            if let Some(v) = v {
                put(path, json!(v));
            }
        }
        for (path, v) in [("tc_enabled", self.tc_enabled), ("normalize_target_features", self.normalize_target_features)] {
            if let Some(v) = v {
                put(path, json!(v));
            }
        }
        if let Some(m) = &self.metric {
            put("metric", json!(DistanceMetric::from_name(m)?.name()));
        }
        for text in &self.set {
            let axis = GridAxis::parse(text)?;
            let [value] = axis.values.as_slice() else {
                return Err(VdaError::Config(format!("--set takes one value, got '{text}'")));
            };
            put(&axis.path, value.clone());
        }
        apply_overrides(&base, &overrides)
    }

    fn out_dir(&self) -> vda_core::Result<&Path> {
        std::fs::create_dir_all(&self.out).map_err(|e| VdaError::io(&self.out, e))?;
        Ok(&self.out)
    }
}

/// Loads only the target side. Synthetic pairs are generated together, so
/// the source half is dropped straight away.
fn load_target(config: &ExperimentConfig) -> vda_core::Result<DomainDataset> {
    match &config.dataset {
        DatasetSource::Synthetic(spec) => Ok(make_pair(spec)?.1),
        DatasetSource::Tabular { target, .. } => {
            let schema = TabularSchema {
                num_features: config.network.input_dim,
                has_label: true,
                num_classes: Some(config.network.num_classes),
            };
            load_tabular(target, &schema)
        }
    }
}

fn load_source(config: &ExperimentConfig) -> vda_core::Result<DomainDataset> {
    match &config.dataset {
        DatasetSource::Synthetic(spec) => Ok(make_pair(spec)?.0),
        DatasetSource::Tabular { source, .. } => {
            let schema = TabularSchema {
                num_features: config.network.input_dim,
                has_label: true,
                num_classes: Some(config.network.num_classes),
            };
            load_tabular(source, &schema)
        }
    }
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values always serialize"));
}

fn cmd_pretrain(common: &Common) -> vda_core::Result<()> {
    let config = common.config()?;
    let source = load_source(&config)?;
    let bundle = pretrain_source(&source, &config.network, &config.pretrain_config())?;
    drop(source);
    let path = common.out_dir()?.join(SOURCE_MODEL_FILE);
    save_checkpoint(&path, &bundle, &config.config_hash(), config.seed)?;
    let target = load_target(&config)?;
    let baseline = evaluate(&bundle, &target)?;
    print_json(&json!({ "checkpoint": path, "source_only_accuracy": baseline.average_accuracy }));
    Ok(())
}

fn cmd_adapt(common: &Common, checkpoint: Option<&Path>) -> vda_core::Result<()> {
    let config = common.config()?;
    let out = common.out_dir()?;
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| out.join(SOURCE_MODEL_FILE));
    let (bundle, _) = load_checkpoint(&ckpt)?;
    let gmm = build_virtual_domain(&bundle, config.lambda, config.metric)?;
    let target = load_target(&config)?;
    let (mut observer, events) = ChannelObserver::new(target.labels.clone());
    let outcome = adapt(bundle, &gmm, &TargetInputs::from_dataset(&target), &config.adapt_config(), &mut observer)?;
    drop(observer);
    let steps: Vec<StepRecord> = events
        .try_iter()
        .filter_map(|e| match e {
            AdaptEvent::Step(r) => Some(r),
            AdaptEvent::Epoch(_) => None,
        })
        .collect();

    let path = out.join(ADAPTED_MODEL_FILE);
    save_checkpoint(&path, &outcome.bundle, &config.config_hash(), config.seed)?;
    let diag = out.join(DIAGNOSTICS_FILE);
    let lines: Vec<String> = steps.iter().map(|s| serde_json::to_string(s).expect("records serialize")).collect();
    std::fs::write(&diag, lines.join("\n") + "\n").map_err(|e| VdaError::io(&diag, e))?;
    let accuracy = target.labels.as_ref().map(|_| evaluate(&outcome.bundle, &target)).transpose()?;
    print_json(&json!({
        "checkpoint": path,
        "diagnostics": diag,
        "steps": steps.len(),
        "adapted_accuracy": accuracy.map(|e| e.average_accuracy),
    }));
    Ok(())
}

fn cmd_eval(common: &Common, checkpoint: Option<&Path>) -> vda_core::Result<()> {
    let config = common.config()?;
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| common.out.join(ADAPTED_MODEL_FILE));
    let (bundle, _) = load_checkpoint(&ckpt)?;
    let target = load_target(&config)?;
    let eval = evaluate(&bundle, &target)?;
    print_json(&serde_json::to_value(&eval).map_err(|e| VdaError::Serialization(e.to_string()))?);
    Ok(())
}

fn cmd_run(common: &Common, plot: bool) -> vda_core::Result<()> {
    let config = common.config()?;
    let run = run_pipeline_full(&config)?;
    let svg = if plot { Some(feature_plot(&run)?) } else { None };
    let files = emit_report(&run.report, &run.diagnostics, svg.as_deref(), common.out_dir()?)?;
    print_json(&json!({
        "report": files.report,
        "source_only_accuracy": run.report.source_only_accuracy,
        "adapted_accuracy": run.report.average_accuracy,
        "gain": run.report.gain(),
    }));
    Ok(())
}

/// Returns false when any grid point failed.
fn cmd_sweep(common: &Common, grid: &[String], per_point_seeds: bool) -> vda_core::Result<bool> {
    let config = common.config()?;
    let axes = grid.iter().map(|g| GridAxis::parse(g)).collect::<vda_core::Result<Vec<_>>>()?;
    let options = SweepOptions { per_point_seeds, out_dir: Some(common.out_dir()?.join("sweep")) };
    let points = run_sweep(&config, &axes, &options)?;
    let mut all_ok = true;
    for p in &points {
        let line = match &p.outcome {
            PointOutcome::Ok { report } => json!({
                "index": p.index, "overrides": p.overrides, "seed": p.seed,
                "source_only_accuracy": report.source_only_accuracy, "adapted_accuracy": report.average_accuracy,
            }),
            PointOutcome::Failed { error } => {
                all_ok = false;
                json!({ "index": p.index, "overrides": p.overrides, "seed": p.seed, "error": error })
            }
        };
        println!("{line}");
    }
    Ok(all_ok)
}

fn cmd_plot(common: &Common, checkpoint: Option<&Path>) -> vda_core::Result<()> {
    let config = common.config()?;
    let out = common.out_dir()?;
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| out.join(ADAPTED_MODEL_FILE));
    let (bundle, _) = load_checkpoint(&ckpt)?;
    let gmm = build_virtual_domain(&bundle, config.lambda, config.metric)?;
    let target = load_target(&config)?;
    let feats = discriminator_view(&forward_features(&bundle, &target.inputs)?, config.normalize_target_features);
    let (virt, virt_labels) = gmm.sample_batch(feats.rows(), &mut rng::stream(config.seed, "plot/virtual"));
    let labels = target.labels.clone().unwrap_or_else(|| vec![0; feats.rows()]);
    let svg = scatter_svg(&feats, &labels, &virt, &virt_labels)?;
    let path = out.join(PLOT_FILE);
    std::fs::write(&path, svg).map_err(|e| VdaError::io(&path, e))?;
    print_json(&json!({ "plot": path }));
    Ok(())
}

fn exit_for(err: &VdaError) -> ExitCode {
    eprintln!("error: {err}");
    if err.is_usage_error() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Pretrain(common) => cmd_pretrain(common),
        Command::Adapt { common, checkpoint } => cmd_adapt(common, checkpoint.as_deref()),
        Command::Eval { common, checkpoint } => cmd_eval(common, checkpoint.as_deref()),
        Command::Run { common, plot } => cmd_run(common, *plot),
        Command::Sweep { common, grid, per_point_seeds } => match cmd_sweep(common, grid, *per_point_seeds) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: one or more sweep points failed");
                return ExitCode::from(2);
            }
            Err(e) => Err(e),
        },
        Command::Plot { common, checkpoint } => cmd_plot(common, checkpoint.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_for(&e),
    }
}
