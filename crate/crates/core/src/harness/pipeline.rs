use std::sync::{Arc, Weak};
use std::time::Instant;

use super::config::{DatasetSource, ExperimentConfig};
use super::report::MetricsReport;
use crate::adaptation::{adapt, AdaptEvent, ChannelObserver, StepRecord, TargetInputs};
use crate::datasets::{load_tabular, make_pair, DomainDataset, TabularSchema};
use crate::error::{Result, VdaError};
use crate::models::{evaluate, pretrain_source, ModelBundle};
use crate::virtual_domain::{build_virtual_domain, VirtualDomainGmm};

/// Everything a run produces, for callers that want more than the report.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub config: ExperimentConfig,
    pub report: MetricsReport,
    pub diagnostics: Vec<StepRecord>,
    pub source_model: ModelBundle,
    pub adapted_model: ModelBundle,
    pub gmm: VirtualDomainGmm,
    pub target: DomainDataset,
}

pub fn load_datasets(config: &ExperimentConfig) -> Result<(DomainDataset, DomainDataset)> {
    let (source, target) = match &config.dataset {
        DatasetSource::Synthetic(spec) => make_pair(spec)?,
        DatasetSource::Tabular { source, target } => {
            let schema = TabularSchema {
                num_features: config.network.input_dim,
                has_label: true,
                num_classes: Some(config.network.num_classes),
            };
            (load_tabular(source, &schema)?, load_tabular(target, &schema)?)
        }
    };
    Ok((source, target))
}

/// Drops the last strong reference to the source data and checks that
/// nothing else kept it alive.
fn release_source(source: Arc<DomainDataset>) -> Result<()> {
    let watch: Weak<DomainDataset> = Arc::downgrade(&source);
    drop(source);
    if watch.upgrade().is_some() {
        return Err(VdaError::InvalidValue("source data is still referenced after pretraining".into()));
    }
    Ok(())
}

/// Pretrain, measure the source-only baseline, build the virtual domain,
/// release the source data, adapt, evaluate. Stage failures carry the stage name.
pub fn run_pipeline_full(config: &ExperimentConfig) -> Result<PipelineRun> {
    let started = Instant::now();
    config.validate()?;
    let (source, target) = load_datasets(config).map_err(|e| e.in_stage("data"))?;
    let source = Arc::new(source);

    let source_model =
        pretrain_source(&source, &config.network, &config.pretrain_config()).map_err(|e| e.in_stage("pretrain"))?;
    release_source(source).map_err(|e| e.in_stage("release_source"))?;

    let baseline = evaluate(&source_model, &target).map_err(|e| e.in_stage("source_only"))?;
    let gmm = build_virtual_domain(&source_model, config.lambda, config.metric)
        .map_err(|e| e.in_stage("virtual_domain"))?;

    let (mut observer, events) = ChannelObserver::new(target.labels.clone());
    let inputs = TargetInputs::from_dataset(&target);
    let outcome = adapt(source_model.clone(), &gmm, &inputs, &config.adapt_config(), &mut observer)
        .map_err(|e| e.in_stage("adapt"))?;
    drop(observer);
    let diagnostics: Vec<StepRecord> = events
        .try_iter()
        .filter_map(|e| match e {
            AdaptEvent::Step(r) => Some(r),
            AdaptEvent::Epoch(_) => None,
        })
        .collect();

    let adapted = evaluate(&outcome.bundle, &target).map_err(|e| e.in_stage("evaluate"))?;
    let curve = |f: fn(&crate::adaptation::EpochSummary) -> f64| outcome.epochs.iter().map(f).collect::<Vec<_>>();
    let report = MetricsReport {
        per_class_accuracy: adapted.per_class_accuracy,
        average_accuracy: adapted.average_accuracy,
        absent_classes: adapted.absent_classes,
        source_only_per_class_accuracy: baseline.per_class_accuracy,
        source_only_accuracy: baseline.average_accuracy,
        d_loss_curve: curve(|e| e.d_loss),
        g_loss_curve: curve(|e| e.g_loss),
        mean_alpha_curve: curve(|e| e.mean_alpha),
        discriminator_accuracy_curve: curve(|e| e.discriminator_batch_accuracy),
        pseudo_label_count_curve: outcome.epochs.iter().map(|e| e.pseudo_label_count).collect(),
        pseudo_label_agreement_curve: outcome.epochs.iter().map(|e| e.pseudo_label_agreement).collect(),
        sigma_sq: gmm.sigma_sq(),
        source_released: true,
        config_hash: config.config_hash(),
        seed: config.seed,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(PipelineRun { config: config.clone(), report, diagnostics, source_model, adapted_model: outcome.bundle, gmm, target })
}

pub fn run_pipeline(config: &ExperimentConfig) -> Result<MetricsReport> {
    Ok(run_pipeline_full(config)?.report)
}
