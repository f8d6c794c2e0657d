//! Source-free adaptation: adversarial alignment of target features to the
//! virtual domain, interleaved with pseudo-label refinement.
//!
//! [`adapt`] is the only entry point. It sees a pretrained [`ModelBundle`],
//! the [`VirtualDomainGmm`] built from it and unlabeled [`TargetInputs`];
//! there is no parameter through which source data could reach it.
//!
//! ```compile_fail
//! use vda_core::adaptation::TargetInputs;
//! use vda_core::datasets::DomainDataset;
//! fn smuggle(source: DomainDataset) -> TargetInputs {
//!     source // a labeled dataset is not accepted where target inputs are expected
//! }
//! ```

mod objectives;
mod pseudo;
mod step;

pub use objectives::{
    discriminator_objective, discriminator_objective_grads, discriminator_outputs,
    discriminator_value_from_outputs, entropy, generator_objective, generator_objective_grads,
    generator_value_from_outputs, normalize_rows, normalize_rows_backward, uncertainty_weights,
    DiscriminatorEval, GeneratorLoss, LOG_FLOOR,
};
pub use pseudo::{rank_by_certainty, rank_by_entropy, select_confident, select_from_probs, selection_size,
    PseudoLabelSet};
pub use step::{
    alignment_step, discriminator_view, generator_extractor_grads, generator_objective_for_inputs, refinement_step,
    target_weights,
    AdaptOptimizers, AlignSettings, AlignmentStepResult, SampleWeighting,
};

use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::datasets::{batch_iterator, DomainDataset};
use crate::error::{Result, VdaError};
use crate::linalg::Matrix;
use crate::models::ModelBundle;
use crate::optim::{lr_schedule, progress, SgdConfig};
use crate::rng::{self, derive_seed};
use crate::virtual_domain::VirtualDomainGmm;

/// Unlabeled target inputs. Holds no labels by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetInputs(Matrix);

impl TargetInputs {
    pub fn new(inputs: Matrix) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(VdaError::Shape("target set is empty".into()));
        }
        if !inputs.is_finite() {
            return Err(VdaError::InvalidValue("target inputs contain NaN or Inf".into()));
        }
        Ok(TargetInputs(inputs))
    }

    /// Copies the inputs of `dataset`, dropping its labels.
    pub fn from_dataset(dataset: &DomainDataset) -> Self {
        TargetInputs(dataset.inputs.clone())
    }

    pub fn inputs(&self) -> &Matrix {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub eta0: f64,
    pub sgd: SgdConfig,
    pub extractor_lr_factor: f64,
    pub r_percent: f64,
    pub tc_enabled: bool,
    /// Replaces the per-sample weights with a constant.
    pub alpha_override: Option<f64>,
    pub normalize_target_features: bool,
    /// Project virtual samples onto the unit sphere before the discriminator.
    pub normalize_virtual_features: bool,
    /// Rescale each batch's weights to mean 1.
    pub renormalize_weights: bool,
    pub generator_loss: GeneratorLoss,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            epochs: 15,
            batch_size: 32,
            eta0: 1e-2,
            sgd: SgdConfig::default(),
            extractor_lr_factor: 0.1,
            r_percent: 70.0,
            tc_enabled: true,
            alpha_override: None,
            normalize_target_features: true,
            normalize_virtual_features: false,
            renormalize_weights: false,
            generator_loss: GeneratorLoss::NonSaturating,
            seed: 0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("eta0", self.eta0), ("extractor_lr_factor", self.extractor_lr_factor)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(VdaError::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(VdaError::Parameter("batch_size must be at least 1".into()));
        }
        if !(self.r_percent > 0.0 && self.r_percent <= 100.0) {
            return Err(VdaError::Parameter(format!("r_percent must lie in (0, 100], got {}", self.r_percent)));
        }
        if let Some(a) = self.alpha_override {
            if !(0.0..=1.0).contains(&a) {
                return Err(VdaError::Parameter(format!("alpha_override must lie in [0, 1], got {a}")));
            }
        }
        Ok(())
    }

    pub fn weighting(&self) -> SampleWeighting {
        match (self.alpha_override, self.tc_enabled) {
            (Some(a), _) => SampleWeighting::Constant(a),
            (None, true) => SampleWeighting::Entropy,
            (None, false) => SampleWeighting::Constant(1.0),
        }
    }
}

/// One line of the diagnostics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub mean_alpha: f64,
    pub discriminator_batch_accuracy: f64,
    pub pseudo_label_count: usize,
    pub pseudo_label_agreement: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub mean_alpha: f64,
    pub discriminator_batch_accuracy: f64,
    pub pseudo_label_count: usize,
    pub pseudo_label_agreement: Option<f64>,
    pub refinement_loss: Option<f64>,
}

/// Receives diagnostics while [`adapt`] runs.
pub trait AdaptObserver {
    fn on_step(&mut self, _record: &StepRecord) {}

    /// Called with each new pseudo-label set. An observer that holds
    /// evaluation labels may return the agreement rate.
    fn on_pseudo_labels(&mut self, _set: &PseudoLabelSet) -> Option<f64> {
        None
    }

    fn on_epoch(&mut self, _summary: &EpochSummary) {}
}

/// Ignores everything.
pub struct NoopObserver;

impl AdaptObserver for NoopObserver {}

#[derive(Clone, Debug, PartialEq)]
pub enum AdaptEvent {
    Step(StepRecord),
    Epoch(EpochSummary),
}

/// Forwards every event into an mpsc channel, optionally scoring pseudo-labels
/// against evaluation-only ground truth.
pub struct ChannelObserver {
    sender: mpsc::Sender<AdaptEvent>,
    truth: Option<Vec<usize>>,
}

impl ChannelObserver {
    pub fn new(truth: Option<Vec<usize>>) -> (Self, mpsc::Receiver<AdaptEvent>) {
        let (sender, receiver) = mpsc::channel();
        (ChannelObserver { sender, truth }, receiver)
    }
}

impl AdaptObserver for ChannelObserver {
    fn on_step(&mut self, record: &StepRecord) {
        // a dropped receiver only means nobody is listening
        let _ = self.sender.send(AdaptEvent::Step(record.clone()));
    }

    fn on_pseudo_labels(&mut self, set: &PseudoLabelSet) -> Option<f64> {
        self.truth.as_deref().map(|t| set.agreement(t))
    }

    fn on_epoch(&mut self, summary: &EpochSummary) {
        let _ = self.sender.send(AdaptEvent::Epoch(summary.clone()));
    }
}

#[derive(Clone, Debug)]
pub struct AdaptOutcome {
    pub bundle: ModelBundle,
    pub epochs: Vec<EpochSummary>,
    pub total_iterations: usize,
}

fn total_iterations(n: usize, config: &AdaptConfig) -> usize {
    let align = n.div_ceil(config.batch_size);
    let refine = if config.tc_enabled {
        selection_size(n, config.r_percent).div_ceil(config.batch_size)
    } else {
        0
    };
    config.epochs * align + config.epochs.saturating_sub(1) * refine
}

/// Adapts `bundle` to the target inputs.
///
/// Each epoch makes one alignment pass over the target set. From the second
/// epoch on, with target compactness enabled, it then reselects the confident
/// pseudo-labels and makes one refinement pass over them. The classifier is
/// never updated.
pub fn adapt(
    bundle: ModelBundle,
    gmm: &VirtualDomainGmm,
    target: &TargetInputs,
    config: &AdaptConfig,
    observer: &mut dyn AdaptObserver,
) -> Result<AdaptOutcome> {
    config.validate()?;
    bundle.validate()?;
    if gmm.dim() != bundle.spec.feature_dim || gmm.num_classes() != bundle.spec.num_classes {
        return Err(VdaError::Shape(format!(
            "virtual domain is {} classes in {} dimensions, model has {} classes in {}",
            gmm.num_classes(),
            gmm.dim(),
            bundle.spec.num_classes,
            bundle.spec.feature_dim
        )));
    }
    if target.inputs().cols() != bundle.spec.input_dim {
        return Err(VdaError::Shape(format!(
            "target inputs have width {}, network expects {}",
            target.inputs().cols(),
            bundle.spec.input_dim
        )));
    }

    let mut bundle = bundle;
    let x = target.inputs();
    let n = x.rows();
    let total = total_iterations(n, config);
    let weighting = config.weighting();
    let mut optimizers = AdaptOptimizers::new(config.sgd);
    let mut refine_opt = crate::optim::Sgd::new(config.sgd);
    let mut virtual_rng = rng::stream(config.seed, "adapt/virtual");
    let mut iteration = 0usize;
    let mut step = 0usize;
    let mut epochs = Vec::with_capacity(config.epochs);
    // pseudo-label stats of the most recent selection, repeated on step records
    let mut latest: (usize, Option<f64>) = (0, None);

    for epoch in 0..config.epochs {
        let mut sums = [0.0f64; 4];
        let mut batches = 0usize;
        for batch in batch_iterator(n, config.batch_size, derive_seed(config.seed, &format!("adapt/align/{epoch}"))) {
            let eta = lr_schedule(config.eta0, progress(iteration, total))?;
            let settings = AlignSettings {
                discriminator_lr: eta,
                extractor_lr: eta * config.extractor_lr_factor,
                weighting,
                normalize_target_features: config.normalize_target_features,
                normalize_virtual_features: config.normalize_virtual_features,
                renormalize_weights: config.renormalize_weights,
                generator_loss: config.generator_loss,
            };
            let r = alignment_step(
                &mut bundle,
                gmm,
                &x.select_rows(&batch),
                &mut optimizers,
                &settings,
                step,
                &mut virtual_rng,
            )?;
            observer.on_step(&StepRecord {
                step,
                epoch,
                d_loss: r.d_loss,
                g_loss: r.g_loss,
                mean_alpha: r.mean_alpha,
                discriminator_batch_accuracy: r.discriminator_batch_accuracy,
                pseudo_label_count: latest.0,
                pseudo_label_agreement: latest.1,
            });
            sums[0] += r.d_loss;
            sums[1] += r.g_loss;
            sums[2] += r.mean_alpha;
            sums[3] += r.discriminator_batch_accuracy;
            batches += 1;
            iteration += 1;
            step += 1;
        }

        let (mut count, mut agreement, mut refinement_loss) = (0, None, None);
        if config.tc_enabled && epoch > 0 {
            let set = select_confident(&bundle, x, config.r_percent)?;
            count = set.len();
            agreement = observer.on_pseudo_labels(&set);
            latest = (count, agreement);
            let seed = derive_seed(config.seed, &format!("adapt/refine/{epoch}"));
            let (mut loss_sum, mut loss_batches) = (0.0, 0usize);
            for batch in batch_iterator(set.len(), config.batch_size, seed) {
                let eta = lr_schedule(config.eta0, progress(iteration, total))?;
                let rows: Vec<usize> = batch.iter().map(|&j| set.sample_indices[j]).collect();
                let labels: Vec<usize> = batch.iter().map(|&j| set.labels[j]).collect();
                let lr = eta * config.extractor_lr_factor;
                if let Some(loss) = refinement_step(&mut bundle, &x.select_rows(&rows), &labels, &mut refine_opt, lr)
                    .map_err(|e| match e {
                        VdaError::Numerical(_) => {
                            VdaError::AdaptationDivergence { step, d_loss: f64::NAN, g_loss: f64::NAN }
                        }
                        other => other,
                    })?
                {
                    loss_sum += loss;
                    loss_batches += 1;
                }
                iteration += 1;
            }
            if loss_batches > 0 {
                refinement_loss = Some(loss_sum / loss_batches as f64);
            }
        }

        let b = batches as f64;
        let summary = EpochSummary {
            epoch,
            d_loss: sums[0] / b,
            g_loss: sums[1] / b,
            mean_alpha: sums[2] / b,
            discriminator_batch_accuracy: sums[3] / b,
            pseudo_label_count: count,
            pseudo_label_agreement: agreement,
            refinement_loss,
        };
        observer.on_epoch(&summary);
        epochs.push(summary);
    }

    Ok(AdaptOutcome { bundle, epochs, total_iterations: total })
}
