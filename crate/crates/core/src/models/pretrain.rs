use serde::{Deserialize, Serialize};

use super::{classification_grads, ModelBundle, NetworkSpec};
use crate::datasets::{batch_iterator, DomainDataset};
use crate::error::{Result, VdaError};
use crate::optim::{lr_schedule, progress, Sgd, SgdConfig};
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub eta0: f64,
    pub sgd: SgdConfig,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig { epochs: 100, batch_size: 32, eta0: 1e-2, sgd: SgdConfig::default(), seed: 0 }
    }
}

/// Trains extractor and classifier on labeled source data with minibatch SGD
/// on cross-entropy. The discriminator is left at its fresh initialization.
pub fn pretrain_source(
    source: &DomainDataset,
    spec: &NetworkSpec,
    config: &PretrainConfig,
) -> Result<ModelBundle> {
    spec.validate()?;
    if config.batch_size == 0 {
        return Err(VdaError::Parameter("batch_size must be at least 1".into()));
    }
    if source.input_dim() != spec.input_dim {
        return Err(VdaError::Shape(format!(
            "source inputs have width {}, network expects {}",
            source.input_dim(),
            spec.input_dim
        )));
    }
    let counts = source.class_counts(spec.num_classes)?;
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(VdaError::DegenerateDataset(format!("class {k} has no source samples")));
    }
    let labels = source.labels()?;

    let mut bundle = ModelBundle::init(spec, config.seed)?;
    let mut extractor_opt = Sgd::new(config.sgd);
    let mut classifier_opt = Sgd::new(config.sgd);
    let batches_per_epoch = source.len().div_ceil(config.batch_size);
    let total = config.epochs * batches_per_epoch;
    let mut iteration = 0;
    for epoch in 0..config.epochs {
        let seed = derive_seed(config.seed, &format!("pretrain/epoch/{epoch}"));
        for batch in batch_iterator(source.len(), config.batch_size, seed) {
            let lr = lr_schedule(config.eta0, progress(iteration, total))?;
            let x = source.inputs.select_rows(&batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let grads = classification_grads(&bundle, &x, &y)?;
            if !grads.loss.is_finite() {
                return Err(VdaError::Divergence { iteration, loss: grads.loss });
            }
            extractor_opt.step(&mut bundle.extractor.param_slices_mut(), &grads.extractor.slices(), lr);
            classifier_opt.step(
                &mut [bundle.classifier.as_mut_slice()],
                &[grads.classifier.as_slice()],
                lr,
            );
            iteration += 1;
        }
    }
    Ok(bundle)
}
