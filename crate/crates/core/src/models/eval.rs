use serde::{Deserialize, Serialize};

use super::{argmax, classify, forward_features, ModelBundle};
use crate::datasets::DomainDataset;
use crate::error::Result;
use crate::linalg::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// `None` for classes with no samples in the evaluation set.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Unweighted mean over the classes that are present.
    pub average_accuracy: f64,
    pub absent_classes: Vec<usize>,
}

pub fn predict(bundle: &ModelBundle, inputs: &Matrix) -> Result<Vec<usize>> {
    let logits = classify(bundle, &forward_features(bundle, inputs)?)?;
    Ok(logits.iter_rows().map(argmax).collect())
}

pub fn evaluate(bundle: &ModelBundle, data: &DomainDataset) -> Result<Evaluation> {
    let labels = data.labels()?;
    data.validate_labels(bundle.spec.num_classes)?;
    let predictions = predict(bundle, &data.inputs)?;
    Ok(evaluate_predictions(&predictions, labels, bundle.spec.num_classes))
}

pub fn evaluate_predictions(predictions: &[usize], labels: &[usize], num_classes: usize) -> Evaluation {
    let mut correct = vec![0usize; num_classes];
    let mut count = vec![0usize; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        count[y] += 1;
        if p == y {
            correct[y] += 1;
        }
    }
    let per_class_accuracy: Vec<Option<f64>> = correct
        .iter()
        .zip(&count)
        .map(|(&c, &n)| (n > 0).then(|| c as f64 / n as f64))
        .collect();
    let present: Vec<f64> = per_class_accuracy.iter().flatten().copied().collect();
    let average_accuracy =
        if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
    let absent_classes = (0..num_classes).filter(|&k| count[k] == 0).collect();
    Evaluation { per_class_accuracy, average_accuracy, absent_classes }
}
