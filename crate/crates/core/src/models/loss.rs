use super::{classify, ModelBundle, MlpGrads};
use crate::error::{Result, VdaError};
use crate::linalg::{log_sum_exp, Matrix};

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if logits.rows() != labels.len() {
        return Err(VdaError::Shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if logits.rows() == 0 {
        return Err(VdaError::Shape("empty batch".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(VdaError::Schema(format!("label {l} outside [0, {})", logits.cols())));
    }
    Ok(())
}

/// Mean negative log-likelihood of `labels` under softmax(`logits`).
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let total: f64 = logits
        .iter_rows()
        .zip(labels)
        .map(|(row, &y)| log_sum_exp(row) - row[y])
        .sum();
    Ok(total / labels.len() as f64)
}

/// Cross-entropy and its gradient with respect to the logits, `(p − onehot)/n`.
pub fn cross_entropy_with_grad(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    check_labels(logits, labels)?;
    let n = labels.len() as f64;
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = grad.row_mut(i);
        let lse = log_sum_exp(row);
        total += lse - row[y];
        for v in row.iter_mut() {
            *v = (*v - lse).exp() / n;
        }
        row[y] -= 1.0 / n;
    }
    Ok((total / n, grad))
}

pub struct ClassificationGrads {
    pub loss: f64,
    pub extractor: MlpGrads,
    pub classifier: Matrix,
}

/// Cross-entropy of `classify(F(x))` and its gradients for the extractor and classifier.
pub fn classification_grads(
    bundle: &ModelBundle,
    inputs: &Matrix,
    labels: &[usize],
) -> Result<ClassificationGrads> {
    let (features, cache) = bundle.extractor.forward_cached(inputs)?;
    let logits = classify(bundle, &features)?;
    let (loss, dlogits) = cross_entropy_with_grad(&logits, labels)?;
    let classifier = dlogits.transpose_matmul(&features)?;
    let dfeatures = dlogits.matmul(&bundle.classifier)?;
    let (extractor, _) = bundle.extractor.backward(&cache, &dfeatures)?;
    Ok(ClassificationGrads { loss, extractor, classifier })
}
