//! Gaussian-mixture stand-in for the source feature distribution.
//!
//! One isotropic component per class, centred on the L2-normalized classifier
//! row, with a shared variance `σ² = min_{m≠n} Dist(μ_m, μ_n) / λ` and uniform
//! mixing weights. Nothing here is fitted to data.

use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VdaError};
use crate::linalg::{dot, l2_norm, log_sum_exp, squared_distance, Matrix};
use crate::models::ModelBundle;
use crate::rng::Rng;

/// Pairs closer than this are treated as duplicates.
pub const MIN_PROTOTYPE_DISTANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    SquaredEuclidean,
    /// `1 − cos(a, b)`.
    CosineDistance,
}

impl DistanceMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::SquaredEuclidean => squared_distance(a, b),
            DistanceMetric::CosineDistance => 1.0 - dot(a, b) / (l2_norm(a) * l2_norm(b)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::SquaredEuclidean => "squared_euclidean",
            DistanceMetric::CosineDistance => "cosine_distance",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "squared_euclidean" => Ok(DistanceMetric::SquaredEuclidean),
            "cosine_distance" => Ok(DistanceMetric::CosineDistance),
            other => Err(VdaError::Parameter(format!("unknown distance metric '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualDomainGmm {
    prototypes: Matrix,
    sigma_sq: f64,
    mixing: Vec<f64>,
    lambda: f64,
    metric: DistanceMetric,
}

/// Row-normalizes the classifier weights.
pub fn extract_prototypes(weights: &Matrix) -> Result<Matrix> {
    if weights.rows() < 2 {
        return Err(VdaError::Parameter(format!(
            "need at least 2 classes, got {}",
            weights.rows()
        )));
    }
    let mut out = weights.clone();
    for k in 0..out.rows() {
        let row = out.row_mut(k);
        let norm = l2_norm(row);
        if norm == 0.0 || !norm.is_finite() {
            return Err(VdaError::DegenerateClassifier { class: k });
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(out)
}

/// `σ² = (1/λ) · min_{m≠n} Dist(μ_m, μ_n)`.
pub fn estimate_sigma(prototypes: &Matrix, lambda: f64, metric: DistanceMetric) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(VdaError::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    let k = prototypes.rows();
    if k < 2 {
        return Err(VdaError::Parameter(format!("need at least 2 prototypes, got {k}")));
    }
    let mut best = (f64::INFINITY, 0, 1);
    for m in 0..k {
        for n in m + 1..k {
            let d = metric.distance(prototypes.row(m), prototypes.row(n));
            if d < best.0 {
                best = (d, m, n);
            }
        }
    }
    let (min_distance, first, second) = best;
    if !(min_distance > MIN_PROTOTYPE_DISTANCE) {
        return Err(VdaError::DegeneratePrototypes { first, second, min_distance });
    }
    Ok(min_distance / lambda)
}

/// Builds the virtual domain from a frozen classifier. The bundle is only read.
pub fn build_virtual_domain(
    bundle: &ModelBundle,
    lambda: f64,
    metric: DistanceMetric,
) -> Result<VirtualDomainGmm> {
    let prototypes = extract_prototypes(&bundle.classifier)?;
    let sigma_sq = estimate_sigma(&prototypes, lambda, metric)?;
    let k = prototypes.rows();
    Ok(VirtualDomainGmm { prototypes, sigma_sq, mixing: vec![1.0 / k as f64; k], lambda, metric })
}

impl VirtualDomainGmm {
    pub fn prototypes(&self) -> &Matrix {
        &self.prototypes
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    pub fn mixing(&self) -> &[f64] {
        &self.mixing
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.cols()
    }

    /// Test hook: replaces σ² without the positivity check (e.g. σ² = 0 for
    /// the zero-noise limit).
    #[doc(hidden)]
    pub fn with_sigma_sq_unchecked(mut self, sigma_sq: f64) -> Self {
        self.sigma_sq = sigma_sq;
        self
    }

    /// Draws `n` labeled features. Labels cycle through the classes from a
    /// random starting class, so per-class counts differ by at most one.
    pub fn sample_batch(&self, n: usize, rng: &mut Rng) -> (Matrix, Vec<usize>) {
        let k = self.num_classes();
        let d = self.dim();
        let sigma = self.sigma_sq.max(0.0).sqrt();
        let start = rng.random_range(0..k);
        let labels: Vec<usize> = (0..n).map(|i| (start + i) % k).collect();
        let mut feats = Matrix::zeros(n, d);
        for (i, &c) in labels.iter().enumerate() {
            let mu = self.prototypes.row(c);
            for (v, m) in feats.row_mut(i).iter_mut().zip(mu) {
                let z: f64 = rng.sample(StandardNormal);
                *v = m + sigma * z;
            }
        }
        (feats, labels)
    }

    /// `log Σ_k π_k 𝒩(f | μ_k, σ²I)`, stabilized with log-sum-exp.
    pub fn log_density(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.dim() {
            return Err(VdaError::Shape(format!(
                "feature has length {}, mixture dimension is {}",
                f.len(),
                self.dim()
            )));
        }
        let d = self.dim() as f64;
        let norm = -0.5 * d * (2.0 * std::f64::consts::PI * self.sigma_sq).ln();
        let terms: Vec<f64> = self
            .prototypes
            .iter_rows()
            .zip(&self.mixing)
            .map(|(mu, pi)| pi.ln() + norm - squared_distance(f, mu) / (2.0 * self.sigma_sq))
            .collect();
        Ok(log_sum_exp(&terms))
    }

    /// Plain-text record for inspection and diffing; see [`Self::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# virtual domain gaussian mixture");
        let _ = writeln!(s, "K {}", self.num_classes());
        let _ = writeln!(s, "d {}", self.dim());
        let _ = writeln!(s, "lambda {:.16e}", self.lambda);
        let _ = writeln!(s, "metric {}", self.metric.name());
        let _ = writeln!(s, "sigma_sq {:.16e}", self.sigma_sq);
        for (k, row) in self.prototypes.iter_rows().enumerate() {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "prototype {k} {}", vals.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut k = None;
        let mut d = None;
        let mut lambda = None;
        let mut metric = None;
        let mut sigma_sq = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let bad = |reason: String| VdaError::Parse { line: line_no, reason };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let num = |parts: &mut std::str::SplitWhitespace<'_>| -> Result<f64> {
                let tok = parts.next().ok_or_else(|| bad(format!("missing value for {key}")))?;
                tok.parse().map_err(|_| bad(format!("'{tok}' is not a number")))
            };
            match key {
                "K" => k = Some(num(&mut parts)? as usize),
                "d" => d = Some(num(&mut parts)? as usize),
                "lambda" => lambda = Some(num(&mut parts)?),
                "sigma_sq" => sigma_sq = Some(num(&mut parts)?),
                "metric" => {
                    let name = parts.next().ok_or_else(|| bad("missing metric".into()))?;
                    metric = Some(DistanceMetric::from_name(name)?);
                }
                "prototype" => {
                    let idx = num(&mut parts)? as usize;
                    if idx != rows.len() {
                        return Err(bad(format!("prototype {idx} out of order")));
                    }
                    let vals = parts
                        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("'{t}' is not a number"))))
                        .collect::<Result<Vec<_>>>()?;
                    rows.push(vals);
                }
                other => return Err(bad(format!("unknown key '{other}'"))),
            }
        }
        let missing = |what: &str| VdaError::Schema(format!("virtual domain record lacks {what}"));
        let k = k.ok_or_else(|| missing("K"))?;
        let d = d.ok_or_else(|| missing("d"))?;
        let prototypes = Matrix::from_rows(&rows)?;
        if prototypes.shape() != (k, d) {
            return Err(VdaError::Schema(format!(
                "record declares {k}x{d} prototypes but holds {}x{}",
                prototypes.rows(),
                prototypes.cols()
            )));
        }
        Ok(VirtualDomainGmm {
            prototypes,
            sigma_sq: sigma_sq.ok_or_else(|| missing("sigma_sq"))?,
            mixing: vec![1.0 / k as f64; k],
            lambda: lambda.ok_or_else(|| missing("lambda"))?,
            metric: metric.ok_or_else(|| missing("metric"))?,
        })
    }
}
