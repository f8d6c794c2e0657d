//! Domain datasets, synthetic shift generators and tabular I/O.

mod batches;
mod synthetic;
mod tabular;

pub use batches::batch_iterator;
pub use synthetic::{blob_means, make_blobs_pair, make_moons_pair, make_pair, transform_point};
pub use tabular::{load_tabular, write_tabular, TabularSchema};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VdaError};
use crate::linalg::Matrix;

/// Inputs with optional labels, tagged with the domain they came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDataset {
    pub inputs: Matrix,
    pub labels: Option<Vec<usize>>,
    pub domain_tag: String,
    pub seed: u64,
}

impl DomainDataset {
    pub fn new(
        inputs: Matrix,
        labels: Option<Vec<usize>>,
        domain_tag: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(VdaError::DegenerateDataset("dataset has no rows".into()));
        }
        if !inputs.is_finite() {
            return Err(VdaError::InvalidValue("dataset contains non-finite inputs".into()));
        }
        if let Some(l) = &labels {
            if l.len() != inputs.rows() {
                return Err(VdaError::Shape(format!(
                    "{} labels for {} rows",
                    l.len(),
                    inputs.rows()
                )));
            }
        }
        Ok(DomainDataset { inputs, labels, domain_tag: domain_tag.into(), seed })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| VdaError::Schema(format!("dataset '{}' has no labels", self.domain_tag)))
    }

    /// Checks every label is below `num_classes`.
    pub fn validate_labels(&self, num_classes: usize) -> Result<()> {
        if let Some(labels) = &self.labels {
            if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
                return Err(VdaError::Schema(format!(
                    "label {l} at row {i} is outside [0, {num_classes})"
                )));
            }
        }
        Ok(())
    }

    pub fn class_counts(&self, num_classes: usize) -> Result<Vec<usize>> {
        self.validate_labels(num_classes)?;
        let mut counts = vec![0; num_classes];
        for &l in self.labels()? {
            counts[l] += 1;
        }
        Ok(counts)
    }

    /// Copy without labels.
    pub fn unlabeled(&self) -> DomainDataset {
        DomainDataset { labels: None, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftFamily {
    Blobs,
    Moons,
}

/// Parameters of a synthetic source/target pair.
///
/// The target is the source geometry rotated by `rotation_degrees` in the
/// plane of the first two input coordinates, scaled by `scale` and then
/// shifted by `translation`. An empty `translation` means no shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShiftSpec {
    pub family: ShiftFamily,
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    pub rotation_degrees: f64,
    pub translation: Vec<f64>,
    pub scale: f64,
    pub noise_std: f64,
    /// Distance between neighbouring blob means in the rotation plane, in
    /// units of `noise_std`.
    pub separation: f64,
    /// Class-specific offset outside the rotation plane, in units of
    /// `noise_std`. Rotation leaves this part of each mean untouched.
    pub off_plane: f64,
    pub seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            family: ShiftFamily::Blobs,
            num_classes: 4,
            samples_per_class: 500,
            input_dim: 16,
            rotation_degrees: 45.0,
            translation: Vec::new(),
            scale: 1.0,
            noise_std: 1.0,
            separation: 8.0,
            off_plane: 2.0,
            seed: 0,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(VdaError::Parameter("num_classes must be at least 2".into()));
        }
        if self.samples_per_class < 1 {
            return Err(VdaError::Parameter("samples_per_class must be at least 1".into()));
        }
        if self.input_dim < 2 {
            return Err(VdaError::Parameter("input_dim must be at least 2".into()));
        }
        if !(self.noise_std > 0.0) || !self.noise_std.is_finite() {
            return Err(VdaError::Parameter("noise_std must be positive".into()));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(VdaError::Parameter("scale must be positive".into()));
        }
        if self.family == ShiftFamily::Blobs && !(self.separation >= 6.0) {
            return Err(VdaError::Parameter(
                "blob separation must be at least 6 noise standard deviations".into(),
            ));
        }
        if !self.translation.is_empty() && self.translation.len() != self.input_dim {
            return Err(VdaError::Parameter(format!(
                "translation has {} entries, expected 0 or {}",
                self.translation.len(),
                self.input_dim
            )));
        }
        if !self.rotation_degrees.is_finite() || !self.off_plane.is_finite() {
            return Err(VdaError::Parameter("rotation and off_plane must be finite".into()));
        }
        Ok(())
    }
}
