use thiserror::Error;

pub type Result<T> = std::result::Result<T, VdaError>;

#[derive(Debug, Error)]
pub enum VdaError {
    #[error("input shape error: {0}")]
    Shape(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid probability distribution at row {row}: {reason}")]
    InvalidDistribution { row: usize, reason: String },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("degenerate classifier: row {class} of the classifier weights is all zero")]
    DegenerateClassifier { class: usize },

    #[error("degenerate prototypes: minimum pairwise distance {min_distance:e} between classes {first} and {second}")]
    DegeneratePrototypes { first: usize, second: usize, min_distance: f64 },

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("adaptation diverged at step {step}: d_loss = {d_loss}, g_loss = {g_loss}")]
    AdaptationDivergence { step: usize, d_loss: f64, g_loss: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("unsupported spec: {0}")]
    UnsupportedSpec(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<VdaError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl VdaError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        VdaError::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        VdaError::Stage { stage, source: Box::new(self) }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// a failure while computing.
    pub fn is_usage_error(&self) -> bool {
        match self {
            VdaError::Config(_)
            | VdaError::Parameter(_)
            | VdaError::Schema(_)
            | VdaError::Parse { .. }
            | VdaError::UnsupportedSpec(_) => true,
            VdaError::Stage { source, .. } => source.is_usage_error(),
            _ => false,
        }
    }
}
