//! Experiment configuration, the end-to-end pipeline, sweeps and reports.

mod config;
mod pipeline;
mod plot;
mod report;
mod sweep;

pub use config::{DatasetSource, ExperimentConfig};
pub use pipeline::{load_datasets, run_pipeline, run_pipeline_full, PipelineRun};
pub use plot::{principal_components, scatter_svg};
pub use report::{emit_report, read_diagnostics, EmittedFiles, MetricsReport, DIAGNOSTICS_FILE, PLOT_FILE, REPORT_FILE};
pub use sweep::{apply_overrides, grid_points, run_sweep, GridAxis, PointOutcome, SweepOptions, SweepPoint};

pub use crate::optim::lr_schedule;

use crate::error::Result;
use crate::rng;

/// Environment variable naming the root directory for run outputs.
pub const OUTPUT_DIR_ENV: &str = "VDA_OUTPUT_DIR";

/// SVG scatter of the adapted target features next to an equal number of
/// virtual samples.
pub fn feature_plot(run: &PipelineRun) -> Result<String> {
    let feats = crate::models::forward_features(&run.adapted_model, &run.target.inputs)?;
    let feats = crate::adaptation::discriminator_view(&feats, run.config.normalize_target_features);
    let mut r = rng::stream(run.report.seed, "plot/virtual");
    let (virt, virt_labels) = run.gmm.sample_batch(feats.rows(), &mut r);
    scatter_svg(&feats, run.target.labels()?, &virt, &virt_labels)
}
