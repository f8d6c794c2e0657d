use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptation::StepRecord;
use crate::error::{Result, VdaError};

pub const REPORT_FILE: &str = "report.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";
pub const PLOT_FILE: &str = "features.svg";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class_accuracy: Vec<Option<f64>>,
    pub average_accuracy: f64,
    pub absent_classes: Vec<usize>,
    pub source_only_per_class_accuracy: Vec<Option<f64>>,
    pub source_only_accuracy: f64,
    pub d_loss_curve: Vec<f64>,
    pub g_loss_curve: Vec<f64>,
    pub mean_alpha_curve: Vec<f64>,
    pub discriminator_accuracy_curve: Vec<f64>,
    pub pseudo_label_count_curve: Vec<usize>,
    pub pseudo_label_agreement_curve: Vec<Option<f64>>,
    pub sigma_sq: f64,
    pub source_released: bool,
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_seconds: f64,
}

impl MetricsReport {
    pub fn gain(&self) -> f64 {
        self.average_accuracy - self.source_only_accuracy
    }

    /// Pretty JSON with `wall_time_seconds` zeroed, for run-to-run comparison.
    pub fn to_json_without_wall_time(&self) -> String {
        let r = MetricsReport { wall_time_seconds: 0.0, ..self.clone() };
        serde_json::to_string_pretty(&r).expect("report is always serializable")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| VdaError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| VdaError::Serialization(format!("{}: {e}", path.display())))
    }
}

/// Files written by [`emit_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmittedFiles {
    pub report: PathBuf,
    pub diagnostics: PathBuf,
    pub plot: Option<PathBuf>,
}

/// Writes `report.json`, `diagnostics.jsonl` and, when `plot_svg` is given,
/// `features.svg` into `out_dir`, creating it if needed.
pub fn emit_report(
    report: &MetricsReport,
    diagnostics: &[StepRecord],
    plot_svg: Option<&str>,
    out_dir: impl AsRef<Path>,
) -> Result<EmittedFiles> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| VdaError::io(dir, e))?;

    let report_path = dir.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(report).map_err(|e| VdaError::Serialization(e.to_string()))?;
    fs::write(&report_path, json + "\n").map_err(|e| VdaError::io(&report_path, e))?;

    let diag_path = dir.join(DIAGNOSTICS_FILE);
    let file = File::create(&diag_path).map_err(|e| VdaError::io(&diag_path, e))?;
    let mut w = BufWriter::new(file);
    for rec in diagnostics {
        let line = serde_json::to_string(rec).map_err(|e| VdaError::Serialization(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| VdaError::io(&diag_path, e))?;
    }
    w.flush().map_err(|e| VdaError::io(&diag_path, e))?;

    let plot = match plot_svg {
        Some(svg) => {
            let p = dir.join(PLOT_FILE);
            fs::write(&p, svg).map_err(|e| VdaError::io(&p, e))?;
            Some(p)
        }
        None => None,
    };
    Ok(EmittedFiles { report: report_path, diagnostics: diag_path, plot })
}

pub fn read_diagnostics(path: impl AsRef<Path>) -> Result<Vec<StepRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| VdaError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| VdaError::Parse { line: i + 1, reason: e.to_string() }))
        .collect()
}
