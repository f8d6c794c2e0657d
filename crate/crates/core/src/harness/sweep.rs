use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ExperimentConfig;
use super::pipeline::run_pipeline;
use super::report::MetricsReport;
use crate::error::{Result, VdaError};
use crate::exec;
use crate::rng::derive_seed;

/// One swept field: a dotted path into the config (`lambda`,
/// `dataset.rotation_degrees`, ...) and the values it takes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub path: String,
    pub values: Vec<Value>,
}

impl GridAxis {
    pub fn new(path: impl Into<String>, values: Vec<Value>) -> Self {
        GridAxis { path: path.into(), values }
    }

    /// Parses `path=v1,v2,...`. Values are read as JSON, falling back to strings.
    pub fn parse(text: &str) -> Result<Self> {
        let (path, values) = text
            .split_once('=')
            .ok_or_else(|| VdaError::Config(format!("grid axis '{text}' is not of the form path=v1,v2")))?;
        let values: Vec<Value> = values
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string())))
            .collect();
        if path.trim().is_empty() || values.is_empty() {
            return Err(VdaError::Config(format!("grid axis '{text}' has no path or no values")));
        }
        Ok(GridAxis { path: path.trim().to_string(), values })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Give each point its own seed derived from the base seed and its index.
    /// Otherwise every point shares the base seed, so only the swept fields differ.
    pub per_point_seeds: bool,
    /// Directory for one result file per point. Existing successful results
    /// are reused; missing and failed points are (re)run.
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PointOutcome {
    Ok { report: Box<MetricsReport> },
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub overrides: Vec<(String, Value)>,
    pub seed: u64,
    pub outcome: PointOutcome,
}

impl SweepPoint {
    pub fn report(&self) -> Option<&MetricsReport> {
        match &self.outcome {
            PointOutcome::Ok { report } => Some(report),
            PointOutcome::Failed { .. } => None,
        }
    }
}

/// Cartesian product of the axes, first axis varying slowest.
pub fn grid_points(axes: &[GridAxis]) -> Vec<Vec<(String, Value)>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for p in &points {
            for v in &axis.values {
                let mut q = p.clone();
                q.push((axis.path.clone(), v.clone()));
                next.push(q);
            }
        }
        points = next;
    }
    points
}

/// Returns `base` with each `(path, value)` written into its JSON form.
pub fn apply_overrides(base: &ExperimentConfig, overrides: &[(String, Value)]) -> Result<ExperimentConfig> {
    let mut tree = serde_json::to_value(base).map_err(|e| VdaError::Serialization(e.to_string()))?;
    for (path, value) in overrides {
        let mut node = &mut tree;
        for key in path.split('.') {
            node = node
                .as_object_mut()
                .and_then(|m| m.get_mut(key))
                .ok_or_else(|| VdaError::Config(format!("unknown config field '{path}'")))?;
        }
        *node = value.clone();
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(tree).map_err(|e| VdaError::Config(format!("invalid override: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn point_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("point-{index:04}.json"))
}

/// A stored point is reused only if it succeeded for exactly this config.
fn load_finished(dir: &Path, index: usize, config: &ExperimentConfig) -> Option<SweepPoint> {
    let text = fs::read_to_string(point_path(dir, index)).ok()?;
    let point: SweepPoint = serde_json::from_str(&text).ok()?;
    let matches = point.report().is_some_and(|r| r.config_hash == config.config_hash());
    (point.index == index && matches).then_some(point)
}

fn point_config(base: &ExperimentConfig, index: usize, overrides: &[(String, Value)], options: &SweepOptions) -> Result<ExperimentConfig> {
    let mut cfg = apply_overrides(base, overrides)?;
    if options.per_point_seeds {
        cfg.seed = derive_seed(base.seed, &format!("sweep/point/{index}"));
    }
    Ok(cfg)
}

fn run_point(
    config: Result<ExperimentConfig>,
    base_seed: u64,
    index: usize,
    overrides: Vec<(String, Value)>,
    options: &SweepOptions,
) -> Result<SweepPoint> {
    let (seed, outcome) = match config {
        Ok(cfg) => match run_pipeline(&cfg) {
            Ok(report) => (cfg.seed, PointOutcome::Ok { report: Box::new(report) }),
            Err(e) => (cfg.seed, PointOutcome::Failed { error: e.to_string() }),
        },
        Err(e) => (base_seed, PointOutcome::Failed { error: e.to_string() }),
    };
    let point = SweepPoint { index, overrides, seed, outcome };
    if let Some(dir) = &options.out_dir {
        let path = point_path(dir, index);
        let json = serde_json::to_string_pretty(&point).map_err(|e| VdaError::Serialization(e.to_string()))?;
        fs::write(&path, json).map_err(|e| VdaError::io(&path, e))?;
    }
    Ok(point)
}

/// Runs one pipeline per grid point. Failed points are recorded, not fatal.
pub fn run_sweep(base: &ExperimentConfig, axes: &[GridAxis], options: &SweepOptions) -> Result<Vec<SweepPoint>> {
    if let Some(dir) = &options.out_dir {
        fs::create_dir_all(dir).map_err(|e| VdaError::io(dir, e))?;
    }
    let points: Vec<(usize, Vec<(String, Value)>)> = grid_points(axes).into_iter().enumerate().collect();
    let results = exec::map(&points, |(index, overrides)| {
        let config = point_config(base, *index, overrides, options);
        if let (Some(dir), Ok(cfg)) = (options.out_dir.as_deref(), &config) {
            if let Some(done) = load_finished(dir, *index, cfg) {
                return Ok(done);
            }
        }
        run_point(config, base.seed, *index, overrides.clone(), options)
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn axis_parsing() {
        let a = GridAxis::parse("lambda=4,6.5,8").unwrap();
        assert_eq!(a.path, "lambda");
        assert_eq!(a.values, vec![json!(4), json!(6.5), json!(8)]);
        let m = GridAxis::parse("metric=cosine_distance").unwrap();
        assert_eq!(m.values, vec![json!("cosine_distance")]);
        assert!(GridAxis::parse("lambda").is_err());
        assert!(GridAxis::parse("lambda=").is_err());
    }

    #[test]
    fn cartesian_product_order() {
        let axes = [GridAxis::new("a", vec![json!(1), json!(2)]), GridAxis::new("b", vec![json!("x"), json!("y"), json!("z")])];
        let pts = grid_points(&axes);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![("a".into(), json!(1)), ("b".into(), json!("x"))]);
        assert_eq!(pts[5], vec![("a".into(), json!(2)), ("b".into(), json!("z"))]);
        assert_eq!(grid_points(&[]), vec![Vec::<(String, Value)>::new()]);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let base = ExperimentConfig::default();
        let cfg = apply_overrides(
            &base,
            &[("lambda".into(), json!(10)), ("dataset.rotation_degrees".into(), json!(30.0))],
        )
        .unwrap();
        assert_eq!(cfg.lambda, 10.0);
        match cfg.dataset {
            super::super::config::DatasetSource::Synthetic(s) => assert_eq!(s.rotation_degrees, 30.0),
            _ => unreachable!(),
        }
        assert!(apply_overrides(&base, &[("nope".into(), json!(1))]).is_err());
        assert!(apply_overrides(&base, &[("lambda".into(), json!(-2.0))]).is_err());
    }
}
