//! Comma-separated datasets: header `f0,…,f{d-1}[,label]`, one sample per row.
//! Values are written with 17 significant digits, which round-trips `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::DomainDataset;
use crate::error::{Result, VdaError};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TabularSchema {
    pub num_features: usize,
    pub has_label: bool,
    /// When set, labels must lie in `[0, num_classes)`.
    pub num_classes: Option<usize>,
}

impl TabularSchema {
    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (0..self.num_features).map(|i| format!("f{i}")).collect();
        if self.has_label {
            h.push("label".into());
        }
        h
    }
}

pub fn load_tabular(path: impl AsRef<Path>, schema: &TabularSchema) -> Result<DomainDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| VdaError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| VdaError::Parse { line: 1, reason: e.to_string() })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let expected = schema.header();
    if header != expected {
        return Err(VdaError::Schema(format!(
            "header {:?} does not match expected {:?}",
            header, expected
        )));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| VdaError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        for (j, field) in record.iter().take(schema.num_features).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| VdaError::Parse {
                line,
                reason: format!("column f{j}: '{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(VdaError::Parse { line, reason: format!("column f{j} is not finite") });
            }
            data.push(v);
        }
        if schema.has_label {
            let field = record.get(schema.num_features).unwrap_or("");
            let l: usize = field.trim().parse().map_err(|_| VdaError::Parse {
                line,
                reason: format!("label '{field}' is not a non-negative integer"),
            })?;
            if let Some(k) = schema.num_classes {
                if l >= k {
                    return Err(VdaError::Schema(format!(
                        "label {l} on line {line} is outside [0, {k})"
                    )));
                }
            }
            labels.push(l);
        }
    }
    let rows = data.len() / schema.num_features.max(1);
    let inputs = Matrix::from_vec(rows, schema.num_features, data)?;
    let tag = path.file_stem().map_or_else(|| "tabular".into(), |s| s.to_string_lossy().into_owned());
    DomainDataset::new(inputs, schema.has_label.then_some(labels), tag, 0)
}

pub fn write_tabular(path: impl AsRef<Path>, data: &DomainDataset) -> Result<()> {
    let path = path.as_ref();
    let io = |e| VdaError::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let schema = TabularSchema {
        num_features: data.input_dim(),
        has_label: data.labels.is_some(),
        num_classes: None,
    };
    writeln!(out, "{}", schema.header().join(",")).map_err(io)?;
    for (i, row) in data.inputs.iter_rows().enumerate() {
        let mut line = row.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",");
        if let Some(labels) = &data.labels {
            line.push(',');
            line.push_str(&labels[i].to_string());
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}
