//! 2-D scatter of target and virtual features, projected onto the top two
//! principal components of their union.

use std::fmt::Write as _;

use crate::error::{Result, VdaError};
use crate::linalg::{dot, l2_norm, Matrix};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Top `k` principal directions of `data` by power iteration with deflation.
pub fn principal_components(data: &Matrix, k: usize, iterations: usize) -> Result<Matrix> {
    let (n, d) = data.shape();
    if n < 2 || d == 0 {
        return Err(VdaError::Shape("need at least two rows to project".into()));
    }
    let mean: Vec<f64> = data.column_sums().iter().map(|s| s / n as f64).collect();
    let mut centered = data.clone();
    for i in 0..n {
        centered.row_mut(i).iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
    }
    let cov = centered.transpose_matmul(&centered)?;
    let mut comps: Vec<Vec<f64>> = Vec::with_capacity(k);
    for c in 0..k.min(d) {
        // deterministic start that is not orthogonal to any axis
        let mut v: Vec<f64> = (0..d).map(|j| 1.0 + ((j + c) % 7) as f64 * 0.1).collect();
        for _ in 0..iterations {
            let mut w: Vec<f64> = (0..d).map(|r| dot(cov.row(r), &v)).collect();
            for u in &comps {
                let p = dot(&w, u);
                w.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
            }
            let norm = l2_norm(&w);
            if norm == 0.0 {
                break;
            }
            v = w.into_iter().map(|x| x / norm).collect();
        }
        comps.push(v);
    }
    Matrix::from_rows(&comps)
}

/// Renders target features (circles) and virtual samples (crosses), coloured
/// by class, as a standalone SVG document.
pub fn scatter_svg(
    target: &Matrix,
    target_labels: &[usize],
    virtual_features: &Matrix,
    virtual_labels: &[usize],
) -> Result<String> {
    let all = Matrix::vstack(target, virtual_features)?;
    let comps = principal_components(&all, 2, 200)?;
    let proj = all.matmul_transposed(&comps)?;
    let (size, margin) = (640.0, 30.0);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for r in proj.iter_rows() {
        for a in 0..r.len().min(2) {
            lo[a] = lo[a].min(r[a]);
            hi[a] = hi[a].max(r[a]);
        }
    }
    let scale = |v: f64, a: usize| {
        let span = (hi[a] - lo[a]).max(1e-12);
        margin + (v - lo[a]) / span * (size - 2.0 * margin)
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let nt = target.rows();
    for (i, r) in proj.iter_rows().enumerate() {
        let x = scale(r[0], 0);
        let y = size - scale(*r.get(1).unwrap_or(&0.0), 1);
        if i < nt {
            let c = PALETTE[target_labels.get(i).copied().unwrap_or(0) % PALETTE.len()];
            let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{c}" fill-opacity="0.6"/>"#);
        } else {
            let c = PALETTE[virtual_labels.get(i - nt).copied().unwrap_or(0) % PALETTE.len()];
            let _ = writeln!(
                svg,
                r#"<path d="M{:.2} {:.2} l6 6 m0 -6 l-6 6" stroke="{c}" stroke-width="1"/>"#,
                x - 3.0,
                y - 3.0
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
