use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::BaselineError;
use crate::nn::Matrix;

/// Mean and the top `k` principal directions of a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × F`, orthonormal rows.
    pub components: Matrix,
    pub k: usize,
}

/// Fits PCA on the rows of `x` from the SVD of the centered data.
pub fn pca_fit(x: &Matrix, k: usize) -> Result<PcaModel, BaselineError> {
    let (n, f) = x.shape();
    if k == 0 || k > f {
        return Err(BaselineError::Config(format!(
            "number of components must lie in 1..={f}, got {k}"
        )));
    }
    if n < k {
        return Err(BaselineError::Data(format!(
            "{n} rows cannot support {k} components"
        )));
    }
    if !x.is_finite() {
        return Err(BaselineError::Data("PCA input must be finite".into()));
    }
    let mean: Vec<f64> = (0..f)
        .map(|c| x.column(c).iter().sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, f, |r, c| x.get(r, c) - mean[c]);
    let svd = centered.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| BaselineError::Data("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut components = Matrix::zeros(k, f);
    for (i, &o) in order.iter().take(k).enumerate() {
        for c in 0..f {
            components.set(i, c, v_t[(o, c)]);
        }
    }
    if order.len() < k {
        // fewer singular vectors than requested when n < F; complete the basis
        complete_basis(&mut components, order.len());
    }
    Ok(PcaModel {
        mean,
        components,
        k,
    })
}

/// Fills rows `filled..` with unit vectors orthogonal to the earlier rows.
fn complete_basis(c: &mut Matrix, mut filled: usize) {
    let (k, f) = c.shape();
    for e in 0..f {
        if filled == k {
            break;
        }
        let mut v = vec![0.0; f];
        v[e] = 1.0;
        for r in 0..filled {
            let dot: f64 = c.row(r).iter().zip(&v).map(|(a, b)| a * b).sum();
            for (vi, ci) in v.iter_mut().zip(c.row(r)) {
                *vi -= dot * ci;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            c.row_mut(filled)
                .copy_from_slice(&v.iter().map(|a| a / norm).collect::<Vec<_>>());
            filled += 1;
        }
    }
}

/// Projects onto the components and back. Returns the reconstruction and the
/// mean squared error of every row.
pub fn pca_reconstruct(model: &PcaModel, x: &Matrix) -> Result<(Matrix, Vec<f64>), BaselineError> {
    let f = model.mean.len();
    if x.cols() != f {
        return Err(BaselineError::Data(format!(
            "expected {f} features, got {}",
            x.cols()
        )));
    }
    let mut centered = x.clone();
    for r in 0..x.rows() {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&model.mean) {
            *v -= m;
        }
    }
    let codes = centered.matmul_t(&model.components);
    let mut recon = codes.matmul(&model.components);
    let mut deviation = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        for (v, m) in recon.row_mut(r).iter_mut().zip(&model.mean) {
            *v += m;
        }
        let d = x
            .row(r)
            .iter()
            .zip(recon.row(r))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / f as f64;
        deviation.push(d);
    }
    Ok((recon, deviation))
}
