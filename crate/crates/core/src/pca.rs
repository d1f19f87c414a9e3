//! Principal component analysis: rotate-and-truncate, no whitening.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as zero variance.
pub const MIN_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub input_dim: usize,
    pub output_dim: usize,
    pub mean: Vec<f64>,
    /// `output_dim` orthonormal rows, by descending explained variance.
    pub components: Vec<Vec<f64>>,
    /// Variance captured by each component (covariance eigenvalues).
    #[serde(default)]
    pub explained_variance: Vec<f64>,
}

/// Fits a PCA model keeping the top `d_w` principal directions of the
/// sample covariance.
///
/// Each component is oriented so that its largest-magnitude coordinate is
/// positive.
pub fn fit_pca<S: AsRef<[f64]>>(samples: &[S], d_w: usize) -> Result<PcaModel> {
    let n = samples.len();
    let dim = samples.first().map(|s| s.as_ref().len()).unwrap_or(0);
    if d_w == 0 || dim == 0 {
        return Err(Error::InvalidArgument(
            "PCA needs a positive target dimension and non-empty samples".into(),
        ));
    }
    if d_w > dim {
        return Err(Error::InvalidArgument(format!(
            "target dimension {d_w} exceeds input dimension {dim}"
        )));
    }
    if d_w > n {
        return Err(Error::InvalidArgument(format!(
            "target dimension {d_w} exceeds sample count {n}"
        )));
    }
    if let Some(bad) = samples.iter().find(|s| s.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.as_ref().len(),
        });
    }

    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, dim, |i, j| samples[i].as_ref()[j] - mean[j]);
    let covariance = (centered.transpose() * &centered) / n as f64;
    let eigen = SymmetricEigen::new(covariance);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(d_w);
    let mut explained_variance = Vec::with_capacity(d_w);
    for &idx in order.iter().take(d_w) {
        let lambda = eigen.eigenvalues[idx];
        if lambda < MIN_EIGENVALUE {
            return Err(Error::Degenerate(format!(
                "only {} of the requested {d_w} principal directions have non-zero variance",
                explained_variance.len()
            )));
        }
        let mut v: Vec<f64> = eigen.eigenvectors.column(idx).iter().copied().collect();
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(lambda);
    }

    Ok(PcaModel {
        input_dim: dim,
        output_dim: d_w,
        mean,
        components,
        explained_variance,
    })
}

impl PcaModel {
    /// Projects `x` onto the principal directions: `components * (x - mean)`.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|row| row.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect())
    }

    pub fn transform_batch<S: AsRef<[f64]>>(&self, xs: &[S]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.transform(x.as_ref())).collect()
    }

    /// Maps a projected vector back to input space: `componentsᵀ y + mean`.
    pub fn reconstruct(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.output_dim {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim,
                actual: y.len(),
            });
        }
        let mut out = self.mean.clone();
        for (row, &coef) in self.components.iter().zip(y) {
            for (o, c) in out.iter_mut().zip(row) {
                *o += coef * c;
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_vec(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let model: PcaModel = serde_json::from_slice(&body).map_err(|e| Error::format(path, e.to_string()))?;
        model.check().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let shape_ok = self.mean.len() == self.input_dim
            && self.components.len() == self.output_dim
            && self.output_dim <= self.input_dim
            && self.components.iter().all(|r| r.len() == self.input_dim);
        if shape_ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("PCA model shapes are inconsistent".into()))
        }
    }
}
