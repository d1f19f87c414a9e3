//! Collapsing a variable-size set of word embeddings into one fixed-size
//! vector, either by summation or as a Fisher Vector over a diagonal GMM.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gmm::GmmModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Sum,
    Fv,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Sum => f.write_str("sum"),
            Scheme::Fv => f.write_str("fv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateVector {
    pub values: Vec<f64>,
    pub scheme: Scheme,
}

impl AggregateVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherConfig {
    pub gmm: Arc<GmmModel>,
    /// Append the standard-deviation gradients to the mean gradients.
    pub include_sigma: bool,
    pub alpha: f64,
    pub power_norm: bool,
    pub l2_norm: bool,
}

impl FisherConfig {
    /// Mean-and-sigma gradients, `alpha = 0.5`, power and L2 normalization on.
    pub fn new(gmm: Arc<GmmModel>) -> Self {
        FisherConfig {
            gmm,
            include_sigma: true,
            alpha: 0.5,
            power_norm: true,
            l2_norm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "power-normalization exponent {} must lie in [0, 1]",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        let blocks = if self.include_sigma { 2 } else { 1 };
        blocks * self.gmm.k * self.gmm.dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AggregateConfig {
    Sum,
    Fisher(FisherConfig),
}

impl AggregateConfig {
    pub fn scheme(&self) -> Scheme {
        match self {
            AggregateConfig::Sum => Scheme::Sum,
            AggregateConfig::Fisher(_) => Scheme::Fv,
        }
    }

    /// Dimension of the aggregate for word vectors of size `input_dim`.
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            AggregateConfig::Sum => input_dim,
            AggregateConfig::Fisher(fv) => fv.output_dim(),
        }
    }

    pub fn aggregate<S: AsRef<[f64]>>(&self, embeddings: &[S]) -> Result<AggregateVector> {
        match self {
            AggregateConfig::Sum => aggregate_sum(embeddings),
            AggregateConfig::Fisher(fv) => aggregate_fv(embeddings, fv),
        }
    }

    /// Like [`aggregate`](Self::aggregate) but maps an empty input to the
    /// zero vector.
    pub fn aggregate_or_zero<S: AsRef<[f64]>>(&self, embeddings: &[S], input_dim: usize) -> Result<AggregateVector> {
        if embeddings.is_empty() {
            Ok(AggregateVector {
                values: vec![0.0; self.output_dim(input_dim)],
                scheme: self.scheme(),
            })
        } else {
            self.aggregate(embeddings)
        }
    }

    /// Stable description used in index fingerprints.
    pub fn describe(&self) -> String {
        match self {
            AggregateConfig::Sum => "sum".to_string(),
            AggregateConfig::Fisher(fv) => {
                let gmm = serde_json::to_vec(fv.gmm.as_ref()).expect("GMM serializes");
                format!(
                    "fv(K={};dim={};sigma={};alpha={:e};power={};l2={};gmm={})",
                    fv.gmm.k,
                    fv.gmm.dim,
                    fv.include_sigma,
                    fv.alpha,
                    fv.power_norm,
                    fv.l2_norm,
                    hex::encode(Sha256::digest(gmm))
                )
            }
        }
    }
}

fn check_uniform<S: AsRef<[f64]>>(embeddings: &[S]) -> Result<usize> {
    let first = embeddings.first().ok_or(Error::NoContentWords)?;
    let dim = first.as_ref().len();
    if let Some(bad) = embeddings.iter().find(|e| e.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.as_ref().len(),
        });
    }
    Ok(dim)
}

/// Coordinate-wise sum, unnormalized.
pub fn aggregate_sum<S: AsRef<[f64]>>(embeddings: &[S]) -> Result<AggregateVector> {
    let dim = check_uniform(embeddings)?;
    let mut values = vec![0.0; dim];
    for e in embeddings {
        for (v, x) in values.iter_mut().zip(e.as_ref()) {
            *v += x;
        }
    }
    Ok(AggregateVector {
        values,
        scheme: Scheme::Sum,
    })
}

/// Raw Fisher Vector gradients before any normalization.
///
/// With `M` embeddings and posteriors `g_t(i)`:
///
/// ```text
/// G_mu,i    = 1/(M sqrt(w_i))   * sum_t g_t(i) (x_t - mu_i) / sigma_i
/// G_sigma,i = 1/(M sqrt(2 w_i)) * sum_t g_t(i) [((x_t - mu_i) / sigma_i)^2 - 1]
/// ```
///
/// Output layout is `[G_mu,1 .. G_mu,K]` followed by `[G_sigma,1 .. G_sigma,K]`
/// when `include_sigma` is set.
pub fn fisher_gradients<S: AsRef<[f64]>>(embeddings: &[S], gmm: &GmmModel, include_sigma: bool) -> Result<Vec<f64>> {
    let dim = check_uniform(embeddings)?;
    if dim != gmm.dim {
        return Err(Error::DimensionMismatch {
            expected: gmm.dim,
            actual: dim,
        });
    }
    let m = embeddings.len() as f64;
    let block = gmm.k * dim;
    let mut out = vec![0.0; if include_sigma { 2 * block } else { block }];
    let sigmas: Vec<Vec<f64>> = gmm
        .variances
        .iter()
        .map(|v| v.iter().map(|x| x.sqrt()).collect())
        .collect();
    for x in embeddings {
        let x = x.as_ref();
        let gamma = gmm.posterior(x)?;
        for i in 0..gmm.k {
            if gamma[i] == 0.0 {
                continue;
            }
            let mu = &gmm.means[i];
            let sigma = &sigmas[i];
            for j in 0..dim {
                let u = (x[j] - mu[j]) / sigma[j];
                out[i * dim + j] += gamma[i] * u;
                if include_sigma {
                    out[block + i * dim + j] += gamma[i] * (u * u - 1.0);
                }
            }
        }
    }
    for i in 0..gmm.k {
        let mean_scale = 1.0 / (m * gmm.weights[i].sqrt());
        let sigma_scale = 1.0 / (m * (2.0 * gmm.weights[i]).sqrt());
        for j in 0..dim {
            out[i * dim + j] *= mean_scale;
            if include_sigma {
                out[block + i * dim + j] *= sigma_scale;
            }
        }
    }
    Ok(out)
}

/// Fisher Vector of `embeddings`, followed by the configured power and L2
/// normalization.
pub fn aggregate_fv<S: AsRef<[f64]>>(embeddings: &[S], config: &FisherConfig) -> Result<AggregateVector> {
    config.validate()?;
    let mut values = fisher_gradients(embeddings, &config.gmm, config.include_sigma)?;
    if config.power_norm {
        values = power_normalize(&values, config.alpha);
    }
    if config.l2_norm {
        values = l2_normalize(&values);
    }
    Ok(AggregateVector {
        values,
        scheme: Scheme::Fv,
    })
}

/// Elementwise `sign(z) |z|^alpha`.
pub fn power_normalize(v: &[f64], alpha: f64) -> Vec<f64> {
    v.iter()
        .map(|&z| {
            if z == 0.0 {
                0.0
            } else {
                z.signum() * z.abs().powf(alpha)
            }
        })
        .collect()
}

/// `v / |v|`; the zero vector maps to itself.
pub fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    crate::linalg::normalize_in_place(&mut out);
    out
}
