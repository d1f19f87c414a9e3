//! Diagonal-covariance Gaussian mixture models fitted by maximum-likelihood
//! EM.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::log_sum_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Components whose total responsibility falls below this keep their
/// previous mean and variance.
const DEAD_COMPONENT_MASS: f64 = 1e-10;
const MIN_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    #[serde(rename = "K")]
    pub k: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub max_iter: usize,
    /// Stop once the mean log-likelihood improves by less than this.
    pub tol: f64,
    /// Variance floor, relative to the mean per-coordinate variance of the
    /// training data.
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            max_iter: 100,
            tol: 1e-6,
            variance_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean training log-likelihood of the initial model and after every
    /// EM iteration.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Absolute variance floor applied during fitting.
    pub variance_floor: f64,
}

pub fn fit_gmm<S: AsRef<[f64]> + Sync>(samples: &[S], k: usize, config: &GmmConfig) -> Result<GmmModel> {
    fit_gmm_traced(samples, k, config).map(|f| f.model)
}

/// Fits a `k`-component GMM and records the log-likelihood trace.
///
/// Means start from a seeded k-means++ selection of samples, weights are
/// uniform and every component starts at the global per-coordinate variance.
pub fn fit_gmm_traced<S: AsRef<[f64]> + Sync>(samples: &[S], k: usize, config: &GmmConfig) -> Result<GmmFit> {
    let n = samples.len();
    if k == 0 {
        return Err(Error::InvalidArgument("GMM needs at least one component".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "{k} components requested for {n} samples"
        )));
    }
    let dim = samples[0].as_ref().len();
    if dim == 0 {
        return Err(Error::InvalidArgument("GMM samples are empty vectors".into()));
    }
    for s in samples {
        let s = s.as_ref();
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: s.len(),
            });
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "GMM samples contain NaN or infinite values".into(),
            ));
        }
    }

    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut global_var = vec![0.0; dim];
    for s in samples {
        for ((v, x), m) in global_var.iter_mut().zip(s.as_ref()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    global_var.iter_mut().for_each(|v| *v /= n as f64);
    let scale = global_var.iter().sum::<f64>() / dim as f64;
    let floor = if scale > 0.0 {
        config.variance_floor * scale
    } else {
        config.variance_floor
    };
    if floor.is_nan() || floor <= 0.0 {
        return Err(Error::InvalidArgument("variance floor must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let means = kmeans_plus_plus(samples, k, &mut rng);
    let start_var: Vec<f64> = global_var.iter().map(|v| v.max(floor)).collect();
    let mut model = GmmModel {
        k,
        dim,
        weights: vec![1.0 / k as f64; k],
        means,
        variances: vec![start_var; k],
    };

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (ll, resp) = model.e_step(samples);
        if let Some(&prev) = trace.last() {
            if ll - prev < config.tol {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if iterations == config.max_iter {
            break;
        }
        model.m_step(samples, &resp, floor);
        iterations += 1;
    }

    Ok(GmmFit {
        model,
        log_likelihood_trace: trace,
        iterations,
        converged,
        variance_floor: floor,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_plus_plus<S: AsRef<[f64]>>(samples: &[S], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = samples.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = samples
        .iter()
        .map(|s| sq_dist(s.as_ref(), samples[chosen[0]].as_ref()))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // all remaining points coincide with a center
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (d, s) in d2.iter_mut().zip(samples) {
            *d = d.min(sq_dist(s.as_ref(), samples[next].as_ref()));
        }
    }
    chosen.into_iter().map(|i| samples[i].as_ref().to_vec()).collect()
}

impl GmmModel {
    /// `log w_i + log N(x; mu_i, sigma_i^2)` for every component.
    pub fn log_joint(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(self.log_joint_unchecked(x))
    }

    fn log_joint_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|i| {
                let mut acc = 0.0;
                for ((xj, mj), vj) in x.iter().zip(&self.means[i]).zip(&self.variances[i]) {
                    let d = xj - mj;
                    acc += LN_2PI + vj.ln() + d * d / vj;
                }
                self.weights[i].ln() - 0.5 * acc
            })
            .collect()
    }

    /// Posterior responsibilities of each component for `x`, computed in
    /// log space.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        let lj = self.log_joint(x)?;
        let lse = log_sum_exp(&lj);
        Ok(lj.iter().map(|l| (l - lse).exp()).collect())
    }

    /// Mean log density of `samples` under the mixture.
    pub fn log_likelihood<S: AsRef<[f64]>>(&self, samples: &[S]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("log-likelihood of an empty sample set".into()));
        }
        let mut total = 0.0;
        for s in samples {
            total += log_sum_exp(&self.log_joint(s.as_ref())?);
        }
        Ok(total / samples.len() as f64)
    }

    fn e_step<S: AsRef<[f64]> + Sync>(&self, samples: &[S]) -> (f64, Vec<Vec<f64>>) {
        let per_sample: Vec<(f64, Vec<f64>)> = samples
            .par_iter()
            .map(|s| {
                let lj = self.log_joint_unchecked(s.as_ref());
                let lse = log_sum_exp(&lj);
                (lse, lj.iter().map(|l| (l - lse).exp()).collect())
            })
            .collect();
        let mut ll = 0.0;
        let mut resp = Vec::with_capacity(per_sample.len());
        for (lse, r) in per_sample {
            ll += lse;
            resp.push(r);
        }
        (ll / samples.len() as f64, resp)
    }

    fn m_step<S: AsRef<[f64]>>(&mut self, samples: &[S], resp: &[Vec<f64>], floor: f64) {
        let n = samples.len() as f64;
        for i in 0..self.k {
            let mass: f64 = resp.iter().map(|r| r[i]).sum();
            self.weights[i] = (mass / n).max(MIN_WEIGHT);
            if mass < DEAD_COMPONENT_MASS {
                continue;
            }
            let mut mean = vec![0.0; self.dim];
            for (s, r) in samples.iter().zip(resp) {
                for (m, x) in mean.iter_mut().zip(s.as_ref()) {
                    *m += r[i] * x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= mass);
            let mut var = vec![0.0; self.dim];
            for (s, r) in samples.iter().zip(resp) {
                for ((v, x), m) in var.iter_mut().zip(s.as_ref()).zip(&mean) {
                    *v += r[i] * (x - m) * (x - m);
                }
            }
            var.iter_mut().for_each(|v| *v = (*v / mass).max(floor));
            self.means[i] = mean;
            self.variances[i] = var;
        }
        let total: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= total);
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_vec(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let model: GmmModel = serde_json::from_slice(&body).map_err(|e| Error::format(path, e.to_string()))?;
        model.check().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let shapes = self.weights.len() == self.k
            && self.means.len() == self.k
            && self.variances.len() == self.k
            && self.means.iter().chain(&self.variances).all(|v| v.len() == self.dim);
        if !shapes {
            return Err(Error::InvalidArgument("GMM shapes are inconsistent".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.weights.iter().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(Error::InvalidArgument(
                "GMM weights must be positive and sum to 1".into(),
            ));
        }
        if self.variances.iter().flatten().any(|&v| v.is_nan() || v <= 0.0) {
            return Err(Error::InvalidArgument("GMM variances must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
