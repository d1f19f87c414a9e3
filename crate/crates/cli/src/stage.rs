//! Per-stage flags (optional PCA, SUM or Fisher Vector aggregation) and
//! their loading with upstream consistency checks.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use docsnip::aggregate::{AggregateConfig, FisherConfig};
use docsnip::embed::EmbeddingProvider;
use docsnip::gmm::GmmModel;
use docsnip::pca::PcaModel;
use docsnip::retrieve::StageConfig;

use crate::manifest::{sha256_file, sidecar, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Sum,
    Fv,
}

/// Stage settings shared by both pipeline stages.
#[derive(Debug, Clone)]
pub struct StageArgs<'a> {
    pub pca: Option<&'a Path>,
    pub agg: Scheme,
    pub gmm: Option<&'a Path>,
    pub alpha: f64,
    pub power_norm: bool,
    pub include_sigma: bool,
    pub l2_norm: bool,
}

#[derive(Args, Serialize)]
pub struct RetrieverStageArgs {
    /// PCA model for the retriever stage.
    #[arg(long)]
    pub pca: Option<PathBuf>,
    /// Retriever aggregation.
    #[arg(long, value_enum, default_value = "sum")]
    pub agg: Scheme,
    /// GMM for Fisher Vector aggregation in the retriever stage.
    #[arg(long)]
    pub gmm: Option<PathBuf>,
    /// Power-normalization exponent.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long)]
    pub no_power_norm: bool,
    /// Drop the variance gradients from the Fisher Vector.
    #[arg(long)]
    pub no_sigma: bool,
    #[arg(long)]
    pub no_l2: bool,
}

impl RetrieverStageArgs {
    pub fn stage(&self) -> StageArgs<'_> {
        StageArgs {
            pca: self.pca.as_deref(),
            agg: self.agg,
            gmm: self.gmm.as_deref(),
            alpha: self.alpha,
            power_norm: !self.no_power_norm,
            include_sigma: !self.no_sigma,
            l2_norm: !self.no_l2,
        }
    }
}

#[derive(Args, Serialize)]
pub struct SnippetStageArgs {
    /// PCA model for the snippet stage.
    #[arg(long)]
    pub snippet_pca: Option<PathBuf>,
    /// Snippet aggregation.
    #[arg(long, value_enum, default_value = "sum")]
    pub snippet_agg: Scheme,
    /// GMM for Fisher Vector aggregation in the snippet stage.
    #[arg(long)]
    pub snippet_gmm: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub snippet_alpha: f64,
    #[arg(long)]
    pub snippet_no_power_norm: bool,
    #[arg(long)]
    pub snippet_no_sigma: bool,
    #[arg(long)]
    pub snippet_no_l2: bool,
}

impl SnippetStageArgs {
    pub fn stage(&self) -> StageArgs<'_> {
        StageArgs {
            pca: self.snippet_pca.as_deref(),
            agg: self.snippet_agg,
            gmm: self.snippet_gmm.as_deref(),
            alpha: self.snippet_alpha,
            power_norm: !self.snippet_no_power_norm,
            include_sigma: !self.snippet_no_sigma,
            l2_norm: !self.snippet_no_l2,
        }
    }
}

/// Checks the sidecar manifest of `artifact`, when there is one, against
/// the provider in use and (for GMMs) the PCA model in use.
pub fn check_upstream(artifact: &Path, pca: Option<&Path>, provider: &dyn EmbeddingProvider) -> Result<()> {
    let path = sidecar(artifact);
    if !path.exists() {
        log::warn!("{} has no manifest; skipping consistency checks", artifact.display());
        return Ok(());
    }
    let m = Manifest::read(&path)?;
    let current = provider.fingerprint();
    if let Some(fitted) = &m.provider {
        if *fitted != current {
            bail!(
                "{} was fitted with provider {fitted}, but {current} is in use",
                artifact.display()
            );
        }
    }
    if m.command == "fit-gmm" {
        let fitted = m.inputs.get("pca").map(|d| d.sha256.clone());
        let current = pca.map(sha256_file).transpose()?;
        if fitted != current {
            bail!(
                "{} was fitted {} but this stage uses {}; refit the GMM after the PCA",
                artifact.display(),
                fitted.map_or("without PCA".into(), |h| format!("on PCA {h}")),
                current.map_or("no PCA".into(), |h| format!("PCA {h}")),
            );
        }
    }
    Ok(())
}

impl StageArgs<'_> {
    /// Loads the models of this stage, recording them as `role`-prefixed
    /// manifest inputs.
    pub fn load(&self, m: &mut Manifest, role: &str, provider: &dyn EmbeddingProvider) -> Result<StageConfig> {
        let pca = match self.pca {
            Some(p) => {
                check_upstream(p, None, provider)?;
                m.input(&format!("{role}_pca"), p)?;
                Some(Arc::new(
                    PcaModel::load(p).with_context(|| format!("loading PCA {}", p.display()))?,
                ))
            }
            None => None,
        };
        let aggregate = match (self.agg, self.gmm) {
            (Scheme::Sum, None) => AggregateConfig::Sum,
            (Scheme::Sum, Some(_)) => bail!("a GMM was given for {role} SUM aggregation; pass the fv scheme to use it"),
            (Scheme::Fv, None) => bail!("Fisher Vector aggregation for {role} needs a GMM"),
            (Scheme::Fv, Some(g)) => {
                check_upstream(g, self.pca, provider)?;
                m.input(&format!("{role}_gmm"), g)?;
                let gmm = GmmModel::load(g).with_context(|| format!("loading GMM {}", g.display()))?;
                AggregateConfig::Fisher(FisherConfig {
                    gmm: Arc::new(gmm),
                    include_sigma: self.include_sigma,
                    alpha: self.alpha,
                    power_norm: self.power_norm,
                    l2_norm: self.l2_norm,
                })
            }
        };
        let stage = StageConfig::new(pca, aggregate);
        stage.validate(provider).with_context(|| format!("{role} stage"))?;
        Ok(stage)
    }
}
