//! Provider selection, training-sample extraction and the ablation sweeps
//! behind the command-line tool.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::aggregate::{AggregateConfig, FisherConfig};
use crate::corpus::{Corpus, Question};
use crate::embed::{load_embedding_store, EmbeddingProvider, NoisyPhocEmbedder, PhocEmbedder};
use crate::error::{Error, Result};
use crate::eval::{judge_question, percent, rank_all, target_rank};
use crate::gmm::{fit_gmm, GmmConfig};
use crate::pca::{fit_pca, PcaModel};
use crate::retrieve::{
    build_index, encode_corpus, EncodedDocument, Encoder, PipelineConfig, RetrievalResult, StageConfig, TfIdfIndex,
};

/// Which embedding provider to use.
#[derive(Debug, Clone, PartialEq)]
pub enum ProviderSpec {
    /// `phoc`
    Phoc,
    /// `phoc-noisy:SIGMA:SEED`
    NoisyPhoc { sigma: f64, seed: u64 },
    /// `store:PATH`
    Store(PathBuf),
}

impl ProviderSpec {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            ProviderSpec::Phoc => Box::new(PhocEmbedder::default()),
            ProviderSpec::NoisyPhoc { sigma, seed } => {
                Box::new(NoisyPhocEmbedder::new(PhocEmbedder::default(), *sigma, *seed)?)
            }
            ProviderSpec::Store(path) => Box::new(load_embedding_store(path)?),
        })
    }
}

impl FromStr for ProviderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidArgument(format!(
                "unknown provider {s:?}; expected phoc, phoc-noisy:SIGMA:SEED or store:PATH"
            ))
        };
        if s == "phoc" {
            return Ok(ProviderSpec::Phoc);
        }
        if let Some(path) = s.strip_prefix("store:") {
            if path.is_empty() {
                return Err(bad());
            }
            return Ok(ProviderSpec::Store(path.into()));
        }
        if let Some(rest) = s.strip_prefix("phoc-noisy:") {
            let (sigma, seed) = rest.split_once(':').ok_or_else(bad)?;
            return Ok(ProviderSpec::NoisyPhoc {
                sigma: sigma.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            });
        }
        Err(bad())
    }
}

impl fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderSpec::Phoc => f.write_str("phoc"),
            ProviderSpec::NoisyPhoc { sigma, seed } => write!(f, "phoc-noisy:{sigma}:{seed}"),
            ProviderSpec::Store(path) => write!(f, "store:{}", path.display()),
        }
    }
}

/// Embeddings of every document content word, projected by `pca` when
/// given. These are the training samples for PCA and the GMM.
pub fn word_samples(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    pca: Option<&PcaModel>,
) -> Result<Vec<Vec<f64>>> {
    let per_doc: Vec<Vec<Vec<f64>>> = corpus
        .documents
        .par_iter()
        .map(|doc| {
            doc.content_words()
                .map(|w| {
                    let e = provider.embed_word_image(&doc.doc_id, w)?;
                    match pca {
                        Some(p) => p.transform(&e.values),
                        None => Ok(e.values),
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}

/// A CSV table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| Error::format(path, e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub n_values: Vec<usize>,
    /// GMM sizes for the Fisher Vector sweep.
    pub k_values: Vec<usize>,
    /// PCA dimensions for the Fisher Vector sweep.
    pub d_w_values: Vec<usize>,
    /// Noise levels for the noise sweep; empty to skip it.
    pub sigmas: Vec<f64>,
    pub noise_seed: u64,
    pub gmm: GmmConfig,
    pub alpha: f64,
    /// Pipeline used for the proposals and question-length curves.
    pub pipeline: PipelineConfig,
    pub threshold: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            n_values: vec![1, 2, 5, 10, 25, 100],
            k_values: vec![2, 4, 8],
            d_w_values: vec![32],
            sigmas: vec![0.0, 0.05, 0.2, 0.5],
            noise_seed: 0,
            gmm: GmmConfig::default(),
            alpha: 0.5,
            pipeline: PipelineConfig::default(),
            threshold: crate::eval::DEFAULT_THRESHOLD,
        }
    }
}

/// Named CSV curves, written under `curves/`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ablation {
    pub curves: BTreeMap<String, Table>,
}

impl Ablation {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref().join("curves");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        self.curves
            .iter()
            .map(|(name, table)| {
                let path = dir.join(format!("{name}.csv"));
                table.write(&path)?;
                Ok(path)
            })
            .collect()
    }
}

fn ranks(results: &[Result<RetrievalResult>], questions: &[Question]) -> Vec<Option<usize>> {
    results
        .iter()
        .zip(questions)
        .filter(|(_, q)| q.is_labeled())
        .map(|(r, q)| r.as_ref().ok().and_then(|r| target_rank(r, q)))
        .collect()
}

/// Percentage of `ranks` at or above rank `n`.
pub fn hit_rate(ranks: &[Option<usize>], n: usize) -> f64 {
    percent(ranks.iter().filter(|r| r.is_some_and(|r| r <= n)).count(), ranks.len())
}

/// Target ranks of every labeled question under one retriever stage.
pub fn retriever_ranks(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    stage: &StageConfig,
) -> Result<Vec<Option<usize>>> {
    let index = build_index(&corpus.documents, provider, stage)?;
    let config = PipelineConfig {
        retriever: stage.clone(),
        ..PipelineConfig::default()
    };
    Ok(ranks(&rank_all(corpus, &index, provider, &config)?, &corpus.questions))
}

/// Target ranks of every labeled question under the TF–IDF baseline.
pub fn tfidf_ranks(corpus: &Corpus) -> Result<Vec<Option<usize>>> {
    let index = TfIdfIndex::build(&corpus.documents)?;
    let n = index.len().max(1);
    let results: Vec<Result<RetrievalResult>> = corpus.questions.par_iter().map(|q| index.retrieve(q, n)).collect();
    Ok(ranks(&results, &corpus.questions))
}

/// Target-in-proposals and snippet accuracy as the number of proposals
/// grows, plus accuracy by question length at the configured proposal
/// count.
fn proposal_curves(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    config: &AblationConfig,
) -> Result<(Table, Table)> {
    let pipeline = &config.pipeline;
    let index = build_index(&corpus.documents, provider, &pipeline.retriever)?;
    let rankings = rank_all(corpus, &index, provider, pipeline)?;
    let encoder = Encoder::new(provider, &pipeline.snippet);
    let encoded = encode_corpus(corpus, &encoder)?;
    let lookup: BTreeMap<&str, &EncodedDocument<'_>> = encoded.iter().map(|e| (e.doc.doc_id.as_str(), e)).collect();
    let labeled: Vec<(&Question, &Result<RetrievalResult>)> = corpus
        .questions
        .iter()
        .zip(&rankings)
        .filter(|(q, _)| q.is_labeled())
        .collect();
    let rank_list: Vec<Option<usize>> = labeled
        .iter()
        .map(|(q, r)| r.as_ref().ok().and_then(|r| target_rank(r, q)))
        .collect();

    let judge_at = |n: usize| -> Vec<bool> {
        labeled
            .par_iter()
            .map(|(q, r)| judge_question(q, r, &lookup, &encoder, pipeline, n, config.threshold).correct)
            .collect()
    };

    let mut topn = Table::new(&["n", "target_in_proposals", "snippet_accuracy"]);
    for &n in &config.n_values {
        let correct = judge_at(n).iter().filter(|&&c| c).count();
        topn.push(vec![
            n.to_string(),
            hit_rate(&rank_list, n).to_string(),
            percent(correct, labeled.len()).to_string(),
        ]);
    }

    let correct = judge_at(pipeline.n);
    let mut by_len: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for (((q, _), rank), ok) in labeled.iter().zip(&rank_list).zip(&correct) {
        let e = by_len.entry(q.content_tokens().count()).or_default();
        e.0 += 1;
        e.1 += usize::from(rank.is_some_and(|r| r <= pipeline.n));
        e.2 += usize::from(*ok);
    }
    let mut lengths = Table::new(&["content_words", "questions", "target_in_proposals", "snippet_accuracy"]);
    for (len, (count, hits, ok)) in by_len {
        lengths.push(vec![
            len.to_string(),
            count.to_string(),
            percent(hits, count).to_string(),
            percent(ok, count).to_string(),
        ]);
    }
    Ok((topn, lengths))
}

/// Runs every sweep over `corpus`:
///
/// * `topn`: target-in-proposals and snippet accuracy against the number
///   of proposals;
/// * `question_length`: accuracy by number of question content words;
/// * `schemes`: top-N accuracy of SUM and of Fisher Vectors over the
///   (D_w, K) grid, with and without power normalization;
/// * `power_norm`: the same Fisher Vector results paired by K;
/// * `noise`: recognition-free against TF–IDF top-N accuracy as noise is
///   added to word-image embeddings.
pub fn run_ablation(corpus: &Corpus, provider: &dyn EmbeddingProvider, config: &AblationConfig) -> Result<Ablation> {
    if config.n_values.is_empty() {
        return Err(Error::InvalidArgument("at least one proposal count is needed".into()));
    }
    let n = config.pipeline.n;
    let mut curves = BTreeMap::new();
    let (topn_table, lengths) = proposal_curves(corpus, provider, config)?;
    curves.insert("topn".to_string(), topn_table);
    curves.insert("question_length".to_string(), lengths);

    let top_cols: Vec<String> = config.n_values.iter().map(|n| format!("top{n}")).collect();
    let mut header = vec!["scheme", "d_w", "k", "dim", "power_norm"];
    header.extend(top_cols.iter().map(String::as_str));
    let mut schemes = Table::new(&header);
    let top_row = |ranks: &[Option<usize>]| -> Vec<String> {
        config
            .n_values
            .iter()
            .map(|&n| hit_rate(ranks, n).to_string())
            .collect()
    };

    let sum_ranks = retriever_ranks(corpus, provider, &StageConfig::sum())?;
    let mut row = vec![
        "sum".into(),
        String::new(),
        String::new(),
        provider.dim().to_string(),
        String::new(),
    ];
    row.extend(top_row(&sum_ranks));
    schemes.push(row);

    let topn_label = format!("top{n}");
    let mut power = Table::new(&[
        "d_w",
        "k",
        "fv_dim",
        &format!("{topn_label}_power_norm"),
        &format!("{topn_label}_no_power_norm"),
    ]);
    let raw = word_samples(corpus, provider, None)?;
    for &d_w in &config.d_w_values {
        let pca = Arc::new(fit_pca(&raw, d_w)?);
        let projected = pca.transform_batch(&raw)?;
        for &k in &config.k_values {
            let gmm = Arc::new(fit_gmm(&projected, k, &config.gmm)?);
            let mut pair = Vec::new();
            for power_norm in [true, false] {
                let fv = FisherConfig {
                    alpha: config.alpha,
                    power_norm,
                    ..FisherConfig::new(Arc::clone(&gmm))
                };
                let dim = fv.output_dim();
                let stage = StageConfig::new(Some(Arc::clone(&pca)), AggregateConfig::Fisher(fv));
                let r = retriever_ranks(corpus, provider, &stage)?;
                let mut row = vec![
                    "fv".into(),
                    d_w.to_string(),
                    k.to_string(),
                    dim.to_string(),
                    power_norm.to_string(),
                ];
                row.extend(top_row(&r));
                schemes.push(row);
                pair.push((dim, hit_rate(&r, n)));
            }
            power.push(vec![
                d_w.to_string(),
                k.to_string(),
                pair[0].0.to_string(),
                pair[0].1.to_string(),
                pair[1].1.to_string(),
            ]);
        }
    }
    curves.insert("schemes".to_string(), schemes);
    curves.insert("power_norm".to_string(), power);

    if !config.sigmas.is_empty() {
        let tfidf = tfidf_ranks(corpus)?;
        let mut noise = Table::new(&[
            "sigma",
            &format!("{topn_label}_recognition_free"),
            &format!("{topn_label}_tfidf"),
        ]);
        for &sigma in &config.sigmas {
            let noisy = NoisyPhocEmbedder::new(PhocEmbedder::default(), sigma, config.noise_seed)?;
            let r = retriever_ranks(corpus, &noisy, &config.pipeline.retriever)?;
            noise.push(vec![
                sigma.to_string(),
                hit_rate(&r, n).to_string(),
                hit_rate(&tfidf, n).to_string(),
            ]);
        }
        curves.insert("noise".to_string(), noise);
    }
    Ok(Ablation { curves })
}
