//! Document retrieval and answer-snippet extraction.
//!
//! Each stage (document retrieval, snippet extraction) owns a
//! [`StageConfig`]: an optional PCA projection followed by an aggregation
//! scheme. The two stages may be configured independently.

mod index;
mod search;
mod tfidf;

pub use index::{build_index, DocumentIndex};
pub use search::{
    answer_question, extract_answer, retrieve_documents, AnswerOutcome, AnswerResult, EncodedDocument, PipelineConfig,
    RankedDocument, RetrievalResult, ScoredSnippet,
};
pub(crate) use search::{encode_corpus, extract_from_encoded};
pub use tfidf::TfIdfIndex;

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::aggregate::{AggregateConfig, AggregateVector};
use crate::corpus::{Document, Question};
use crate::embed::{Embedding, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::pca::PcaModel;

#[derive(Debug, Clone, PartialEq)]
pub struct StageConfig {
    pub pca: Option<Arc<PcaModel>>,
    pub aggregate: AggregateConfig,
}

impl StageConfig {
    pub fn new(pca: Option<Arc<PcaModel>>, aggregate: AggregateConfig) -> Self {
        StageConfig { pca, aggregate }
    }

    /// Raw embeddings, summed.
    pub fn sum() -> Self {
        StageConfig {
            pca: None,
            aggregate: AggregateConfig::Sum,
        }
    }

    /// Dimension of a single (projected) word vector.
    pub fn word_dim(&self, provider_dim: usize) -> usize {
        self.pca.as_ref().map_or(provider_dim, |p| p.output_dim)
    }

    pub fn output_dim(&self, provider_dim: usize) -> usize {
        self.aggregate.output_dim(self.word_dim(provider_dim))
    }

    /// Checks that provider, PCA and aggregation dimensions line up.
    pub fn validate(&self, provider: &dyn EmbeddingProvider) -> Result<()> {
        if let Some(pca) = &self.pca {
            if pca.input_dim != provider.dim() {
                return Err(Error::DimensionMismatch {
                    expected: provider.dim(),
                    actual: pca.input_dim,
                });
            }
        }
        if let AggregateConfig::Fisher(fv) = &self.aggregate {
            fv.validate()?;
            let word_dim = self.word_dim(provider.dim());
            if fv.gmm.dim != word_dim {
                return Err(Error::DimensionMismatch {
                    expected: word_dim,
                    actual: fv.gmm.dim,
                });
            }
        }
        Ok(())
    }

    fn project(&self, e: Embedding) -> Result<Vec<f64>> {
        match &self.pca {
            Some(pca) => pca.transform(&e.values),
            None => Ok(e.values),
        }
    }

    /// Hash of everything that determines the vectors this stage produces.
    pub fn fingerprint(&self, provider: &dyn EmbeddingProvider) -> String {
        let mut h = Sha256::new();
        h.update(provider.fingerprint().as_bytes());
        h.update(b"|pca=");
        match &self.pca {
            Some(pca) => h.update(Sha256::digest(
                serde_json::to_vec(pca.as_ref()).expect("PCA serializes"),
            )),
            None => h.update(b"none"),
        }
        h.update(b"|agg=");
        h.update(self.aggregate.describe().as_bytes());
        hex::encode(h.finalize())
    }
}

/// Turns questions and documents into stage vectors.
#[derive(Clone, Copy)]
pub struct Encoder<'a> {
    pub provider: &'a dyn EmbeddingProvider,
    pub stage: &'a StageConfig,
}

impl<'a> Encoder<'a> {
    pub fn new(provider: &'a dyn EmbeddingProvider, stage: &'a StageConfig) -> Self {
        Encoder { provider, stage }
    }

    pub fn word_dim(&self) -> usize {
        self.stage.word_dim(self.provider.dim())
    }

    pub fn output_dim(&self) -> usize {
        self.stage.output_dim(self.provider.dim())
    }

    /// Projected embeddings of the question's content tokens. Tokens with
    /// no embeddable characters are skipped.
    pub fn question_words(&self, question: &Question) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::new();
        for token in question.content_tokens() {
            match self.provider.embed_text(token) {
                Ok(e) => out.push(self.stage.project(e)?),
                Err(Error::Unembeddable(t)) => {
                    log::warn!("question {}: skipping unembeddable token {t:?}", question.question_id)
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    /// The question vector, or `None` when the question has no usable
    /// content words or its aggregate is the zero vector.
    pub fn question_vector(&self, question: &Question) -> Result<Option<AggregateVector>> {
        let words = self.question_words(question)?;
        if words.is_empty() {
            return Ok(None);
        }
        let v = self.stage.aggregate.aggregate(&words)?;
        Ok(if v.values.iter().all(|&x| x == 0.0) {
            None
        } else {
            Some(v)
        })
    }

    /// Projected embeddings of a document's content words with their line
    /// indices, in reading order.
    pub fn document_words(&self, doc: &Document) -> Result<Vec<(usize, Vec<f64>)>> {
        doc.content_words()
            .map(|w| {
                let e = self.provider.embed_word_image(&doc.doc_id, w)?;
                Ok((w.line_index, self.stage.project(e)?))
            })
            .collect()
    }

    /// Aggregate over all content words; the zero vector when there are none.
    pub fn document_vector(&self, doc: &Document) -> Result<AggregateVector> {
        let words: Vec<Vec<f64>> = self.document_words(doc)?.into_iter().map(|(_, v)| v).collect();
        self.stage.aggregate.aggregate_or_zero(&words, self.word_dim())
    }
}
