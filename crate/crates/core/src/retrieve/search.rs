use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DocumentIndex, Encoder, StageConfig};
use crate::corpus::{Corpus, Document, Question, Snippet};
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::linalg::cosine;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDocument {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    /// By descending score, ties by ascending document id.
    pub ranked: Vec<RankedDocument>,
    pub n: usize,
    /// Set when the question had no usable content words.
    pub abstained: bool,
}

impl RetrievalResult {
    pub fn abstain(n: usize) -> Self {
        RetrievalResult {
            ranked: Vec::new(),
            n,
            abstained: true,
        }
    }

    /// 1-based rank of the first document satisfying `pred`.
    pub fn rank_of(&self, mut pred: impl FnMut(&str) -> bool) -> Option<usize> {
        self.ranked.iter().position(|r| pred(&r.doc_id)).map(|p| p + 1)
    }
}

fn by_score_then_id(a: &RankedDocument, b: &RankedDocument) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Sorts scored documents and keeps the first `n`.
pub(crate) fn rank_documents(mut scored: Vec<RankedDocument>, n: usize) -> RetrievalResult {
    scored.sort_by(by_score_then_id);
    scored.truncate(n);
    RetrievalResult {
        ranked: scored,
        n,
        abstained: false,
    }
}

/// Top-`n` documents by cosine similarity between the question vector and
/// the indexed document vectors.
pub fn retrieve_documents(
    index: &DocumentIndex,
    question: &Question,
    provider: &dyn EmbeddingProvider,
    stage: &StageConfig,
    n: usize,
) -> Result<RetrievalResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("number of proposals must be at least 1".into()));
    }
    index.check_fingerprint(&stage.fingerprint(provider))?;
    let encoder = Encoder::new(provider, stage);
    let Some(q) = encoder.question_vector(question)? else {
        log::warn!("question {} has no content words; abstaining", question.question_id);
        return Ok(RetrievalResult::abstain(n));
    };
    let scored = index
        .doc_ids
        .iter()
        .zip(&index.vectors)
        .map(|(id, v)| {
            let v: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
            RankedDocument {
                doc_id: id.clone(),
                score: cosine(&q.values, &v),
            }
        })
        .collect();
    Ok(rank_documents(scored, n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSnippet {
    pub snippet: Snippet,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResult {
    pub snippet: Snippet,
    pub score: f64,
    /// Best candidates, best first, when requested.
    pub ranked_snippets: Vec<ScoredSnippet>,
}

/// A document with its content words already embedded for one stage.
#[derive(Debug, Clone)]
pub struct EncodedDocument<'a> {
    pub doc: &'a Document,
    /// `(line index, projected embedding)` per content word.
    pub words: Vec<(usize, Vec<f64>)>,
}

impl<'a> EncodedDocument<'a> {
    pub fn encode(doc: &'a Document, encoder: &Encoder<'_>) -> Result<Self> {
        Ok(EncodedDocument {
            doc,
            words: encoder.document_words(doc)?,
        })
    }
}

fn by_score_then_position(a: &ScoredSnippet, b: &ScoredSnippet) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.snippet.doc_id.cmp(&b.snippet.doc_id))
        .then_with(|| a.snippet.start_line.cmp(&b.snippet.start_line))
}

/// Scores every sliding-window snippet of every proposal and returns the
/// best one, or `None` when the question has no usable content words.
pub fn extract_answer(
    proposals: &[&Document],
    question: &Question,
    provider: &dyn EmbeddingProvider,
    stage: &StageConfig,
    window: usize,
    step: usize,
    top_k: usize,
) -> Result<Option<AnswerResult>> {
    if proposals.is_empty() {
        return Err(Error::InvalidArgument(
            "snippet extraction needs at least one proposal".into(),
        ));
    }
    stage.validate(provider)?;
    let encoder = Encoder::new(provider, stage);
    let encoded = proposals
        .iter()
        .map(|d| EncodedDocument::encode(d, &encoder))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&EncodedDocument<'_>> = encoded.iter().collect();
    extract_from_encoded(&refs, question, &encoder, window, step, top_k)
}

pub(crate) fn extract_from_encoded(
    proposals: &[&EncodedDocument<'_>],
    question: &Question,
    encoder: &Encoder<'_>,
    window: usize,
    step: usize,
    top_k: usize,
) -> Result<Option<AnswerResult>> {
    let Some(q) = encoder.question_vector(question)? else {
        return Ok(None);
    };
    let word_dim = encoder.word_dim();
    let mut candidates = Vec::new();
    for enc in proposals {
        for snippet in enc.doc.enumerate_snippets(window, step)? {
            let words: Vec<&[f64]> = enc
                .words
                .iter()
                .filter(|(line, _)| snippet.lines().contains(line))
                .map(|(_, v)| v.as_slice())
                .collect();
            let v = encoder.stage.aggregate.aggregate_or_zero(&words, word_dim)?;
            candidates.push(ScoredSnippet {
                score: cosine(&q.values, &v.values),
                snippet,
            });
        }
    }
    candidates.sort_by(by_score_then_position);
    let best = candidates
        .first()
        .cloned()
        .expect("every document has at least one snippet");
    candidates.truncate(top_k);
    Ok(Some(AnswerResult {
        snippet: best.snippet,
        score: best.score,
        ranked_snippets: candidates,
    }))
}

/// Configuration of the two-stage pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub retriever: StageConfig,
    pub snippet: StageConfig,
    pub window: usize,
    pub step: usize,
    /// Number of document proposals handed to snippet extraction.
    pub n: usize,
    /// Number of ranked snippets kept in each answer.
    pub top_k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            retriever: StageConfig::sum(),
            snippet: StageConfig::sum(),
            window: 2,
            step: 1,
            n: 5,
            top_k: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub retrieval: RetrievalResult,
    /// `None` when the pipeline abstained.
    pub answer: Option<AnswerResult>,
}

/// Retrieves `config.n` proposals and extracts the best snippet from them.
pub fn answer_question(
    corpus: &Corpus,
    index: &DocumentIndex,
    question: &Question,
    provider: &dyn EmbeddingProvider,
    config: &PipelineConfig,
) -> Result<AnswerOutcome> {
    let retrieval = retrieve_documents(index, question, provider, &config.retriever, config.n)?;
    if retrieval.abstained || retrieval.ranked.is_empty() {
        return Ok(AnswerOutcome {
            retrieval,
            answer: None,
        });
    }
    let proposals = retrieval
        .ranked
        .iter()
        .map(|r| {
            corpus
                .document(&r.doc_id)
                .ok_or_else(|| Error::UnknownDocument(r.doc_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let answer = extract_answer(
        &proposals,
        question,
        provider,
        &config.snippet,
        config.window,
        config.step,
        config.top_k,
    )?;
    Ok(AnswerOutcome { retrieval, answer })
}

/// Every document of `corpus` encoded for the snippet stage, in corpus order.
pub(crate) fn encode_corpus<'a>(corpus: &'a Corpus, encoder: &Encoder<'_>) -> Result<Vec<EncodedDocument<'a>>> {
    corpus
        .documents
        .par_iter()
        .map(|d| EncodedDocument::encode(d, encoder))
        .collect()
}
