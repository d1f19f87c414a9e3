use std::collections::{BTreeMap, HashMap};

use super::search::{rank_documents, RankedDocument, RetrievalResult};
use crate::corpus::{Document, Question};
use crate::error::{Error, Result};

/// Bag-of-words TF–IDF retriever over transcribed documents.
///
/// Weights are `tf(t, d) · ln(M / df(t))`; documents are ranked by cosine
/// similarity against the question's weighted term vector.
#[derive(Debug, Clone)]
pub struct TfIdfIndex {
    doc_ids: Vec<String>,
    idf: HashMap<String, f64>,
    /// Sparse weight vectors, one per document.
    weights: Vec<BTreeMap<String, f64>>,
    norms: Vec<f64>,
}

impl TfIdfIndex {
    pub fn build(documents: &[Document]) -> Result<Self> {
        let mut counts = Vec::with_capacity(documents.len());
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in documents {
            let mut tf: BTreeMap<String, f64> = BTreeMap::new();
            for w in doc.content_words() {
                let text = w.text.as_deref().ok_or(Error::MissingTranscription {
                    doc_id: doc.doc_id.clone(),
                    word_id: w.word_id,
                })?;
                *tf.entry(text.to_owned()).or_default() += 1.0;
            }
            for term in tf.keys() {
                *df.entry(term.clone()).or_default() += 1;
            }
            counts.push(tf);
        }
        let m = documents.len() as f64;
        let idf: HashMap<String, f64> = df.into_iter().map(|(t, n)| (t, (m / n as f64).ln())).collect();
        let weights: Vec<BTreeMap<String, f64>> = counts
            .into_iter()
            .map(|tf| {
                tf.into_iter()
                    .map(|(t, c)| {
                        let w = c * idf[&t];
                        (t, w)
                    })
                    .collect()
            })
            .collect();
        let norms = weights
            .iter()
            .map(|w| w.values().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        Ok(TfIdfIndex {
            doc_ids: documents.iter().map(|d| d.doc_id.clone()).collect(),
            idf,
            weights,
            norms,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// Inverse document frequency of `term`, `None` if no document has it.
    pub fn idf(&self, term: &str) -> Option<f64> {
        self.idf.get(term).copied()
    }

    /// Top-`n` documents for the question's content tokens. Terms absent
    /// from every document are ignored.
    pub fn retrieve(&self, question: &Question, n: usize) -> Result<RetrievalResult> {
        if n == 0 {
            return Err(Error::InvalidArgument("number of proposals must be at least 1".into()));
        }
        let mut query: BTreeMap<&str, f64> = BTreeMap::new();
        for token in question.content_tokens() {
            if let Some(&idf) = self.idf.get(token) {
                *query.entry(token).or_default() += idf;
            }
        }
        let q_norm = query.values().map(|x| x * x).sum::<f64>().sqrt();
        if query.is_empty() {
            log::warn!(
                "question {} shares no terms with the collection; abstaining",
                question.question_id
            );
            return Ok(RetrievalResult::abstain(n));
        }
        let scored = self
            .doc_ids
            .iter()
            .zip(&self.weights)
            .zip(&self.norms)
            .map(|((id, w), &d_norm)| {
                let dot: f64 = query.iter().filter_map(|(t, q)| w.get(*t).map(|d| q * d)).sum();
                let score = if q_norm == 0.0 || d_norm == 0.0 {
                    0.0
                } else {
                    dot / (q_norm * d_norm)
                };
                RankedDocument {
                    doc_id: id.clone(),
                    score,
                }
            })
            .collect();
        Ok(rank_documents(scored, n))
    }
}
