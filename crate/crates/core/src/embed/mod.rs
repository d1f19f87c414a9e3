//! Joint word-embedding contract for textual words and word images.
//!
//! [`PhocEmbedder`] and [`NoisyPhocEmbedder`] are deterministic lexical
//! embedders; [`EmbeddingStore`] serves externally computed vectors.

mod phoc;
mod store;

pub use phoc::{NoisyPhocEmbedder, PhocEmbedder, DEFAULT_CHARSET, DEFAULT_LEVELS};
pub use store::{load_embedding_store, EmbeddingStore};

use serde::{Deserialize, Serialize};

use crate::corpus::WordToken;
use crate::error::Result;
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl Embedding {
    pub fn raw(values: Vec<f64>) -> Self {
        Embedding {
            values,
            normalized: false,
        }
    }

    /// Scales `values` to unit L2 norm.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        linalg::normalize_in_place(&mut values);
        Embedding {
            values,
            normalized: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.values)
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        linalg::cosine(&self.values, &other.values)
    }
}

/// Maps textual words and word images into one vector space.
///
/// Implementations are deterministic and always return unit-norm vectors.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_text(&self, word: &str) -> Result<Embedding>;

    fn embed_word_image(&self, doc_id: &str, word: &WordToken) -> Result<Embedding>;

    /// Stable description of the provider and its parameters, used to tie
    /// indexes to the configuration that built them.
    fn fingerprint(&self) -> String;
}
