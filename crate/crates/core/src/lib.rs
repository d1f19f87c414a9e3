//! Recognition-free question answering over collections of segmented
//! document images.
//!
//! A question is answered in two stages. The document retriever embeds the
//! content words of the question and of every document into a joint
//! word-embedding space, aggregates them into fixed-size vectors (plain sums
//! or Fisher Vectors over a diagonal GMM) and ranks documents by cosine
//! similarity. The snippet extractor then slides a window over the text lines
//! of the top proposals and returns the best-matching snippet. Predictions are
//! judged with the Double Inclusion Score against small and large
//! ground-truth boxes.
//!
//! ```no_run
//! use docsnip::corpus::{load_corpus, StopWords};
//! use docsnip::embed::PhocEmbedder;
//! use docsnip::retrieve::{answer_question, build_index, PipelineConfig};
//!
//! # fn main() -> docsnip::Result<()> {
//! let mut corpus = load_corpus("data/")?;
//! corpus.mark_stop_words(&StopWords::english())?;
//! let provider = PhocEmbedder::default();
//! let config = PipelineConfig::default();
//! let index = build_index(&corpus.documents, &provider, &config.retriever)?;
//! let outcome = answer_question(&corpus, &index, &corpus.questions[0], &provider, &config)?;
//! println!("{:?}", outcome.answer.map(|a| a.snippet));
//! # Ok(())
//! # }
//! ```

pub mod aggregate;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gmm;
pub mod pca;
pub mod retrieve;
pub mod syngen;

mod binio;
mod linalg;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
