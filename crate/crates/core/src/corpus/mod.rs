//! Document-collection data model, corpus ingestion, stop-word marking and
//! ground-truth box derivation.

mod geometry;
mod io;
mod model;
mod text;

pub use geometry::Rect;
pub use io::{load_corpus, save_corpus, DOCUMENTS_FILE, QUESTIONS_FILE};
pub use model::{Document, GroundTruthAnswer, Question, QuestionToken, Snippet, TextLine, WordToken};
pub use text::{normalize_token, tokenize, StopWords};

use crate::error::Result;

/// A loaded collection: documents sorted by id plus the questions asked
/// over them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub questions: Vec<Question>,
}

impl Corpus {
    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents
            .binary_search_by(|d| d.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| &self.documents[i])
    }

    /// Marks stop words in every document and question.
    pub fn mark_stop_words(&mut self, stop_words: &StopWords) -> Result<()> {
        for doc in &mut self.documents {
            doc.mark_stop_words(stop_words.predicate())?;
        }
        for q in &mut self.questions {
            q.mark_stop_words(stop_words.predicate());
        }
        Ok(())
    }
}
