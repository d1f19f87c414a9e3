use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::geometry::Rect;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordToken {
    pub word_id: u32,
    /// Normalized transcription; absent when only image embeddings exist.
    pub text: Option<String>,
    pub bbox: Rect,
    pub line_index: usize,
    /// `None` until classified, either by the corpus file or by
    /// [`Document::mark_stop_words`].
    pub stop_word: Option<bool>,
}

impl WordToken {
    pub fn is_stop_word(&self) -> bool {
        self.stop_word.unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextLine {
    pub line_index: usize,
    pub bbox: Rect,
    pub word_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub page_size: (i64, i64),
    pub lines: Vec<TextLine>,
    /// Words in reading order (line by line).
    pub words: Vec<WordToken>,
}

impl Document {
    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn word(&self, word_id: u32) -> Option<&WordToken> {
        self.words.iter().find(|w| w.word_id == word_id)
    }

    fn word_or_err(&self, word_id: u32) -> Result<&WordToken> {
        self.word(word_id).ok_or_else(|| Error::UnknownWord {
            doc_id: self.doc_id.clone(),
            word_id,
        })
    }

    /// Words on lines `start..=end`, in reading order.
    pub fn words_in_lines(&self, start: usize, end: usize) -> impl Iterator<Item = &WordToken> {
        self.words
            .iter()
            .filter(move |w| w.line_index >= start && w.line_index <= end)
    }

    /// Non-stop words of the whole document.
    pub fn content_words(&self) -> impl Iterator<Item = &WordToken> {
        self.words.iter().filter(|w| !w.is_stop_word())
    }

    /// Checks every structural invariant of the data model.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Corpus(format!("document {}: {msg}", self.doc_id)));
        let (pw, ph) = self.page_size;
        if pw <= 0 || ph <= 0 {
            return bad(format!("page size {pw}x{ph} must be positive"));
        }
        let page = Rect::new(0, 0, pw, ph)?;
        let mut seen = BTreeSet::new();
        for word in &self.words {
            if !seen.insert(word.word_id) {
                return bad(format!("duplicate word id {}", word.word_id));
            }
            if word.line_index >= self.lines.len() {
                return Err(Error::LineIndexOutOfRange {
                    doc_id: self.doc_id.clone(),
                    word_id: word.word_id,
                    line_index: word.line_index,
                    num_lines: self.lines.len(),
                });
            }
            if !page.contains(&word.bbox) {
                return bad(format!("word {} lies outside the page", word.word_id));
            }
        }
        let mut prev_y = i64::MIN;
        let mut member_count = 0;
        for (i, line) in self.lines.iter().enumerate() {
            if line.line_index != i {
                return bad(format!("line {i} carries index {}", line.line_index));
            }
            if line.word_ids.is_empty() {
                return bad(format!("line {i} has no words"));
            }
            if line.bbox.y < prev_y {
                return bad(format!("line {i} is above line {}", i - 1));
            }
            prev_y = line.bbox.y;
            for &id in &line.word_ids {
                let word = self.word_or_err(id)?;
                if word.line_index != i {
                    return bad(format!(
                        "word {id} is listed on line {i} but records line {}",
                        word.line_index
                    ));
                }
                if !line.bbox.contains(&word.bbox) {
                    return bad(format!("line {i} box does not contain word {id}"));
                }
                member_count += 1;
            }
        }
        if member_count != self.words.len() {
            return bad("every word must belong to exactly one line".to_string());
        }
        Ok(())
    }

    /// Sets the stop-word flag of every word whose text satisfies
    /// `is_stop`. Flags supplied by the corpus file are kept.
    pub fn mark_stop_words(&mut self, is_stop: impl Fn(&str) -> bool) -> Result<()> {
        for word in &mut self.words {
            match (&word.text, word.stop_word) {
                (Some(text), flag) => word.stop_word = Some(flag.unwrap_or(false) || is_stop(text)),
                (None, Some(_)) => {}
                (None, None) => {
                    return Err(Error::Unclassifiable {
                        doc_id: self.doc_id.clone(),
                        word_id: word.word_id,
                    })
                }
            }
        }
        Ok(())
    }

    /// Derives the small box (tight box around the answer words) and the
    /// large box (answer lines plus one line above and below, clamped to
    /// the document).
    pub fn derive_ground_truth_boxes(&self, answer_word_ids: &[u32]) -> Result<GroundTruthAnswer> {
        if answer_word_ids.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "answer in document {} has no words",
                self.doc_id
            )));
        }
        let words = answer_word_ids
            .iter()
            .map(|&id| self.word_or_err(id))
            .collect::<Result<Vec<_>>>()?;
        let sb = Rect::union_all(words.iter().map(|w| &w.bbox)).expect("non-empty answer");
        let answer_lines: BTreeSet<usize> = words.iter().map(|w| w.line_index).collect();
        let first = answer_lines.first().copied().unwrap_or(0).saturating_sub(1);
        let last = (answer_lines.last().copied().unwrap_or(0) + 1).min(self.lines.len() - 1);
        let lb = Rect::union_all(self.lines[first..=last].iter().map(|l| &l.bbox)).expect("line range is non-empty");
        Ok(GroundTruthAnswer {
            doc_id: self.doc_id.clone(),
            answer_word_ids: answer_word_ids.to_vec(),
            sb,
            lb,
            answer_lines,
        })
    }

    /// Candidate snippets of `window` contiguous lines every `step` lines,
    /// top to bottom. A document shorter than the window yields one snippet
    /// covering all lines. A stride longer than the window is shortened to
    /// the window so no line is skipped, and when the stride leaves trailing
    /// lines uncovered a final window aligned to the last line is appended.
    pub fn enumerate_snippets(&self, window: usize, step: usize) -> Result<Vec<Snippet>> {
        if window == 0 || step == 0 {
            return Err(Error::InvalidArgument(format!(
                "snippet window ({window}) and step ({step}) must be at least 1"
            )));
        }
        let l = self.lines.len();
        if l == 0 {
            return Err(Error::Corpus(format!("document {} has no lines", self.doc_id)));
        }
        if l <= window {
            return Ok(vec![self.snippet(0, l - 1)?]);
        }
        let mut out: Vec<Snippet> = (0..=l - window)
            .step_by(step.min(window))
            .map(|start| self.snippet(start, start + window - 1))
            .collect::<Result<_>>()?;
        if out.last().map(|s| s.end_line) != Some(l - 1) {
            out.push(self.snippet(l - window, l - 1)?);
        }
        Ok(out)
    }

    /// The snippet spanning lines `start..=end`.
    pub fn snippet(&self, start: usize, end: usize) -> Result<Snippet> {
        if start > end || end >= self.lines.len() {
            return Err(Error::InvalidArgument(format!(
                "line range {start}..={end} invalid for document {} with {} lines",
                self.doc_id,
                self.lines.len()
            )));
        }
        let bbox = Rect::union_all(self.lines[start..=end].iter().map(|l| &l.bbox)).expect("non-empty range");
        Ok(Snippet {
            doc_id: self.doc_id.clone(),
            start_line: start,
            end_line: end,
            bbox,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthAnswer {
    pub doc_id: String,
    pub answer_word_ids: Vec<u32>,
    pub sb: Rect,
    pub lb: Rect,
    pub answer_lines: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionToken {
    pub text: String,
    pub stop_word: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    /// Raw question text as supplied.
    pub text: String,
    pub tokens: Vec<QuestionToken>,
    /// Empty for unlabeled queries.
    pub answers: Vec<GroundTruthAnswer>,
}

impl Question {
    /// An unlabeled question built from free text.
    pub fn from_text(question_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = super::text::tokenize(&text)
            .into_iter()
            .map(|t| QuestionToken {
                text: t,
                stop_word: false,
            })
            .collect();
        Question {
            question_id: question_id.into(),
            text,
            tokens,
            answers: Vec::new(),
        }
    }

    pub fn mark_stop_words(&mut self, is_stop: impl Fn(&str) -> bool) {
        for tok in &mut self.tokens {
            tok.stop_word = tok.stop_word || is_stop(&tok.text);
        }
    }

    pub fn content_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().filter(|t| !t.stop_word).map(|t| t.text.as_str())
    }

    pub fn is_labeled(&self) -> bool {
        !self.answers.is_empty()
    }
}

/// A horizontal slice of contiguous text lines of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub doc_id: String,
    pub start_line: usize,
    /// Inclusive.
    pub end_line: usize,
    pub bbox: Rect,
}

impl Snippet {
    pub fn lines(&self) -> std::ops::RangeInclusive<usize> {
        self.start_line..=self.end_line
    }
}
