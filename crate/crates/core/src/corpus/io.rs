use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::geometry::Rect;
use super::model::{Document, Question, QuestionToken, TextLine, WordToken};
use super::text::{normalize_token, tokenize};
use super::Corpus;
use crate::error::{Error, Result};

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const QUESTIONS_FILE: &str = "questions.jsonl";

type Extra = BTreeMap<String, Value>;

#[derive(Debug, Serialize, Deserialize)]
struct PageRecord {
    w: i64,
    h: i64,
    #[serde(flatten, skip_serializing)]
    extra: Extra,
}

#[derive(Debug, Serialize, Deserialize)]
struct WordRecord {
    id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(rename = "box")]
    bbox: Rect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stop: Option<bool>,
    /// Optional explicit line reference; must agree with the enclosing line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(flatten, skip_serializing)]
    extra: Extra,
}

#[derive(Debug, Serialize, Deserialize)]
struct LineRecord {
    #[serde(rename = "box")]
    bbox: Rect,
    words: Vec<WordRecord>,
    #[serde(flatten, skip_serializing)]
    extra: Extra,
}

#[derive(Debug, Serialize, Deserialize)]
struct DocumentRecord {
    doc_id: String,
    page: PageRecord,
    lines: Vec<LineRecord>,
    #[serde(flatten, skip_serializing)]
    extra: Extra,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnswerRecord {
    doc_id: String,
    word_ids: Vec<u32>,
    #[serde(flatten, skip_serializing)]
    extra: Extra,
}

#[derive(Debug, Serialize, Deserialize)]
struct QuestionRecord {
    question_id: String,
    text: String,
    #[serde(default)]
    answers: Vec<AnswerRecord>,
    #[serde(flatten, skip_serializing)]
    extra: Extra,
}

/// Collects unknown field names per file so each is reported once.
#[derive(Default)]
struct UnknownFields(BTreeSet<String>);

impl UnknownFields {
    fn note(&mut self, scope: &str, extra: &Extra) {
        for key in extra.keys() {
            self.0.insert(format!("{scope}.{key}"));
        }
    }

    fn report(self, path: &Path) {
        for field in self.0 {
            log::warn!("{}: ignoring unknown field `{field}`", path.display());
        }
    }
}

fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(&line);
        let record = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let field = e.path().to_string();
            Error::Record {
                file: path.to_path_buf(),
                line: i + 1,
                field,
                message: e.into_inner().to_string(),
            }
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

fn record_error(path: &Path, line: usize, field: &str, err: Error) -> Error {
    Error::Record {
        file: path.to_path_buf(),
        line,
        field: field.to_string(),
        message: err.to_string(),
    }
}

fn document_from_record(rec: DocumentRecord, unknown: &mut UnknownFields) -> Result<Document> {
    unknown.note("document", &rec.extra);
    unknown.note("page", &rec.page.extra);
    let mut lines = Vec::with_capacity(rec.lines.len());
    let mut words = Vec::new();
    let num_lines = rec.lines.len();
    for (line_index, line) in rec.lines.into_iter().enumerate() {
        unknown.note("line", &line.extra);
        let mut word_ids = Vec::with_capacity(line.words.len());
        for w in line.words {
            unknown.note("word", &w.extra);
            let declared = w.line.unwrap_or(line_index);
            if declared >= num_lines {
                return Err(Error::LineIndexOutOfRange {
                    doc_id: rec.doc_id.clone(),
                    word_id: w.id,
                    line_index: declared,
                    num_lines,
                });
            }
            if declared != line_index {
                return Err(Error::Corpus(format!(
                    "document {}: word {} declares line {declared} but is nested in line {line_index}",
                    rec.doc_id, w.id
                )));
            }
            let text = w.text.map(|t| normalize_token(&t)).filter(|t| !t.is_empty());
            word_ids.push(w.id);
            words.push(WordToken {
                word_id: w.id,
                text,
                bbox: w.bbox,
                line_index,
                stop_word: w.stop,
            });
        }
        lines.push(TextLine {
            line_index,
            bbox: line.bbox,
            word_ids,
        });
    }
    let doc = Document {
        doc_id: rec.doc_id,
        page_size: (rec.page.w, rec.page.h),
        lines,
        words,
    };
    doc.validate()?;
    Ok(doc)
}

fn question_from_record(
    rec: QuestionRecord,
    documents: &[Document],
    unknown: &mut UnknownFields,
) -> std::result::Result<Question, (String, Error)> {
    unknown.note("question", &rec.extra);
    let tokens: Vec<QuestionToken> = tokenize(&rec.text)
        .into_iter()
        .map(|text| QuestionToken { text, stop_word: false })
        .collect();
    if tokens.is_empty() {
        return Err((
            "text".into(),
            Error::Corpus(format!("question {} has no tokens", rec.question_id)),
        ));
    }
    let mut answers = Vec::with_capacity(rec.answers.len());
    for (i, a) in rec.answers.into_iter().enumerate() {
        unknown.note("answer", &a.extra);
        let doc = documents
            .binary_search_by(|d| d.doc_id.as_str().cmp(&a.doc_id))
            .map(|idx| &documents[idx])
            .map_err(|_| (format!("answers[{i}].doc_id"), Error::UnknownDocument(a.doc_id.clone())))?;
        let gt = doc
            .derive_ground_truth_boxes(&a.word_ids)
            .map_err(|e| (format!("answers[{i}].word_ids"), e))?;
        answers.push(gt);
    }
    Ok(Question {
        question_id: rec.question_id,
        text: rec.text,
        tokens,
        answers,
    })
}

/// Loads `documents.jsonl` and (when present) `questions.jsonl` from `dir`.
///
/// Documents are validated and sorted by id; ground-truth boxes are derived
/// for every labeled answer.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let doc_path = dir.join(DOCUMENTS_FILE);
    let mut unknown = UnknownFields::default();
    let mut documents = Vec::new();
    for (line, rec) in read_records::<DocumentRecord>(&doc_path)? {
        let doc = document_from_record(rec, &mut unknown).map_err(|e| record_error(&doc_path, line, "lines", e))?;
        documents.push(doc);
    }
    unknown.report(&doc_path);
    documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    if let Some(pair) = documents.windows(2).find(|p| p[0].doc_id == p[1].doc_id) {
        return Err(Error::Corpus(format!("duplicate document id {}", pair[0].doc_id)));
    }

    let q_path = dir.join(QUESTIONS_FILE);
    let mut questions = Vec::new();
    if q_path.exists() {
        let mut unknown = UnknownFields::default();
        for (line, rec) in read_records::<QuestionRecord>(&q_path)? {
            let q = question_from_record(rec, &documents, &mut unknown)
                .map_err(|(field, e)| record_error(&q_path, line, &field, e))?;
            questions.push(q);
        }
        unknown.report(&q_path);
    } else {
        log::warn!("{} not found; loading documents only", q_path.display());
    }
    Ok(Corpus { documents, questions })
}

fn document_record(doc: &Document) -> DocumentRecord {
    DocumentRecord {
        doc_id: doc.doc_id.clone(),
        page: PageRecord {
            w: doc.page_size.0,
            h: doc.page_size.1,
            extra: Extra::new(),
        },
        lines: doc
            .lines
            .iter()
            .map(|line| LineRecord {
                bbox: line.bbox,
                words: line
                    .word_ids
                    .iter()
                    .filter_map(|&id| doc.word(id))
                    .map(|w| WordRecord {
                        id: w.word_id,
                        text: w.text.clone(),
                        bbox: w.bbox,
                        stop: w.stop_word,
                        line: None,
                        extra: Extra::new(),
                    })
                    .collect(),
                extra: Extra::new(),
            })
            .collect(),
        extra: Extra::new(),
    }
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the corpus as `documents.jsonl` and `questions.jsonl` under `dir`,
/// creating the directory if needed. Output is deterministic.
pub fn save_corpus(dir: impl AsRef<Path>, corpus: &Corpus) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let doc_path = dir.join(DOCUMENTS_FILE);
    write_jsonl(&doc_path, corpus.documents.iter().map(document_record))?;
    let q_path = dir.join(QUESTIONS_FILE);
    write_jsonl(
        &q_path,
        corpus.questions.iter().map(|q| QuestionRecord {
            question_id: q.question_id.clone(),
            text: q.text.clone(),
            answers: q
                .answers
                .iter()
                .map(|a| AnswerRecord {
                    doc_id: a.doc_id.clone(),
                    word_ids: a.answer_word_ids.clone(),
                    extra: Extra::new(),
                })
                .collect(),
            extra: Extra::new(),
        }),
    )?;
    Ok(vec![doc_path, q_path])
}
