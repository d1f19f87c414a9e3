//! Seeded synthetic corpora: passages of pseudo-words laid out as word
//! boxes, with labeled questions over a subset of the documents.
//!
//! Layout follows a handwriting-dataset recipe: each document draws a
//! character width, word boxes are `char_width · len` wide, words are
//! separated by one character width and lines by one word height. A
//! fraction of documents stretch both spacings, and the page border is the
//! inter-word spacing times a random factor.
//!
//! Every passage mixes three kinds of words: function words, words from a
//! small shared pool, and words drawn without replacement from a per-corpus
//! pool so that each appears in exactly one document. Questions are an
//! interrogative followed by content words taken from the answer's line and
//! the lines directly above and below it (never the answer itself), and
//! always contain a minimum number of document-unique words.

mod vocab;

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_token, Corpus, Document, Question, Rect, StopWords, TextLine, WordToken};
use crate::error::{Error, Result};

pub use vocab::{FILLER, INTERROGATIVES};

/// Attempts at placing one question before giving up on the document.
const MAX_QUESTION_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynGenConfig {
    pub seed: u64,
    pub num_documents: usize,
    /// Target passage length; lines are filled until it is reached.
    pub words_per_document: (usize, usize),
    pub words_per_line: (usize, usize),
    /// Pixels per character, drawn once per document.
    pub char_width: (i64, i64),
    /// Word box height as a multiple of the character width.
    pub height_ratio: f64,
    /// Fraction of documents whose spacings are stretched.
    pub spacing_variation_fraction: f64,
    pub interword_multiplier: (f64, f64),
    pub interline_multiplier: (f64, f64),
    pub border_factor: (f64, f64),
    /// Probability that a passage word is a function word.
    pub stop_word_rate: f64,
    /// Probability that a content word is document-unique.
    pub unique_word_rate: f64,
    pub common_vocabulary_size: usize,
    /// Word list to draw from instead of generated pseudo-words. The first
    /// `common_vocabulary_size` entries form the shared pool; the rest are
    /// consumed as document-unique words.
    pub vocabulary: Option<Vec<String>>,
    pub questions_per_document: usize,
    /// Overrides `questions_per_document`, spread round-robin over the
    /// non-distractor documents.
    pub total_questions: Option<usize>,
    /// Answer length in words; answers never cross a line break.
    pub answer_span_length: (usize, usize),
    /// Number of context words in a question.
    pub context_words: (usize, usize),
    /// Minimum number of document-unique words per question.
    pub min_unique_keywords: usize,
    /// Fraction of documents without questions.
    pub distractor_fraction: f64,
}

impl Default for SynGenConfig {
    fn default() -> Self {
        SynGenConfig {
            seed: 0,
            num_documents: 20,
            words_per_document: (110, 130),
            words_per_line: (5, 7),
            char_width: (12, 26),
            height_ratio: 2.0,
            spacing_variation_fraction: 0.15,
            interword_multiplier: (0.9, 2.5),
            interline_multiplier: (0.9, 1.3),
            border_factor: (1.5, 5.0),
            stop_word_rate: 0.5,
            unique_word_rate: 0.4,
            common_vocabulary_size: 300,
            vocabulary: None,
            questions_per_document: 2,
            total_questions: None,
            answer_span_length: (1, 3),
            context_words: (4, 8),
            min_unique_keywords: 2,
            distractor_fraction: 0.0,
        }
    }
}

impl SynGenConfig {
    /// The fixed benchmark: 100 documents of about 120 words, 200
    /// questions, 30% distractors.
    pub fn acceptance(seed: u64) -> Self {
        SynGenConfig {
            seed,
            num_documents: 100,
            total_questions: Some(200),
            distractor_fraction: 0.3,
            ..SynGenConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn range<T: PartialOrd + std::fmt::Debug>(name: &str, r: (T, T)) -> Result<()> {
            if r.0 > r.1 {
                return Err(Error::InvalidArgument(format!("{name} range {r:?} is empty")));
            }
            Ok(())
        }
        fn prob(name: &str, p: f64) -> Result<()> {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} must be in [0, 1], got {p}")));
            }
            Ok(())
        }
        range("words_per_document", self.words_per_document)?;
        range("words_per_line", self.words_per_line)?;
        range("char_width", self.char_width)?;
        range("interword_multiplier", self.interword_multiplier)?;
        range("interline_multiplier", self.interline_multiplier)?;
        range("border_factor", self.border_factor)?;
        range("answer_span_length", self.answer_span_length)?;
        range("context_words", self.context_words)?;
        prob("spacing_variation_fraction", self.spacing_variation_fraction)?;
        prob("stop_word_rate", self.stop_word_rate)?;
        prob("unique_word_rate", self.unique_word_rate)?;
        prob("distractor_fraction", self.distractor_fraction)?;
        if self.words_per_line.0 == 0 || self.words_per_document.0 == 0 {
            return Err(Error::InvalidArgument(
                "documents and lines need at least one word".into(),
            ));
        }
        if self.char_width.0 < 1 || self.height_ratio <= 0.0 {
            return Err(Error::InvalidArgument(
                "character width and height ratio must be positive".into(),
            ));
        }
        if self.interword_multiplier.0 <= 0.0 || self.interline_multiplier.0 <= 0.0 || self.border_factor.0 < 0.0 {
            return Err(Error::InvalidArgument("spacing multipliers must be positive".into()));
        }
        if self.answer_span_length.0 == 0 {
            return Err(Error::InvalidArgument("answers need at least one word".into()));
        }
        if self.answer_span_length.1 > self.words_per_line.0 {
            return Err(Error::InvalidArgument(format!(
                "answer spans of {} words do not fit on lines of {} words",
                self.answer_span_length.1, self.words_per_line.0
            )));
        }
        if self.common_vocabulary_size == 0 && self.unique_word_rate < 1.0 {
            return Err(Error::InvalidArgument("common vocabulary is empty".into()));
        }
        Ok(())
    }
}

/// Shared and document-unique word pools.
struct Vocabulary {
    common: Vec<String>,
    unique: std::vec::IntoIter<String>,
}

impl Vocabulary {
    fn new(config: &SynGenConfig, rng: &mut ChaCha8Rng, stop_words: &StopWords) -> Result<Self> {
        let mut words = match &config.vocabulary {
            Some(list) => {
                let mut seen = BTreeSet::new();
                list.iter()
                    .map(|w| normalize_token(w))
                    .filter(|w| !w.is_empty() && !stop_words.contains(w) && seen.insert(w.clone()))
                    .collect::<Vec<_>>()
            }
            None => {
                // Upper bound on the unique words any generation can consume.
                let budget = config.num_documents * (config.words_per_document.1 + config.words_per_line.1);
                vocab::generate_words(rng, config.common_vocabulary_size + budget, stop_words)
            }
        };
        if words.len() < config.common_vocabulary_size {
            return Err(Error::VocabularyExhausted(format!(
                "{} usable words, {} needed for the shared pool",
                words.len(),
                config.common_vocabulary_size
            )));
        }
        let unique = words.split_off(config.common_vocabulary_size);
        Ok(Vocabulary {
            common: words,
            unique: unique.into_iter(),
        })
    }

    fn next_unique(&mut self, doc_id: &str) -> Result<String> {
        self.unique
            .next()
            .ok_or_else(|| Error::VocabularyExhausted(format!("no document-unique words left for {doc_id}")))
    }
}

/// One generated document plus the words it owns exclusively.
struct Generated {
    doc: Document,
    unique_words: BTreeSet<u32>,
}

fn uniform(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.random_range(r.0..r.1)
    }
}

fn generate_document(
    doc_id: String,
    config: &SynGenConfig,
    vocab: &mut Vocabulary,
    rng: &mut ChaCha8Rng,
    stop_words: &StopWords,
) -> Result<Generated> {
    let char_w = rng.random_range(config.char_width.0..=config.char_width.1);
    let word_h = ((char_w as f64 * config.height_ratio).round() as i64).max(1);
    let (mut gap_w, mut gap_l) = (char_w as f64, word_h as f64);
    if rng.random_bool(config.spacing_variation_fraction) {
        gap_w *= uniform(rng, config.interword_multiplier);
        gap_l *= uniform(rng, config.interline_multiplier);
    }
    let gap_w = (gap_w.round() as i64).max(1);
    let gap_l = (gap_l.round() as i64).max(1);
    let border = (gap_w as f64 * uniform(rng, config.border_factor)).round() as i64;

    let target = rng.random_range(config.words_per_document.0..=config.words_per_document.1);
    let mut line_counts = Vec::new();
    let mut total = 0;
    while total < target {
        let n = rng.random_range(config.words_per_line.0..=config.words_per_line.1);
        line_counts.push(n);
        total += n;
    }

    let mut words = Vec::with_capacity(total);
    let mut lines = Vec::with_capacity(line_counts.len());
    let mut unique_words = BTreeSet::new();
    let mut page_w = 0;
    for (l, &n) in line_counts.iter().enumerate() {
        let y = border + l as i64 * (word_h + gap_l);
        let mut x = border;
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            let id = words.len() as u32;
            let text = if rng.random_bool(config.stop_word_rate) {
                FILLER.choose(rng).expect("non-empty").to_string()
            } else if vocab.common.is_empty() || rng.random_bool(config.unique_word_rate) {
                unique_words.insert(id);
                vocab.next_unique(&doc_id)?
            } else {
                vocab.common.choose(rng).expect("non-empty").clone()
            };
            let width = char_w * text.chars().count() as i64;
            let bbox = Rect::new(x, y, width, word_h)?;
            x += width + gap_w;
            ids.push(id);
            words.push(WordToken {
                word_id: id,
                stop_word: Some(stop_words.contains(&text)),
                text: Some(text),
                bbox,
                line_index: l,
            });
        }
        let bbox = Rect::union_all(words[words.len() - n..].iter().map(|w| &w.bbox)).expect("non-empty line");
        page_w = page_w.max(bbox.right());
        lines.push(TextLine {
            line_index: l,
            bbox,
            word_ids: ids,
        });
    }
    let n_lines = lines.len() as i64;
    let page_h = 2 * border + n_lines * word_h + (n_lines - 1) * gap_l;
    let doc = Document {
        doc_id,
        page_size: (page_w + border, page_h),
        lines,
        words,
    };
    doc.validate()?;
    Ok(Generated { doc, unique_words })
}

/// Builds one question over `gen.doc`, avoiding words already used as
/// answers. Returns `None` when the sampled span cannot carry a question.
fn try_question(
    gen: &Generated,
    config: &SynGenConfig,
    used: &BTreeSet<u32>,
    rng: &mut ChaCha8Rng,
) -> Option<(String, Vec<u32>)> {
    let doc = &gen.doc;
    let line = doc.lines.choose(rng)?;
    let len = rng.random_range(config.answer_span_length.0..=config.answer_span_length.1);
    if len > line.word_ids.len() {
        return None;
    }
    let start = rng.random_range(0..=line.word_ids.len() - len);
    let span = &line.word_ids[start..start + len];
    let is_content = |id: u32| !doc.words[id as usize].is_stop_word();
    if !is_content(span[0]) || !is_content(span[len - 1]) || span.iter().any(|id| used.contains(id)) {
        return None;
    }
    let (first, last) = (span[0] as usize, span[len - 1] as usize);

    // Content words outside the span, nearest line first, then by distance
    // in reading order.
    let answer_line = line.line_index;
    let mut others: Vec<((usize, usize), u32)> = doc
        .content_words()
        .filter(|w| !span.contains(&w.word_id))
        .map(|w| {
            let p = w.word_id as usize;
            let d = if p < first { first - p } else { p - last };
            ((w.line_index.abs_diff(answer_line), d), w.word_id)
        })
        .collect();
    others.sort_unstable();

    // Context comes from the answer line and its neighbours; unique keywords
    // are topped up from further away only when those lines lack them.
    let wanted = rng.random_range(config.context_words.0..=config.context_words.1);
    let near = others.iter().take_while(|((line_dist, _), _)| *line_dist <= 1).count();
    let mut context: Vec<u32> = others.iter().take(wanted.min(near)).map(|&(_, id)| id).collect();
    let mut unique = context.iter().filter(|id| gen.unique_words.contains(id)).count();
    for &(_, id) in &others[context.len()..] {
        if unique >= config.min_unique_keywords {
            break;
        }
        if gen.unique_words.contains(&id) {
            context.push(id);
            unique += 1;
        }
    }
    if unique < config.min_unique_keywords {
        return None;
    }
    context.sort_unstable();

    let opener = INTERROGATIVES.choose(rng)?;
    let mut text = String::new();
    let mut chars = opener.chars();
    if let Some(c) = chars.next() {
        text.extend(c.to_uppercase());
        text.push_str(chars.as_str());
    }
    for id in context {
        text.push(' ');
        text.push_str(doc.words[id as usize].text.as_deref()?);
    }
    text.push('?');
    Some((text, span.to_vec()))
}

/// Generates a labeled corpus. Output is a pure function of `config`.
pub fn generate_corpus(config: &SynGenConfig) -> Result<Corpus> {
    config.validate()?;
    let stop_words = StopWords::english();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut vocab = Vocabulary::new(config, &mut rng, &stop_words)?;

    let mut generated = Vec::with_capacity(config.num_documents);
    for i in 0..config.num_documents {
        generated.push(generate_document(
            format!("doc-{i:04}"),
            config,
            &mut vocab,
            &mut rng,
            &stop_words,
        )?);
    }

    let num_distractors = (config.distractor_fraction * config.num_documents as f64).round() as usize;
    let mut order: Vec<usize> = (0..config.num_documents).collect();
    order.shuffle(&mut rng);
    let distractors: BTreeSet<usize> = order.into_iter().take(num_distractors).collect();
    let targets: Vec<usize> = (0..config.num_documents).filter(|i| !distractors.contains(i)).collect();

    let quota = |j: usize| match config.total_questions {
        Some(total) if !targets.is_empty() => total / targets.len() + usize::from(j < total % targets.len()),
        Some(_) => 0,
        None => config.questions_per_document,
    };
    if config.total_questions.is_some_and(|t| t > 0) && targets.is_empty() {
        return Err(Error::InvalidArgument(
            "questions requested but every document is a distractor".into(),
        ));
    }

    let mut questions = Vec::new();
    for (j, &i) in targets.iter().enumerate() {
        let gen = &generated[i];
        let mut used = BTreeSet::new();
        for _ in 0..quota(j) {
            let (text, span) = (0..MAX_QUESTION_ATTEMPTS)
                .find_map(|_| try_question(gen, config, &used, &mut rng))
                .ok_or_else(|| {
                    Error::Corpus(format!(
                        "could not place a question with {} unique keywords in {}",
                        config.min_unique_keywords, gen.doc.doc_id
                    ))
                })?;
            used.extend(span.iter().copied());
            let mut q = Question::from_text(format!("q-{:04}", questions.len()), text);
            q.mark_stop_words(stop_words.predicate());
            q.answers.push(gen.doc.derive_ground_truth_boxes(&span)?);
            questions.push(q);
        }
    }

    Ok(Corpus {
        documents: generated.into_iter().map(|g| g.doc).collect(),
        questions,
    })
}

/// The fixed 100-document benchmark corpus.
pub fn generate_acceptance_corpus(seed: u64) -> Result<Corpus> {
    generate_corpus(&SynGenConfig::acceptance(seed))
}
