//! Evaluation: DIS-based snippet accuracy, top-N document accuracy and
//! line-level F1, with JSON and CSV report emission.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GroundTruthAnswer, Question, Rect, Snippet};
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::retrieve::{retrieve_documents, DocumentIndex, EncodedDocument, Encoder, PipelineConfig, RetrievalResult};

pub const DEFAULT_THRESHOLD: f64 = 0.8;
pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.csv";

/// `(|AB ∩ SB| / |SB|) · (|AB ∩ LB| / |AB|)` for a predicted box `ab`, a
/// small answer box `sb` and a large answer box `lb`.
pub fn dis(ab: &Rect, sb: &Rect, lb: &Rect) -> Result<f64> {
    for (name, r) in [("AB", ab), ("SB", sb), ("LB", lb)] {
        if r.area() <= 0 {
            return Err(Error::InvalidArgument(format!("{name} has zero area")));
        }
    }
    let recall = ab.intersection_area(sb) as f64 / sb.area() as f64;
    let precision = ab.intersection_area(lb) as f64 / ab.area() as f64;
    Ok(recall * precision)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Judgement {
    pub correct: bool,
    pub dis_best: f64,
}

/// Best DIS of `predicted` over the answers in its own document; answers in
/// other documents score 0. Correct when strictly above `threshold`.
pub fn judge_snippet(predicted: &Snippet, answers: &[GroundTruthAnswer], threshold: f64) -> Judgement {
    let dis_best = answers
        .iter()
        .filter(|a| a.doc_id == predicted.doc_id)
        .map(|a| dis(&predicted.bbox, &a.sb, &a.lb).unwrap_or(0.0))
        .fold(0.0, f64::max);
    Judgement {
        correct: dis_best > threshold,
        dis_best,
    }
}

/// Line-level F1 between a snippet and one answer; 0 across documents.
pub fn line_f1(predicted: &Snippet, answer: &GroundTruthAnswer) -> f64 {
    if predicted.doc_id != answer.doc_id || answer.answer_lines.is_empty() {
        return 0.0;
    }
    let pred: BTreeSet<usize> = predicted.lines().collect();
    let common = pred.intersection(&answer.answer_lines).count() as f64;
    let p = common / pred.len() as f64;
    let r = common / answer.answer_lines.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Maximum [`line_f1`] over all ground-truth answers.
pub fn best_line_f1(predicted: &Snippet, answers: &[GroundTruthAnswer]) -> f64 {
    answers.iter().map(|a| line_f1(predicted, a)).fold(0.0, f64::max)
}

/// 1-based rank of the first ground-truth document in `result`.
pub fn target_rank(result: &RetrievalResult, question: &Question) -> Option<usize> {
    result.rank_of(|id| question.answers.iter().any(|a| a.doc_id == id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNAccuracy {
    /// Percentage of labeled questions with a target in the first `n`.
    pub accuracy: BTreeMap<usize, f64>,
    pub evaluated: usize,
    /// Unlabeled questions left out of the percentages.
    pub excluded: usize,
}

/// Top-N accuracy of paired retrieval results and questions.
pub fn topn_accuracy(results: &[RetrievalResult], questions: &[Question], n_values: &[usize]) -> TopNAccuracy {
    let ranks: Vec<Option<usize>> = results
        .iter()
        .zip(questions)
        .filter(|(_, q)| q.is_labeled())
        .map(|(r, q)| target_rank(r, q))
        .collect();
    let excluded = questions.iter().filter(|q| !q.is_labeled()).count();
    if excluded > 0 {
        log::warn!("{excluded} unlabeled questions excluded from top-N accuracy");
    }
    TopNAccuracy {
        accuracy: topn_from_ranks(&ranks, n_values),
        evaluated: ranks.len(),
        excluded,
    }
}

pub(crate) fn topn_from_ranks(ranks: &[Option<usize>], n_values: &[usize]) -> BTreeMap<usize, f64> {
    n_values
        .iter()
        .map(|&n| {
            let hits = ranks.iter().filter(|r| r.is_some_and(|r| r <= n)).count();
            (n, percent(hits, ranks.len()))
        })
        .collect()
}

pub(crate) fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub question_id: String,
    pub dis_best: f64,
    pub correct: bool,
    pub line_f1: f64,
    /// Rank of the target document in the full ranking.
    pub target_rank: Option<usize>,
    pub predicted: Option<Snippet>,
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percentage of labeled questions answered with DIS above threshold.
    pub snippet_accuracy: f64,
    pub topn_accuracy: BTreeMap<usize, f64>,
    pub line_f1_mean: f64,
    pub threshold: f64,
    pub proposals: usize,
    pub num_questions: usize,
    pub num_unlabeled: usize,
    pub num_abstained: usize,
    pub num_errors: usize,
    pub per_question: Vec<QuestionOutcome>,
}

impl EvalReport {
    /// Writes `report.json` and `metrics.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let report = dir.join(REPORT_FILE);
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        std::fs::write(&report, json).map_err(|e| Error::io(&report, e))?;

        let metrics = dir.join(METRICS_FILE);
        let csv_err = |e: csv::Error| Error::format(&metrics, e.to_string());
        let mut w = csv::Writer::from_path(&metrics).map_err(csv_err)?;
        w.write_record(["question_id", "dis_best", "correct", "line_f1", "target_rank"])
            .map_err(csv_err)?;
        for q in &self.per_question {
            w.write_record([
                q.question_id.clone(),
                q.dis_best.to_string(),
                q.correct.to_string(),
                q.line_f1.to_string(),
                q.target_rank.map(|r| r.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&metrics, e))?;
        Ok(vec![report, metrics])
    }

    /// A fixed-width summary for terminals.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "questions        {}\nunlabeled        {}\nabstained        {}\nerrors           {}\nsnippet accuracy {:.2}% (DIS > {}, {} proposals)\nline F1          {:.2}%\n",
            self.num_questions,
            self.num_unlabeled,
            self.num_abstained,
            self.num_errors,
            self.snippet_accuracy,
            self.threshold,
            self.proposals,
            self.line_f1_mean
        );
        for (n, acc) in &self.topn_accuracy {
            s.push_str(&format!("top-{n:<12} {acc:.2}%\n"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub pipeline: PipelineConfig,
    pub threshold: f64,
    pub n_values: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            pipeline: PipelineConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            n_values: vec![1, 5, 10, 20],
        }
    }
}

/// Full ranking of every question, in question order. Failures are kept
/// per question.
pub fn rank_all(
    corpus: &Corpus,
    index: &DocumentIndex,
    provider: &dyn EmbeddingProvider,
    config: &PipelineConfig,
) -> Result<Vec<Result<RetrievalResult>>> {
    index.check_fingerprint(&config.retriever.fingerprint(provider))?;
    let n = index.len().max(1);
    Ok(corpus
        .questions
        .par_iter()
        .map(|q| retrieve_documents(index, q, provider, &config.retriever, n))
        .collect())
}

/// Answers one question from a precomputed full ranking, taking the first
/// `n` documents as proposals.
pub(crate) fn judge_question(
    question: &Question,
    ranking: &Result<RetrievalResult>,
    encoded: &BTreeMap<&str, &EncodedDocument<'_>>,
    encoder: &Encoder<'_>,
    config: &PipelineConfig,
    n: usize,
    threshold: f64,
) -> QuestionOutcome {
    let mut out = QuestionOutcome {
        question_id: question.question_id.clone(),
        dis_best: 0.0,
        correct: false,
        line_f1: 0.0,
        target_rank: None,
        predicted: None,
        score: None,
        error: None,
    };
    let ranking = match ranking {
        Ok(r) => r,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.target_rank = target_rank(ranking, question);
    if ranking.abstained {
        return out;
    }
    let proposals: Option<Vec<&EncodedDocument<'_>>> = ranking
        .ranked
        .iter()
        .take(n)
        .map(|r| encoded.get(r.doc_id.as_str()).copied())
        .collect();
    let Some(proposals) = proposals else {
        out.error = Some("ranked document missing from the corpus".into());
        return out;
    };
    match crate::retrieve::extract_from_encoded(&proposals, question, encoder, config.window, config.step, 0) {
        Ok(Some(answer)) => {
            let j = judge_snippet(&answer.snippet, &question.answers, threshold);
            out.dis_best = j.dis_best;
            out.correct = j.correct;
            out.line_f1 = best_line_f1(&answer.snippet, &question.answers);
            out.score = Some(answer.score);
            out.predicted = Some(answer.snippet);
        }
        Ok(None) => {}
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

/// Runs the two-stage pipeline on every question of `corpus` and gathers
/// all metrics. Per-question failures count as incorrect and are noted in
/// the report.
pub fn evaluate_pipeline(
    corpus: &Corpus,
    index: &DocumentIndex,
    provider: &dyn EmbeddingProvider,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let pipeline = &config.pipeline;
    if pipeline.n == 0 {
        return Err(Error::InvalidArgument("number of proposals must be at least 1".into()));
    }
    pipeline.snippet.validate(provider)?;
    let rankings = rank_all(corpus, index, provider, pipeline)?;
    let encoder = Encoder::new(provider, &pipeline.snippet);
    let encoded = crate::retrieve::encode_corpus(corpus, &encoder)?;
    let lookup: BTreeMap<&str, &EncodedDocument<'_>> = encoded.iter().map(|e| (e.doc.doc_id.as_str(), e)).collect();

    let per_question: Vec<QuestionOutcome> = corpus
        .questions
        .par_iter()
        .zip(&rankings)
        .map(|(q, r)| judge_question(q, r, &lookup, &encoder, pipeline, pipeline.n, config.threshold))
        .collect();
    Ok(build_report(&corpus.questions, &rankings, per_question, config))
}

pub(crate) fn build_report(
    questions: &[Question],
    rankings: &[Result<RetrievalResult>],
    per_question: Vec<QuestionOutcome>,
    config: &EvalConfig,
) -> EvalReport {
    let labeled: Vec<&QuestionOutcome> = per_question
        .iter()
        .zip(questions)
        .filter(|(_, q)| q.is_labeled())
        .map(|(o, _)| o)
        .collect();
    let num_unlabeled = questions.len() - labeled.len();
    if num_unlabeled > 0 {
        log::warn!("{num_unlabeled} unlabeled questions excluded from metrics");
    }
    let ranks: Vec<Option<usize>> = labeled.iter().map(|o| o.target_rank).collect();
    let correct = labeled.iter().filter(|o| o.correct).count();
    let f1_mean = if labeled.is_empty() {
        0.0
    } else {
        100.0 * labeled.iter().map(|o| o.line_f1).sum::<f64>() / labeled.len() as f64
    };
    let num_abstained = rankings.iter().filter(|r| matches!(r, Ok(r) if r.abstained)).count();
    EvalReport {
        snippet_accuracy: percent(correct, labeled.len()),
        topn_accuracy: topn_from_ranks(&ranks, &config.n_values),
        line_f1_mean: f1_mean,
        threshold: config.threshold,
        proposals: config.pipeline.n,
        num_questions: questions.len(),
        num_unlabeled,
        num_abstained,
        num_errors: per_question.iter().filter(|o| o.error.is_some()).count(),
        per_question,
    }
}
