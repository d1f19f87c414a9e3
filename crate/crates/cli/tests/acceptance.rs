//! Acceptance gate: runs every criterion and prints one PASS/FAIL line each.
//!
//! The checks carry their own oracles (naive Fisher Vectors from direct
//! density ratios, brute-force cosine scans, hand-computed DIS areas) and
//! drive the `docsnip` binary for the end-to-end criteria.

#![allow(clippy::needless_range_loop)]

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use docsnip::aggregate::{aggregate_fv, fisher_gradients, AggregateConfig, FisherConfig};
use docsnip::corpus::{Corpus, Document, Question, Rect};
use docsnip::embed::{EmbeddingProvider, NoisyPhocEmbedder, PhocEmbedder};
use docsnip::eval::{dis, evaluate_pipeline, EvalConfig};
use docsnip::gmm::{fit_gmm, fit_gmm_traced, GmmConfig, GmmModel};
use docsnip::pca::{fit_pca, PcaModel};
use docsnip::retrieve::{build_index, extract_answer, retrieve_documents, RetrievalResult, StageConfig, TfIdfIndex};
use docsnip::syngen::{generate_acceptance_corpus, generate_corpus, SynGenConfig};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// 1. DIS

fn rect(x: i64, y: i64, w: i64, h: i64) -> Rect {
    Rect::new(x, y, w, h).unwrap()
}

/// Overlap of the half-open pixel spans `[x, x + w)`, computed from edges.
fn overlap(a: &Rect, b: &Rect) -> i64 {
    let w = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let h = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    w.max(0) * h.max(0)
}

fn inside(inner: &Rect, outer: &Rect) -> bool {
    inner.x >= outer.x
        && inner.y >= outer.y
        && inner.x + inner.w <= outer.x + outer.w
        && inner.y + inner.h <= outer.y + outer.h
}

fn random_rect(rng: &mut ChaCha8Rng) -> Rect {
    rect(
        rng.random_range(0..40),
        rng.random_range(0..40),
        rng.random_range(1..30),
        rng.random_range(1..30),
    )
}

/// A rectangle inside `outer`, or `outer` itself.
fn rect_within(rng: &mut ChaCha8Rng, outer: &Rect) -> Rect {
    let x = outer.x + rng.random_range(0..outer.w);
    let y = outer.y + rng.random_range(0..outer.h);
    let w = rng.random_range(1..=outer.x + outer.w - x);
    let h = rng.random_range(1..=outer.y + outer.h - y);
    rect(x, y, w, h)
}

fn criterion_dis() -> Check {
    let sq = rect(0, 0, 10, 10);
    let cases = [
        (sq, sq, sq, 1.0),
        (rect(0, 0, 10, 20), rect(2, 2, 4, 4), rect(0, 0, 20, 40), 1.0),
        (rect(50, 50, 10, 10), sq, rect(0, 0, 10, 30), 0.0),
        (rect(0, 0, 10, 40), sq, rect(0, 0, 10, 30), 0.75),
    ];
    for (ab, sb, lb, want) in cases {
        let got = ok(dis(&ab, &sb, &lb))?;
        ensure(got == want, || {
            format!("dis({ab:?}, {sb:?}, {lb:?}) = {got}, expected {want}")
        })?;
    }
    ensure(
        dis(&rect(0, 0, 10, 40), &sq, &rect(0, 0, 10, 30)).unwrap() <= 0.8,
        || "0.75 case judged correct".into(),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ones = 0;
    for i in 0..10_000 {
        // A third of the triples are built nested so both sides of the
        // biconditional are exercised.
        let (ab, sb, lb) = if i % 3 == 0 {
            let lb = random_rect(&mut rng);
            let ab = rect_within(&mut rng, &lb);
            let sb = rect_within(&mut rng, &ab);
            (ab, sb, lb)
        } else {
            (random_rect(&mut rng), random_rect(&mut rng), random_rect(&mut rng))
        };
        let got = ok(dis(&ab, &sb, &lb))?;
        let want =
            (overlap(&ab, &sb) as f64 / (sb.w * sb.h) as f64) * (overlap(&ab, &lb) as f64 / (ab.w * ab.h) as f64);
        ensure((0.0..=1.0).contains(&got), || format!("dis out of range: {got}"))?;
        ensure((got - want).abs() < 1e-12, || {
            format!("dis {got} != oracle {want} for {ab:?} {sb:?} {lb:?}")
        })?;
        let nested = inside(&sb, &ab) && inside(&ab, &lb);
        ensure((got == 1.0) == nested, || {
            format!("biconditional broken: dis {got}, nested {nested}")
        })?;
        ones += usize::from(nested);
    }
    Ok(format!(
        "4 examples exact; 10000 random triples ({ones} nested) in [0,1] with DIS=1 iff SB⊆AB⊆LB"
    ))
}

// ---------------------------------------------------------------------------
// 2. Fisher Vectors

fn gaussian_density(x: &[f64], mu: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mu)
        .zip(var)
        .map(|((x, m), v)| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt())
        .product()
}

/// Fisher Vector straight from the gradient formulas, with posteriors taken
/// as plain density ratios.
fn naive_fv(xs: &[Vec<f64>], gmm: &GmmModel, include_sigma: bool, power: Option<f64>, l2: bool) -> Vec<f64> {
    let (k, d, m) = (gmm.k, gmm.dim, xs.len() as f64);
    let mut g_mu = vec![vec![0.0; d]; k];
    let mut g_sigma = vec![vec![0.0; d]; k];
    for x in xs {
        let joint: Vec<f64> = (0..k)
            .map(|i| gmm.weights[i] * gaussian_density(x, &gmm.means[i], &gmm.variances[i]))
            .collect();
        let total: f64 = joint.iter().sum();
        for i in 0..k {
            let gamma = joint[i] / total;
            for j in 0..d {
                let u = (x[j] - gmm.means[i][j]) / gmm.variances[i][j].sqrt();
                g_mu[i][j] += gamma * u;
                g_sigma[i][j] += gamma * (u * u - 1.0);
            }
        }
    }
    let mut out = Vec::new();
    for i in 0..k {
        out.extend(g_mu[i].iter().map(|g| g / (m * gmm.weights[i].sqrt())));
    }
    if include_sigma {
        for i in 0..k {
            out.extend(g_sigma[i].iter().map(|g| g / (m * (2.0 * gmm.weights[i]).sqrt())));
        }
    }
    if let Some(alpha) = power {
        out = out.iter().map(|z: &f64| z.signum() * z.abs().powf(alpha)).collect();
    }
    if l2 {
        let norm = out.iter().map(|z| z * z).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|z| *z /= norm);
        }
    }
    out
}

fn random_gmm(rng: &mut ChaCha8Rng, k: usize, d: usize) -> GmmModel {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    GmmModel {
        k,
        dim: d,
        weights: raw.iter().map(|w| w / total).collect(),
        means: (0..k)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect(),
        variances: (0..k)
            .map(|_| (0..d).map(|_| rng.random_range(0.3..2.0)).collect())
            .collect(),
    }
}

fn criterion_fv() -> Check {
    let unit = GmmModel {
        k: 1,
        dim: 1,
        weights: vec![1.0],
        means: vec![vec![0.0]],
        variances: vec![vec![1.0]],
    };
    let g = ok(fisher_gradients(&[vec![2.0]], &unit, true))?;
    let want = [2.0, 3.0 / 2f64.sqrt()];
    ensure(
        g.len() == 2 && (g[0] - want[0]).abs() <= 1e-12 && (g[1] - want[1]).abs() <= 1e-12,
        || format!("K=1 D=1 gradients {g:?}, expected {want:?}"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut grid = 0;
    for k in [1, 2, 3, 8] {
        for d in [1, 2, 5, 16] {
            let gmm = Arc::new(random_gmm(&mut rng, k, d));
            let xs: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            for include_sigma in [false, true] {
                let cfg = FisherConfig {
                    include_sigma,
                    ..FisherConfig::new(gmm.clone())
                };
                let dim = ok(aggregate_fv(&xs, &cfg))?.dim();
                let want = if include_sigma { 2 * k * d } else { k * d };
                ensure(dim == want, || {
                    format!("K={k} D={d} sigma={include_sigma}: dim {dim}, expected {want}")
                })?;
                grid += 1;
            }
        }
    }

    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let k = rng.random_range(1..=4);
        let d = rng.random_range(1..=4);
        let gmm = Arc::new(random_gmm(&mut rng, k, d));
        let m = rng.random_range(1..=6);
        let xs: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let cfg = FisherConfig {
            include_sigma: case % 4 != 0,
            alpha: [0.5, 0.3, 1.0, 0.8][case % 4],
            power_norm: case % 3 != 0,
            l2_norm: case % 5 != 0,
            gmm: gmm.clone(),
        };
        let got = ok(aggregate_fv(&xs, &cfg))?.values;
        let want = naive_fv(
            &xs,
            &gmm,
            cfg.include_sigma,
            cfg.power_norm.then_some(cfg.alpha),
            cfg.l2_norm,
        );
        ensure(got.len() == want.len(), || {
            format!("case {case}: length {} vs {}", got.len(), want.len())
        })?;
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("FV differs from naive oracle by {worst:e}"))?;
    Ok(format!(
        "hand case exact to 1e-12; {grid} grid dims; 20 oracle cases, max |diff| {worst:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 3. EM

fn criterion_em() -> Check {
    let mut checked = 0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let d = 3 + seed as usize;
        let centers: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let samples: Vec<Vec<f64>> = (0..400)
            .map(|i| {
                let c = &centers[i % 4];
                let spread = 0.5 + (i % 3) as f64;
                c.iter()
                    .map(|m| Normal::new(*m, spread).unwrap().sample(&mut rng))
                    .collect()
            })
            .collect();
        let fit = ok(fit_gmm_traced(
            &samples,
            3 + (seed as usize % 3),
            &GmmConfig {
                seed,
                max_iter: 60,
                tol: 0.0,
                ..GmmConfig::default()
            },
        ))?;
        for w in fit.log_likelihood_trace.windows(2) {
            ensure(w[1] >= w[0] - 1e-9, || {
                format!("dataset {seed}: log-likelihood fell {} -> {}", w[0], w[1])
            })?;
        }
        checked += fit.log_likelihood_trace.len();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let d = 4;
    let samples: Vec<Vec<f64>> = (0..1000)
        .map(|i| {
            let sign = if i % 2 == 0 { 10.0 } else { -10.0 };
            (0..d)
                .map(|j| if j == 0 { sign } else { 0.0 } + noise.sample(&mut rng))
                .collect()
        })
        .collect();
    let gmm = ok(fit_gmm(&samples, 2, &GmmConfig::default()))?;
    let target = |s: f64| (0..d).map(|j| if j == 0 { s } else { 0.0 }).collect::<Vec<f64>>();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let (pos, neg) = if gmm.means[0][0] > 0.0 { (0, 1) } else { (1, 0) };
    let errs = [
        dist(&gmm.means[pos], &target(10.0)),
        dist(&gmm.means[neg], &target(-10.0)),
    ];
    ensure(errs.iter().all(|e| *e < 0.2), || {
        format!("cluster means off by {errs:?}")
    })?;
    ensure(gmm.weights.iter().all(|w| (w - 0.5).abs() < 0.05), || {
        format!("weights {:?}", gmm.weights)
    })?;
    Ok(format!(
        "5 datasets, {checked} trace points non-decreasing; two clusters recovered (mean errors {:.3}, {:.3})",
        errs[0], errs[1]
    ))
}

// ---------------------------------------------------------------------------
// 4. Oracle equivalence

fn project(pca: &PcaModel, x: &[f64]) -> Vec<f64> {
    pca.components
        .iter()
        .map(|c| c.iter().zip(x).zip(&pca.mean).map(|((c, x), m)| c * (x - m)).sum())
        .collect()
}

/// Stage vector of a bag of words, built without the library encoder.
fn naive_vector(words: &[&str], phoc: &PhocEmbedder, stage: &StageConfig) -> Vec<f64> {
    let xs: Vec<Vec<f64>> = words
        .iter()
        .map(|w| {
            let e = phoc.embed(w).unwrap().values;
            stage.pca.as_ref().map_or(e.clone(), |p| project(p, &e))
        })
        .collect();
    let dim = stage.output_dim(phoc.dim());
    if xs.is_empty() {
        return vec![0.0; dim];
    }
    match &stage.aggregate {
        AggregateConfig::Sum => (0..dim).map(|j| xs.iter().map(|x| x[j]).sum()).collect(),
        AggregateConfig::Fisher(fv) => naive_fv(
            &xs,
            &fv.gmm,
            fv.include_sigma,
            fv.power_norm.then_some(fv.alpha),
            fv.l2_norm,
        ),
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn doc_words(doc: &Document, lines: Option<(usize, usize)>) -> Vec<&str> {
    doc.content_words()
        .filter(|w| lines.is_none_or(|(s, e)| w.line_index >= s && w.line_index <= e))
        .map(|w| w.text.as_deref().unwrap())
        .collect()
}

const SCORE_TOL: f64 = 1e-9;

fn oracle_check(corpus: &Corpus, phoc: &PhocEmbedder, stage: &StageConfig) -> Result<(), String> {
    let index = ok(build_index(&corpus.documents, phoc, stage))?;
    let doc_vectors: Vec<Vec<f64>> = corpus
        .documents
        .iter()
        .map(|d| {
            naive_vector(&doc_words(d, None), phoc, stage)
                .into_iter()
                .map(|x| f64::from(x as f32))
                .collect()
        })
        .collect();
    let (window, n) = (2, 5);
    for q in &corpus.questions {
        let qv = naive_vector(&q.content_tokens().collect::<Vec<_>>(), phoc, stage);
        let mut want: Vec<(&str, f64)> = corpus
            .documents
            .iter()
            .zip(&doc_vectors)
            .map(|(d, v)| (d.doc_id.as_str(), cosine(&qv, v)))
            .collect();
        want.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let got = ok(retrieve_documents(&index, q, phoc, stage, corpus.documents.len()))?;
        ensure(got.ranked.len() == want.len(), || {
            format!("{}: ranking length", q.question_id)
        })?;
        for (g, w) in got.ranked.iter().zip(&want) {
            ensure(g.doc_id == w.0 && (g.score - w.1).abs() < SCORE_TOL, || {
                format!(
                    "{}: got {} {:.12}, oracle {} {:.12}",
                    q.question_id, g.doc_id, g.score, w.0, w.1
                )
            })?;
        }

        let proposals: Vec<&Document> = want[..n].iter().map(|(id, _)| corpus.document(id).unwrap()).collect();
        let mut best: Option<(&str, usize, f64)> = None;
        for d in &proposals {
            let l = d.num_lines();
            for s in 0..=l.saturating_sub(window) {
                let score = cosine(
                    &qv,
                    &naive_vector(&doc_words(d, Some((s, s + window - 1))), phoc, stage),
                );
                let better =
                    best.is_none_or(|(id, start, b)| score > b || (score == b && (d.doc_id.as_str(), s) < (id, start)));
                if better {
                    best = Some((d.doc_id.as_str(), s, score));
                }
            }
        }
        let (id, start, score) = best.unwrap();
        let answer = ok(extract_answer(&proposals, q, phoc, stage, window, 1, 0))?.ok_or("no answer")?;
        ensure(
            answer.snippet.doc_id == id
                && answer.snippet.start_line == start
                && (answer.score - score).abs() < SCORE_TOL,
            || {
                format!(
                    "{}: snippet {}:{} {:.12}, oracle {id}:{start} {score:.12}",
                    q.question_id, answer.snippet.doc_id, answer.snippet.start_line, answer.score
                )
            },
        )?;
    }
    Ok(())
}

fn criterion_oracle() -> Check {
    let corpus = ok(generate_corpus(&SynGenConfig {
        seed: 4,
        num_documents: 20,
        total_questions: Some(50),
        ..SynGenConfig::default()
    }))?;
    ensure(corpus.questions.len() == 50, || "expected 50 questions".into())?;
    let phoc = PhocEmbedder::default();
    oracle_check(&corpus, &phoc, &StageConfig::sum())?;

    let samples: Vec<Vec<f64>> = corpus
        .documents
        .iter()
        .flat_map(|d| doc_words(d, None))
        .map(|w| phoc.embed(w).unwrap().values)
        .collect();
    let pca = ok(fit_pca(&samples, 16))?;
    let projected = ok(pca.transform_batch(&samples))?;
    let gmm = ok(fit_gmm(&projected, 8, &GmmConfig::default()))?;
    let fv = StageConfig::new(
        Some(Arc::new(pca)),
        AggregateConfig::Fisher(FisherConfig::new(Arc::new(gmm))),
    );
    oracle_check(&corpus, &phoc, &fv)?;
    Ok("20 documents, 50 questions: rankings and snippets match brute force for SUM and FV (K=8, D_w=16)".into())
}

// ---------------------------------------------------------------------------
// 5-7. Retrieval quality on the acceptance corpus

fn is_target(q: &Question, doc_id: &str) -> bool {
    q.answers.iter().any(|a| a.doc_id == doc_id)
}

/// Fraction (in percent) of labeled questions with a target among the
/// first `n` ranked documents.
fn hit_rate(corpus: &Corpus, results: &[RetrievalResult], n: usize) -> f64 {
    let mut hits = 0;
    let mut labeled = 0;
    for (q, r) in corpus.questions.iter().zip(results) {
        if !q.is_labeled() {
            continue;
        }
        labeled += 1;
        hits += usize::from(r.ranked.iter().take(n).any(|d| is_target(q, &d.doc_id)));
    }
    100.0 * hits as f64 / labeled as f64
}

fn full_rankings(corpus: &Corpus, provider: &dyn EmbeddingProvider) -> Result<Vec<RetrievalResult>, String> {
    let stage = StageConfig::sum();
    let index = ok(build_index(&corpus.documents, provider, &stage))?;
    corpus
        .questions
        .iter()
        .map(|q| ok(retrieve_documents(&index, q, provider, &stage, corpus.documents.len())))
        .collect()
}

fn criterion_end_to_end(corpus: &Corpus) -> Check {
    let phoc = PhocEmbedder::default();
    let unique: Vec<bool> = corpus
        .questions
        .iter()
        .map(|q| has_unique_keywords(corpus, q))
        .collect();
    ensure(unique.iter().all(|u| *u), || {
        "a question lacks two unique keywords".into()
    })?;
    let top5 = hit_rate(corpus, &full_rankings(corpus, &phoc)?, 5);

    let index = ok(build_index(&corpus.documents, &phoc, &StageConfig::sum()))?;
    let report = ok(evaluate_pipeline(corpus, &index, &phoc, &EvalConfig::default()))?;
    let snippet = report.snippet_accuracy;
    let msg = format!("top-5 {top5:.1}% (need 100%), snippet accuracy {snippet:.1}% (need >= 90%)");
    ensure(top5 == 100.0 && snippet >= 90.0, || msg.clone())?;
    Ok(msg)
}

fn has_unique_keywords(corpus: &Corpus, q: &Question) -> bool {
    let unique = q
        .content_tokens()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .filter(|t| {
            corpus
                .documents
                .iter()
                .filter(|d| d.content_words().any(|w| w.text.as_deref() == Some(*t)))
                .count()
                == 1
        })
        .count();
    unique >= 2
}

fn criterion_topn(corpus: &Corpus) -> Check {
    let rankings = full_rankings(corpus, &PhocEmbedder::default())?;
    let ns = [1, 2, 5, 10, 25, 100];
    let rates: Vec<f64> = ns.iter().map(|&n| hit_rate(corpus, &rankings, n)).collect();
    let msg = ns
        .iter()
        .zip(&rates)
        .map(|(n, r)| format!("n={n}: {r:.1}%"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(rates.windows(2).all(|w| w[1] >= w[0]), || {
        format!("not monotone: {msg}")
    })?;
    ensure(corpus.documents.len() == 100 && rates[5] == 100.0, || {
        format!("n=M below 100%: {msg}")
    })?;
    Ok(msg)
}

fn criterion_noise(corpus: &Corpus) -> Check {
    let sigmas = [0.0, 0.05, 0.2, 0.5];
    let mut top5 = Vec::new();
    for &sigma in &sigmas {
        let provider = ok(NoisyPhocEmbedder::new(PhocEmbedder::default(), sigma, 3))?;
        top5.push(hit_rate(corpus, &full_rankings(corpus, &provider)?, 5));
    }
    let tfidf = ok(TfIdfIndex::build(&corpus.documents))?;
    let tf_results: Vec<RetrievalResult> = corpus
        .questions
        .iter()
        .map(|q| ok(tfidf.retrieve(q, 5)))
        .collect::<Result<_, _>>()?;
    let tf_top5 = hit_rate(corpus, &tf_results, 5);
    let msg = format!(
        "top-5 {}; TF-IDF {tf_top5:.1}%",
        sigmas
            .iter()
            .zip(&top5)
            .map(|(s, a)| format!("σ={s}: {a:.1}%"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    ensure(top5.windows(2).all(|w| w[1] <= w[0]), || {
        format!("not non-increasing: {msg}")
    })?;
    ensure(tf_top5 > top5[3], || {
        format!("TF-IDF does not beat the noisy retriever: {msg}")
    })?;
    Ok(msg)
}

// ---------------------------------------------------------------------------
// 8-9. The binary

fn docsnip(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = ok(Command::new(env!("CARGO_BIN_EXE_docsnip"))
        .args(args)
        .current_dir(dir)
        .output())?;
    ensure(out.status.success(), || {
        format!(
            "docsnip {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )
    })
}

fn criterion_power_norm() -> Check {
    let tmp = ok(tempfile::tempdir())?;
    let dir = tmp.path();
    docsnip(&["gen-corpus", "--acceptance", "--seed", "7", "--out", "corpus"], dir)?;
    docsnip(
        &[
            "ablate",
            "--corpus",
            "corpus",
            "--k-values",
            "2,4,8",
            "--sigmas",
            "0",
            "--n-values",
            "1,5",
            "--out",
            "ablation",
        ],
        dir,
    )?;
    let text = ok(fs::read_to_string(dir.join("ablation/curves/power_norm.csv")))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let columns: Vec<&str> = header.split(',').collect();
    let col = |name: &str| {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or(format!("missing column {name} in {header}"))
    };
    let (k_col, with_col, without_col) = (col("k")?, col("top5_power_norm")?, col("top5_no_power_norm")?);
    let mut ks = std::collections::BTreeSet::new();
    let mut pairs = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        ensure(fields.len() == columns.len(), || format!("ragged row {line}"))?;
        let k: usize = ok(fields[k_col].parse())?;
        let with: f64 = ok(fields[with_col].parse())?;
        let without: f64 = ok(fields[without_col].parse())?;
        ensure(
            (0.0..=100.0).contains(&with) && (0.0..=100.0).contains(&without),
            || format!("accuracy out of range: {line}"),
        )?;
        ks.insert(k);
        pairs.push(format!("K={k}: {with}/{without}"));
    }
    ensure(ks.len() >= 3, || format!("only {} values of K", ks.len()))?;
    Ok(format!("power_norm.csv with/without top-5: {}", pairs.join(", ")))
}

fn pipeline_run(dir: &Path) -> Result<(), String> {
    let steps: [&[&str]; 5] = [
        &["gen-corpus", "--seed", "3", "--documents", "40", "--out", "corpus"],
        &["fit-pca", "--corpus", "corpus", "--d-w", "16", "--out", "pca.json"],
        &[
            "fit-gmm", "--corpus", "corpus", "--pca", "pca.json", "--k", "4", "--out", "gmm.json",
        ],
        &[
            "build-index",
            "--corpus",
            "corpus",
            "--pca",
            "pca.json",
            "--agg",
            "fv",
            "--gmm",
            "gmm.json",
            "--out",
            "fv.idx",
        ],
        &[
            "evaluate", "--corpus", "corpus", "--index", "fv.idx", "--pca", "pca.json", "--agg", "fv", "--gmm",
            "gmm.json", "--out", "eval",
        ],
    ];
    steps.iter().try_for_each(|args| docsnip(args, dir))
}

fn criterion_determinism() -> Check {
    let (a, b) = (ok(tempfile::tempdir())?, ok(tempfile::tempdir())?);
    pipeline_run(a.path())?;
    pipeline_run(b.path())?;
    let files = [
        "corpus/documents.jsonl",
        "pca.json",
        "gmm.json",
        "fv.idx",
        "eval/report.json",
        "eval/metrics.csv",
    ];
    for f in files {
        let (x, y) = (ok(fs::read(a.path().join(f)))?, ok(fs::read(b.path().join(f)))?);
        ensure(x == y, || format!("{f} differs between runs"))?;
    }
    Ok(format!("{} artifacts byte-identical across two runs", files.len()))
}

// ---------------------------------------------------------------------------

fn run(id: usize, name: &str, limit: Duration, check: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let elapsed = start.elapsed();
    let result = result.and_then(|m| {
        if elapsed <= limit {
            Ok(m)
        } else {
            Err(format!("{m}; took {elapsed:.1?}, limit {limit:?}"))
        }
    });
    let pass = result.is_ok();
    let detail = result.unwrap_or_else(|e| e);
    println!(
        "{} criterion {id} ({name}) [{elapsed:.2?}]: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let corpus = generate_acceptance_corpus(7).expect("acceptance corpus");
    let results = [
        run(1, "DIS metric", secs(5), criterion_dis),
        run(2, "Fisher Vectors", secs(10), criterion_fv),
        run(3, "EM", secs(30), criterion_em),
        run(4, "oracle equivalence", secs(60), criterion_oracle),
        run(5, "end-to-end quality", secs(120), || criterion_end_to_end(&corpus)),
        run(6, "top-n trend", secs(120), || criterion_topn(&corpus)),
        run(7, "noise degradation", secs(120), || criterion_noise(&corpus)),
        run(8, "power-norm ablation", secs(300), criterion_power_norm),
        run(9, "determinism", secs(300), criterion_determinism),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
