//! `docsnip`: generate corpora, fit models, build indexes, answer questions
//! and run evaluations and ablations.

mod manifest;
mod stage;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use docsnip::corpus::{load_corpus, save_corpus, Corpus, Question, StopWords};
use docsnip::embed::EmbeddingProvider;
use docsnip::eval::{evaluate_pipeline, EvalConfig};
use docsnip::experiment::{run_ablation, word_samples, AblationConfig, ProviderSpec};
use docsnip::gmm::{fit_gmm_traced, GmmConfig};
use docsnip::pca::{fit_pca, PcaModel};
use docsnip::retrieve::{answer_question, build_index, retrieve_documents, DocumentIndex, PipelineConfig};
use docsnip::syngen::{generate_corpus, SynGenConfig};

use manifest::{sidecar, Manifest, MANIFEST_FILE};
use stage::{RetrieverStageArgs, SnippetStageArgs};

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "DOCSNIP_OUT";

#[derive(Parser)]
#[command(
    name = "docsnip",
    version,
    about = "Recognition-free question answering over segmented document images"
)]
struct Cli {
    /// Worker threads for per-question work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus.
    GenCorpus(GenCorpusArgs),
    /// Fit a PCA projection on document word embeddings.
    FitPca(FitPcaArgs),
    /// Fit a diagonal GMM on (projected) document word embeddings.
    FitGmm(FitGmmArgs),
    /// Build the document index for a retriever configuration.
    BuildIndex(BuildIndexArgs),
    /// Rank documents for one question.
    Retrieve(RetrieveArgs),
    /// Answer one question with the two-stage pipeline.
    Answer(AnswerArgs),
    /// Evaluate the pipeline on every question of a corpus.
    Evaluate(EvaluateArgs),
    /// Sweep proposals, aggregation settings and noise; write curves.
    Ablate(AblateArgs),
}

#[derive(Args, Serialize)]
struct CorpusArgs {
    /// Corpus directory with documents.jsonl and questions.jsonl.
    #[arg(long)]
    corpus: PathBuf,
    /// Stop-word list (one word per line); defaults to the English list.
    #[arg(long)]
    stop_words: Option<PathBuf>,
}

impl CorpusArgs {
    fn stop_words(&self) -> Result<StopWords> {
        Ok(match &self.stop_words {
            Some(p) => {
                StopWords::from_list(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            }
            None => StopWords::english(),
        })
    }

    fn load(&self) -> Result<Corpus> {
        let mut corpus =
            load_corpus(&self.corpus).with_context(|| format!("loading corpus {}", self.corpus.display()))?;
        corpus.mark_stop_words(&self.stop_words()?)?;
        Ok(corpus)
    }

    fn record(&self, m: &mut Manifest) -> Result<()> {
        m.input("documents", &self.corpus.join(docsnip::corpus::DOCUMENTS_FILE))?;
        let q = self.corpus.join(docsnip::corpus::QUESTIONS_FILE);
        if q.exists() {
            m.input("questions", &q)?;
        }
        if let Some(p) = &self.stop_words {
            m.input("stop_words", p)?;
        }
        Ok(())
    }
}

#[derive(Args, Serialize)]
struct ProviderArgs {
    /// Embedding provider: phoc, phoc-noisy:SIGMA:SEED or store:PATH.
    #[arg(long, default_value = "phoc")]
    #[serde(serialize_with = "display")]
    provider: ProviderSpec,
}

fn display<S: serde::Serializer>(v: &impl std::fmt::Display, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

impl ProviderArgs {
    fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        self.provider
            .build()
            .with_context(|| format!("loading provider {}", self.provider))
    }
}

fn default_out(name: &str) -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map_or_else(|| PathBuf::from("runs"), PathBuf::from)
        .join(name)
}

#[derive(Args, Serialize)]
struct GenCorpusArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the 100-document benchmark preset.
    #[arg(long)]
    acceptance: bool,
    /// Generator configuration as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    documents: Option<usize>,
    #[arg(long)]
    questions_per_document: Option<usize>,
    #[arg(long)]
    total_questions: Option<usize>,
    /// Fraction of documents without questions.
    #[arg(long)]
    distractors: Option<f64>,
    /// Output directory [default: $DOCSNIP_OUT/corpus or runs/corpus].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct FitPcaArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Output dimension.
    #[arg(long)]
    d_w: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct FitGmmArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    /// PCA model applied before fitting.
    #[arg(long)]
    pca: Option<PathBuf>,
    /// Number of components.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct BuildIndexArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    retriever: RetrieverStageArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct QuestionArgs {
    /// Free-text question.
    #[arg(long, conflicts_with = "question_id", required_unless_present = "question_id")]
    question: Option<String>,
    /// Id of a question in the corpus.
    #[arg(long)]
    question_id: Option<String>,
}

impl QuestionArgs {
    fn resolve(&self, corpus: &Corpus, stop: &StopWords) -> Result<Question> {
        if let Some(id) = &self.question_id {
            return corpus
                .questions
                .iter()
                .find(|q| &q.question_id == id)
                .cloned()
                .with_context(|| format!("no question with id {id}"));
        }
        let text = self.question.as_deref().unwrap_or_default();
        let mut q = Question::from_text("cli", text);
        q.mark_stop_words(stop.predicate());
        Ok(q)
    }
}

#[derive(Args, Serialize)]
struct RetrieveArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    retriever: RetrieverStageArgs,
    #[command(flatten)]
    question: QuestionArgs,
    #[arg(long)]
    index: PathBuf,
    /// Number of proposals.
    #[arg(long, default_value_t = 5)]
    n: usize,
}

#[derive(Args, Serialize)]
struct PipelineArgs {
    #[command(flatten)]
    retriever: RetrieverStageArgs,
    #[command(flatten)]
    snippet: SnippetStageArgs,
    /// Number of document proposals.
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Snippet height in lines.
    #[arg(long, default_value_t = 2)]
    window: usize,
    /// Snippet stride in lines.
    #[arg(long, default_value_t = 1)]
    step: usize,
}

impl PipelineArgs {
    fn load(&self, m: &mut Manifest, provider: &dyn EmbeddingProvider) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            retriever: self.retriever.stage().load(m, "retriever", provider)?,
            snippet: self.snippet.stage().load(m, "snippet", provider)?,
            window: self.window,
            step: self.step,
            n: self.n,
            top_k: 0,
        })
    }
}

#[derive(Args, Serialize)]
struct AnswerArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    question: QuestionArgs,
    #[arg(long)]
    index: PathBuf,
    /// Also list this many best snippets.
    #[arg(long, default_value_t = 0)]
    top_k: usize,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    index: PathBuf,
    /// DIS threshold for a correct snippet.
    #[arg(long, default_value_t = docsnip::eval::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Proposal counts reported as top-N accuracy.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20")]
    n_values: Vec<usize>,
    /// Run directory [default: $DOCSNIP_OUT/eval or runs/eval].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct AblateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,25,100")]
    n_values: Vec<usize>,
    /// GMM sizes of the Fisher Vector sweep.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    k_values: Vec<usize>,
    /// PCA dimensions of the Fisher Vector sweep.
    #[arg(long, value_delimiter = ',', default_value = "32")]
    d_w_values: Vec<usize>,
    /// Noise levels of the noise sweep; pass an empty list to skip it.
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.2,0.5")]
    sigmas: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// GMM initialization seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Power-normalization exponent.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Proposals for the snippet and question-length curves.
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = docsnip::eval::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Run directory [default: $DOCSNIP_OUT/ablate or runs/ablate].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn parent_of(path: &Path) -> Result<PathBuf> {
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    create_dir(parent)?;
    Ok(parent.to_path_buf())
}

fn gen_corpus(args: &GenCorpusArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None if args.acceptance => SynGenConfig::acceptance(args.seed),
        None => SynGenConfig::default(),
    };
    config.seed = args.seed;
    if let Some(v) = args.documents {
        config.num_documents = v;
    }
    if let Some(v) = args.questions_per_document {
        config.questions_per_document = v;
    }
    if args.total_questions.is_some() {
        config.total_questions = args.total_questions;
    }
    if let Some(v) = args.distractors {
        config.distractor_fraction = v;
    }
    let out = args.out.clone().unwrap_or_else(|| default_out("corpus"));
    let corpus = generate_corpus(&config)?;
    let files = save_corpus(&out, &corpus)?;
    let mut m = Manifest::new("gen-corpus", &config)?;
    if let Some(p) = &args.config {
        m.input("config", p)?;
    }
    for (role, f) in ["documents", "questions"].iter().zip(&files) {
        m.output(role, f, &out)?;
    }
    m.write(&out.join(MANIFEST_FILE))?;
    println!(
        "wrote {} documents and {} questions to {}",
        corpus.documents.len(),
        corpus.questions.len(),
        out.display()
    );
    Ok(())
}

fn fit_pca_cmd(args: &FitPcaArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    let provider = args.provider.build()?;
    let samples = word_samples(&corpus, provider.as_ref(), None)?;
    let model = fit_pca(&samples, args.d_w)?;
    let base = parent_of(&args.out)?;
    model.save(&args.out)?;
    let mut m = Manifest::new("fit-pca", args)?;
    args.corpus.record(&mut m)?;
    m.provider = Some(provider.fingerprint());
    m.output("pca", &args.out, &base)?;
    m.write(&sidecar(&args.out))?;
    println!(
        "fitted PCA {} -> {} on {} samples: {}",
        model.input_dim,
        model.output_dim,
        samples.len(),
        args.out.display()
    );
    Ok(())
}

fn fit_gmm_cmd(args: &FitGmmArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    let provider = args.provider.build()?;
    let mut m = Manifest::new("fit-gmm", args)?;
    args.corpus.record(&mut m)?;
    m.provider = Some(provider.fingerprint());
    let pca = match &args.pca {
        Some(p) => {
            stage::check_upstream(p, None, provider.as_ref())?;
            m.input("pca", p)?;
            Some(PcaModel::load(p)?)
        }
        None => None,
    };
    let samples = word_samples(&corpus, provider.as_ref(), pca.as_ref())?;
    let config = GmmConfig {
        max_iter: args.max_iter,
        tol: args.tol,
        seed: args.seed,
        ..GmmConfig::default()
    };
    let fit = fit_gmm_traced(&samples, args.k, &config)?;
    if !fit.converged {
        log::warn!("EM stopped after {} iterations without converging", fit.iterations);
    }
    let base = parent_of(&args.out)?;
    fit.model.save(&args.out)?;
    m.output("gmm", &args.out, &base)?;
    m.write(&sidecar(&args.out))?;
    println!(
        "fitted {}-component GMM in {} dimensions ({} iterations, final mean log-likelihood {:.6}): {}",
        args.k,
        fit.model.dim,
        fit.iterations,
        fit.log_likelihood_trace.last().copied().unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}

fn build_index_cmd(args: &BuildIndexArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    let provider = args.provider.build()?;
    let mut m = Manifest::new("build-index", args)?;
    args.corpus.record(&mut m)?;
    m.provider = Some(provider.fingerprint());
    let stage = args.retriever.stage().load(&mut m, "retriever", provider.as_ref())?;
    let index = build_index(&corpus.documents, provider.as_ref(), &stage)?;
    let base = parent_of(&args.out)?;
    index.save(&args.out)?;
    m.output("index", &args.out, &base)?;
    m.write(&sidecar(&args.out))?;
    println!(
        "indexed {} documents ({} dimensions, fingerprint {}): {}",
        index.len(),
        index.dim,
        index.fingerprint,
        args.out.display()
    );
    Ok(())
}

fn retrieve_cmd(args: &RetrieveArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    let provider = args.provider.build()?;
    let mut m = Manifest::new("retrieve", args)?;
    let stage = args.retriever.stage().load(&mut m, "retriever", provider.as_ref())?;
    let index = DocumentIndex::load(&args.index, Some(&stage.fingerprint(provider.as_ref())))?;
    let question = args.question.resolve(&corpus, &args.corpus.stop_words()?)?;
    let result = retrieve_documents(&index, &question, provider.as_ref(), &stage, args.n)?;
    print_json(&result)
}

fn answer_cmd(args: &AnswerArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    let provider = args.provider.build()?;
    let mut m = Manifest::new("answer", args)?;
    let mut config = args.pipeline.load(&mut m, provider.as_ref())?;
    config.top_k = args.top_k;
    let index = DocumentIndex::load(&args.index, Some(&config.retriever.fingerprint(provider.as_ref())))?;
    let question = args.question.resolve(&corpus, &args.corpus.stop_words()?)?;
    let outcome = answer_question(&corpus, &index, &question, provider.as_ref(), &config)?;
    print_json(&outcome)
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    let provider = args.provider.build()?;
    let mut m = Manifest::new("evaluate", args)?;
    args.corpus.record(&mut m)?;
    m.provider = Some(provider.fingerprint());
    let pipeline = args.pipeline.load(&mut m, provider.as_ref())?;
    let index = DocumentIndex::load(&args.index, Some(&pipeline.retriever.fingerprint(provider.as_ref())))?;
    m.input("index", &args.index)?;
    let config = EvalConfig {
        pipeline,
        threshold: args.threshold,
        n_values: args.n_values.clone(),
    };
    let report = evaluate_pipeline(&corpus, &index, provider.as_ref(), &config)?;
    let out = args.out.clone().unwrap_or_else(|| default_out("eval"));
    let files = report.write(&out)?;
    for (role, f) in ["report", "metrics"].iter().zip(&files) {
        m.output(role, f, &out)?;
    }
    m.write(&out.join(MANIFEST_FILE))?;
    print!("{}", report.summary());
    println!("wrote {}", out.display());
    Ok(())
}

fn ablate_cmd(args: &AblateArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    let provider = args.provider.build()?;
    let mut m = Manifest::new("ablate", args)?;
    args.corpus.record(&mut m)?;
    m.provider = Some(provider.fingerprint());
    let config = AblationConfig {
        n_values: args.n_values.clone(),
        k_values: args.k_values.clone(),
        d_w_values: args.d_w_values.clone(),
        sigmas: args.sigmas.clone(),
        noise_seed: args.noise_seed,
        gmm: GmmConfig {
            seed: args.seed,
            ..GmmConfig::default()
        },
        alpha: args.alpha,
        pipeline: PipelineConfig {
            n: args.n,
            ..PipelineConfig::default()
        },
        threshold: args.threshold,
    };
    let ablation = run_ablation(&corpus, provider.as_ref(), &config)?;
    let out = args.out.clone().unwrap_or_else(|| default_out("ablate"));
    for path in ablation.write(&out)? {
        let role = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        m.output(&role, &path, &out)?;
        println!("wrote {}", path.display());
    }
    m.write(&out.join(MANIFEST_FILE))?;
    Ok(())
}

/// Writes pretty JSON to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    let res = serde_json::to_writer_pretty(&mut out, value)
        .map_err(std::io::Error::from)
        .and_then(|()| writeln!(out));
    match res {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match &cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::FitPca(a) => fit_pca_cmd(a),
        Command::FitGmm(a) => fit_gmm_cmd(a),
        Command::BuildIndex(a) => build_index_cmd(a),
        Command::Retrieve(a) => retrieve_cmd(a),
        Command::Answer(a) => answer_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
