use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use concern_core::analytics::{event_comparison, rolling_average, trends_to_csv, EventWindow, RollingOptions};
use concern_core::evaluation::{multilabel_report, MultilabelReport};
use concern_core::ingest::{DocumentStream, FileFormat, IngestOptions};
use concern_core::interventions::InterventionStore;
use concern_core::par::Execution;
use concern_core::student::{Classifier, FitSpec, StudentModel, Task, WeightingScheme, RELEVANCE_LABEL};
use concern_core::synthetic::{EventShift, Generator, KindMix, RuleTeacher, Rules, SyntheticConfig};
use concern_core::taxonomy::{LabelVector, Taxonomy};
use concern_core::teacher::{
    annotate_corpus, export_jsonl, AnnotationRecord, AnnotationTask, MemoryCache, Provenance, RecordLabels,
    ResponseCache, Teacher, TeacherError,
};

use concern_service::classify::Models;
use concern_service::corpus::{self, PassageRecord, PredictionLine};
use concern_service::store::FileCache;
use concern_service::teacher_http::HttpTeacher;
use concern_service::{router, AppState, ServiceConfig, Store};

#[derive(Parser)]
#[command(name = "concerns", version, about = "Classify text against a hierarchical concern taxonomy")]
struct Cli {
    /// Taxonomy TOML; the bundled vaccine taxonomy when omitted.
    #[arg(long, global = true)]
    taxonomy: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus with gold labels.
    Synth(SynthArgs),
    /// Split documents into passages.
    Ingest(IngestArgs),
    /// Label passages with a teacher model.
    Annotate(AnnotateArgs),
    /// Train a student model from labelled passages.
    Train(TrainArgs),
    /// Run a trained model over passages.
    Classify(ClassifyArgs),
    /// Rolling concern prevalence over dated articles.
    Trend(TrendArgs),
    /// Concern prevalence before and after an event date.
    Events(EventArgs),
    /// Compare predicted labels with gold labels.
    Evaluate(EvaluateArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    articles: usize,
    #[arg(long, default_value_t = 10)]
    passages_per_article: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Only concern-bearing passages.
    #[arg(long)]
    concern_only: bool,
    #[arg(long, default_value_t = 730)]
    days: u32,
    /// Event shift as `DATE:NODE:FACTOR`, e.g. `2020-06-01:1.1:1.6`.
    #[arg(long)]
    event: Option<String>,
    /// Articles as JSONL `{id, date, text}`.
    #[arg(long)]
    out: PathBuf,
    /// Gold concern labels per passage.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Gold relevance labels per passage.
    #[arg(long)]
    relevance_gold: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    file: PathBuf,
    #[arg(long, default_value = "jsonl")]
    format: FileFormat,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = concern_core::ingest::DEFAULT_MAX_PASSAGE_LEN)]
    max_passage_len: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Relevance,
    Multilabel,
}

#[derive(Clone, Copy, ValueEnum)]
enum TeacherKind {
    /// Keyword-rule teacher matching the synthetic generator.
    Mock,
    /// Chat-completions endpoint from the config file / environment.
    Http,
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, value_enum, default_value = "mock")]
    teacher: TeacherKind,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Directory for the persistent response cache.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Service config file (teacher section).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Answer-flip rate for the mock teacher.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    max_parallel: Option<usize>,
    /// Write the annotation report as JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Abort the process after this many cache writes (crash testing).
    #[arg(long, hide = true)]
    crash_after_writes: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    task: Task,
    #[arg(long, default_value = "log1p")]
    scheme: WeightingScheme,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Passages JSONL.
    #[arg(long)]
    corpus: PathBuf,
    /// Annotation JSONL; invalid records are skipped.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Held-out share used to tune thresholds.
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Report {
    None,
    Timing,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Passages the relevance model rejects get no concern labels.
    #[arg(long)]
    relevance_model: Option<PathBuf>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, value_enum, default_value = "none")]
    report: Report,
}

#[derive(Args)]
struct TrendArgs {
    /// Passages JSONL with dates.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = concern_core::analytics::DEFAULT_WINDOW)]
    window: usize,
    /// Emit points before the window is full.
    #[arg(long)]
    partial: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EventArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    date: NaiveDate,
    #[arg(long, default_value_t = 30)]
    pre_days: u32,
    #[arg(long, default_value_t = 30)]
    post_days: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalFormat {
    Table,
    Json,
    Csv,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: EvalFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Install this multilabel model into the data directory before serving.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    relevance_model: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Msg(String),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Store(#[from] concern_service::store::StoreError),
    #[error(transparent)]
    Config(#[from] concern_service::config::ConfigError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

type CliResult<T = ()> = Result<T, CliError>;

fn msg(s: impl Into<String>) -> CliError {
    CliError::Msg(s.into())
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,concern_service=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_taxonomy(path: Option<&Path>) -> CliResult<Taxonomy> {
    match path {
        None => Ok(Taxonomy::default_vaccine()),
        Some(p) => {
            let src = std::fs::read_to_string(p).map_err(io_at(p))?;
            Taxonomy::from_toml(&src).map_err(|e| msg(format!("{}: {e}", p.display())))
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let t = load_taxonomy(cli.taxonomy.as_deref())?;
    match cli.command {
        Command::Synth(a) => synth(a, &t),
        Command::Ingest(a) => ingest(a),
        Command::Annotate(a) => annotate(a, &t),
        Command::Train(a) => train(a, &t),
        Command::Classify(a) => classify(a, &t),
        Command::Trend(a) => trend(a, &t),
        Command::Events(a) => events(a, &t),
        Command::Evaluate(a) => evaluate(a, &t),
        Command::Serve(a) => serve(a, t),
    }
}

fn synth(a: SynthArgs, t: &Taxonomy) -> CliResult {
    let event = match a.event.as_deref() {
        None => None,
        Some(spec) => {
            let parts: Vec<&str> = spec.split(':').collect();
            let [date, node, factor] = parts[..] else {
                return Err(msg(format!("--event `{spec}` is not DATE:NODE:FACTOR")));
            };
            Some(EventShift {
                date: date.parse().map_err(|_| msg(format!("bad event date `{date}`")))?,
                node_id: node.to_string(),
                factor: factor.parse().map_err(|_| msg(format!("bad event factor `{factor}`")))?,
            })
        }
    };
    let cfg = SyntheticConfig {
        seed: a.seed,
        mix: if a.concern_only { KindMix::concern_only() } else { KindMix::default() },
        passages_per_article: a.passages_per_article,
        days: a.days,
        event,
        ..SyntheticConfig::default()
    };
    let mut gen = Generator::new(Rules::for_taxonomy(t.clone()), cfg);
    let articles = gen.articles(a.articles);

    #[derive(serde::Serialize)]
    struct Article<'a> {
        id: &'a str,
        date: NaiveDate,
        text: String,
    }
    let out = corpus::create(&a.out)?;
    corpus::write_jsonl(articles.iter().map(|x| Article { id: &x.doc_id, date: x.date, text: x.text() }), out)
        .map_err(io_at(&a.out))?;

    let mut concern = Vec::new();
    let mut relevance = Vec::new();
    for art in &articles {
        let doc = art.to_document();
        if doc.passages.len() != art.passages.len() {
            return Err(msg(format!("article {} did not segment into its planted passages", art.doc_id)));
        }
        for (p, sp) in doc.passages.iter().zip(&art.passages) {
            let rec = |labels| AnnotationRecord {
                passage_id: p.passage_id.clone(),
                labels,
                provenance: Provenance::Human,
                raw_response: None,
                valid: true,
                retries_used: 0,
            };
            concern.push(rec(RecordLabels::Concerns(sp.labels.clone())));
            relevance.push(rec(RecordLabels::Relevance(sp.relevant)));
        }
    }
    if let Some(path) = &a.gold {
        export_jsonl(&concern, t, corpus::create(path)?)?;
    }
    if let Some(path) = &a.relevance_gold {
        export_jsonl(&relevance, t, corpus::create(path)?)?;
    }
    eprintln!("wrote {} articles ({} passages) to {}", articles.len(), concern.len(), a.out.display());
    Ok(())
}

fn ingest(a: IngestArgs) -> CliResult {
    let opts = IngestOptions { max_passage_len: a.max_passage_len };
    let stream = DocumentStream::new(corpus::open(&a.file)?, a.format, opts).map_err(|e| msg(format!("{}: {e}", a.file.display())))?;
    let mut out = corpus::create(&a.out)?;
    let (mut docs, mut passages, mut skipped) = (0usize, 0usize, 0usize);
    for item in stream {
        match item {
            Ok(doc) => {
                docs += 1;
                passages += doc.passages.len();
                corpus::write_jsonl(PassageRecord::from_document(&doc), &mut out).map_err(io_at(&a.out))?;
            }
            Err(skip) => {
                skipped += 1;
                eprintln!("skipped line {}: {}", skip.line, skip.reason);
            }
        }
    }
    out.flush().map_err(io_at(&a.out))?;
    eprintln!("ingested {docs} documents, {passages} passages; skipped {skipped} records");
    if docs == 0 {
        return Err(msg("no documents could be ingested"));
    }
    Ok(())
}

/// Cache wrapper that kills the process after a number of writes.
struct CrashingCache {
    inner: Box<dyn ResponseCache>,
    remaining: AtomicUsize,
}

impl ResponseCache for CrashingCache {
    fn get(&self, key: &str) -> Option<String> {
        self.inner.get(key)
    }

    fn put(&self, key: &str, response: &str) -> Result<(), TeacherError> {
        self.inner.put(key, response)?;
        if self.remaining.fetch_sub(1, Ordering::SeqCst) == 1 {
            eprintln!("crash injected after cache write");
            std::process::exit(86);
        }
        Ok(())
    }
}

fn annotate(a: AnnotateArgs, t: &Taxonomy) -> CliResult {
    let mut cfg = ServiceConfig::load(a.config.as_deref())?.teacher;
    if let Some(n) = a.max_parallel {
        cfg.max_parallel = n;
    }
    let records = corpus::read_passages(&a.input)?;
    let passages: Vec<_> = records
        .iter()
        .map(|r| concern_core::ingest::Passage::standalone(r.passage_id.clone(), r.text.clone()))
        .collect();
    let teacher: Box<dyn Teacher> = match a.teacher {
        TeacherKind::Mock => Box::new(RuleTeacher::new(Rules::for_taxonomy(t.clone())).with_noise(a.noise)),
        TeacherKind::Http => Box::new(HttpTeacher::new(&cfg)?),
    };
    let mut cache: Box<dyn ResponseCache> = match &a.cache_dir {
        Some(dir) => Box::new(FileCache::new(dir)),
        None => Box::new(MemoryCache::new()),
    };
    if let Some(n) = a.crash_after_writes {
        cache = Box::new(CrashingCache { inner: cache, remaining: AtomicUsize::new(n) });
    }
    let task = match a.mode {
        Mode::Relevance => AnnotationTask::Relevance,
        Mode::Multilabel => AnnotationTask::Multilabel,
    };
    let ann = annotate_corpus(&passages, task, t, teacher.as_ref(), cache.as_ref(), &cfg)?;
    export_jsonl(&ann.records, t, corpus::create(&a.out)?)?;
    let r = &ann.report;
    eprintln!(
        "annotated {} passages: {} valid, {} invalid; {} teacher calls, {} cache hits, {} retries",
        r.total, r.valid, r.invalid, r.teacher_calls, r.cache_hits, r.retries
    );
    if let Some(path) = &a.report {
        let json = serde_json::to_vec_pretty(r).map_err(|e| msg(e.to_string()))?;
        std::fs::write(path, json).map_err(io_at(path))?;
    }
    Ok(())
}

fn train(a: TrainArgs, t: &Taxonomy) -> CliResult {
    let passages = corpus::read_passages(&a.corpus)?;
    let labels = corpus::read_labels(&a.labels, t)?;
    let index = corpus::label_index(&labels);
    let invalid = labels.iter().filter(|r| !r.valid).count();
    let mut texts = Vec::new();
    let mut ys = Vec::new();
    for p in &passages {
        let Some(v) = index.get(p.passage_id.as_str()) else { continue };
        let y = match a.task {
            Task::Multilabel if v.len() != t.len() => {
                return Err(msg(format!("{} holds relevance labels; use --task relevance", a.labels.display())))
            }
            Task::Relevance if v.len() != 1 => LabelVector::from_bools(vec![v.any()]),
            _ => v.clone(),
        };
        texts.push(p.text.as_str());
        ys.push(y);
    }
    if texts.is_empty() {
        return Err(msg("no passages with valid labels to train on"));
    }
    let mut spec = match a.task {
        Task::Multilabel => FitSpec::multilabel(t),
        Task::Relevance => FitSpec::relevance(t),
    };
    spec.scheme = a.scheme;
    spec.params.seed = a.seed;
    if let Some(e) = a.epochs {
        spec.params.epochs = e;
    }
    if let Some(lr) = a.lr {
        spec.params.lr = lr;
    }
    if let Some(b) = a.batch_size {
        spec.params.batch_size = b;
    }
    let (model, report, thr) =
        StudentModel::fit_with_validation(&spec, &texts, &ys, a.val_fraction).map_err(|e| msg(e.to_string()))?;
    let out = &a.out;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    concern_service::store::atomic_write(out, &model.to_bytes())?;
    eprintln!(
        "trained {} model on {} passages ({} invalid labels skipped), scheme {}, final epoch loss {:.4}",
        a.task,
        texts.len(),
        invalid,
        a.scheme,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    if !thr.untuned_labels.is_empty() {
        eprintln!("thresholds left at 0.5 for: {}", thr.untuned_labels.join(", "));
    }
    Ok(())
}

fn load_model(path: &Path, t: &Taxonomy) -> CliResult<StudentModel> {
    let bytes = std::fs::read(path).map_err(|e| msg(format!("cannot read model {}: {e}", path.display())))?;
    StudentModel::load_for(&bytes, t).map_err(|e| msg(format!("cannot load model {}: {e}", path.display())))
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce(Execution) -> T + Send) -> CliResult<T> {
    let exec = Execution::from_threads(threads);
    #[cfg(feature = "parallel")]
    if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| msg(e.to_string()))?;
        return Ok(pool.install(|| f(exec)));
    }
    Ok(f(exec))
}

fn classify(a: ClassifyArgs, t: &Taxonomy) -> CliResult {
    let model = load_model(&a.model, t)?;
    let relevance = a.relevance_model.as_deref().map(|p| load_model(p, t)).transpose()?;
    let passages = corpus::read_passages(&a.input)?;
    let start = Instant::now();
    let texts: Vec<&str> = passages.iter().map(|p| p.text.as_str()).collect();
    let preds = with_threads(a.threads, |exec| {
        let keep: Vec<bool> = match &relevance {
            Some(r) => r.predict_batch(&texts, exec).into_iter().map(|p| p.labels.get(0)).collect(),
            None => vec![true; texts.len()],
        };
        let mut preds = model.predict_batch(&texts, exec);
        for (p, k) in preds.iter_mut().zip(keep) {
            if !k {
                p.labels = LabelVector::zeros(p.labels.len());
                p.scores.iter_mut().for_each(|s| *s = 0.0);
            }
        }
        preds
    })?;
    let elapsed = start.elapsed();
    let ids = model.label_ids().to_vec();
    let lines = passages.iter().zip(&preds).map(|(p, pr)| PredictionLine::new(&p.passage_id, &ids, pr));
    corpus::write_jsonl(lines, corpus::create(&a.out)?).map_err(io_at(&a.out))?;
    if a.report == Report::Timing {
        let secs = elapsed.as_secs_f64();
        eprintln!(
            "classified {} passages in {:.3}s ({:.0} passages/s, threads {})",
            passages.len(),
            secs,
            passages.len() as f64 / secs.max(1e-9),
            if a.threads == 0 { "auto".to_string() } else { a.threads.to_string() }
        );
    }
    Ok(())
}

fn label_ids_for(labels: &[AnnotationRecord], t: &Taxonomy) -> Vec<String> {
    match labels.first().map(|r| &r.labels) {
        Some(RecordLabels::Relevance(_)) => vec![RELEVANCE_LABEL.to_string()],
        _ => t.ids().map(str::to_string).collect(),
    }
}

fn trend(a: TrendArgs, t: &Taxonomy) -> CliResult {
    let passages = corpus::read_passages(&a.input)?;
    let labels = corpus::read_labels(&a.labels, t)?;
    let arts = corpus::article_labels(&passages, &labels)?;
    let ids = label_ids_for(&labels, t);
    let series = rolling_average(&arts, &ids, RollingOptions { window: a.window, emit_partial: a.partial }, Execution::default())
        .map_err(|e| msg(e.to_string()))?;
    std::fs::write(&a.out, trends_to_csv(&series)).map_err(io_at(&a.out))?;
    eprintln!("{} dated articles, {} points per concern", arts.len(), series.first().map_or(0, |s| s.points.len()));
    Ok(())
}

fn events(a: EventArgs, t: &Taxonomy) -> CliResult {
    let passages = corpus::read_passages(&a.input)?;
    let labels = corpus::read_labels(&a.labels, t)?;
    let arts = corpus::article_labels(&passages, &labels)?;
    let ids = label_ids_for(&labels, t);
    let window = EventWindow { event_date: a.date, pre_days: a.pre_days, post_days: a.post_days };
    let cmp = event_comparison(&arts, &ids, window).map_err(|e| msg(e.to_string()))?;
    for c in &cmp.concerns {
        eprintln!("{}: {:.3} -> {:.3}, {}", c.concern_id, c.pre_prop, c.post_prop, c.describe());
    }
    let json = serde_json::to_string_pretty(&cmp).map_err(|e| msg(e.to_string()))?;
    match &a.out {
        Some(p) => std::fs::write(p, json).map_err(io_at(p))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs, t: &Taxonomy) -> CliResult {
    let gold = corpus::read_labels(&a.gold, t)?;
    let pred = corpus::read_labels(&a.pred, t)?;
    let pred_index = corpus::label_index(&pred);
    let ids = label_ids_for(&gold, t);
    let (mut g, mut p) = (Vec::new(), Vec::new());
    for r in gold.iter().filter(|r| r.valid) {
        let pv = pred_index
            .get(r.passage_id.as_str())
            .ok_or_else(|| msg(format!("passage `{}` has no prediction", r.passage_id)))?;
        let gv = r.labels.to_vector();
        if pv.len() != gv.len() {
            return Err(msg(format!("passage `{}`: gold has {} labels, prediction {}", r.passage_id, gv.len(), pv.len())));
        }
        g.push(gv);
        p.push(pv.clone());
    }
    let report: MultilabelReport = multilabel_report(&p, &g, &ids).map_err(|e| msg(e.to_string()))?;
    let body = match a.format {
        EvalFormat::Table => report.to_table(),
        EvalFormat::Csv => report.to_csv(),
        EvalFormat::Json => serde_json::to_string_pretty(&report).map_err(|e| msg(e.to_string()))? + "\n",
    };
    match &a.out {
        Some(path) => std::fs::write(path, body).map_err(io_at(path))?,
        None => print!("{body}"),
    }
    Ok(())
}

fn serve(a: ServeArgs, t: Taxonomy) -> CliResult {
    let mut cfg = ServiceConfig::load(a.config.as_deref())?;
    if let Some(p) = a.port {
        cfg.port = p;
    }
    if let Some(d) = a.data_dir {
        cfg.data_dir = d;
    }
    let store = Store::open(&cfg.data_dir)?;
    for (src, name) in [(&a.model, "multilabel"), (&a.relevance_model, "relevance")] {
        if let Some(path) = src {
            let model = load_model(path, &t)?;
            store.save_model(name, &model.to_bytes())?;
        }
    }
    let models = Models::load(&store, &t).map_err(|e| msg(e.to_string()))?;
    if models.multilabel.is_none() {
        tracing::warn!("no multilabel model in {}; uploads will be rejected", cfg.data_dir.display());
    }
    let interventions = match &cfg.interventions {
        Some(p) => InterventionStore::load_jsonl(corpus::open(p)?, &t).map_err(|e| msg(format!("{}: {e}", p.display())))?,
        None => InterventionStore::example(&t).map_err(|e| msg(e.to_string()))?,
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| msg(e.to_string()))?;
    rt.block_on(async move {
        let state = AppState::builder(store, t)
            .models(models)
            .interventions(interventions)
            .workers(cfg.workers)
            .cloud_size(cfg.cloud_size)
            .build()?;
        let listener = tokio::net::TcpListener::bind(cfg.addr()).await.map_err(|e| msg(format!("bind {}: {e}", cfg.addr())))?;
        tracing::info!("listening on http://{}", cfg.addr());
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| msg(e.to_string()))
    })?;
    Ok(())
}
