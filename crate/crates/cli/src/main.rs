//! Command-line driver: run either detector over a corpus file, generate
//! synthetic corpora, compare event sets, and summarize run reports.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use squall_core::clustering::{Assignment, ClusterParams};
use squall_core::eval::{
    self, synth, DetectionRun, EvalError, Method, OverlapReport, RunOptions,
};
use squall_core::ingest::ReplayConfig;
use squall_core::keybased::KeyParams;
use squall_core::preprocess::{parse_stopwords, Preprocessor, DEFAULT_STOPWORDS};
use squall_core::store::{self, FileStore, MemoryStore, SharedStore};
use squall_core::BarrierMode;

#[derive(Parser)]
#[command(
    name = "squall",
    about = "Stream event detection over replayed tweet corpora",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect bursting words with the uncommonly-common-word method.
    RunKeybased(RunKeybased),
    /// Detect growing clusters with two-phase incremental clustering.
    RunClustering(RunClustering),
    /// Cross-method overlap statistics between two event files.
    Compare(Compare),
    /// Generate a synthetic corpus plus its ground-truth sidecar.
    GenSynthetic(GenSynthetic),
    /// Print a summary table of run report files.
    Report(Report),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BarrierArg {
    Direct,
    Sleep,
}

#[derive(Args)]
struct CommonRunArgs {
    /// Corpus file: one JSON record per line, sorted by timestamp.
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for events, charts, and the run report.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// End-of-document protocol.
    #[arg(long, value_enum, default_value = "direct")]
    barrier: BarrierArg,
    /// Spout pause per document in sleep mode.
    #[arg(long, default_value_t = 1000)]
    sleep_ms: u64,
    /// Task parallelism, BOLT=N (count=4 or cluster=4). Repeatable.
    #[arg(long, value_name = "BOLT=N")]
    tasks: Vec<String>,
    /// Input queue capacity per task.
    #[arg(long, default_value_t = 10_000)]
    queue_bound: usize,
    /// RNG seed for shuffle routing and fields hashing; omit for entropy.
    #[arg(long)]
    seed: Option<u64>,
    /// Document window width in seconds.
    #[arg(long, default_value_t = 360)]
    window_seconds: u32,
    /// Document numbering starts here; defaults to the first tweet's
    /// timestamp truncated down to a whole window.
    #[arg(long)]
    stream_start: Option<i64>,
    /// Stop-word file (one word per line); defaults to the built-in list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Disable stemming.
    #[arg(long)]
    no_stemming: bool,
    /// Cluster/event persistence: "memory" or "file:PATH".
    #[arg(long, default_value = "memory")]
    store: String,
    /// Only process tweets from this ISO country code.
    #[arg(long)]
    country: Option<String>,
}

#[derive(Args)]
struct RunKeybased {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Occurrences per document before a word is considered common.
    #[arg(long, default_value_t = 10)]
    common_threshold: u64,
    /// Minimum tf-idf increment rate for an event.
    #[arg(long, default_value_t = 2.0)]
    event_rate: f64,
    /// Minimum current tf-idf for an event.
    #[arg(long, default_value_t = 1e-4)]
    floor: f64,
}

#[derive(Args)]
struct RunClustering {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Cosine similarity threshold for assignment and merging.
    #[arg(long, default_value_t = 0.5)]
    similarity: f64,
    /// Growth rate above which an updated cluster becomes an event.
    #[arg(long, default_value_t = 0.5)]
    growth: f64,
    /// Minimum tweets for a local cluster to survive the document boundary.
    #[arg(long, default_value_t = 30)]
    min_cluster: u64,
    /// Documents of inactivity before a global cluster is evicted.
    #[arg(long, default_value_t = 3)]
    inactivity: u64,
    /// Weight floor for established clusters (more than --established-size
    /// tweets).
    #[arg(long, default_value_t = 0.01)]
    prune_established: f64,
    /// Weight floor for fresh clusters entering the store.
    #[arg(long, default_value_t = 0.05)]
    prune_new: f64,
    #[arg(long, default_value_t = 50)]
    established_size: u64,
    /// Assign tweets to the most similar cluster instead of the first fit.
    #[arg(long)]
    best_fit: bool,
}

#[derive(Args)]
struct Compare {
    /// Event file written by run-keybased.
    #[arg(long)]
    keybased: PathBuf,
    /// Event file written by run-clustering.
    #[arg(long)]
    clustering: PathBuf,
    /// Also write the overlap report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenSynthetic {
    /// Generator spec file (JSON). Flags below override the preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    docs: Option<u32>,
    /// Background chatter tweets per document.
    #[arg(long)]
    tweets_per_doc: Option<u32>,
    /// Plant a word burst, WORD@DOC=OCCURRENCES. Repeatable.
    #[arg(long, value_name = "WORD@DOC=N")]
    burst: Vec<String>,
    /// Plant a near-duplicate topic, a,b,c@DOC=TWEETS. Repeatable.
    #[arg(long, value_name = "TERMS@DOC=N")]
    topic: Vec<String>,
    /// Corpus output path.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth sidecar path; defaults to OUT.truth.json.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct Report {
    /// Run report files produced by the run subcommands.
    files: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::RunKeybased(args) => run_keybased(args),
        Command::RunClustering(args) => run_clustering(args),
        Command::Compare(args) => compare(args),
        Command::GenSynthetic(args) => gen_synthetic(args),
        Command::Report(args) => report(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn parse_tasks(specs: &[String], bolt: &str, default: usize) -> Result<usize> {
    let mut tasks = default;
    for spec in specs {
        let (name, count) = spec
            .split_once('=')
            .with_context(|| format!("--tasks {spec:?} is not BOLT=N"))?;
        let count: usize = count
            .parse()
            .with_context(|| format!("--tasks {spec:?} has a non-numeric count"))?;
        if count == 0 {
            bail!("--tasks {spec:?}: task count must be at least 1");
        }
        if name == bolt {
            tasks = count;
        } else if name != "detect" {
            bail!("--tasks {spec:?}: unknown bolt (expected {bolt:?})");
        } else if count != 1 {
            bail!("--tasks {spec:?}: the detector always runs as a single task");
        }
    }
    Ok(tasks)
}

fn build_preprocessor(args: &CommonRunArgs) -> Result<Arc<Preprocessor>> {
    let stopwords = match &args.stopwords {
        Some(path) => parse_stopwords(
            &fs::read_to_string(path)
                .with_context(|| format!("reading stop words from {}", path.display()))?,
        ),
        None => parse_stopwords(DEFAULT_STOPWORDS),
    };
    Ok(Arc::new(Preprocessor::new(stopwords, !args.no_stemming)))
}

fn build_store(spec: &str) -> Result<(SharedStore, Option<PathBuf>)> {
    if spec == "memory" {
        return Ok((store::shared(MemoryStore::new()), None));
    }
    if let Some(path) = spec.strip_prefix("file:") {
        let path = PathBuf::from(path);
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let file_store = FileStore::open(&path)
            .with_context(|| format!("opening store snapshot {}", path.display()))?;
        return Ok((store::shared(file_store), Some(path)));
    }
    bail!("--store must be \"memory\" or \"file:PATH\", got {spec:?}")
}

fn build_options(args: &CommonRunArgs, bolt: &str) -> Result<RunOptions> {
    Ok(RunOptions {
        barrier: match args.barrier {
            BarrierArg::Direct => BarrierMode::DirectBarrier,
            BarrierArg::Sleep => BarrierMode::Sleep(Duration::from_millis(args.sleep_ms)),
        },
        worker_tasks: parse_tasks(&args.tasks, bolt, 2)?,
        queue_bound: args.queue_bound,
        seed: args.seed,
        replay: ReplayConfig {
            window_seconds: args.window_seconds,
            stream_start: args.stream_start,
        },
        country: args.country.clone(),
    })
}

fn write_report(run: &DetectionRun, out_dir: &Path) -> Result<PathBuf> {
    let path = out_dir.join("report.json");
    let file = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(file, &run.report)?;
    Ok(path)
}

fn print_summary(run: &DetectionRun) {
    let r = &run.report;
    println!(
        "{}: {} documents, {} events, {} store commits, {:.3}s wall time",
        r.method, r.documents, r.event_count, r.store_commits, r.wall_time_secs
    );
    if r.runtime.interleaving_violations > 0 {
        println!(
            "  cross-document interleavings observed: {}",
            r.runtime.interleaving_violations
        );
    }
    if r.skipped_empty_tweets > 0 {
        println!("  tweets skipped (empty vector): {}", r.skipped_empty_tweets);
    }
}

fn run_keybased(args: RunKeybased) -> Result<ExitCode> {
    let params = KeyParams {
        common_word_threshold: args.common_threshold,
        tfidf_event_rate: args.event_rate,
        absolute_floor: args.floor,
    };
    if params.tfidf_event_rate <= 1.0 {
        bail!("--event-rate must exceed 1");
    }
    let preprocessor = build_preprocessor(&args.common)?;
    let (store, _) = build_store(&args.common.store)?;
    let options = build_options(&args.common, "count")?;
    fs::create_dir_all(&args.common.out)?;

    let run = eval::run_keybased(&args.common.corpus, preprocessor, params, store, &options)?;

    let events_path = args.common.out.join("events.jsonl");
    eval::write_event_file(
        &events_path,
        run.report.method,
        &run.report.corpus_fingerprint,
        &run.word_events,
        &[],
    )?;
    let charts = eval::export_charts(&run.word_events, &args.common.out.join("charts"))?;
    let report_path = write_report(&run, &args.common.out)?;
    print_summary(&run);
    println!(
        "  wrote {}, {} charts, {}",
        events_path.display(),
        charts,
        report_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_clustering(args: RunClustering) -> Result<ExitCode> {
    let params = ClusterParams {
        similarity_threshold: args.similarity,
        growth_threshold: args.growth,
        num_tweet_threshold: args.min_cluster,
        prune_weight_established: args.prune_established,
        prune_weight_new: args.prune_new,
        established_size: args.established_size,
        inactivity_blocks: args.inactivity,
        assignment: if args.best_fit {
            Assignment::BestFit
        } else {
            Assignment::FirstFit
        },
    };
    let preprocessor = build_preprocessor(&args.common)?;
    let (store, store_path) = build_store(&args.common.store)?;
    let options = build_options(&args.common, "cluster")?;
    fs::create_dir_all(&args.common.out)?;

    let run = eval::run_clustering(&args.common.corpus, preprocessor, params, store, &options)?;

    let events_path = args.common.out.join("cluster-events.jsonl");
    eval::write_event_file(
        &events_path,
        Method::Clustering,
        &run.report.corpus_fingerprint,
        &[],
        &run.cluster_events,
    )?;
    // Memory-backed runs still leave a snapshot next to the events.
    let snapshot_path = match store_path {
        Some(path) => path,
        None => {
            let path = args.common.out.join("store.snapshot");
            let mut file = BufWriter::new(File::create(&path)?);
            squall_core::store::write_snapshot(&mut file, &run.snapshot)?;
            path
        }
    };
    let report_path = write_report(&run, &args.common.out)?;
    print_summary(&run);
    println!(
        "  wrote {}, {}, {}",
        events_path.display(),
        snapshot_path.display(),
        report_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn compare(args: Compare) -> Result<ExitCode> {
    match eval::compare_files(&args.keybased, &args.clustering) {
        Ok(report) => {
            print_overlap(&report);
            if let Some(path) = args.out {
                let file = BufWriter::new(File::create(&path)?);
                serde_json::to_writer_pretty(file, &report)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(EvalError::FingerprintMismatch { left, right }) => {
            eprintln!("comparison mismatch: corpora differ ({left} vs {right})");
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn print_overlap(report: &OverlapReport) {
    println!(
        "clusters containing keywords: {}/{} = {:.3}",
        report.clusters_containing_keywords, report.total_clusters, report.cluster_overlap_rate
    );
    println!(
        "keywords covered by clusters: {}/{} = {:.3}",
        report.keywords_in_clusters, report.total_keywords, report.keyword_coverage_rate
    );
}

fn parse_burst(spec: &str) -> Result<synth::WordBurst> {
    let (word, rest) = spec
        .split_once('@')
        .with_context(|| format!("--burst {spec:?} is not WORD@DOC=N"))?;
    let (doc, occurrences) = rest
        .split_once('=')
        .with_context(|| format!("--burst {spec:?} is not WORD@DOC=N"))?;
    if !synth::plantable(word) {
        bail!("--burst {spec:?}: {word:?} does not survive preprocessing as one token");
    }
    Ok(synth::WordBurst {
        word: word.to_string(),
        doc: doc.parse().context("burst document index")?,
        occurrences: occurrences.parse().context("burst occurrences")?,
    })
}

fn parse_topic(spec: &str) -> Result<synth::TopicSpec> {
    let (terms, rest) = spec
        .split_once('@')
        .with_context(|| format!("--topic {spec:?} is not TERMS@DOC=N"))?;
    let (doc, tweets) = rest
        .split_once('=')
        .with_context(|| format!("--topic {spec:?} is not TERMS@DOC=N"))?;
    Ok(synth::TopicSpec {
        terms: terms.split(',').map(|t| t.trim().to_string()).collect(),
        schedule: vec![synth::TopicDoc {
            doc: doc.parse().context("topic document index")?,
            tweets: tweets.parse().context("topic tweet count")?,
        }],
    })
}

fn gen_synthetic(args: GenSynthetic) -> Result<ExitCode> {
    let mut spec: synth::SyntheticSpec = match &args.spec {
        Some(path) => serde_json::from_str(
            &fs::read_to_string(path)
                .with_context(|| format!("reading spec {}", path.display()))?,
        )
        .context("parsing generator spec")?,
        None => synth::SyntheticSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(docs) = args.docs {
        spec.documents = docs;
    }
    if let Some(tweets) = args.tweets_per_doc {
        spec.background
            .get_or_insert_with(Default::default)
            .tweets_per_doc = tweets;
    }
    for burst in &args.burst {
        spec.word_bursts.push(parse_burst(burst)?);
    }
    for topic in &args.topic {
        spec.topics.push(parse_topic(topic)?);
    }

    let truth_path = args
        .truth
        .unwrap_or_else(|| args.out.with_extension("truth.json"));
    let (fingerprint, truth) = synth::generate_to_files(&spec, &args.out, Some(&truth_path))?;
    println!(
        "wrote {} ({} documents, fingerprint {}) and {}",
        args.out.display(),
        truth.documents,
        &fingerprint[..12],
        truth_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn report(args: Report) -> Result<ExitCode> {
    if args.files.is_empty() {
        bail!("no report files given");
    }
    println!(
        "{:<18} {:>10} {:>8} {:>9} {:>12}",
        "method", "wall_s", "docs", "events", "commits"
    );
    for path in &args.files {
        let report: eval::RunReport = serde_json::from_str(
            &fs::read_to_string(path)
                .with_context(|| format!("reading report {}", path.display()))?,
        )
        .with_context(|| format!("parsing report {}", path.display()))?;
        println!(
            "{:<18} {:>10.3} {:>8} {:>9} {:>12}",
            report.method.to_string(),
            report.wall_time_secs,
            report.documents,
            report.event_count,
            report.store_commits
        );
    }
    Ok(ExitCode::SUCCESS)
}
