//! Command-line front end: ingest dumps, build the BM25F index, answer
//! queries through the two-layer pipeline, and compute evaluation reports.
//!
//! Machine output is always a single JSON document: it goes to `--output`
//! when given (human-readable text then prints to stdout), otherwise to
//! stdout (human-readable text moves to stderr). Diagnostics go to stderr.

mod config;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ragline_core::corpus::{ingest_corpus, CorpusFilter, CorpusStore, TimeRange};
use ragline_core::evalstats::{build_report, read_records_csv, SummaryText};
use ragline_core::index::{build_index, Field, FieldConfig, Index, DEFAULT_K1};
use ragline_core::llm::{BackendConfig, Generator, HttpBackend, MockBackend, MockScript};
use ragline_core::pipeline::{
    answer_query, AnswerBundle, Layer, PipelineConfig, PromptTemplate, PromptTemplates,
};

use config::{pick, FileConfig};

#[derive(Parser)]
#[command(
    name = "ragline",
    version,
    about = "Query-focused summarization over social-media dumps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Shared {
    /// Flat key=value config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Destination for machine-readable JSON output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and filter a newline-delimited JSON dump into a corpus store.
    Ingest {
        #[command(flatten)]
        shared: Shared,
        /// Input dump (one JSON record per line).
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated keywords; posts must match one at a word boundary.
        #[arg(long)]
        keywords: Option<String>,
        /// Keep posts within [--from, --to] seconds since the epoch.
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        to: Option<u64>,
        /// Keep records marked deleted instead of dropping them.
        #[arg(long)]
        keep_deleted: bool,
    },
    /// Build the BM25F index over a corpus store.
    BuildIndex {
        #[command(flatten)]
        shared: Shared,
        /// Corpus store directory (from `ingest`).
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        k1: Option<f64>,
        #[arg(long)]
        w_title: Option<f64>,
        #[arg(long)]
        w_body: Option<f64>,
        #[arg(long)]
        b_title: Option<f64>,
        #[arg(long)]
        b_body: Option<f64>,
    },
    /// Answer a query (or a batch file of queries) over an indexed corpus.
    Query(Box<QueryArgs>),
    /// Build the evaluation report from a Likert-record CSV.
    Eval {
        #[command(flatten)]
        shared: Shared,
        /// CSV with header query_id,model_id,rater_id,criterion,score.
        #[arg(long)]
        records: PathBuf,
        /// Optional JSON array of {query_id, model_id, text} summaries.
        #[arg(long)]
        summaries: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Ingest {
            shared,
            input,
            keywords,
            from,
            to,
            keep_deleted,
        } => cmd_ingest(shared, input, keywords, from, to, keep_deleted),
        Command::BuildIndex {
            shared,
            corpus,
            k1,
            w_title,
            w_body,
            b_title,
            b_body,
        } => cmd_build_index(shared, corpus, k1, w_title, w_body, b_title, b_body),
        Command::Query(args) => cmd_query(*args),
        Command::Eval {
            shared,
            records,
            summaries,
        } => cmd_eval(shared, records, summaries),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[command(flatten)]
    shared: Shared,
    /// The question to answer. Omit when using --batch.
    query: Option<String>,
    /// CSV file with header query_id,query; runs every row.
    #[arg(long, conflicts_with = "query")]
    batch: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Retrieval depth (default 50).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    from: Option<u64>,
    #[arg(long)]
    to: Option<u64>,
    /// Generation backend.
    #[arg(long, value_parser = ["http", "mock"])]
    backend: Option<String>,
    /// Directory holding layer1.txt and layer2.txt templates.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    base_url: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    timeout_s: Option<u64>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    backoff_base_s: Option<f64>,
    #[arg(long)]
    segment_budget: Option<usize>,
    #[arg(long)]
    layer2_budget: Option<usize>,
    #[arg(long)]
    max_parallel: Option<usize>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    no_answer_sentinel: Option<String>,
    /// JSON mock script: {"rules":[{"pattern":..,"response":..}],"fallback_sentences":N}.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    fallback_sentences: Option<usize>,
}

/// Write the machine-readable JSON and the human-readable text according to
/// the output policy.
fn emit(output: Option<&Path>, json: &str, human: &str) -> Result<()> {
    match output {
        Some(path) => {
            fs::write(path, json).with_context(|| format!("cannot write {}", path.display()))?;
            if !human.is_empty() {
                println!("{human}");
            }
        }
        None => {
            println!("{json}");
            if !human.is_empty() {
                eprintln!("{human}");
            }
        }
    }
    Ok(())
}

fn time_range(from: Option<u64>, to: Option<u64>) -> Result<Option<TimeRange>> {
    Ok(match (from, to) {
        (None, None) => None,
        (from, to) => Some(
            TimeRange::new(from.unwrap_or(0), to.unwrap_or(u64::MAX))
                .map_err(|e| anyhow::anyhow!("{e}"))?,
        ),
    })
}

fn cmd_ingest(
    shared: Shared,
    input: PathBuf,
    keywords: Option<String>,
    from: Option<u64>,
    to: Option<u64>,
    keep_deleted: bool,
) -> Result<()> {
    let file_config = FileConfig::load(shared.config.as_deref())?;
    let output = shared
        .output
        .or_else(|| file_config.get("output").map(PathBuf::from))
        .context("ingest needs --output (or output= in the config) for the corpus store")?;
    let keywords = keywords
        .or_else(|| file_config.get("keywords").map(str::to_string))
        .map(|kw| {
            kw.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    let from = match from {
        Some(v) => Some(v),
        None => file_config.parse("from")?,
    };
    let to = match to {
        Some(v) => Some(v),
        None => file_config.parse("to")?,
    };
    let keep_deleted = keep_deleted || file_config.parse("keep_deleted")?.unwrap_or(false);

    let filter = CorpusFilter {
        keywords,
        time_range: time_range(from, to)?,
        drop_deleted: !keep_deleted,
    };
    let reader = BufReader::new(
        fs::File::open(&input).with_context(|| format!("cannot open input {}", input.display()))?,
    );
    let (_, stats) = ingest_corpus(reader, &filter, &output)
        .with_context(|| format!("ingest into {} failed", output.display()))?;
    // Stats are the machine output here; the store itself went to --output.
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_build_index(
    shared: Shared,
    corpus: Option<PathBuf>,
    k1: Option<f64>,
    w_title: Option<f64>,
    w_body: Option<f64>,
    b_title: Option<f64>,
    b_body: Option<f64>,
) -> Result<()> {
    let file_config = FileConfig::load(shared.config.as_deref())?;
    let corpus = corpus
        .or_else(|| file_config.get("corpus").map(PathBuf::from))
        .context("build-index needs --corpus")?;
    let output = shared
        .output
        .or_else(|| file_config.get("output").map(PathBuf::from))
        .context("build-index needs --output for the index directory")?;

    let store = CorpusStore::open(&corpus).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut title = FieldConfig::new(Field::Title);
    let mut body = FieldConfig::new(Field::Body);
    if let Some(w) = w_title {
        title.boost = w;
    }
    if let Some(b) = b_title {
        title.length_norm = b;
    }
    if let Some(w) = w_body {
        body.boost = w;
    }
    if let Some(b) = b_body {
        body.length_norm = b;
    }
    let index = build_index(&store, &[title, body], k1.unwrap_or(DEFAULT_K1))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    index.save(&output).map_err(|e| anyhow::anyhow!("{e}"))?;
    println!(
        "{}",
        serde_json::json!({
            "documents": index.doc_count(),
            "index": output.to_string_lossy(),
        })
    );
    Ok(())
}

fn load_templates(dir: Option<&Path>) -> Result<PromptTemplates> {
    let Some(dir) = dir else {
        return Ok(PromptTemplates::default());
    };
    let read = |name: &str, layer: Layer| -> Result<PromptTemplate> {
        let path = dir.join(name);
        let text = fs::read_to_string(&path)
            .with_context(|| format!("cannot read template {}", path.display()))?;
        PromptTemplate::new(layer, text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    };
    Ok(PromptTemplates {
        layer1: read("layer1.txt", Layer::One)?,
        layer2: read("layer2.txt", Layer::Two)?,
    })
}

fn cmd_query(args: QueryArgs) -> Result<()> {
    let file_config = FileConfig::load(args.shared.config.as_deref())?;

    let index_dir = args
        .index
        .or_else(|| file_config.get("index").map(PathBuf::from))
        .context("query needs --index")?;
    let corpus_dir = args
        .corpus
        .or_else(|| file_config.get("corpus").map(PathBuf::from))
        .context("query needs --corpus (post texts feed the summarizer)")?;
    let templates_dir = args
        .templates
        .or_else(|| file_config.get("templates").map(PathBuf::from));

    let defaults = PipelineConfig::default();
    let pipeline_config = PipelineConfig {
        k: pick(args.k, file_config.parse("k")?, defaults.k),
        segment_budget: pick(
            args.segment_budget,
            file_config.parse("segment_budget")?,
            defaults.segment_budget,
        ),
        layer2_budget: pick(
            args.layer2_budget,
            file_config.parse("layer2_budget")?,
            defaults.layer2_budget,
        ),
        no_answer_sentinel: pick(
            args.no_answer_sentinel,
            file_config.get("no_answer_sentinel").map(str::to_string),
            defaults.no_answer_sentinel,
        ),
        max_parallel: pick(
            args.max_parallel,
            file_config.parse("max_parallel")?,
            defaults.max_parallel,
        ),
        model_id: pick(
            args.model,
            file_config.get("model").map(str::to_string),
            defaults.model_id,
        ),
        max_tokens: pick(
            args.max_tokens,
            file_config.parse("max_tokens")?,
            defaults.max_tokens,
        ),
        temperature: pick(
            args.temperature,
            file_config.parse("temperature")?,
            defaults.temperature,
        ),
    };

    let backend_kind = pick(
        args.backend,
        file_config.get("backend").map(str::to_string),
        "mock".to_string(),
    );
    let backend: Box<dyn Generator> = match backend_kind.as_str() {
        "mock" => {
            let script_path = args
                .mock_script
                .or_else(|| file_config.get("mock_script").map(PathBuf::from));
            let mut script = match script_path {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("cannot read mock script {}", path.display()))?;
                    serde_json::from_str::<MockScript>(&text)
                        .with_context(|| format!("bad mock script {}", path.display()))?
                }
                None => MockScript::default(),
            };
            if let Some(n) = args
                .fallback_sentences
                .or(file_config.parse("fallback_sentences")?)
            {
                script.fallback_sentences = n;
            }
            Box::new(MockBackend::new(script))
        }
        "http" => {
            let defaults = BackendConfig::default();
            let config = BackendConfig {
                base_url: pick(
                    args.base_url,
                    file_config.get("base_url").map(str::to_string),
                    defaults.base_url,
                ),
                api_key_env: args
                    .api_key_env
                    .or_else(|| file_config.get("api_key_env").map(str::to_string)),
                timeout: Duration::from_secs(pick(
                    args.timeout_s,
                    file_config.parse("timeout_s")?,
                    defaults.timeout.as_secs(),
                )),
                max_retries: pick(
                    args.max_retries,
                    file_config.parse("max_retries")?,
                    defaults.max_retries,
                ),
                backoff_base: Duration::from_secs_f64(pick(
                    args.backoff_base_s,
                    file_config.parse("backoff_base_s")?,
                    defaults.backoff_base.as_secs_f64(),
                )),
            };
            Box::new(HttpBackend::new(config).map_err(|e| anyhow::anyhow!("{e}"))?)
        }
        other => bail!("unknown backend {other:?} (expected http or mock)"),
    };

    let index = Index::load(&index_dir).map_err(|e| anyhow::anyhow!("{e}"))?;
    let store = CorpusStore::open(&corpus_dir).map_err(|e| anyhow::anyhow!("{e}"))?;
    let templates = load_templates(templates_dir.as_deref())?;
    let range = time_range(
        match args.from {
            Some(v) => Some(v),
            None => file_config.parse("from")?,
        },
        match args.to {
            Some(v) => Some(v),
            None => file_config.parse("to")?,
        },
    )?;

    let run = |query: &str| -> Result<AnswerBundle> {
        answer_query(
            &index,
            &store,
            backend.as_ref(),
            &pipeline_config,
            &templates,
            query,
            range,
        )
        .map_err(|e| anyhow::anyhow!("{e}"))
    };

    match (args.query, args.batch) {
        (Some(query), None) => {
            let bundle = run(&query)?;
            let human = human_summary(&bundle);
            emit(
                args.shared.output.as_deref(),
                &serde_json::to_string_pretty(&bundle)?,
                &human,
            )
        }
        (None, Some(batch)) => {
            let text = fs::read_to_string(&batch)
                .with_context(|| format!("cannot read batch file {}", batch.display()))?;
            let mut bundles = Vec::new();
            let mut human = String::new();
            for (lineno, line) in text.lines().enumerate() {
                if lineno == 0 || line.trim().is_empty() {
                    continue; // header
                }
                let (id, query) = line.split_once(',').with_context(|| {
                    format!(
                        "{}:{}: expected query_id,query",
                        batch.display(),
                        lineno + 1
                    )
                })?;
                let bundle = run(query)?;
                human.push_str(&format!("[{id}] {}\n", human_summary(&bundle)));
                bundles.push(serde_json::json!({
                    "query_id": id,
                    "bundle": bundle,
                }));
            }
            emit(
                args.shared.output.as_deref(),
                &serde_json::to_string_pretty(&bundles)?,
                human.trim_end(),
            )
        }
        (None, None) => bail!("provide a query argument or --batch FILE"),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with prevents this"),
    }
}

fn human_summary(bundle: &AnswerBundle) -> String {
    match bundle.status {
        ragline_core::pipeline::AnswerStatus::Answered => bundle.final_summary.clone(),
        ragline_core::pipeline::AnswerStatus::NoInformation => {
            "(no information found for this query)".to_string()
        }
    }
}

fn cmd_eval(shared: Shared, records: PathBuf, summaries: Option<PathBuf>) -> Result<()> {
    // eval reads no keys from the config file, but a broken file still fails.
    FileConfig::load(shared.config.as_deref())?;
    let reader = fs::File::open(&records)
        .with_context(|| format!("cannot open records {}", records.display()))?;
    let records = read_records_csv(BufReader::new(reader)).map_err(|e| anyhow::anyhow!("{e}"))?;
    let summary_texts: Option<Vec<SummaryText>> = match summaries {
        None => None,
        Some(path) => {
            let text = fs::read_to_string(&path)
                .with_context(|| format!("cannot read summaries {}", path.display()))?;
            Some(
                serde_json::from_str(&text)
                    .with_context(|| format!("bad summaries JSON {}", path.display()))?,
            )
        }
    };
    let report =
        build_report(&records, summary_texts.as_deref()).map_err(|e| anyhow::anyhow!("{e}"))?;
    emit(
        shared.output.as_deref(),
        &serde_json::to_string_pretty(&report)?,
        &report.to_table(),
    )
}
