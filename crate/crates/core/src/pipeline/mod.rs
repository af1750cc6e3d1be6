//! Two-layer answer generation.
//!
//! `answer_query` runs the full flow: retrieve the top-k posts, segment each
//! one under the layer-1 budget, generate one query-focused summary per
//! segment (layer 1, fanned out over worker threads), drop summaries flagged
//! with the no-answer sentinel, and aggregate the survivors into one final
//! summary (layer 2). When the combined summaries overflow the layer-2
//! budget they are aggregated in batches and the batch outputs are reduced
//! again until a single summary remains.
//!
//! With the mock backend the whole run is a pure function of its inputs:
//! results are assembled in (retrieval rank, segment index) order no matter
//! how the concurrent layer-1 calls complete, and the serialized bundle
//! excludes wall-clock timing.

mod prompt;
mod segment;

pub use prompt::{
    detect_no_answer, render_prompt, Layer, PromptTemplate, CONTENT_PLACEHOLDER,
    DEFAULT_LAYER1_TEMPLATE, DEFAULT_LAYER2_TEMPLATE, DEFAULT_NO_ANSWER_SENTINEL,
    QUERY_PLACEHOLDER,
};
pub use segment::{segment_post, Segment};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusStore, TimeRange};
use crate::index::{Index, RetrievalResult};
use crate::llm::{GenerationRequest, Generator, LlmError};
use crate::text;

pub use crate::text::estimate_tokens;

/// Default retrieval depth.
pub const DEFAULT_K: usize = 50;

/// Pipeline knobs. `segment_budget` and `layer2_budget` cap the token
/// estimate of every layer-1 and layer-2 prompt respectively;
/// `max_parallel` bounds in-flight layer-1 generations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k: usize,
    pub segment_budget: usize,
    pub layer2_budget: usize,
    pub no_answer_sentinel: String,
    /// Execution knob only: it never affects results, so it is kept out of
    /// the serialized config snapshot.
    #[serde(skip_serializing, default = "default_max_parallel")]
    pub max_parallel: usize,
    pub model_id: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

fn default_max_parallel() -> usize {
    4
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            segment_budget: 512,
            layer2_budget: 2048,
            no_answer_sentinel: DEFAULT_NO_ANSWER_SENTINEL.to_string(),
            max_parallel: default_max_parallel(),
            model_id: "default".to_string(),
            max_tokens: 512,
            temperature: 0.0,
        }
    }
}

impl PipelineConfig {
    fn validate(&self) -> Result<(), PipelineError> {
        if self.k == 0 {
            return Err(PipelineError::Config("k must be positive".into()));
        }
        if self.segment_budget == 0 || self.layer2_budget == 0 {
            return Err(PipelineError::Config("budgets must be positive".into()));
        }
        if self.max_parallel == 0 {
            return Err(PipelineError::Config(
                "max_parallel must be positive".into(),
            ));
        }
        if self.no_answer_sentinel.trim().is_empty() {
            return Err(PipelineError::Config(
                "no_answer_sentinel must be nonempty".into(),
            ));
        }
        Ok(())
    }
}

/// Layer-1 and layer-2 templates as a pair.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub layer1: PromptTemplate,
    pub layer2: PromptTemplate,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            layer1: PromptTemplate::default_layer1(),
            layer2: PromptTemplate::default_layer2(),
        }
    }
}

/// One per-segment summary. Flagged summaries (`no_answer = true`) are kept
/// for provenance but never enter a layer-2 prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerOneSummary {
    pub doc_id: String,
    pub seg_index: usize,
    pub text: String,
    pub no_answer: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerStatus {
    Answered,
    NoInformation,
}

/// Deterministic call/token counters for one run. Token counts use the
/// default word estimator uniformly, not backend-reported usage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAccounting {
    pub layer1_calls: u64,
    pub layer2_calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Wall-clock timing; excluded from the serialized bundle so that mock runs
/// serialize byte-identically.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunTiming {
    pub total_ms: u64,
}

/// Final summary plus complete provenance: the ranked retrieval list and
/// every layer-1 summary (flagged ones included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerBundle {
    pub query: String,
    pub status: AnswerStatus,
    pub final_summary: String,
    pub layer1: Vec<LayerOneSummary>,
    pub retrieval: Vec<RetrievalResult>,
    pub config: PipelineConfig,
    pub tokens: TokenAccounting,
    #[serde(skip)]
    pub timing: RunTiming,
}

impl AnswerBundle {
    fn no_information(
        query: &str,
        config: &PipelineConfig,
        retrieval: Vec<RetrievalResult>,
        layer1: Vec<LayerOneSummary>,
        tokens: TokenAccounting,
    ) -> Self {
        Self {
            query: query.to_string(),
            status: AnswerStatus::NoInformation,
            final_summary: String::new(),
            layer1,
            retrieval,
            config: config.clone(),
            tokens,
            timing: RunTiming::default(),
        }
    }
}

/// Provenance gathered before a mid-run failure, carried inside
/// [`PipelineError::Backend`] for diagnostics.
#[derive(Debug, Clone, Default)]
pub struct PartialRun {
    pub retrieval: Vec<RetrievalResult>,
    pub layer1: Vec<LayerOneSummary>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("text is empty")]
    EmptyText,
    #[error("invalid template: {0}")]
    Template(String),
    #[error("rendered prompt estimates {estimate} tokens, budget is {budget}")]
    BudgetOverflow { estimate: usize, budget: usize },
    #[error(
        "layer-2 budget {budget} too small to batch two summaries \
         (overhead {overhead}, first two summaries estimate {needed})"
    )]
    BudgetTooSmall {
        budget: usize,
        overhead: usize,
        needed: usize,
    },
    #[error("backend failure mid-run: {source}")]
    Backend {
        #[source]
        source: LlmError,
        partial: PartialRun,
    },
    #[error(transparent)]
    Index(#[from] crate::index::IndexError),
}

struct Layer1Job {
    segment: Segment,
    prompt: String,
}

/// Answer `query` against an indexed corpus through `backend`.
///
/// Steps: retrieve top-k (optionally time-restricted), segment each post
/// under `segment_budget` minus the layer-1 prompt overhead, run one layer-1
/// generation per segment with at most `max_parallel` in flight, drop
/// flagged summaries, and aggregate the rest into the final summary. Zero
/// retrieval hits or zero surviving summaries yield
/// [`AnswerStatus::NoInformation`] with no layer-2 call.
pub fn answer_query(
    index: &Index,
    store: &CorpusStore,
    backend: &dyn Generator,
    config: &PipelineConfig,
    templates: &PromptTemplates,
    query: &str,
    time_range: Option<TimeRange>,
) -> Result<AnswerBundle, PipelineError> {
    let started = Instant::now();
    config.validate()?;
    let mut tokens = TokenAccounting::default();

    let retrieval = index.search(query, config.k, time_range);
    if retrieval.is_empty() {
        let mut bundle = AnswerBundle::no_information(query, config, retrieval, Vec::new(), tokens);
        bundle.timing.total_ms = started.elapsed().as_millis() as u64;
        return Ok(bundle);
    }

    let layer1_overhead = templates.layer1.overhead(query);
    if layer1_overhead >= config.segment_budget {
        return Err(PipelineError::Config(format!(
            "segment budget {} does not exceed layer-1 prompt overhead {}",
            config.segment_budget, layer1_overhead
        )));
    }
    let content_budget = config.segment_budget - layer1_overhead;

    // One job per segment, ordered by (retrieval rank, segment index).
    let mut jobs = Vec::new();
    for hit in &retrieval {
        let post = store.get(&hit.doc_id).ok_or_else(|| {
            PipelineError::Config(format!(
                "document {} is indexed but missing from the corpus store",
                hit.doc_id
            ))
        })?;
        for segment in segment_post(&hit.doc_id, &post.full_text(), content_budget)? {
            let prompt = render_prompt(
                &templates.layer1,
                query,
                &segment.text,
                config.segment_budget,
            )?;
            jobs.push(Layer1Job { segment, prompt });
        }
    }

    let responses = run_layer1(backend, config, &jobs, &retrieval, &mut tokens)?;

    let mut layer1 = Vec::with_capacity(jobs.len());
    for (job, content) in jobs.iter().zip(responses) {
        let no_answer = detect_no_answer(&content, &config.no_answer_sentinel);
        layer1.push(LayerOneSummary {
            doc_id: job.segment.doc_id.clone(),
            seg_index: job.segment.seg_index,
            text: content,
            no_answer,
        });
    }

    let surviving: Vec<&LayerOneSummary> = layer1.iter().filter(|s| !s.no_answer).collect();
    if surviving.is_empty() {
        let mut bundle = AnswerBundle::no_information(query, config, retrieval, layer1, tokens);
        bundle.timing.total_ms = started.elapsed().as_millis() as u64;
        return Ok(bundle);
    }

    let survivors: Vec<String> = surviving.iter().map(|s| s.text.clone()).collect();
    let final_summary = aggregate(
        backend,
        config,
        templates,
        query,
        survivors,
        &retrieval,
        &layer1,
        &mut tokens,
    )?;

    Ok(AnswerBundle {
        query: query.to_string(),
        status: AnswerStatus::Answered,
        final_summary,
        layer1,
        retrieval,
        config: config.clone(),
        tokens,
        timing: RunTiming {
            total_ms: started.elapsed().as_millis() as u64,
        },
    })
}

/// Fan layer-1 jobs out over up to `max_parallel` workers. Results land in
/// job order regardless of completion order; the first failure aborts with
/// partial provenance.
fn run_layer1(
    backend: &dyn Generator,
    config: &PipelineConfig,
    jobs: &[Layer1Job],
    retrieval: &[RetrievalResult],
    tokens: &mut TokenAccounting,
) -> Result<Vec<String>, PipelineError> {
    let slots: Mutex<Vec<Option<Result<String, LlmError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next_job = AtomicUsize::new(0);
    let workers = config.max_parallel.min(jobs.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next_job.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let request = GenerationRequest {
                    model_id: config.model_id.clone(),
                    messages: vec![crate::llm::Message {
                        role: crate::llm::Role::User,
                        content: jobs[i].prompt.clone(),
                    }],
                    temperature: config.temperature,
                    max_tokens: config.max_tokens,
                };
                let outcome = backend.generate(&request).map(|r| r.content);
                slots.lock().unwrap()[i] = Some(outcome);
            });
        }
    });

    let outcomes = slots.into_inner().unwrap();
    let mut contents = Vec::with_capacity(jobs.len());
    let mut failure: Option<LlmError> = None;
    let mut completed: Vec<LayerOneSummary> = Vec::new();
    for (job, outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Some(Ok(content)) => {
                tokens.layer1_calls += 1;
                tokens.prompt_tokens += text::estimate_tokens(&job.prompt) as u64;
                tokens.completion_tokens += text::estimate_tokens(&content) as u64;
                if failure.is_none() {
                    contents.push(content);
                } else {
                    completed.push(LayerOneSummary {
                        doc_id: job.segment.doc_id.clone(),
                        seg_index: job.segment.seg_index,
                        text: content,
                        no_answer: false,
                    });
                }
            }
            Some(Err(e)) if failure.is_none() => failure = Some(e),
            _ => {}
        }
    }
    if let Some(source) = failure {
        let mut partial_layer1: Vec<LayerOneSummary> = contents
            .iter()
            .zip(jobs)
            .map(|(content, job)| LayerOneSummary {
                doc_id: job.segment.doc_id.clone(),
                seg_index: job.segment.seg_index,
                text: content.clone(),
                no_answer: false,
            })
            .collect();
        partial_layer1.extend(completed);
        return Err(PipelineError::Backend {
            source,
            partial: PartialRun {
                retrieval: retrieval.to_vec(),
                layer1: partial_layer1,
            },
        });
    }
    Ok(contents)
}

/// Aggregate surviving summaries into one final summary, batching and
/// recursing when the combined prompt overflows the layer-2 budget.
#[allow(clippy::too_many_arguments)]
fn aggregate(
    backend: &dyn Generator,
    config: &PipelineConfig,
    templates: &PromptTemplates,
    query: &str,
    mut pending: Vec<String>,
    retrieval: &[RetrievalResult],
    layer1: &[LayerOneSummary],
    tokens: &mut TokenAccounting,
) -> Result<String, PipelineError> {
    let overhead = templates.layer2.overhead(query);
    if overhead >= config.layer2_budget {
        return Err(PipelineError::Config(format!(
            "layer-2 budget {} does not exceed prompt overhead {}",
            config.layer2_budget, overhead
        )));
    }
    let content_budget = config.layer2_budget - overhead;

    loop {
        let batches = pack_batches(&pending, content_budget, config.layer2_budget, overhead)?;
        let mut outputs = Vec::with_capacity(batches.len());
        for batch in &batches {
            let content = batch.join("\n");
            let prompt = render_prompt(&templates.layer2, query, &content, config.layer2_budget)?;
            let request = GenerationRequest {
                model_id: config.model_id.clone(),
                messages: vec![crate::llm::Message {
                    role: crate::llm::Role::User,
                    content: prompt.clone(),
                }],
                temperature: config.temperature,
                max_tokens: config.max_tokens,
            };
            let response = backend
                .generate(&request)
                .map_err(|source| PipelineError::Backend {
                    source,
                    partial: PartialRun {
                        retrieval: retrieval.to_vec(),
                        layer1: layer1.to_vec(),
                    },
                })?;
            tokens.layer2_calls += 1;
            tokens.prompt_tokens += text::estimate_tokens(&prompt) as u64;
            tokens.completion_tokens += text::estimate_tokens(&response.content) as u64;
            outputs.push(response.content);
        }
        if outputs.len() == 1 {
            return Ok(outputs.pop().unwrap());
        }
        // Each batch held at least two summaries, so the pending count
        // strictly shrinks and the reduction terminates.
        pending = outputs;
    }
}

/// Greedily pack summaries into batches whose joined text fits
/// `content_budget`. Multi-batch rounds require at least two summaries per
/// batch so each round strictly reduces the summary count; a configuration
/// where two summaries cannot share a batch fails instead of overflowing.
fn pack_batches(
    pending: &[String],
    content_budget: usize,
    budget: usize,
    overhead: usize,
) -> Result<Vec<Vec<String>>, PipelineError> {
    let estimate: Vec<usize> = pending.iter().map(|s| text::estimate_tokens(s)).collect();
    let total: usize = estimate.iter().sum();
    if pending.len() == 1 || total <= content_budget {
        return Ok(vec![pending.to_vec()]);
    }

    let mut batches: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut current_tokens = 0usize;
    for (summary, &cost) in pending.iter().zip(&estimate) {
        if !current.is_empty() && current_tokens + cost > content_budget {
            if current.len() < 2 {
                return Err(PipelineError::BudgetTooSmall {
                    budget,
                    overhead,
                    needed: current_tokens + cost,
                });
            }
            batches.push(std::mem::take(&mut current));
            current_tokens = 0;
        }
        current_tokens += cost;
        current.push(summary.clone());
    }
    if current.len() < 2 {
        // A trailing singleton cannot reduce; fold it into the last batch
        // only if it fits, otherwise the budget is too small.
        if let Some(last) = batches.last_mut() {
            let last_tokens: usize = last.iter().map(|s| text::estimate_tokens(s)).sum();
            if last_tokens + current_tokens <= content_budget {
                last.extend(current);
                return Ok(batches);
            }
        }
        return Err(PipelineError::BudgetTooSmall {
            budget,
            overhead,
            needed: current_tokens,
        });
    }
    batches.push(current);
    Ok(batches)
}
