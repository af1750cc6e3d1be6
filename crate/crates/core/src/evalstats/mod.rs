//! Evaluation machinery: Likert-record ingestion and validation, per-model
//! descriptive statistics, two-model Mann-Whitney U tests, readability and
//! token-count summaries, and a combined report (JSON plus aligned text
//! table).
//!
//! All operations are pure functions of their inputs.

mod rank;
mod text;

pub use rank::{
    mann_whitney_u, median_iqr, p_from_u, p_from_u_with, DescriptiveStats, UMethod, UTestResult,
    EXACT_THRESHOLD,
};
pub use text::{coleman_liau, count_text_units, token_count, TextUnitCounts};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("text is empty")]
    EmptyText,
    #[error("sample is empty")]
    EmptySample,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("u1 = {u1} outside [0, {max}]")]
    InvalidU { u1: f64, max: f64 },
    #[error("tie group sizes exceed the pooled sample size")]
    InvalidTieGroups,
    #[error("row {row}: unknown criterion {value:?}")]
    BadCriterion { row: usize, value: String },
    #[error(
        "row {row}: score {score} out of scale for {criterion} \
         (query {query_id}, model {model_id}, rater {rater_id})"
    )]
    OutOfScale {
        row: usize,
        criterion: Criterion,
        score: i64,
        query_id: String,
        model_id: String,
        rater_id: String,
    },
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("CSV: {0}")]
    Csv(String),
}

/// The five rated criteria and their scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Coverage,
    Coherence,
    Relevance,
    Length,
    Hallucination,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::Coverage,
        Criterion::Coherence,
        Criterion::Relevance,
        Criterion::Length,
        Criterion::Hallucination,
    ];

    /// Inclusive score range: 5-point for coverage/coherence, 3-point for
    /// relevance/length, binary for hallucination.
    pub fn scale(&self) -> std::ops::RangeInclusive<i64> {
        match self {
            Criterion::Coverage | Criterion::Coherence => 1..=5,
            Criterion::Relevance | Criterion::Length => 1..=3,
            Criterion::Hallucination => 0..=1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Coverage => "coverage",
            Criterion::Coherence => "coherence",
            Criterion::Relevance => "relevance",
            Criterion::Length => "length",
            Criterion::Hallucination => "hallucination",
        }
    }

    fn parse(s: &str) -> Option<Criterion> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coverage" => Some(Criterion::Coverage),
            "coherence" => Some(Criterion::Coherence),
            "relevance" => Some(Criterion::Relevance),
            "length" => Some(Criterion::Length),
            "hallucination" => Some(Criterion::Hallucination),
            _ => None,
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One rater's score for one (query, model, criterion) triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub query_id: String,
    pub model_id: String,
    pub rater_id: String,
    pub criterion: Criterion,
    pub score: i64,
}

impl EvaluationRecord {
    /// Check the score against the criterion scale. `row` is carried into
    /// the error for diagnostics (use 0 for records not read from a file).
    pub fn validate(&self, row: usize) -> Result<(), EvalError> {
        if !self.criterion.scale().contains(&self.score) {
            return Err(EvalError::OutOfScale {
                row,
                criterion: self.criterion,
                score: self.score,
                query_id: self.query_id.clone(),
                model_id: self.model_id.clone(),
                rater_id: self.rater_id.clone(),
            });
        }
        Ok(())
    }
}

/// Read evaluation records from CSV with the header
/// `query_id,model_id,rater_id,criterion,score`. Every record is validated
/// against its criterion scale; errors name the offending row (data rows
/// count from 1).
pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<EvaluationRecord>, EvalError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    {
        let headers = csv_reader
            .headers()
            .map_err(|e| EvalError::Csv(e.to_string()))?;
        let expected = ["query_id", "model_id", "rater_id", "criterion", "score"];
        let got: Vec<&str> = headers.iter().map(str::trim).collect();
        if got != expected {
            return Err(EvalError::Csv(format!(
                "expected header {expected:?}, got {got:?}"
            )));
        }
    }
    let mut records = Vec::new();
    for (i, row) in csv_reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| EvalError::BadRow {
            row: row_no,
            message: e.to_string(),
        })?;
        if row.len() != 5 {
            return Err(EvalError::BadRow {
                row: row_no,
                message: format!("expected 5 fields, got {}", row.len()),
            });
        }
        let criterion = Criterion::parse(&row[3]).ok_or_else(|| EvalError::BadCriterion {
            row: row_no,
            value: row[3].to_string(),
        })?;
        let score: i64 = row[4].trim().parse().map_err(|_| EvalError::BadRow {
            row: row_no,
            message: format!("score {:?} is not an integer", &row[4]),
        })?;
        let record = EvaluationRecord {
            query_id: row[0].trim().to_string(),
            model_id: row[1].trim().to_string(),
            rater_id: row[2].trim().to_string(),
            criterion,
            score,
        };
        record.validate(row_no)?;
        records.push(record);
    }
    Ok(records)
}

/// One generated summary text, for readability and token statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryText {
    pub query_id: String,
    pub model_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDescriptives {
    pub model_id: String,
    pub stats: DescriptiveStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: Criterion,
    pub models: Vec<ModelDescriptives>,
    /// Present only when exactly two models have scores for this criterion;
    /// `u1` belongs to the lexicographically first model id.
    pub u_test: Option<UTestResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelTextStats {
    pub model_id: String,
    pub readability: DescriptiveStats,
    pub tokens: DescriptiveStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextStatsReport {
    pub models: Vec<ModelTextStats>,
    pub readability_u: Option<UTestResult>,
    pub tokens_u: Option<UTestResult>,
}

/// Full evaluation report: per-criterion descriptives and tests, plus text
/// statistics when summary texts were supplied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub criteria: Vec<CriterionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub texts: Option<TextStatsReport>,
}

/// Build the evaluation report.
///
/// Records are validated against their scales first. For each criterion,
/// per-model median/IQR is reported; when exactly two models are present a
/// Mann-Whitney U test compares them (first sample = lexicographically
/// smaller model id). With `summaries` given, per-model Coleman-Liau and
/// token-count distributions are added, with the same two-model test rule.
pub fn build_report(
    records: &[EvaluationRecord],
    summaries: Option<&[SummaryText]>,
) -> Result<EvalReport, EvalError> {
    for (i, record) in records.iter().enumerate() {
        record.validate(i + 1)?;
    }

    let mut by_criterion: BTreeMap<Criterion, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for record in records {
        by_criterion
            .entry(record.criterion)
            .or_default()
            .entry(record.model_id.clone())
            .or_default()
            .push(record.score as f64);
    }

    let mut criteria = Vec::new();
    for criterion in Criterion::ALL {
        let Some(models) = by_criterion.get(&criterion) else {
            continue;
        };
        let mut entries = Vec::new();
        for (model_id, scores) in models {
            entries.push(ModelDescriptives {
                model_id: model_id.clone(),
                stats: median_iqr(scores)?,
            });
        }
        let u_test = if models.len() == 2 {
            let mut it = models.values();
            let first = it.next().unwrap();
            let second = it.next().unwrap();
            Some(mann_whitney_u(first, second)?)
        } else {
            None
        };
        criteria.push(CriterionReport {
            criterion,
            models: entries,
            u_test,
        });
    }

    let texts = match summaries {
        Some(summaries) if !summaries.is_empty() => Some(text_stats(summaries)?),
        _ => None,
    };

    Ok(EvalReport { criteria, texts })
}

fn text_stats(summaries: &[SummaryText]) -> Result<TextStatsReport, EvalError> {
    let mut readability: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut tokens: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for summary in summaries {
        readability
            .entry(summary.model_id.clone())
            .or_default()
            .push(coleman_liau(&summary.text)?);
        tokens
            .entry(summary.model_id.clone())
            .or_default()
            .push(token_count(&summary.text) as f64);
    }
    let mut models = Vec::new();
    for (model_id, cli_values) in &readability {
        models.push(ModelTextStats {
            model_id: model_id.clone(),
            readability: median_iqr(cli_values)?,
            tokens: median_iqr(&tokens[model_id])?,
        });
    }
    let two_model_test =
        |per_model: &BTreeMap<String, Vec<f64>>| -> Result<Option<UTestResult>, EvalError> {
            if per_model.len() == 2 {
                let mut it = per_model.values();
                let first = it.next().unwrap();
                let second = it.next().unwrap();
                Ok(Some(mann_whitney_u(first, second)?))
            } else {
                Ok(None)
            }
        };
    Ok(TextStatsReport {
        readability_u: two_model_test(&readability)?,
        tokens_u: two_model_test(&tokens)?,
        models,
    })
}

impl EvalReport {
    /// Render an aligned plain-text table of the report.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:<24} {:>5} {:>8} {:>8} {:>8}",
            "criterion", "model", "n", "median", "q1", "q3"
        );
        for report in &self.criteria {
            for model in &report.models {
                let _ = writeln!(
                    out,
                    "{:<14} {:<24} {:>5} {:>8.3} {:>8.3} {:>8.3}",
                    report.criterion.name(),
                    model.model_id,
                    model.stats.n,
                    model.stats.median,
                    model.stats.q1,
                    model.stats.q3
                );
            }
        }
        if let Some(texts) = &self.texts {
            for model in &texts.models {
                let _ = writeln!(
                    out,
                    "{:<14} {:<24} {:>5} {:>8.3} {:>8.3} {:>8.3}",
                    "readability",
                    model.model_id,
                    model.readability.n,
                    model.readability.median,
                    model.readability.q1,
                    model.readability.q3
                );
                let _ = writeln!(
                    out,
                    "{:<14} {:<24} {:>5} {:>8.3} {:>8.3} {:>8.3}",
                    "tokens",
                    model.model_id,
                    model.tokens.n,
                    model.tokens.median,
                    model.tokens.q1,
                    model.tokens.q3
                );
            }
        }

        let mut test_rows: Vec<(String, &UTestResult)> = Vec::new();
        for report in &self.criteria {
            if let Some(u) = &report.u_test {
                test_rows.push((report.criterion.name().to_string(), u));
            }
        }
        if let Some(texts) = &self.texts {
            if let Some(u) = &texts.readability_u {
                test_rows.push(("readability".into(), u));
            }
            if let Some(u) = &texts.tokens_u {
                test_rows.push(("tokens".into(), u));
            }
        }
        if !test_rows.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "{:<14} {:>8} {:>4} {:>4} {:>8} {:>8}  {:<13} flags",
                "criterion", "u1", "n1", "n2", "z", "p", "method"
            );
            for (name, u) in test_rows {
                let mut flags = Vec::new();
                if u.tie_corrected {
                    flags.push("ties");
                }
                if u.degenerate {
                    flags.push("degenerate");
                }
                let method = match u.method {
                    UMethod::Exact => "exact",
                    UMethod::NormalApprox => "normal_approx",
                };
                let _ = writeln!(
                    out,
                    "{:<14} {:>8.1} {:>4} {:>4} {:>8.4} {:>8.4}  {:<13} {}",
                    name,
                    u.u1,
                    u.n1,
                    u.n2,
                    u.z,
                    u.p_two_tailed,
                    method,
                    flags.join(",")
                );
            }
        }
        out
    }
}
