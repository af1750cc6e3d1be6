//! Inverted index with Okapi BM25F ranking over the two post fields.
//!
//! Scoring follows the simple BM25F form: per-field term frequencies are
//! folded into one field-weighted, length-normalized pseudo-frequency `x`
//! before a single saturation, so for a document `d` and query term `t`
//!
//! ```text
//! x(t, d) = sum over fields f of  w_f * tf(t, f, d) / (1 - b_f + b_f * len_f(d) / avg_len_f)
//! score(q, d) = sum over unique t in q of  idf(t) * x(t, d) / (k1 + x(t, d))
//! idf(t) = ln((N - df(t) + 0.5) / (df(t) + 0.5) + 1)
//! ```
//!
//! The `+ 1` inside the logarithm keeps idf, and therefore every score,
//! nonnegative. Terms absent from the corpus contribute zero. There is no
//! stemming and no stopword removal.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusStore, TimeRange};
use crate::text::tokenize;

pub const INDEX_FORMAT_VERSION: u32 = 1;
const INDEX_FILE: &str = "index.json";

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_BOOST: f64 = 1.0;
pub const DEFAULT_LENGTH_NORM: f64 = 0.75;

/// The two indexed post fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Title,
    Body,
}

/// Per-field ranking parameters: boost `w_f > 0` and length normalization
/// `b_f` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub field: Field,
    pub boost: f64,
    pub length_norm: f64,
}

impl FieldConfig {
    pub fn new(field: Field) -> Self {
        Self {
            field,
            boost: DEFAULT_BOOST,
            length_norm: DEFAULT_LENGTH_NORM,
        }
    }

    fn validate(&self) -> Result<(), IndexError> {
        if self.boost.is_nan() || self.boost <= 0.0 {
            return Err(IndexError::BadFieldConfig(format!(
                "boost must be positive, got {}",
                self.boost
            )));
        }
        if !(0.0..=1.0).contains(&self.length_norm) {
            return Err(IndexError::BadFieldConfig(format!(
                "length_norm must be in [0, 1], got {}",
                self.length_norm
            )));
        }
        Ok(())
    }
}

/// One ranked hit: results are sorted by descending score, ties broken by
/// ascending doc id, ranks consecutive from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("invalid field config: {0}")]
    BadFieldConfig(String),
    #[error("k1 must be positive, got {0}")]
    BadK1(f64),
    #[error("unknown document id {0}")]
    UnknownDoc(String),
    #[error("index file {path}: {reason}")]
    BadFile { path: PathBuf, reason: String },
    #[error("index format version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DocEntry {
    id: String,
    title_len: u32,
    body_len: u32,
    created_utc: u64,
}

/// Posting: document index plus per-field term frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Posting {
    doc: u32,
    tf_title: u32,
    tf_body: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexFile {
    format_version: u32,
    k1: f64,
    title: FieldConfig,
    body: FieldConfig,
    docs: Vec<DocEntry>,
    postings: BTreeMap<String, Vec<Posting>>,
}

/// Immutable BM25F index. Construction is exclusive; searches may run from
/// any number of threads afterwards.
#[derive(Debug, Clone)]
pub struct Index {
    k1: f64,
    title: FieldConfig,
    body: FieldConfig,
    docs: Vec<DocEntry>,
    postings: BTreeMap<String, Vec<Posting>>,
    by_id: HashMap<String, u32>,
    avg_title_len: f64,
    avg_body_len: f64,
}

/// Build an index over every post in `store`, indexing both title and body.
///
/// `configs` may override parameters per field; omitted fields use defaults.
/// The corpus must be nonempty.
pub fn build_index(
    store: &CorpusStore,
    configs: &[FieldConfig],
    k1: f64,
) -> Result<Index, IndexError> {
    if store.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    if k1.is_nan() || k1 <= 0.0 {
        return Err(IndexError::BadK1(k1));
    }
    let mut title_cfg = FieldConfig::new(Field::Title);
    let mut body_cfg = FieldConfig::new(Field::Body);
    for cfg in configs {
        cfg.validate()?;
        match cfg.field {
            Field::Title => title_cfg = *cfg,
            Field::Body => body_cfg = *cfg,
        }
    }

    // Sort doc entries by id so that index order equals the tie-break order.
    let mut order: Vec<usize> = (0..store.len()).collect();
    order.sort_by(|&a, &b| store.posts()[a].id.cmp(&store.posts()[b].id));

    let mut docs = Vec::with_capacity(store.len());
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    for (doc_idx, &post_idx) in order.iter().enumerate() {
        let post = &store.posts()[post_idx];
        let title_tokens = tokenize(&post.title);
        let body_tokens = tokenize(&post.body);
        docs.push(DocEntry {
            id: post.id.clone(),
            title_len: title_tokens.len() as u32,
            body_len: body_tokens.len() as u32,
            created_utc: post.created_utc,
        });

        let mut tf: HashMap<&str, (u32, u32)> = HashMap::new();
        for tok in &title_tokens {
            tf.entry(tok).or_default().0 += 1;
        }
        for tok in &body_tokens {
            tf.entry(tok).or_default().1 += 1;
        }
        for (term, (tf_title, tf_body)) in tf {
            postings.entry(term.to_string()).or_default().push(Posting {
                doc: doc_idx as u32,
                tf_title,
                tf_body,
            });
        }
    }
    for list in postings.values_mut() {
        list.sort_by_key(|p| p.doc);
    }

    Ok(Index::assemble(k1, title_cfg, body_cfg, docs, postings))
}

impl Index {
    fn assemble(
        k1: f64,
        title: FieldConfig,
        body: FieldConfig,
        docs: Vec<DocEntry>,
        postings: BTreeMap<String, Vec<Posting>>,
    ) -> Self {
        let n = docs.len() as f64;
        let avg_title_len = docs.iter().map(|d| d.title_len as f64).sum::<f64>() / n;
        let avg_body_len = docs.iter().map(|d| d.body_len as f64).sum::<f64>() / n;
        let by_id = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id.clone(), i as u32))
            .collect();
        Self {
            k1,
            title,
            body,
            docs,
            postings,
            by_id,
            avg_title_len,
            avg_body_len,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn avg_len(&self, field: Field) -> f64 {
        match field {
            Field::Title => self.avg_title_len,
            Field::Body => self.avg_body_len,
        }
    }

    /// Document frequency of an exact (already analyzed) term.
    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, |l| l.len())
    }

    fn idf(&self, term: &str) -> f64 {
        let df = self.doc_freq(term) as f64;
        let n = self.docs.len() as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Field-weighted, length-normalized pseudo term frequency for one
    /// posting.
    fn pseudo_tf(&self, posting: &Posting, doc: &DocEntry) -> f64 {
        let mut x = 0.0;
        if posting.tf_title > 0 {
            let norm = 1.0 - self.title.length_norm
                + self.title.length_norm * doc.title_len as f64 / self.avg_title_len;
            x += self.title.boost * posting.tf_title as f64 / norm;
        }
        if posting.tf_body > 0 {
            let norm = 1.0 - self.body.length_norm
                + self.body.length_norm * doc.body_len as f64 / self.avg_body_len;
            x += self.body.boost * posting.tf_body as f64 / norm;
        }
        x
    }

    /// BM25F score of one document against pre-analyzed query terms.
    /// Duplicate terms are counted once; unknown terms contribute zero.
    pub fn score(&self, query_terms: &[String], doc_id: &str) -> Result<f64, IndexError> {
        let &doc_idx = self
            .by_id
            .get(doc_id)
            .ok_or_else(|| IndexError::UnknownDoc(doc_id.to_string()))?;
        let doc = &self.docs[doc_idx as usize];
        let mut score = 0.0;
        let mut seen: Vec<&str> = Vec::new();
        for term in query_terms {
            if seen.contains(&term.as_str()) {
                continue;
            }
            seen.push(term);
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let Ok(pos) = list.binary_search_by_key(&doc_idx, |p| p.doc) else {
                continue;
            };
            let x = self.pseudo_tf(&list[pos], doc);
            score += self.idf(term) * x / (self.k1 + x);
        }
        Ok(score)
    }

    /// Tokenize `query`, restrict candidates to `time_range` when given, and
    /// return the top `k` documents by BM25F score. Ties are broken by
    /// ascending doc id; only documents containing at least one query term
    /// are returned, so the result may be shorter than `k`.
    pub fn search(
        &self,
        query: &str,
        k: usize,
        time_range: Option<TimeRange>,
    ) -> Vec<RetrievalResult> {
        let terms = tokenize(query);
        if terms.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut seen: Vec<&str> = Vec::new();
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            if seen.contains(&term.as_str()) {
                continue;
            }
            seen.push(term);
            let Some(list) = self.postings.get(term.as_str()) else {
                continue;
            };
            let idf = self.idf(term);
            for posting in list {
                let doc = &self.docs[posting.doc as usize];
                if let Some(range) = time_range {
                    if !range.contains(doc.created_utc) {
                        continue;
                    }
                }
                let x = self.pseudo_tf(posting, doc);
                *scores.entry(posting.doc).or_insert(0.0) += idf * x / (self.k1 + x);
            }
        }
        let mut hits: Vec<(u32, f64)> = scores.into_iter().filter(|&(_, s)| s > 0.0).collect();
        // Doc index order equals id order, so sorting by index gives the
        // ascending-id tie break.
        hits.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        hits.truncate(k);
        hits.into_iter()
            .enumerate()
            .map(|(i, (doc, score))| RetrievalResult {
                doc_id: self.docs[doc as usize].id.clone(),
                score,
                rank: i + 1,
            })
            .collect()
    }

    /// Timestamp of an indexed document.
    pub fn created_utc(&self, doc_id: &str) -> Option<u64> {
        self.by_id
            .get(doc_id)
            .map(|&i| self.docs[i as usize].created_utc)
    }

    /// Persist to a single-directory versioned format.
    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        fs::create_dir_all(dir)?;
        let file = IndexFile {
            format_version: INDEX_FORMAT_VERSION,
            k1: self.k1,
            title: self.title,
            body: self.body,
            docs: self.docs.clone(),
            postings: self.postings.clone(),
        };
        let mut buf = serde_json::to_vec(&file).map_err(std::io::Error::other)?;
        buf.push(b'\n');
        fs::write(dir.join(INDEX_FILE), buf)?;
        Ok(())
    }

    /// Load a saved index. Version mismatches and truncated or corrupt files
    /// fail loudly; a partial index is never returned.
    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        let path = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&path).map_err(|e| IndexError::BadFile {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        // Peek at the version before full decoding so a mismatch is reported
        // as such rather than as a shape error.
        let header: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| IndexError::BadFile {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        let found = header
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| IndexError::BadFile {
                path: path.clone(),
                reason: "missing format_version".into(),
            })? as u32;
        if found != INDEX_FORMAT_VERSION {
            return Err(IndexError::VersionMismatch {
                found,
                expected: INDEX_FORMAT_VERSION,
            });
        }
        let file: IndexFile = serde_json::from_value(header).map_err(|e| IndexError::BadFile {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if file.docs.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let n = file.docs.len() as u32;
        for (term, list) in &file.postings {
            if list.iter().any(|p| p.doc >= n) {
                return Err(IndexError::BadFile {
                    path,
                    reason: format!("posting for {term} references a missing document"),
                });
            }
        }
        Ok(Self::assemble(
            file.k1,
            file.title,
            file.body,
            file.docs,
            file.postings,
        ))
    }
}
