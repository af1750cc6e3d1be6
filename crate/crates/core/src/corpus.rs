//! Post ingestion: parse newline-delimited JSON dumps, filter records, and
//! persist the survivors as a normalized, versioned corpus store.
//!
//! The input format follows the public dump convention for social-media
//! posts: one JSON object per line, `selftext`/`body` accepted as aliases for
//! the body field, `"[deleted]"`/`"[removed]"` body sentinels marking deleted
//! records. Malformed lines are counted and skipped, never fatal.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::text;

pub const STORE_FORMAT_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "manifest.json";
const RECORDS_FILE: &str = "records.jsonl";

/// One social-media submission or comment; the unit of retrieval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub title: String,
    pub body: String,
    pub created_utc: u64,
    pub subreddit: String,
    pub deleted: bool,
}

impl Post {
    /// Title and body joined for segmentation and display. Empty fields are
    /// omitted.
    pub fn full_text(&self) -> String {
        match (self.title.trim().is_empty(), self.body.trim().is_empty()) {
            (false, false) => format!("{}\n{}", self.title, self.body),
            (false, true) => self.title.clone(),
            _ => self.body.clone(),
        }
    }
}

/// Inclusive `[start, end]` window in seconds since the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: u64,
    pub end: u64,
}

impl TimeRange {
    pub fn new(start: u64, end: u64) -> Result<Self, CorpusError> {
        if start > end {
            return Err(CorpusError::InvalidTimeRange { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, ts: u64) -> bool {
        self.start <= ts && ts <= self.end
    }
}

/// Record-level filter applied during ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusFilter {
    /// Terms matched case-insensitively at word boundaries against title and
    /// body. Empty means no keyword restriction.
    pub keywords: Vec<String>,
    pub time_range: Option<TimeRange>,
    pub drop_deleted: bool,
}

impl Default for CorpusFilter {
    fn default() -> Self {
        Self {
            keywords: Vec::new(),
            time_range: None,
            drop_deleted: true,
        }
    }
}

/// Ingestion counters. Every input line lands in exactly one bucket:
/// `kept` or one of the `dropped_*` counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_read: u64,
    pub kept: u64,
    pub dropped_deleted: u64,
    pub dropped_filter: u64,
    pub dropped_malformed: u64,
    /// Records superseded by a later record with the same id (last wins).
    pub dropped_duplicate: u64,
}

impl CorpusStats {
    pub fn consistent(&self) -> bool {
        self.total_read
            == self.kept
                + self.dropped_deleted
                + self.dropped_filter
                + self.dropped_malformed
                + self.dropped_duplicate
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("malformed JSON record: {0}")]
    MalformedJson(String),
    #[error("record has no id field")]
    MissingId,
    #[error("record {id}: both title and body empty")]
    EmptyRecord { id: String },
    #[error("record {id}: invalid created_utc value")]
    InvalidTimestamp { id: String },
    #[error("invalid time range: start {start} > end {end}")]
    InvalidTimeRange { start: u64, end: u64 },
    #[error("corpus store {path}: {reason}")]
    BadStore { path: PathBuf, reason: String },
    #[error("corpus store version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("duplicate post id {0}")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parse one newline-delimited JSON record into a normalized [`Post`].
///
/// `selftext` and `body` are accepted as aliases for the body field; a
/// missing title maps to the empty string. Body sentinels `"[deleted]"` and
/// `"[removed]"`, or an explicit boolean `deleted` field, mark the record
/// deleted.
pub fn parse_post_record(line: &str) -> Result<Post, CorpusError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| CorpusError::MalformedJson(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| CorpusError::MalformedJson("record is not a JSON object".into()))?;

    let id = obj
        .get("id")
        .and_then(|v| v.as_str())
        .filter(|s| !s.is_empty())
        .ok_or(CorpusError::MissingId)?
        .to_string();

    let title = obj
        .get("title")
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string();
    let body = obj
        .get("selftext")
        .or_else(|| obj.get("body"))
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string();

    if title.trim().is_empty() && body.trim().is_empty() {
        return Err(CorpusError::EmptyRecord { id });
    }

    let created_utc = match obj.get("created_utc") {
        None | Some(serde_json::Value::Null) => 0,
        Some(v) => parse_timestamp(v).ok_or(CorpusError::InvalidTimestamp { id: id.clone() })?,
    };

    let subreddit = obj
        .get("subreddit")
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string();

    let explicit_deleted = obj
        .get("deleted")
        .and_then(|v| v.as_bool())
        .unwrap_or(false);
    let sentinel = matches!(body.trim(), "[deleted]" | "[removed]");
    let deleted = explicit_deleted || sentinel;

    Ok(Post {
        id,
        title,
        body,
        created_utc,
        subreddit,
        deleted,
    })
}

fn parse_timestamp(v: &serde_json::Value) -> Option<u64> {
    match v {
        serde_json::Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                Some(u)
            } else if let Some(f) = n.as_f64() {
                (f >= 0.0 && f.is_finite()).then_some(f as u64)
            } else {
                None
            }
        }
        serde_json::Value::String(s) => s
            .trim()
            .parse::<f64>()
            .ok()
            .and_then(|f| (f >= 0.0 && f.is_finite()).then_some(f as u64)),
        _ => None,
    }
}

/// True iff `post` survives `filter`: not a dropped deleted record, matches
/// at least one keyword (when any are configured) at a word boundary in
/// title or body, and falls inside the time range (when one is configured).
pub fn post_passes_filters(post: &Post, filter: &CorpusFilter) -> bool {
    if filter.drop_deleted && post.deleted {
        return false;
    }
    if let Some(range) = &filter.time_range {
        if !range.contains(post.created_utc) {
            return false;
        }
    }
    if filter.keywords.is_empty() {
        return true;
    }
    let title_tokens = text::tokenize(&post.title);
    let body_tokens = text::tokenize(&post.body);
    filter.keywords.iter().any(|kw| {
        let kw_tokens = text::tokenize(kw);
        !kw_tokens.is_empty()
            && (contains_subsequence(&title_tokens, &kw_tokens)
                || contains_subsequence(&body_tokens, &kw_tokens))
    })
}

/// Contiguous token-subsequence match; single-token keywords reduce to exact
/// token equality, which is what makes matching word-boundary rather than
/// substring.
fn contains_subsequence(haystack: &[String], needle: &[String]) -> bool {
    if needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    stats: CorpusStats,
}

/// Immutable, normalized post collection backed by a versioned directory
/// (`manifest.json` + `records.jsonl`). Built once by [`ingest_corpus`] or
/// [`CorpusStore::from_posts`]; read-only afterwards.
#[derive(Debug, Clone)]
pub struct CorpusStore {
    posts: Vec<Post>,
    by_id: HashMap<String, usize>,
    stats: CorpusStats,
}

impl CorpusStore {
    /// Build an in-memory store from already-normalized posts. Ids must be
    /// unique and each post must carry some text.
    pub fn from_posts(posts: Vec<Post>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(posts.len());
        for (i, post) in posts.iter().enumerate() {
            if post.id.is_empty() {
                return Err(CorpusError::MissingId);
            }
            if post.title.trim().is_empty() && post.body.trim().is_empty() {
                return Err(CorpusError::EmptyRecord {
                    id: post.id.clone(),
                });
            }
            if by_id.insert(post.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(post.id.clone()));
            }
        }
        let stats = CorpusStats {
            total_read: posts.len() as u64,
            kept: posts.len() as u64,
            ..CorpusStats::default()
        };
        Ok(Self {
            posts,
            by_id,
            stats,
        })
    }

    pub fn open(dir: &Path) -> Result<Self, CorpusError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest_text =
            fs::read_to_string(&manifest_path).map_err(|e| CorpusError::BadStore {
                path: dir.to_path_buf(),
                reason: format!("cannot read manifest: {e}"),
            })?;
        let manifest: Manifest =
            serde_json::from_str(&manifest_text).map_err(|e| CorpusError::BadStore {
                path: dir.to_path_buf(),
                reason: format!("bad manifest: {e}"),
            })?;
        if manifest.format_version != STORE_FORMAT_VERSION {
            return Err(CorpusError::VersionMismatch {
                found: manifest.format_version,
                expected: STORE_FORMAT_VERSION,
            });
        }

        let records_path = dir.join(RECORDS_FILE);
        let file = fs::File::open(&records_path).map_err(|e| CorpusError::BadStore {
            path: dir.to_path_buf(),
            reason: format!("cannot read records: {e}"),
        })?;
        let mut posts = Vec::new();
        let mut by_id = HashMap::new();
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let post: Post = serde_json::from_str(&line).map_err(|e| CorpusError::BadStore {
                path: dir.to_path_buf(),
                reason: format!("bad record on line {}: {e}", lineno + 1),
            })?;
            by_id.insert(post.id.clone(), posts.len());
            posts.push(post);
        }
        if posts.len() as u64 != manifest.stats.kept {
            return Err(CorpusError::BadStore {
                path: dir.to_path_buf(),
                reason: format!(
                    "manifest says {} records, found {}",
                    manifest.stats.kept,
                    posts.len()
                ),
            });
        }
        Ok(Self {
            posts,
            by_id,
            stats: manifest.stats,
        })
    }

    /// Persist the store. Output is byte-deterministic for a given post
    /// sequence.
    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir)?;
        let mut records = Vec::new();
        for post in &self.posts {
            serde_json::to_writer(&mut records, post).map_err(std::io::Error::other)?;
            records.push(b'\n');
        }
        fs::write(dir.join(RECORDS_FILE), records)?;
        let manifest = Manifest {
            format_version: STORE_FORMAT_VERSION,
            stats: self.stats,
        };
        let mut out = fs::File::create(dir.join(MANIFEST_FILE))?;
        serde_json::to_writer_pretty(&mut out, &manifest).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn get(&self, id: &str) -> Option<&Post> {
        self.by_id.get(id).map(|&i| &self.posts[i])
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }
}

/// Ingest a line stream into a corpus store at `dest`.
///
/// Malformed lines are skipped and counted. Duplicate ids keep the latest
/// record (the superseded one counts under `dropped_duplicate`). The stats
/// counters partition the input: `total_read` always equals the line count.
pub fn ingest_corpus<R: BufRead>(
    input: R,
    filter: &CorpusFilter,
    dest: &Path,
) -> Result<(CorpusStore, CorpusStats), CorpusError> {
    let mut stats = CorpusStats::default();
    let mut posts: Vec<Post> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();

    for line in input.lines() {
        let line = line?;
        stats.total_read += 1;
        let post = match parse_post_record(&line) {
            Ok(post) => post,
            Err(_) => {
                stats.dropped_malformed += 1;
                continue;
            }
        };
        if filter.drop_deleted && post.deleted {
            stats.dropped_deleted += 1;
            continue;
        }
        if !post_passes_filters(&post, filter) {
            stats.dropped_filter += 1;
            continue;
        }
        match by_id.get(&post.id) {
            Some(&i) => {
                // Last record wins; the earlier one is superseded in place so
                // output order stays deterministic.
                posts[i] = post;
                stats.dropped_duplicate += 1;
            }
            None => {
                by_id.insert(post.id.clone(), posts.len());
                posts.push(post);
            }
        }
    }
    stats.kept = posts.len() as u64;
    debug_assert!(stats.consistent(), "ingest counters out of balance");

    let store = CorpusStore {
        posts,
        by_id,
        stats,
    };
    store.save(dest)?;
    Ok((store, stats))
}
