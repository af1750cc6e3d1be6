//! Flat key=value config file. Every key can also be set by a flag; flags
//! win over the file, the file wins over built-in defaults.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Keys understood by the config file. Anything else is rejected so typos
/// fail loudly.
pub const KNOWN_KEYS: &[&str] = &[
    "corpus",
    "index",
    "templates",
    "output",
    "k",
    "segment_budget",
    "layer2_budget",
    "max_parallel",
    "no_answer_sentinel",
    "backend",
    "model",
    "base_url",
    "api_key_env",
    "timeout_s",
    "max_retries",
    "backoff_base_s",
    "max_tokens",
    "temperature",
    "mock_script",
    "fallback_sentences",
    "keywords",
    "from",
    "to",
    "keep_deleted",
];

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected key=value, got {raw:?}",
                    path.display(),
                    lineno + 1
                );
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!(
                    "{}:{}: unknown config key {key:?}",
                    path.display(),
                    lineno + 1
                );
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered config key {key}");
        self.values.get(key).map(String::as_str)
    }

    /// Parsed value for `key`, or None when absent.
    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => match raw.parse() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key {key}={raw:?}: {e}"),
            },
        }
    }
}

/// Flag beats file beats default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nk = 10\nmodel = gpt-x\n\nbackend=mock\n").unwrap();
        let config = FileConfig::load(Some(&path)).unwrap();
        assert_eq!(config.parse::<usize>("k").unwrap(), Some(10));
        assert_eq!(config.get("model"), Some("gpt-x"));
        assert_eq!(config.get("backend"), Some("mock"));
        assert_eq!(config.get("index"), None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "mystery = 1\n").unwrap();
        assert!(FileConfig::load(Some(&path)).is_err());
        std::fs::write(&path, "just words\n").unwrap();
        assert!(FileConfig::load(Some(&path)).is_err());
    }

    #[test]
    fn precedence_is_flag_file_default() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick::<usize>(None, None, 3), 3);
    }
}
