//! Flat `key = value` configuration text with `#` comments.
//!
//! Parsing is two-phase: [`KeyValues::parse`] only splits lines, then typed
//! getters consume keys and [`KeyValues::finish`] rejects anything left over,
//! so a misspelled key is reported by name instead of silently ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{Display, Write as _};
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { key: String, line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("bad value for `{key}`: `{value}` ({reason})")]
    BadValue { key: String, value: String, reason: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl ConfigError {
    /// The key the error is about, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            Self::Duplicate { key, .. } | Self::UnknownKey { key, .. } | Self::BadValue { key, .. } => Some(key),
            _ => None,
        }
    }

    pub fn bad_value(key: &str, value: impl Display, reason: impl Into<String>) -> Self {
        Self::BadValue { key: key.to_string(), value: value.to_string(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
    taken: BTreeSet<String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { line, text: content.to_string() });
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax { line, text: content.to_string() });
            }
            if entries.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
                return Err(ConfigError::Duplicate { key: key.to_string(), line });
            }
        }
        Ok(Self { entries, taken: BTreeSet::new() })
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    /// Typed value of `key`, or `default` when absent.
    pub fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        self.taken.insert(key.to_string());
        match self.entries.get(key) {
            None => Ok(default),
            Some((_, raw)) => raw.parse().map_err(|e: T::Err| ConfigError::bad_value(key, raw, e.to_string())),
        }
    }

    /// Like [`get`](Self::get) for reals, also rejecting NaN and infinities.
    pub fn get_f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v: f64 = self.get(key, default)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ConfigError::bad_value(key, v, "must be finite"))
        }
    }

    /// Fails on the first key no getter asked for.
    pub fn finish(self) -> Result<(), ConfigError> {
        match self.entries.iter().find(|(k, _)| !self.taken.contains(*k)) {
            Some((key, (line, _))) => Err(ConfigError::UnknownKey { key: key.clone(), line: *line }),
            None => Ok(()),
        }
    }
}

/// Builds canonical config text, one `key = value` per line in call order.
#[derive(Debug, Default)]
pub struct KvWriter {
    text: String,
}

impl KvWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        let _ = writeln!(self.text, "# {text}");
        self
    }

    pub fn put(&mut self, key: &str, value: impl Display) -> &mut Self {
        let _ = writeln!(self.text, "{key} = {value}");
        self
    }

    pub fn finish(&mut self) -> String {
        std::mem::take(&mut self.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let mut kv = KeyValues::parse("# header\n\nframes = 12  # trailing\nseed=7\n").unwrap();
        assert_eq!(kv.get("frames", 0usize).unwrap(), 12);
        assert_eq!(kv.get("seed", 0u64).unwrap(), 7);
        assert_eq!(kv.get("lanes", 4usize).unwrap(), 4);
        kv.finish().unwrap();
    }

    #[test]
    fn names_the_bad_key() {
        let mut kv = KeyValues::parse("frames = many\n").unwrap();
        let err = kv.get("frames", 0usize).unwrap_err();
        assert_eq!(err.key(), Some("frames"));
        assert!(err.to_string().contains("frames"));
    }

    #[test]
    fn unknown_key_is_reported() {
        let mut kv = KeyValues::parse("frames = 3\nframse = 4\n").unwrap();
        kv.get("frames", 0usize).unwrap();
        assert_eq!(kv.finish(), Err(ConfigError::UnknownKey { key: "framse".into(), line: 2 }));
    }

    #[test]
    fn syntax_and_duplicates() {
        assert!(matches!(KeyValues::parse("just words"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(KeyValues::parse("a = 1\na = 2"), Err(ConfigError::Duplicate { line: 2, .. })));
        assert!(matches!(KeyValues::parse("two words = 1"), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn rejects_non_finite_reals() {
        let mut kv = KeyValues::parse("x = inf").unwrap();
        assert!(kv.get_f64("x", 0.0).is_err());
    }

    #[test]
    fn writer_round_trips() {
        let text = KvWriter::new().comment("scenario").put("a", 1.5).put("b", "x").finish();
        let mut kv = KeyValues::parse(&text).unwrap();
        assert_eq!(kv.get("a", 0.0).unwrap(), 1.5);
        assert_eq!(kv.get("b", String::new()).unwrap(), "x");
        kv.finish().unwrap();
    }
}
