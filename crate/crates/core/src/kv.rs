//! Flat `key = value` text files with optional `[section]` headers.
//!
//! Used for run configs, experiment plans, synthetic-world specs and model
//! sidecar metadata. `#` starts a comment line. Keys before the first section
//! header belong to the unnamed root section.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;

#[derive(Debug, thiserror::Error)]
pub enum KvError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("key `{key}`: cannot parse {value:?}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("unknown key `{0}`")]
    Unknown(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Section {
    pub entries: IndexMap<String, String>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn require(&self, key: &str) -> Result<&str, KvError> {
        self.get(key).ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn parse<T>(&self, key: &str) -> Result<Option<T>, KvError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| KvError::Value {
                key: key.to_string(),
                value: v.to_string(),
                reason: e.to_string(),
            }),
        }
    }

    pub fn parse_or<T>(&self, key: &str, default: T) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    /// Comma-separated list; empty items are dropped.
    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDocument {
    pub root: Section,
    pub sections: IndexMap<String, Section>,
}

impl KvDocument {
    pub fn parse_str(text: &str) -> Result<Self, KvError> {
        let mut doc = KvDocument::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_string();
                doc.sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(KvError::Syntax { line: i + 1, text: raw.to_string() });
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(KvError::Syntax { line: i + 1, text: raw.to_string() });
            }
            let section = match &current {
                None => &mut doc.root,
                Some(name) => doc.sections.get_mut(name).expect("section inserted above"),
            };
            if section.entries.contains_key(&key) {
                return Err(KvError::Duplicate { line: i + 1, key });
            }
            section.entries.insert(key, v.trim().to_string());
        }
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self, KvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| KvError::Io { path: path.display().to_string(), source })?;
        Self::parse_str(&text)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.root.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (name, section) in &self.sections {
            out.push_str(&format!("\n[{name}]\n"));
            for (k, v) in &section.entries {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let doc = KvDocument::parse_str(
            "# plan\nseed = 3\nname = a b\n\n[target.ucf]\nepochs = 10\n",
        )
        .unwrap();
        assert_eq!(doc.root.get("seed"), Some("3"));
        assert_eq!(doc.root.get("name"), Some("a b"));
        assert_eq!(doc.sections["target.ucf"].parse::<u32>("epochs").unwrap(), Some(10));
        let again = KvDocument::parse_str(&doc.render()).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn rejects_garbage_and_duplicates() {
        assert!(matches!(KvDocument::parse_str("novalue"), Err(KvError::Syntax { line: 1, .. })));
        assert!(matches!(
            KvDocument::parse_str("a = 1\na = 2"),
            Err(KvError::Duplicate { line: 2, .. })
        ));
    }
}
