//! Flat INI-style key/value files.
//!
//! ```text
//! # comment
//! [section]
//! key = value
//! ```
//!
//! Keys before the first section header belong to the unnamed section `""`.
//! No nesting, no quoting, no multi-line values.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct IniDoc {
    pub path: PathBuf,
    pub entries: Vec<Entry>,
}

impl IniDoc {
    pub fn parse(text: &str, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut section = String::new();
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let s = strip_comment(raw).trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Config {
                    path: path.clone(),
                    line,
                    msg: format!("unterminated section header `{s}`"),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = s.split_once('=').ok_or_else(|| Error::Config {
                path: path.clone(),
                line,
                msg: format!("expected `key = value`, got `{s}`"),
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Config {
                    path: path.clone(),
                    line,
                    msg: "empty key".into(),
                });
            }
            if entries
                .iter()
                .any(|e: &Entry| e.section == section && e.key == key)
            {
                return Err(Error::Config {
                    path: path.clone(),
                    line,
                    msg: format!("duplicate key `{key}` in section [{section}]"),
                });
            }
            entries.push(Entry {
                section: section.clone(),
                key: key.to_string(),
                value: v.trim().to_string(),
                line,
            });
        }
        Ok(IniDoc { path, entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.entries.iter().any(|e| e.section == section)
    }

    pub fn section<'a>(&'a self, section: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.section == section)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries
            .iter()
            .find(|e| e.section == section && e.key == key)
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.get(section, key)
            .map(|e| self.parse_f64(e))
            .transpose()
    }

    pub fn require_f64(&self, section: &str, key: &str) -> Result<f64> {
        self.get_f64(section, key)?.ok_or_else(|| Error::Config {
            path: self.path.clone(),
            line: 0,
            msg: format!("missing key `{key}` in section [{section}]"),
        })
    }

    pub fn parse_f64(&self, e: &Entry) -> Result<f64> {
        e.value
            .parse::<f64>()
            .map_err(|_| self.err(e, format!("`{}` is not a number", e.value)))
    }

    pub fn err(&self, e: &Entry, msg: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.clone(),
            line: e.line,
            msg: msg.into(),
        }
    }
}

fn strip_comment(s: &str) -> &str {
    match s.find(['#', ';']) {
        Some(i) => &s[..i],
        None => s,
    }
}

/// Parse a comma separated list of floats, e.g. `"6,-10,6"`.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("`{t}` is not a number")))
        })
        .collect()
}
