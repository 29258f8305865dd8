//! Sectioned `key = value` configuration files.
//!
//! ```text
//! # comment
//! [section]
//! key = value        # trailing comment
//! list_key = 1.0, 2.0
//! ```
//!
//! Section and key names are `[A-Za-z0-9_-]+`. Everything after `#` is a
//! comment. A key may appear once per section unless the consumer declares
//! it repeatable. The full grammar is in `docs/config.md`.

use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    /// 1-based; 0 when the error is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self { line, message: message.into() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

impl Entry {
    pub fn parse<T: FromStr>(&self) -> Result<T, ConfigError> {
        self.value
            .parse()
            .map_err(|_| ConfigError::new(self.line, format!("invalid value {:?} for {}", self.value, self.key)))
    }

    pub fn f64(&self) -> Result<f64, ConfigError> {
        let v: f64 = self.parse()?;
        if !v.is_finite() {
            return Err(ConfigError::new(self.line, format!("{} must be finite", self.key)));
        }
        Ok(v)
    }

    /// Comma-separated reals; `len` fixes the count when given.
    pub fn f64_list(&self, len: Option<usize>) -> Result<Vec<f64>, ConfigError> {
        let vals = self
            .value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ConfigError::new(self.line, format!("invalid number {:?} in {}", s.trim(), self.key)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(n) = len {
            if vals.len() != n {
                return Err(ConfigError::new(self.line, format!("{} needs {n} values, got {}", self.key, vals.len())));
            }
        }
        Ok(vals)
    }

    pub fn usize_list(&self) -> Result<Vec<usize>, ConfigError> {
        self.value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| ConfigError::new(self.line, format!("invalid integer {:?} in {}", s.trim(), self.key)))
            })
            .collect()
    }

    pub fn bool(&self) -> Result<bool, ConfigError> {
        match self.value.as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            v => Err(ConfigError::new(self.line, format!("invalid boolean {v:?} for {}", self.key))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    pub entries: Vec<Entry>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|n| valid_name(n))
                    .ok_or_else(|| ConfigError::new(line, format!("malformed section header {content:?}")))?;
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::new(line, format!("expected `key = value`, got {content:?}")))?;
            let key = key.trim();
            if !valid_name(key) {
                return Err(ConfigError::new(line, format!("invalid key {key:?}")));
            }
            let section = section.clone().ok_or_else(|| ConfigError::new(line, "key outside of any [section]"))?;
            entries.push(Entry { section, key: key.to_string(), value: value.trim().to_string(), line });
        }
        Ok(Self { entries })
    }

    pub fn section<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.section == name)
    }

    /// Rejects unknown sections and keys, and repeated keys not listed in
    /// `repeatable`. `schema` maps each section to its allowed keys.
    pub fn check(&self, schema: &[(&str, &[&str])], repeatable: &[&str]) -> Result<(), ConfigError> {
        for (idx, e) in self.entries.iter().enumerate() {
            let Some((_, keys)) = schema.iter().find(|(s, _)| *s == e.section) else {
                return Err(ConfigError::new(e.line, format!("unknown section [{}]", e.section)));
            };
            if !keys.contains(&e.key.as_str()) {
                return Err(ConfigError::new(e.line, format!("unknown key {:?} in [{}]", e.key, e.section)));
            }
            if !repeatable.contains(&e.key.as_str())
                && self.entries[..idx].iter().any(|p| p.section == e.section && p.key == e.key)
            {
                return Err(ConfigError::new(e.line, format!("duplicate key {:?} in [{}]", e.key, e.section)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let cfg = ConfigFile::parse("# top\n[a]\nx = 1 # c\n\n[b-2]\ny=2.5, 3\n").unwrap();
        assert_eq!(cfg.entries.len(), 2);
        assert_eq!(cfg.entries[0].value, "1");
        assert_eq!(cfg.entries[1].section, "b-2");
        assert_eq!(cfg.entries[1].f64_list(Some(2)).unwrap(), vec![2.5, 3.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(ConfigFile::parse("x = 1").unwrap_err().line, 1);
        assert_eq!(ConfigFile::parse("[a]\n\n[b\n").unwrap_err().line, 3);
        assert_eq!(ConfigFile::parse("[a]\nnovalue\n").unwrap_err().line, 2);
        let cfg = ConfigFile::parse("[a]\nx = 1\nx = 2\n").unwrap();
        assert_eq!(cfg.check(&[("a", &["x"])], &[]).unwrap_err().line, 3);
        assert!(cfg.check(&[("a", &["x"])], &["x"]).is_ok());
        assert_eq!(cfg.check(&[("b", &["x"])], &[]).unwrap_err().line, 2);
        let bad = ConfigFile::parse("[a]\nx = nan\n").unwrap();
        assert_eq!(bad.entries[0].f64().unwrap_err().line, 2);
    }
}
