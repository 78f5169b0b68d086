//! INI-style configuration: `[section]` headers, `key = value`, `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    source: String,
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    /// Keys before the first header land in the unnamed section `""`.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(Error::parse(source, i + 1, "unterminated section header"));
                };
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(source, i + 1, "expected `key = value`"));
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::parse(source, i + 1, "empty key"));
            }
            let section = sections.entry(current.clone()).or_default();
            if section.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::parse(
                    source,
                    i + 1,
                    format!("duplicate key `{key}` in section [{current}]"),
                ));
            }
        }
        Ok(Config {
            source: source.to_string(),
            sections,
        })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    fn typed<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                Error::Data(format!(
                    "{}: [{section}] {key} = `{v}` is not a valid {}",
                    self.source,
                    std::any::type_name::<T>()
                ))
            }),
        }
    }

    pub fn get_f64(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        self.typed(section, key, default)
    }

    pub fn get_usize(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        self.typed(section, key, default)
    }

    pub fn get_u64(&self, section: &str, key: &str, default: u64) -> Result<u64> {
        self.typed(section, key, default)
    }

    pub fn get_string(&self, section: &str, key: &str, default: &str) -> String {
        self.get(section, key).unwrap_or(default).to_string()
    }

    pub fn get_path(&self, section: &str, key: &str) -> Option<PathBuf> {
        self.get(section, key).map(PathBuf::from)
    }

    /// Whitespace- or comma-separated list of integers.
    pub fn get_usize_list(&self, section: &str, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(section, key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|_| {
                        Error::Data(format!("{}: [{section}] {key}: bad integer `{s}`", self.source))
                    })
                })
                .collect(),
        }
    }

    /// Sets a value, replacing any previous one.
    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.into());
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.sections
            .iter()
            .flat_map(|(s, kv)| kv.iter().map(move |(k, v)| (s.as_str(), k.as_str(), v.as_str())))
    }

    /// `(section, key)` pairs not present in `known`.
    pub fn unknown_keys(&self, known: &[(&str, &[&str])]) -> Vec<(String, String)> {
        self.entries()
            .filter(|(s, k, _)| !known.iter().any(|(ks, keys)| ks == s && keys.contains(k)))
            .map(|(s, k, _)| (s.to_string(), k.to_string()))
            .collect()
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (section, kv) in &self.sections {
            if !section.is_empty() {
                writeln!(f, "[{section}]")?;
            }
            for (k, v) in kv {
                writeln!(f, "{k} = {v}")?;
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = crate::error::read_text(path)?;
    Config::parse(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typed_access() {
        let c = Config::parse("# c\n[train]\nlr = 0.05\nsizes = 351, 64, 2\n", "c.ini").unwrap();
        assert_eq!(c.get_f64("train", "lr", 1.0).unwrap(), 0.05);
        assert_eq!(c.get_usize("train", "epochs", 30).unwrap(), 30);
        assert_eq!(c.get_usize_list("train", "sizes", &[]).unwrap(), vec![351, 64, 2]);
        assert!(c.get_usize("train", "lr", 0).is_err());
    }

    #[test]
    fn duplicate_key_is_an_error() {
        let err = Config::parse("[a]\nx = 1\nx = 2\n", "c.ini").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(Config::parse("[a]\nx = 1\n[b]\nx = 2\n", "c").is_ok());
    }

    #[test]
    fn lint_lists_unknown_keys() {
        let c = Config::parse("[train]\nlr = 1\nlearning_rat = 2\n[other]\nq = 1\n", "c").unwrap();
        let unknown = c.unknown_keys(&[("train", &["lr"])]);
        assert_eq!(
            unknown,
            vec![
                ("other".to_string(), "q".to_string()),
                ("train".to_string(), "learning_rat".to_string())
            ]
        );
    }

    #[test]
    fn display_round_trips() {
        let c = Config::parse("top = 1\n[s]\nb = 2\na = x y\n", "c").unwrap();
        assert_eq!(Config::parse(&c.to_string(), "c").unwrap().sections, c.sections);
    }
}
