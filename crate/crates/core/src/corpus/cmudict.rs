//! CMU pronouncing dictionary.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::phonoset::{normalize_symbol, CMUBET};

/// Upper-case word → pronunciation variants in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<Vec<String>>>,
}

impl Lexicon {
    pub fn lookup(&self, word: &str) -> Option<&[Vec<String>]> {
        self.entries.get(&word.to_uppercase()).map(Vec::as_slice)
    }

    pub fn first(&self, word: &str) -> Option<&[String]> {
        self.lookup(word).and_then(|v| v.first()).map(Vec::as_slice)
    }

    /// Adds a variant; symbols must be CMUbet phonemes.
    pub fn insert(&mut self, word: &str, phones: &[&str]) -> Result<()> {
        let phones = phones
            .iter()
            .map(|p| {
                let s = normalize_symbol(p);
                if CMUBET.contains(&s.as_str()) {
                    Ok(s)
                } else {
                    Err(Error::UnknownPhoneme(p.to_string()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        self.entries.entry(word.to_uppercase()).or_default().push(phones);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

fn strip_variant(word: &str) -> &str {
    if let (Some(open), true) = (word.rfind('('), word.ends_with(')')) {
        let inner = &word[open + 1..word.len() - 1];
        if !inner.is_empty() && inner.bytes().all(|b| b.is_ascii_digit()) {
            return &word[..open];
        }
    }
    word
}

pub fn parse_cmudict_str(text: &str, name: &str) -> Result<Lexicon> {
    let mut lex = Lexicon::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with(";;;") {
            continue;
        }
        let mut toks = line.split_whitespace();
        let word = strip_variant(toks.next().expect("non-empty line"));
        let phones: Vec<&str> = toks.collect();
        if phones.is_empty() {
            return Err(Error::parse(name, i + 1, format!("`{word}` has no pronunciation")));
        }
        lex.insert(word, &phones).map_err(|e| Error::parse(name, i + 1, e.to_string()))?;
    }
    Ok(lex)
}

pub fn parse_cmudict(path: &Path) -> Result<Lexicon> {
    let bytes = crate::error::read_bytes(path)?;
    // The distributed dictionary is Latin-1 in places.
    let text = String::from_utf8_lossy(&bytes);
    parse_cmudict_str(&text, &path.display().to_string())
}
