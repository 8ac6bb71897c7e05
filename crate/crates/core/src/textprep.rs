//! Text normalization: noise removal, lowercasing, tokenization and
//! stopword filtering.
//!
//! The stages always run in the order `clean` → `tokenize` →
//! `remove_stopwords`. Every stage is a pure function.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Where a stopword list came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopwordSource {
    Builtin,
    File(PathBuf),
    Inline,
}

/// A set of lowercase, whitespace-free stopwords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopwordList {
    words: BTreeSet<String>,
    source: StopwordSource,
}

impl StopwordList {
    /// The pinned English list shipped with the crate.
    pub fn builtin() -> Self {
        let mut list = Self::parse(BUILTIN_STOPWORDS).expect("builtin stopword file is valid");
        list.source = StopwordSource::Builtin;
        list
    }

    pub fn empty() -> Self {
        StopwordList {
            words: BTreeSet::new(),
            source: StopwordSource::Inline,
        }
    }

    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for w in words {
            set.insert(normalize_entry(w.as_ref(), 0)?);
        }
        Ok(StopwordList {
            words: set,
            source: StopwordSource::Inline,
        })
    }

    /// Parses the stopword file format: one word per line, `#` starts a
    /// comment, blank lines ignored. Entries are lowercased.
    pub fn parse(text: &str) -> Result<Self> {
        let mut words = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            words.insert(normalize_entry(line, i + 1)?);
        }
        Ok(StopwordList {
            words,
            source: StopwordSource::Inline,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut list = Self::parse(&text)?;
        list.source = StopwordSource::File(path.to_path_buf());
        Ok(list)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn source(&self) -> &StopwordSource {
        &self.source
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

fn normalize_entry(word: &str, line: usize) -> Result<String> {
    let word = word.trim();
    if word.is_empty() || word.chars().any(char::is_whitespace) {
        return Err(Error::Line {
            line,
            message: format!("stopword entry `{word}` is empty or contains whitespace"),
        });
    }
    Ok(word.to_lowercase())
}

/// An ordered list of lowercase tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenizedDoc {
    pub tokens: Vec<String>,
}

impl TokenizedDoc {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenizedDoc { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

impl fmt::Display for TokenizedDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

fn noise_pattern() -> &'static Regex {
    static NOISE: OnceLock<Regex> = OnceLock::new();
    NOISE.get_or_init(|| {
        Regex::new(concat!(
            r"(?i)",
            r"\bhttps?://\S*",         // URLs with a scheme
            r"|\bwww\.\S*",            // bare www hosts
            r"|\b[ur]/[A-Za-z0-9_-]+", // reddit user / subreddit references
            r"|&[A-Za-z0-9#]+;",       // HTML entities
        ))
        .expect("noise pattern compiles")
    })
}

/// Removes URLs, `u/<name>` and `r/<name>` references and HTML entities,
/// then replaces every remaining non-alphanumeric character with one space.
pub fn clean(text: &str) -> String {
    let stripped = noise_pattern().replace_all(text, "");
    stripped
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect()
}

/// Lowercases and splits into maximal alphanumeric runs, dropping
/// single-character and all-digit tokens. Stopwords are kept.
pub fn tokenize(text: &str) -> TokenizedDoc {
    let lowered = text.to_lowercase();
    let tokens = lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().nth(1).is_some())
        .filter(|t| !t.chars().all(char::is_numeric))
        .map(str::to_owned)
        .collect();
    TokenizedDoc { tokens }
}

pub fn remove_stopwords(doc: TokenizedDoc, sw: &StopwordList) -> TokenizedDoc {
    if sw.is_empty() {
        return doc;
    }
    TokenizedDoc {
        tokens: doc.tokens.into_iter().filter(|t| !sw.contains(t)).collect(),
    }
}

/// `clean` → `tokenize` → `remove_stopwords`.
pub fn preprocess(text: &str, sw: &StopwordList) -> TokenizedDoc {
    remove_stopwords(tokenize(&clean(text)), sw)
}
