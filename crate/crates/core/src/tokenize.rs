//! Tokenization, stopword tables and content-word counting.
//!
//! Content words are the unique normalized tokens of a query that are not
//! stopwords and are longer than one character (counted in Unicode scalar
//! values). Normalization is NFKC followed by lowercasing; there is no
//! stemming, so "turns" and "turn" are distinct.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

use crate::http::{join_url, HttpClient, HttpError};

#[derive(Debug, Error)]
pub enum TokenizeError {
    #[error(
        "language {0:?} is not space-delimited; unicode_regex needs an explicit override \
         (use presegmented input or the sidecar segmenter)"
    )]
    RegexForCjk(String),
    #[error("sidecar segmenter strategy requires a sidecar url")]
    NoSidecar,
    #[error("segmenter sidecar: {0}")]
    Sidecar(String),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("stopword table language {table:?} does not match tokenizer language {spec:?}")]
    LanguageMismatch { table: String, spec: String },
    #[error("stopword file {path}: {message}")]
    StopwordFile { path: String, message: String },
    #[error("no stopword list for language {0:?}")]
    NoStopwords(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerStrategy {
    /// Unicode word boundaries, for space-delimited languages.
    UnicodeRegex,
    /// Input is already segmented; split on whitespace.
    ExternalPresegmented,
    /// Delegate segmentation to the sidecar's `/segment` endpoint.
    SidecarSegmenter,
}

impl FromStr for TokenizerStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regex" | "unicode_regex" => Ok(Self::UnicodeRegex),
            "presegmented" | "external_presegmented" => Ok(Self::ExternalPresegmented),
            "sidecar" | "sidecar_segmenter" => Ok(Self::SidecarSegmenter),
            other => Err(format!("unknown tokenizer {other:?}")),
        }
    }
}

/// Languages written without spaces between words.
const UNSPACED: &[&str] = &["zh", "ja", "ko"];

fn primary_subtag(tag: &str) -> String {
    tag.split(['-', '_']).next().unwrap_or("").to_ascii_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerSpec {
    pub language: String,
    pub strategy: TokenizerStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar_url: Option<String>,
}

impl TokenizerSpec {
    pub fn new(language: impl Into<String>, strategy: TokenizerStrategy) -> Result<Self, TokenizeError> {
        let language = language.into();
        if strategy == TokenizerStrategy::UnicodeRegex
            && UNSPACED.contains(&primary_subtag(&language).as_str())
        {
            return Err(TokenizeError::RegexForCjk(language));
        }
        Ok(Self {
            language,
            strategy,
            sidecar_url: None,
        })
    }

    /// Builds a spec without the unspaced-language check.
    pub fn with_override(language: impl Into<String>, strategy: TokenizerStrategy) -> Self {
        Self {
            language: language.into(),
            strategy,
            sidecar_url: None,
        }
    }

    pub fn english() -> Self {
        Self::with_override("en", TokenizerStrategy::UnicodeRegex)
    }

    pub fn with_sidecar(mut self, url: impl Into<String>) -> Self {
        self.sidecar_url = Some(url.into());
        self
    }
}

/// NFKC then lowercase.
pub fn normalize(s: &str) -> String {
    s.nfkc().collect::<String>().to_lowercase()
}

pub fn tokenize(text: &str, spec: &TokenizerSpec) -> Result<Vec<String>, TokenizeError> {
    match spec.strategy {
        TokenizerStrategy::UnicodeRegex => Ok(tokenize_unicode(text)),
        TokenizerStrategy::ExternalPresegmented => Ok(text.split_whitespace().map(normalize).collect()),
        TokenizerStrategy::SidecarSegmenter => {
            let mut out = segment_via_sidecar(std::slice::from_ref(&text.to_string()), spec)?;
            Ok(out.pop().unwrap_or_default())
        }
    }
}

/// Tokenizes many texts; the sidecar strategy issues a single request.
pub fn tokenize_batch(texts: &[String], spec: &TokenizerSpec) -> Result<Vec<Vec<String>>, TokenizeError> {
    match spec.strategy {
        TokenizerStrategy::SidecarSegmenter => segment_via_sidecar(texts, spec),
        _ => texts.iter().map(|t| tokenize(t, spec)).collect(),
    }
}

/// Unicode word-boundary tokenization of normalized text. Infallible.
pub fn tokenize_unicode(text: &str) -> Vec<String> {
    normalize(text).unicode_words().map(str::to_string).collect()
}

#[derive(Serialize)]
struct SegmentRequest<'a> {
    texts: &'a [String],
    lang: String,
}

#[derive(Deserialize)]
struct SegmentResponse {
    tokens: Vec<Vec<String>>,
}

fn segment_via_sidecar(texts: &[String], spec: &TokenizerSpec) -> Result<Vec<Vec<String>>, TokenizeError> {
    let base = spec.sidecar_url.as_deref().ok_or(TokenizeError::NoSidecar)?;
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let body = serde_json::to_vec(&SegmentRequest {
        texts,
        lang: primary_subtag(&spec.language),
    })
    .expect("segment request serializes");
    let resp = HttpClient::default().post_json(&join_url(base, "segment"), &body, None)?;
    if !resp.is_success() {
        return Err(TokenizeError::Sidecar(format!("status {}: {}", resp.status, resp.excerpt())));
    }
    let parsed: SegmentResponse =
        serde_json::from_slice(&resp.body).map_err(|e| TokenizeError::Sidecar(e.to_string()))?;
    if parsed.tokens.len() != texts.len() {
        return Err(TokenizeError::Sidecar(format!(
            "expected {} token lists, got {}",
            texts.len(),
            parsed.tokens.len()
        )));
    }
    Ok(parsed
        .tokens
        .into_iter()
        .map(|ts| {
            ts.iter()
                .map(|t| normalize(t.trim()))
                .filter(|t| !t.is_empty())
                .collect()
        })
        .collect())
}

/// Interrogatives that common stopword lists include for some languages.
fn known_interrogatives(lang: &str) -> &'static [&'static str] {
    match lang {
        "fr" => &["quel", "quelle", "comment", "pourquoi", "quand", "où", "combien"],
        "zh" => &["什么", "为什么", "哪里", "怎么", "如何", "谁"],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordTable {
    language: String,
    words: HashSet<String>,
}

impl StopwordTable {
    pub fn new<I, S>(language: impl Into<String>, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words = words
            .into_iter()
            .map(|w| normalize(w.as_ref().trim()))
            .filter(|w| !w.is_empty())
            .collect();
        Self {
            language: language.into(),
            words,
        }
    }

    /// Parses the one-token-per-line format; `#` starts a comment.
    pub fn parse(language: impl Into<String>, text: &str) -> Self {
        let words = text.lines().map(|l| match l.find('#') {
            Some(i) => &l[..i],
            None => l,
        });
        Self::new(language, words)
    }

    /// Loads `<dir>/<lang>.txt`.
    pub fn load(dir: &Path, language: &str) -> Result<Self, TokenizeError> {
        let path = dir.join(format!("{}.txt", primary_subtag(language)));
        let text = fs::read_to_string(&path).map_err(|e| TokenizeError::StopwordFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Self::parse(language, &text))
    }

    /// Stopword lists bundled with the crate (en, fr, zh).
    pub fn builtin(language: &str) -> Result<Self, TokenizeError> {
        let text = match primary_subtag(language).as_str() {
            "en" => include_str!("../stopwords/en.txt"),
            "fr" => include_str!("../stopwords/fr.txt"),
            "zh" => include_str!("../stopwords/zh.txt"),
            _ => return Err(TokenizeError::NoStopwords(language.to_string())),
        };
        Ok(Self::parse(language, text))
    }

    /// `dir/<lang>.txt` when a directory is given, the bundled list otherwise.
    pub fn resolve(dir: Option<&Path>, language: &str) -> Result<Self, TokenizeError> {
        match dir {
            Some(d) => Self::load(d, language),
            None => Self::builtin(language),
        }
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn insert(&mut self, word: &str) {
        let w = normalize(word.trim());
        if !w.is_empty() {
            self.words.insert(w);
        }
    }

    pub fn is_compatible_with(&self, spec: &TokenizerSpec) -> bool {
        primary_subtag(&self.language) == primary_subtag(&spec.language)
    }

    /// Interrogative words present in this table. Questions lose these
    /// words from their content-word count, so a non-empty result is worth
    /// a warning.
    pub fn interrogatives_present(&self) -> Vec<&'static str> {
        known_interrogatives(&primary_subtag(&self.language))
            .iter()
            .copied()
            .filter(|w| self.words.contains(*w))
            .collect()
    }
}

impl fmt::Display for StopwordTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stopwords ({})", self.language, self.words.len())
    }
}

/// The set of content words among already-normalized tokens.
pub fn content_words<'a>(tokens: &'a [String], stopwords: &StopwordTable) -> BTreeSet<&'a str> {
    tokens
        .iter()
        .map(String::as_str)
        .filter(|t| t.chars().count() > 1 && !stopwords.contains(t))
        .collect()
}

pub fn count_content_words(tokens: &[String], stopwords: &StopwordTable) -> usize {
    content_words(tokens, stopwords).len()
}

/// CW(q): number of unique non-stopword tokens longer than one character.
pub fn content_word_count(
    query: &str,
    spec: &TokenizerSpec,
    stopwords: &StopwordTable,
) -> Result<usize, TokenizeError> {
    if !stopwords.is_compatible_with(spec) {
        return Err(TokenizeError::LanguageMismatch {
            table: stopwords.language.clone(),
            spec: spec.language.clone(),
        });
    }
    Ok(count_content_words(&tokenize(query, spec)?, stopwords))
}
