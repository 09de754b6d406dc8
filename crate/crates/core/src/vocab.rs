//! Token/id mapping and whitespace tokenization.
//!
//! Every vocabulary starts with three reserved entries: `<s>` (BOS), `</s>`
//! (EOS) and `<unk>` (UNK). Remaining ids are assigned by descending corpus
//! frequency with lexicographic tie-breaking, so the same corpus always yields
//! the same assignment.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("vocabulary max size {0} cannot hold the 3 reserved tokens")]
    MaxSizeTooSmall(usize),
    #[error("unknown token id {0}")]
    UnknownTokenId(u32),
    #[error("vocabulary file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

/// Index into a [`Vocabulary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub const BOS: TokenId = TokenId(0);
    pub const EOS: TokenId = TokenId(1);
    pub const UNK: TokenId = TokenId(2);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_reserved(self) -> bool {
        self.0 < 3
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";
const RESERVED: [&str; 3] = [BOS_TOKEN, EOS_TOKEN, UNK_TOKEN];

/// Lowercase and whitespace-split `text`. Shared by the vocabulary and the
/// BM25 baseline so both see the same words.
pub fn split_words(text: &str) -> Vec<String> {
    text.split_whitespace().map(|w| w.to_lowercase()).collect()
}

/// Lowercased, single-space-joined form of `text`.
pub fn normalize_text(text: &str) -> String {
    split_words(text).join(" ")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Build from corpus lines; `max_size` counts the reserved tokens.
    pub fn build<S: AsRef<str>>(corpus_lines: &[S], max_size: usize) -> Result<Self, VocabError> {
        if corpus_lines.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        if max_size < RESERVED.len() {
            return Err(VocabError::MaxSizeTooSmall(max_size));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for line in corpus_lines {
            for word in split_words(line.as_ref()) {
                if RESERVED.contains(&word.as_str()) {
                    continue;
                }
                *counts.entry(word).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - RESERVED.len());

        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(w, _)| w));
        Ok(Self::from_tokens_unchecked(tokens.collect()))
    }

    fn from_tokens_unchecked(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), TokenId(i as u32)))
            .collect();
        Self { tokens, index }
    }

    /// Build from an explicit token list (reserved tokens are prepended when
    /// missing). Duplicates are rejected.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<Self, VocabError> {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut seen: std::collections::HashSet<String> = all.iter().cloned().collect();
        let has_header = tokens.len() >= 3 && tokens[..3].iter().map(|t| t.as_ref()).eq(RESERVED);
        let body = if has_header { &tokens[3..] } else { tokens };
        for (i, t) in body.iter().map(|t| t.as_ref()).enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(VocabError::Parse { line: i, reason: format!("invalid token {t:?}") });
            }
            if !seen.insert(t.to_string()) {
                return Err(VocabError::Parse { line: i, reason: format!("duplicate token {t:?}") });
            }
            all.push(t.to_string());
        }
        Ok(Self::from_tokens_unchecked(all))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id.index()).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Lowercase, split on whitespace, map out-of-vocabulary words to UNK.
    /// No BOS/EOS is added.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .map(|w| self.id(&w.to_lowercase()).unwrap_or(TokenId::UNK))
            .collect()
    }

    /// Space-join token strings, dropping BOS and EOS.
    pub fn detokenize(&self, ids: &[TokenId]) -> Result<String, VocabError> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            let tok = self.token(id).ok_or(VocabError::UnknownTokenId(id.0))?;
            if id != TokenId::BOS && id != TokenId::EOS {
                words.push(tok);
            }
        }
        Ok(words.join(" "))
    }

    /// One token per line; line number is the id.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, VocabError> {
        let mut tokens = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| VocabError::Io(e.to_string()))?;
            let tok = line.trim_end_matches('\r');
            if n < RESERVED.len() && tok != RESERVED[n] {
                return Err(VocabError::Parse {
                    line: n,
                    reason: format!("expected reserved token {:?}, found {tok:?}", RESERVED[n]),
                });
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < RESERVED.len() {
            return Err(VocabError::Parse { line: tokens.len(), reason: "missing reserved tokens".into() });
        }
        Self::from_tokens(&tokens).map_err(|e| match e {
            VocabError::Parse { line, reason } => VocabError::Parse { line: line + 3, reason },
            other => other,
        })
    }
}
