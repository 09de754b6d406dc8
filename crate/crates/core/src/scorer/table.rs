//! Deterministic scorer backed by an explicit `(query, prefix) -> dists` table.
//!
//! File format: one JSON object per line,
//! `{"query": "...", "prefix": "...", "dists": [[["tok", p], ...], ...]}`.
//! Probabilities are linear; every listed distribution must sum to 1 within
//! 1e-6. Tokens a distribution leaves out receive the floor probability. A
//! query of `"*"` matches any query. Keys not in the table fall back to
//! uniform distributions.

use std::collections::HashMap;
use std::io::BufRead;

use serde::Deserialize;

use super::{floor_fill, NGramPrediction, Scorer, ScorerError, DEFAULT_FLOOR_LOGPROB};
use crate::vocab::{TokenId, Vocabulary};

const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    query: String,
    prefix: String,
    dists: Vec<Vec<(String, f64)>>,
}

type Key = (Option<Vec<TokenId>>, Vec<TokenId>);

#[derive(Clone, Debug)]
pub struct TableScorer {
    vocab_size: usize,
    order: usize,
    floor: f64,
    entries: HashMap<Key, NGramPrediction>,
    uniform: NGramPrediction,
}

impl TableScorer {
    pub fn new(vocab_size: usize, order: usize) -> Self {
        Self::with_floor(vocab_size, order, DEFAULT_FLOOR_LOGPROB)
    }

    pub fn with_floor(vocab_size: usize, order: usize, floor_logprob: f64) -> Self {
        Self {
            vocab_size,
            order,
            floor: floor_logprob.exp(),
            entries: HashMap::new(),
            uniform: NGramPrediction::uniform(order, vocab_size),
        }
    }

    /// Register linear-space distributions for `(query, prefix)`; `None`
    /// query matches every query. Each of the `order` distributions must sum
    /// to 1 within 1e-6. Errors report line 0.
    pub fn insert(
        &mut self,
        query: Option<Vec<TokenId>>,
        prefix: Vec<TokenId>,
        dists: &[Vec<(TokenId, f64)>],
    ) -> Result<(), ScorerError> {
        let invalid = |reason: String| ScorerError::Parse { line: 0, reason };
        if dists.len() != self.order {
            return Err(invalid(format!("expected {} distributions, found {}", self.order, dists.len())));
        }
        let mut logs = Vec::with_capacity(self.order);
        for (level, dist) in dists.iter().enumerate() {
            let mut p = vec![0.0; self.vocab_size];
            let mut sum = 0.0;
            for &(id, prob) in dist {
                if id.index() >= self.vocab_size || !(prob >= 0.0) {
                    return Err(invalid(format!("invalid entry ({id}, {prob}) in distribution {level}")));
                }
                if p[id.index()] != 0.0 {
                    return Err(invalid(format!("token {id} repeated in distribution {level}")));
                }
                p[id.index()] = prob;
                sum += prob;
            }
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(ScorerError::NotNormalized { line: 0, level, sum });
            }
            floor_fill(&mut p, self.floor);
            logs.push(p.into_iter().map(f64::ln).collect());
        }
        self.entries.insert((query, prefix), NGramPrediction::new(logs));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_reader<R: BufRead>(reader: R, vocab: &Vocabulary) -> Result<Self, ScorerError> {
        let mut parsed = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line_no = n + 1;
            let line = line.map_err(|e| ScorerError::Parse { line: line_no, reason: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| ScorerError::Parse { line: line_no, reason: e.to_string() })?;
            parsed.push((line_no, rec));
        }
        let order = match parsed.first() {
            Some((_, rec)) => rec.dists.len(),
            None => return Err(ScorerError::Parse { line: 0, reason: "empty table".into() }),
        };
        if order == 0 {
            return Err(ScorerError::Parse { line: parsed[0].0, reason: "no distributions".into() });
        }

        let mut table = Self::new(vocab.len(), order);
        for (line, rec) in parsed {
            if rec.dists.len() != order {
                return Err(ScorerError::Parse {
                    line,
                    reason: format!("expected {order} distributions, found {}", rec.dists.len()),
                });
            }
            let query = (rec.query.trim() != "*").then(|| vocab.tokenize(&rec.query));
            let prefix = vocab.tokenize(&rec.prefix);
            let mut dists = Vec::with_capacity(order);
            for dist in &rec.dists {
                let mut ids = Vec::with_capacity(dist.len());
                for (tok, p) in dist {
                    let id = vocab
                        .id(&tok.to_lowercase())
                        .ok_or_else(|| ScorerError::Parse { line, reason: format!("unknown token {tok:?}") })?;
                    ids.push((id, *p));
                }
                dists.push(ids);
            }
            let key = (query.clone(), prefix.clone());
            if table.entries.contains_key(&key) {
                return Err(ScorerError::Parse { line, reason: "duplicate (query, prefix) record".into() });
            }
            table.insert(query, prefix, &dists).map_err(|e| match e {
                ScorerError::NotNormalized { level, sum, .. } => ScorerError::NotNormalized { line, level, sum },
                ScorerError::Parse { reason, .. } => ScorerError::Parse { line, reason },
                other => other,
            })?;
        }
        Ok(table)
    }

    pub fn load(path: &std::path::Path, vocab: &Vocabulary) -> Result<Self, ScorerError> {
        let file = std::fs::File::open(path)
            .map_err(|e| ScorerError::Parse { line: 0, reason: format!("{}: {e}", path.display()) })?;
        Self::from_reader(std::io::BufReader::new(file), vocab)
    }
}

impl Scorer for TableScorer {
    fn order(&self) -> usize {
        self.order
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&self, query: &[TokenId], prefix: &[TokenId]) -> NGramPrediction {
        let exact = (Some(query.to_vec()), prefix.to_vec());
        if let Some(p) = self.entries.get(&exact) {
            return p.clone();
        }
        self.entries
            .get(&(None, exact.1))
            .unwrap_or(&self.uniform)
            .clone()
    }
}
