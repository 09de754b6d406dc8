//! Trie-constrained beam search with lookahead score modification.
//!
//! At every step each alive hypothesis is expanded over the trie children of
//! its prefix. A candidate's ranking score is the stored score of its prefix
//! plus a *modified* step score: the candidate's own log-probability blended
//! with the best score reachable beneath it, computed recursively from the
//! farthest lookahead level back to the next token. Survivors keep the
//! *unmodified* cumulative log-probability, so the modification only decides
//! which hypotheses survive and never compounds across steps.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scorer::{NGramPrediction, Scorer};
use crate::trie::{NodeId, Trie};
use crate::vocab::TokenId;

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("trie is empty")]
    EmptyTrie,
    #[error("lookahead depth exceeds scorer order ({depth} > {order})")]
    DepthExceedsScorer { depth: usize, order: usize },
    #[error("prefix outside trie")]
    PrefixOutsideTrie,
    #[error("scorer vocabulary size {scorer} does not match trie vocabulary size {trie}")]
    VocabMismatch { trie: usize, scorer: usize },
    #[error("{0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_size: usize,
    /// n: number of scorer distributions used; lookahead depth is n - 1.
    pub ngram_order: usize,
    /// λ: weight on a token's own score; 1 disables lookahead.
    pub residual_weight: f64,
    /// Maximum keyword length in tokens, EOS excluded.
    pub max_length: usize,
    /// Scores are divided by `len^alpha` for ranking when positive.
    pub length_norm_alpha: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self { beam_size: 5, ngram_order: 3, residual_weight: 0.8, max_length: 20, length_norm_alpha: 0.0 }
    }
}

impl BeamConfig {
    pub fn new(beam_size: usize, ngram_order: usize, residual_weight: f64) -> Self {
        Self { beam_size, ngram_order, residual_weight, ..Self::default() }
    }

    /// Same search without lookahead (λ = 1).
    pub fn plain(&self) -> Self {
        Self { residual_weight: 1.0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        if !(0.0..=1.0).contains(&self.residual_weight) {
            return Err(DecodeError::Config("lambda must be in [0,1]".into()));
        }
        if self.beam_size == 0 {
            return Err(DecodeError::Config("beam size must be at least 1".into()));
        }
        if self.ngram_order == 0 {
            return Err(DecodeError::Config("ngram order must be at least 1".into()));
        }
        if self.max_length == 0 {
            return Err(DecodeError::Config("max length must be at least 1".into()));
        }
        if !(self.length_norm_alpha >= 0.0) {
            return Err(DecodeError::Config("length normalization alpha must be >= 0".into()));
        }
        Ok(())
    }
}

/// Modified next-token scores over the allowed suffixes of a prefix, sorted
/// by token id. Tokens outside the trie score `-inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModifiedScores {
    pub entries: Vec<(TokenId, f64)>,
}

impl ModifiedScores {
    pub fn get(&self, id: TokenId) -> f64 {
        self.entries
            .binary_search_by_key(&id, |&(t, _)| t)
            .map_or(f64::NEG_INFINITY, |i| self.entries[i].1)
    }
}

#[inline]
fn blend(lambda: f64, own: f64, future: Option<f64>) -> f64 {
    match future {
        _ if lambda == 1.0 => own,
        Some(f) => lambda * own + (1.0 - lambda) * f,
        // nothing below this node (only after EOS)
        None => lambda * own,
    }
}

/// Score of `token` at lookahead `level` (0-based), where `node` is the trie
/// node reached after taking it: the raw score at the last level, else the
/// blend of the raw score with the best modified score one level further.
fn level_score(pred: &NGramPrediction, trie: &Trie, token: TokenId, node: NodeId, level: usize, depth: usize, lambda: f64) -> f64 {
    let own = pred.logprob(level, token);
    if level + 1 == depth {
        return own;
    }
    let future = trie
        .children(node)
        .iter()
        .map(|&(t, child)| level_score(pred, trie, t, child, level + 1, depth, lambda))
        .max_by(f64::total_cmp);
    blend(lambda, own, future)
}

/// Lookahead-modified scores for every allowed next token after `prefix`.
///
/// `depth` is the number of scorer levels consulted (n); with `depth == 1` or
/// `lambda == 1` the result equals the masked next-token distribution.
pub fn lookahead_modify(
    prediction: &NGramPrediction,
    trie: &Trie,
    prefix: &[TokenId],
    lambda: f64,
    depth: usize,
) -> Result<ModifiedScores, DecodeError> {
    if depth == 0 || depth > prediction.order() {
        return Err(DecodeError::DepthExceedsScorer { depth, order: prediction.order() });
    }
    let node = trie.node(prefix).ok_or(DecodeError::PrefixOutsideTrie)?;
    let entries = trie
        .children(node)
        .iter()
        .map(|&(t, child)| (t, level_score(prediction, trie, t, child, 0, depth, lambda)))
        .collect();
    Ok(ModifiedScores { entries })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Starts with BOS; finished hypotheses end with EOS.
    pub tokens: Vec<TokenId>,
    /// Cumulative unmodified log-probability.
    pub original_score: f64,
    /// Score used for selection only.
    pub ranking_score: f64,
    pub finished: bool,
}

impl Hypothesis {
    fn generated_len(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Keyword tokens without BOS/EOS.
    pub fn keyword(&self) -> &[TokenId] {
        let end = if self.finished { self.tokens.len() - 1 } else { self.tokens.len() };
        &self.tokens[1..end]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extension {
    pub keyword: Vec<TokenId>,
    pub original_score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: usize,
    pub hypotheses_expanded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionResult {
    /// Sorted by original score (length-normalized when alpha > 0), best first.
    pub outputs: Vec<Extension>,
    pub config: BeamConfig,
    pub diagnostics: Diagnostics,
}

impl ExtensionResult {
    pub fn keywords(&self) -> Vec<Vec<TokenId>> {
        self.outputs.iter().map(|e| e.keyword.clone()).collect()
    }
}

fn normalized(score: f64, len: usize, alpha: f64) -> f64 {
    if alpha == 0.0 {
        score
    } else {
        score / (len as f64).powf(alpha)
    }
}

fn rank_order(alpha: f64) -> impl Fn(&Hypothesis, &Hypothesis) -> Ordering {
    move |a, b| {
        normalized(b.ranking_score, b.generated_len(), alpha)
            .total_cmp(&normalized(a.ranking_score, a.generated_len(), alpha))
            .then_with(|| a.tokens.cmp(&b.tokens))
    }
}

fn check_inputs<S: Scorer + ?Sized>(trie: &Trie, scorer: &S, config: &BeamConfig) -> Result<(), DecodeError> {
    config.validate()?;
    if trie.is_empty() {
        return Err(DecodeError::EmptyTrie);
    }
    if scorer.order() < config.ngram_order {
        return Err(DecodeError::DepthExceedsScorer { depth: config.ngram_order, order: scorer.order() });
    }
    if scorer.vocab_size() != trie.vocab_size() {
        return Err(DecodeError::VocabMismatch { trie: trie.vocab_size(), scorer: scorer.vocab_size() });
    }
    Ok(())
}

/// Decode in-library keywords for `query`.
///
/// Alive hypotheses are ranked by modified score and capped at the beam size;
/// EOS-extended candidates compete with the finished buffer (also capped at
/// the beam size, admitted by modified score). The search stops when the
/// alive buffer is empty, or when the finished buffer is full and no alive
/// hypothesis outranks its worst entry.
pub fn beam_search<S: Scorer + ?Sized>(
    query: &[TokenId],
    trie: &Trie,
    scorer: &S,
    config: &BeamConfig,
) -> Result<ExtensionResult, DecodeError> {
    check_inputs(trie, scorer, config)?;
    let b = config.beam_size;
    let n = config.ngram_order;
    let lambda = config.residual_weight;
    let alpha = config.length_norm_alpha;
    let order = rank_order(alpha);

    let mut alive = vec![Hypothesis { tokens: vec![TokenId::BOS], original_score: 0.0, ranking_score: 0.0, finished: false }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut diagnostics = Diagnostics::default();

    while !alive.is_empty() {
        diagnostics.steps += 1;
        let mut grown = Vec::new();
        let mut ended = Vec::new();
        for hyp in &alive {
            let prefix = &hyp.tokens[1..];
            let pred = scorer.predict_levels(query, prefix, n);
            let modified = lookahead_modify(&pred, trie, prefix, lambda, n)?;
            diagnostics.hypotheses_expanded += 1;
            for &(token, step_score) in &modified.entries {
                let is_eos = token == TokenId::EOS;
                if !is_eos && prefix.len() >= config.max_length {
                    continue;
                }
                let mut tokens = hyp.tokens.clone();
                tokens.push(token);
                let cand = Hypothesis {
                    tokens,
                    original_score: hyp.original_score + pred.logprob(0, token),
                    ranking_score: hyp.original_score + step_score,
                    finished: is_eos,
                };
                if is_eos {
                    ended.push(cand);
                } else {
                    grown.push(cand);
                }
            }
        }

        grown.sort_by(&order);
        grown.truncate(b);
        alive = grown;

        finished.append(&mut ended);
        finished.sort_by(&order);
        finished.truncate(b);

        if finished.len() == b {
            if let (Some(best), Some(worst)) = (alive.first(), finished.last()) {
                let best = normalized(best.ranking_score, best.generated_len(), alpha);
                let worst = normalized(worst.ranking_score, worst.generated_len(), alpha);
                if best <= worst {
                    break;
                }
            }
        }
    }

    finished.sort_by(|a, b| {
        normalized(b.original_score, b.generated_len(), alpha)
            .total_cmp(&normalized(a.original_score, a.generated_len(), alpha))
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    let outputs = finished
        .iter()
        .map(|h| Extension { keyword: h.keyword().to_vec(), original_score: h.original_score })
        .collect();
    Ok(ExtensionResult { outputs, config: config.clone(), diagnostics })
}

/// Decode many queries in parallel over a shared trie and scorer. Output
/// order matches input order.
pub fn beam_search_batch<S: Scorer + ?Sized>(
    queries: &[Vec<TokenId>],
    trie: &Trie,
    scorer: &S,
    config: &BeamConfig,
) -> Vec<Result<ExtensionResult, DecodeError>> {
    queries.par_iter().map(|q| beam_search(q, trie, scorer, config)).collect()
}

/// Round-robin union of ranked lists: rank 1 of every list, then rank 2, ...
/// First occurrence wins; at most `k` items.
pub fn merge_ranked<T: Clone + Eq + std::hash::Hash>(lists: &[Vec<T>], k: usize) -> Vec<T> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let longest = lists.iter().map(Vec::len).max().unwrap_or(0);
    'outer: for rank in 0..longest {
        for list in lists {
            if out.len() == k {
                break 'outer;
            }
            if let Some(item) = list.get(rank) {
                if seen.insert(item.clone()) {
                    out.push(item.clone());
                }
            }
        }
    }
    out
}

pub fn merge_results(results: &[ExtensionResult], k: usize) -> Vec<Vec<TokenId>> {
    let lists: Vec<Vec<Vec<TokenId>>> = results.iter().map(ExtensionResult::keywords).collect();
    merge_ranked(&lists, k)
}
