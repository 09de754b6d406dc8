//! Count-based Markov scorer with a copy bonus.
//!
//! The next-token distribution is a Jelinek-Mercer interpolation of order
//! 1..m relative frequencies over target keywords, multiplied by `exp(beta)`
//! for tokens that occur in the query, floored and renormalized. Future
//! positions are sum-marginalized over the `future_top_k` most probable
//! partial continuations, which approximates the native multi-position
//! output of a neural n-gram model.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{floor_fill, NGramPrediction, Scorer, ScorerError, DEFAULT_FLOOR_LOGPROB};
use crate::vocab::TokenId;

pub const MODEL_FORMAT: &str = "trie-lookahead-count-scorer";
const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountScorerConfig {
    /// Markov order m: the longest n-gram counted.
    pub markov_order: usize,
    /// Weights for orders 1..=m, summing to 1.
    pub interpolation_weights: Vec<f64>,
    pub copy_bonus_beta: f64,
    pub floor_logprob: f64,
    pub future_top_k: usize,
    /// Number of distributions emitted per prediction.
    pub prediction_order: usize,
}

impl Default for CountScorerConfig {
    fn default() -> Self {
        Self::with_markov_order(3)
    }
}

impl CountScorerConfig {
    /// Defaults with geometric weights `2^(j-1)` normalized over orders 1..=m.
    pub fn with_markov_order(m: usize) -> Self {
        Self {
            markov_order: m,
            interpolation_weights: Self::default_weights(m),
            copy_bonus_beta: 1.0,
            floor_logprob: DEFAULT_FLOOR_LOGPROB,
            future_top_k: 8,
            prediction_order: 3,
        }
    }

    pub fn default_weights(m: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..m).map(|j| (1u64 << j.min(62)) as f64).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    pub fn validate(&self, vocab_size: usize) -> Result<(), ScorerError> {
        let bad = |msg: String| Err(ScorerError::Config(msg));
        if self.markov_order == 0 {
            return bad("markov order must be positive".into());
        }
        if self.interpolation_weights.len() != self.markov_order {
            return bad(format!(
                "{} interpolation weights for markov order {}",
                self.interpolation_weights.len(),
                self.markov_order
            ));
        }
        if self.interpolation_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("interpolation weights must be non-negative".into());
        }
        let sum: f64 = self.interpolation_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("interpolation weights sum to {sum}"));
        }
        if !(self.copy_bonus_beta >= 0.0) || !self.copy_bonus_beta.is_finite() {
            return bad("copy bonus beta must be a non-negative number".into());
        }
        if !self.floor_logprob.is_finite() || self.floor_logprob.exp() * vocab_size as f64 >= 1.0 {
            return bad(format!("floor {} too large for vocabulary of {vocab_size}", self.floor_logprob));
        }
        if self.future_top_k == 0 || self.prediction_order == 0 {
            return bad("future_top_k and prediction_order must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
struct ContextCounts {
    total: u64,
    next: Vec<(TokenId, u64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    vocab_size: usize,
    config: CountScorerConfig,
    ngrams: Vec<(Vec<TokenId>, u64)>,
}

#[derive(Clone, Debug)]
pub struct CountScorer {
    config: CountScorerConfig,
    vocab_size: usize,
    ngrams: BTreeMap<Vec<TokenId>, u64>,
    /// `by_order[j - 1]`: context of length j-1 -> next-token counts
    by_order: Vec<HashMap<Vec<TokenId>, ContextCounts>>,
    /// order-1 term of the interpolation, dense
    unigram_term: Vec<f64>,
    floor: f64,
    copy_factor: f64,
}

impl PartialEq for CountScorer {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.vocab_size == other.vocab_size && self.ngrams == other.ngrams
    }
}

impl CountScorer {
    /// Count all target-side k-grams (k <= m) of every keyword, padded with
    /// m-1 BOS tokens on the left and EOS on the right. Queries are not
    /// needed at training time; they only drive the copy bonus at predict.
    pub fn train(
        pairs: &[(Vec<TokenId>, Vec<TokenId>)],
        vocab_size: usize,
        config: CountScorerConfig,
    ) -> Result<Self, ScorerError> {
        if pairs.is_empty() {
            return Err(ScorerError::EmptyTrainingSet);
        }
        config.validate(vocab_size)?;
        let m = config.markov_order;
        let mut ngrams = BTreeMap::new();
        for (i, (_, keyword)) in pairs.iter().enumerate() {
            let valid = !keyword.is_empty()
                && keyword
                    .iter()
                    .all(|&t| t != TokenId::BOS && t != TokenId::EOS && t.index() < vocab_size);
            if !valid {
                return Err(ScorerError::BadKeyword(i));
            }
            let mut seq = vec![TokenId::BOS; m - 1];
            seq.extend_from_slice(keyword);
            seq.push(TokenId::EOS);
            for target in (m - 1)..seq.len() {
                for k in 1..=m {
                    *ngrams.entry(seq[target + 1 - k..=target].to_vec()).or_insert(0) += 1;
                }
            }
        }
        Ok(Self::from_parts(config, vocab_size, ngrams))
    }

    fn from_parts(config: CountScorerConfig, vocab_size: usize, ngrams: BTreeMap<Vec<TokenId>, u64>) -> Self {
        let m = config.markov_order;
        let mut by_order: Vec<HashMap<Vec<TokenId>, ContextCounts>> = vec![HashMap::new(); m];
        for (gram, &count) in &ngrams {
            let (target, context) = gram.split_last().expect("n-grams are non-empty");
            let entry = by_order[gram.len() - 1].entry(context.to_vec()).or_default();
            entry.total += count;
            entry.next.push((*target, count));
        }
        let mut unigram_term = vec![0.0; vocab_size];
        if let Some(uni) = by_order[0].get(&Vec::new()) {
            let w = config.interpolation_weights[0] / uni.total as f64;
            for &(t, c) in &uni.next {
                unigram_term[t.index()] = w * c as f64;
            }
        }
        Self {
            floor: config.floor_logprob.exp(),
            copy_factor: config.copy_bonus_beta.exp(),
            config,
            vocab_size,
            ngrams,
            by_order,
            unigram_term,
        }
    }

    pub fn config(&self) -> &CountScorerConfig {
        &self.config
    }

    /// Raw count of an n-gram (context followed by target).
    pub fn count(&self, ngram: &[TokenId]) -> u64 {
        self.ngrams.get(ngram).copied().unwrap_or(0)
    }

    /// Floored, copy-boosted next-token distribution (linear space) after
    /// `history`, which must already carry the m-1 BOS padding.
    fn conditional(&self, history: &[TokenId], copy: &[TokenId]) -> Vec<f64> {
        let mut p = self.unigram_term.clone();
        for order in 2..=self.config.markov_order {
            let context = &history[history.len() - (order - 1)..];
            if let Some(cc) = self.by_order[order - 1].get(context) {
                let w = self.config.interpolation_weights[order - 1] / cc.total as f64;
                if w == 0.0 {
                    continue;
                }
                for &(t, c) in &cc.next {
                    p[t.index()] += w * c as f64;
                }
            }
        }
        for &t in copy {
            p[t.index()] *= self.copy_factor;
        }
        floor_fill(&mut p, self.floor);
        p
    }

    fn copy_set(&self, query: &[TokenId]) -> Vec<TokenId> {
        let mut copy: Vec<TokenId> = query
            .iter()
            .copied()
            .filter(|t| !t.is_reserved() && t.index() < self.vocab_size)
            .collect();
        copy.sort_unstable();
        copy.dedup();
        copy
    }

    fn padded(&self, prefix: &[TokenId]) -> Vec<TokenId> {
        let mut h = vec![TokenId::BOS; self.config.markov_order - 1];
        h.extend_from_slice(prefix);
        h
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            vocab_size: self.vocab_size,
            config: self.config.clone(),
            ngrams: self.ngrams.iter().map(|(g, &c)| (g.clone(), c)).collect(),
        };
        let mut s = serde_json::to_string(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ScorerError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ScorerError::Model(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(ScorerError::Model(format!("unexpected format {:?}", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(ScorerError::Model(format!("unsupported version {}", file.version)));
        }
        file.config.validate(file.vocab_size)?;
        let m = file.config.markov_order;
        let mut ngrams = BTreeMap::new();
        for (gram, count) in file.ngrams {
            if gram.is_empty() || gram.len() > m || gram.iter().any(|t| t.index() >= file.vocab_size) {
                return Err(ScorerError::Model(format!("invalid n-gram {gram:?}")));
            }
            if ngrams.insert(gram, count).is_some() {
                return Err(ScorerError::Model("duplicate n-gram".into()));
            }
        }
        Ok(Self::from_parts(file.config, file.vocab_size, ngrams))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, ScorerError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScorerError::Model(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// A partial continuation used for marginalizing future positions. `next` is
/// the distribution of the position after the path; `None` once the path has
/// emitted EOS (nothing but EOS follows).
struct Partial {
    path: Vec<TokenId>,
    weight: f64,
    next: Option<Vec<f64>>,
}

fn by_weight_then_path(a: &(f64, &[TokenId], TokenId), b: &(f64, &[TokenId], TokenId)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)).then_with(|| a.2.cmp(&b.2))
}

/// Indices of the `k` largest entries, largest first, ties by index.
fn top_k(dist: &[f64], k: usize) -> Vec<TokenId> {
    let mut idx: Vec<u32> = (0..dist.len() as u32).collect();
    let cmp = |a: &u32, b: &u32| dist[*b as usize].total_cmp(&dist[*a as usize]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx.into_iter().map(TokenId).collect()
}

impl Scorer for CountScorer {
    fn order(&self) -> usize {
        self.config.prediction_order
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&self, query: &[TokenId], prefix: &[TokenId]) -> NGramPrediction {
        self.predict_levels(query, prefix, self.config.prediction_order)
    }

    fn predict_levels(&self, query: &[TokenId], prefix: &[TokenId], levels: usize) -> NGramPrediction {
        let levels = levels.clamp(1, self.config.prediction_order);
        let k = self.config.future_top_k;
        let copy = self.copy_set(query);
        let history = self.padded(prefix);

        let first = self.conditional(&history, &copy);
        let mut dists = vec![first.iter().map(|p| p.ln()).collect::<Vec<f64>>()];
        let mut frontier = vec![Partial { path: Vec::new(), weight: 1.0, next: Some(first) }];

        for _ in 1..levels {
            let mut candidates: Vec<(f64, &[TokenId], TokenId)> = Vec::new();
            for p in &frontier {
                match &p.next {
                    Some(d) => {
                        for t in top_k(d, k) {
                            candidates.push((p.weight * d[t.index()], &p.path, t));
                        }
                    }
                    None => candidates.push((p.weight, &p.path, TokenId::EOS)),
                }
            }
            candidates.sort_by(by_weight_then_path);
            candidates.truncate(k);

            let mut next_frontier = Vec::with_capacity(candidates.len());
            for (weight, path, t) in candidates {
                let mut path = path.to_vec();
                path.push(t);
                let next = (t != TokenId::EOS).then(|| {
                    let mut h = history.clone();
                    h.extend_from_slice(&path);
                    self.conditional(&h, &copy)
                });
                next_frontier.push(Partial { path, weight, next });
            }

            let total: f64 = next_frontier.iter().map(|p| p.weight).sum();
            let mut mix = vec![0.0; self.vocab_size];
            for p in &next_frontier {
                let w = p.weight / total;
                match &p.next {
                    Some(d) => mix.iter_mut().zip(d).for_each(|(m, x)| *m += w * x),
                    None => mix[TokenId::EOS.index()] += w,
                }
            }
            floor_fill(&mut mix, self.floor);
            dists.push(mix.into_iter().map(f64::ln).collect());
            frontier = next_frontier;
        }
        NGramPrediction::new(dists)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(ids: &[u32]) -> Vec<TokenId> {
        ids.iter().map(|&i| TokenId(i)).collect()
    }

    const A: TokenId = TokenId(3);
    const B: TokenId = TokenId(4);
    const C: TokenId = TokenId(5);
    const X: TokenId = TokenId(6);

    fn bigram_only(beta: f64) -> CountScorerConfig {
        CountScorerConfig {
            interpolation_weights: vec![0.0, 1.0],
            copy_bonus_beta: beta,
            ..CountScorerConfig::with_markov_order(2)
        }
    }

    #[test]
    fn counts_bigrams_of_padded_keyword() {
        let s = CountScorer::train(&[(t(&[6]), t(&[3, 4]))], 7, bigram_only(0.0)).unwrap();
        assert_eq!(s.count(&[TokenId::BOS, A]), 1);
        assert_eq!(s.count(&[A, B]), 1);
        assert_eq!(s.count(&[B, TokenId::EOS]), 1);
        assert_eq!(s.count(&[A]), 1);
        assert_eq!(s.count(&[TokenId::BOS]), 0);
    }

    #[test]
    fn repeated_keyword_doubles_counts() {
        let pair = (t(&[6]), t(&[3, 4]));
        let s = CountScorer::train(&[pair.clone(), pair], 7, bigram_only(0.0)).unwrap();
        assert_eq!(s.count(&[TokenId::BOS, A]), 2);
        assert_eq!(s.count(&[A, B]), 2);
        assert_eq!(s.count(&[B, TokenId::EOS]), 2);
    }

    #[test]
    fn relative_frequencies_after_shared_prefix() {
        let pairs = [(vec![X], vec![A, B]), (vec![X], vec![A, C])];
        let s = CountScorer::train(&pairs, 7, bigram_only(0.0)).unwrap();
        let p = s.predict(&[X], &[A]);
        // 0.5 each before flooring; five floored entries take 5e-10 of the mass
        let expected = (0.5 * (1.0 - 5e-10f64)).ln();
        assert!((p.logprob(0, B) - expected).abs() < 1e-12);
        assert!((p.logprob(0, C) - expected).abs() < 1e-12);
    }

    #[test]
    fn copy_bonus_prefers_query_tokens() {
        let pairs = [(vec![X], vec![A, B]), (vec![X], vec![A, C])];
        let s = CountScorer::train(&pairs, 7, bigram_only(3.0)).unwrap();
        let p = s.predict(&[B], &[A]);
        assert!(p.logprob(0, B) > p.logprob(0, C));
        assert!((p.logprob(0, B) - p.logprob(0, C) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn future_distribution_follows_the_only_continuation() {
        let s = CountScorer::train(&[(vec![X], vec![A, B])], 7, bigram_only(0.0)).unwrap();
        let p = s.predict(&[X], &[]);
        let g2 = p.dist(1);
        let best = (0..7).max_by(|&i, &j| g2[i].total_cmp(&g2[j])).unwrap();
        assert_eq!(TokenId(best as u32), B);
        assert!(g2[B.index()] > (0.999f64).ln());
        // third position: EOS after "a b"
        assert!(p.logprob(2, TokenId::EOS) > (0.999f64).ln());
    }

    #[test]
    fn training_errors() {
        assert_eq!(
            CountScorer::train(&[], 7, CountScorerConfig::default()),
            Err(ScorerError::EmptyTrainingSet)
        );
        assert_eq!(
            CountScorer::train(&[(vec![], vec![])], 7, CountScorerConfig::default()),
            Err(ScorerError::BadKeyword(0))
        );
        let bad_weights = CountScorerConfig { interpolation_weights: vec![0.5, 0.6], ..bigram_only(0.0) };
        assert!(matches!(CountScorer::train(&[(vec![], vec![A])], 7, bad_weights), Err(ScorerError::Config(_))));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let pairs = [(vec![X], vec![A, B, C]), (vec![A], vec![A, C]), (vec![B], vec![C])];
        let s = CountScorer::train(&pairs, 7, CountScorerConfig { copy_bonus_beta: 0.7, ..Default::default() }).unwrap();
        let json = s.to_json();
        let back = CountScorer::from_json(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json(), json);
        assert_eq!(back.predict(&[A], &[A]), s.predict(&[A], &[A]));
    }

    #[test]
    fn model_file_validation() {
        assert!(CountScorer::from_json("{}").is_err());
        let s = CountScorer::train(&[(vec![], vec![A])], 7, CountScorerConfig::default()).unwrap();
        let json = s.to_json().replace(MODEL_FORMAT, "other");
        assert!(matches!(CountScorer::from_json(&json), Err(ScorerError::Model(_))));
    }
}
