//! Scorers produce the next-n token distributions the decoder consumes.
//!
//! A [`Scorer`] maps `(query, generated prefix)` to an [`NGramPrediction`]:
//! `dists[k]` is the log-probability distribution over the vocabulary for
//! output position `prefix.len() + k`. The prefix never contains BOS; scorers
//! condition on it implicitly.

mod count;
mod table;

pub use count::{CountScorer, CountScorerConfig, MODEL_FORMAT};
pub use table::TableScorer;

use thiserror::Error;

use crate::vocab::TokenId;

/// `ln(1e-10)`, the default log-probability assigned to unseen events.
pub const DEFAULT_FLOOR_LOGPROB: f64 = -23.025850929940457;

#[derive(Debug, Error, PartialEq)]
pub enum ScorerError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: distribution {level} sums to {sum}, expected 1")]
    NotNormalized { line: usize, level: usize, sum: f64 },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("training pair {0}: keyword is empty or contains reserved tokens")]
    BadKeyword(usize),
    #[error("invalid scorer config: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Model(String),
}

/// Log-probability distributions `g_1..g_n` for the next `n` positions.
#[derive(Clone, Debug, PartialEq)]
pub struct NGramPrediction {
    dists: Vec<Vec<f64>>,
}

impl NGramPrediction {
    /// `dists` must be non-empty and all of one length. Normalization is not
    /// checked here; see [`NGramPrediction::check_normalized`].
    pub fn new(dists: Vec<Vec<f64>>) -> Self {
        assert!(!dists.is_empty(), "prediction needs at least one distribution");
        let v = dists[0].len();
        assert!(dists.iter().all(|d| d.len() == v), "ragged prediction");
        Self { dists }
    }

    pub fn uniform(order: usize, vocab_size: usize) -> Self {
        let lp = -(vocab_size as f64).ln();
        Self::new(vec![vec![lp; vocab_size]; order])
    }

    pub fn order(&self) -> usize {
        self.dists.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.dists[0].len()
    }

    /// Distribution for lookahead level `level` (0 = next token).
    pub fn dist(&self, level: usize) -> &[f64] {
        &self.dists[level]
    }

    #[inline]
    pub fn logprob(&self, level: usize, id: TokenId) -> f64 {
        self.dists[level][id.index()]
    }

    pub fn truncate(&mut self, levels: usize) {
        self.dists.truncate(levels.max(1));
    }

    /// Largest `|sum(exp(d)) - 1|` over all levels.
    pub fn normalization_error(&self) -> f64 {
        self.dists
            .iter()
            .map(|d| (d.iter().map(|lp| lp.exp()).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn check_normalized(&self, tol: f64) -> bool {
        self.normalization_error() <= tol
    }
}

/// Producer of next-n token distributions.
pub trait Scorer: Send + Sync {
    /// Number of distributions emitted by [`Scorer::predict`].
    fn order(&self) -> usize;

    fn vocab_size(&self) -> usize;

    fn predict(&self, query: &[TokenId], prefix: &[TokenId]) -> NGramPrediction;

    /// Like [`Scorer::predict`] but only the first `levels` distributions are
    /// needed. Implementations may skip work for the rest.
    fn predict_levels(&self, query: &[TokenId], prefix: &[TokenId], levels: usize) -> NGramPrediction {
        let mut p = self.predict(query, prefix);
        p.truncate(levels);
        p
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn order(&self) -> usize {
        (**self).order()
    }
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn predict(&self, query: &[TokenId], prefix: &[TokenId]) -> NGramPrediction {
        (**self).predict(query, prefix)
    }
    fn predict_levels(&self, query: &[TokenId], prefix: &[TokenId], levels: usize) -> NGramPrediction {
        (**self).predict_levels(query, prefix, levels)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn order(&self) -> usize {
        (**self).order()
    }
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn predict(&self, query: &[TokenId], prefix: &[TokenId]) -> NGramPrediction {
        (**self).predict(query, prefix)
    }
    fn predict_levels(&self, query: &[TokenId], prefix: &[TokenId], levels: usize) -> NGramPrediction {
        (**self).predict_levels(query, prefix, levels)
    }
}

/// Rescale non-negative weights into a distribution whose every entry is at
/// least `floor` (linear space), keeping the unfloored entries proportional to
/// their input. All-zero input becomes uniform.
pub fn floor_fill(probs: &mut [f64], floor: f64) {
    let n = probs.len();
    if n == 0 {
        return;
    }
    debug_assert!(floor * n as f64 <= 1.0);
    let mut floored = vec![false; n];
    let mut n_floored = 0usize;
    let scale = loop {
        let free_sum: f64 = probs.iter().zip(&floored).filter(|(_, &f)| !f).map(|(p, _)| *p).sum();
        if free_sum <= 0.0 {
            probs.fill(1.0 / n as f64);
            return;
        }
        let scale = (1.0 - n_floored as f64 * floor) / free_sum;
        let mut changed = false;
        for (p, f) in probs.iter().zip(floored.iter_mut()) {
            if !*f && *p * scale < floor {
                *f = true;
                n_floored += 1;
                changed = true;
            }
        }
        if !changed {
            break scale;
        }
    };
    for (p, f) in probs.iter_mut().zip(&floored) {
        *p = if *f { floor } else { *p * scale };
    }
}
