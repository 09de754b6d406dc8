//! Trie-constrained generative keyword retrieval with lookahead beam search.
//!
//! Candidates for the next token are restricted to the children of the
//! current prefix in a keyword [`trie::Trie`]. Each candidate's ranking score
//! blends its own log-probability with the best score reachable below it in
//! the trie, as predicted by a multi-position [`scorer::Scorer`]; the stored
//! hypothesis score stays the unmodified model log-probability.

pub mod baseline;
pub mod decoder;
pub mod eval;
pub mod scorer;
pub mod trie;
pub mod vocab;

pub use decoder::{beam_search, lookahead_modify, merge_results, BeamConfig, ExtensionResult, Hypothesis};
pub use scorer::{CountScorer, CountScorerConfig, NGramPrediction, Scorer, TableScorer};
pub use trie::{SuffixSet, Trie};
pub use vocab::{TokenId, Vocabulary};
