use std::collections::{BTreeSet, HashSet};

use super::EvalError;

fn check_golden<T>(golden: &BTreeSet<T>) -> Result<(), EvalError> {
    if golden.is_empty() {
        Err(EvalError::EmptyGolden)
    } else {
        Ok(())
    }
}

/// `|top-k ∩ golden| / |golden|`; repeated results count once.
pub fn recall_at_k<T: Ord + std::hash::Hash>(results: &[T], golden: &BTreeSet<T>, k: usize) -> Result<f64, EvalError> {
    check_golden(golden)?;
    let hits: HashSet<&T> = results.iter().take(k).filter(|r| golden.contains(r)).collect();
    Ok(hits.len() as f64 / golden.len() as f64)
}

/// Truncated average precision: `sum_{i<=k} P@i * rel_i / min(|golden|, k)`.
/// A repeated relevant result is relevant only at its first rank.
pub fn average_precision_at_k<T: Ord + std::hash::Hash>(
    results: &[T],
    golden: &BTreeSet<T>,
    k: usize,
) -> Result<f64, EvalError> {
    check_golden(golden)?;
    let mut seen = HashSet::new();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, r) in results.iter().take(k).enumerate() {
        if golden.contains(r) && seen.insert(r) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    let denom = golden.len().min(k);
    Ok(if denom == 0 { 0.0 } else { sum / denom as f64 })
}

/// Mean of [`average_precision_at_k`] over queries.
pub fn map_at_k<T: Ord + std::hash::Hash>(per_query: &[(Vec<T>, BTreeSet<T>)], k: usize) -> Result<f64, EvalError> {
    if per_query.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut total = 0.0;
    for (results, golden) in per_query {
        total += average_precision_at_k(results, golden, k)?;
    }
    Ok(total / per_query.len() as f64)
}
