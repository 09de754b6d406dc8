//! Offline evaluation: Recall@K and MAP@K of retrieval systems over a
//! labelled query set, plus a seeded synthetic benchmark generator.

pub mod dataset;
pub mod metrics;
pub mod synth;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::Bm25Index;
use crate::decoder::{beam_search, merge_ranked, BeamConfig, DecodeError};
use crate::scorer::Scorer;
use crate::trie::Trie;
use crate::vocab::Vocabulary;

pub use dataset::QueryRecord;
pub use metrics::{average_precision_at_k, map_at_k, recall_at_k};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("golden set is empty")]
    EmptyGolden,
    #[error("dataset has no queries")]
    EmptyDataset,
    #[error("no cutoffs given")]
    NoCutoffs,
    #[error("cutoff must be positive")]
    ZeroCutoff,
    #[error("golden keywords not in library for query ids {0:?}")]
    GoldenNotInLibrary(Vec<usize>),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("decoding query {id}: {source}")]
    Decode { id: usize, source: DecodeError },
    #[error("invalid synthetic spec: {0}")]
    Synth(String),
}

pub const AP_NORMALIZATION: &str = "AP@K = sum_{i<=K} P@i * rel_i / min(|golden|, K)";

/// A retrieval system returns up to `k` ranked keywords (normalized text).
pub trait RetrievalSystem: Sync {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<String>, DecodeError>;
}

impl<F> RetrievalSystem for F
where
    F: Fn(&str, usize) -> Result<Vec<String>, DecodeError> + Sync,
{
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<String>, DecodeError> {
        self(query, k)
    }
}

/// Trie-constrained beam search. The beam size is set to the requested `k`.
pub struct DecoderSystem<'a, S: Scorer + ?Sized> {
    pub vocab: &'a Vocabulary,
    pub trie: &'a Trie,
    pub scorer: &'a S,
    pub config: BeamConfig,
}

impl<S: Scorer + ?Sized> RetrievalSystem for DecoderSystem<'_, S> {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<String>, DecodeError> {
        let config = BeamConfig { beam_size: k, ..self.config.clone() };
        let q = self.vocab.tokenize(query);
        let result = beam_search(&q, self.trie, self.scorer, &config)?;
        Ok(result
            .outputs
            .iter()
            .take(k)
            .map(|e| self.vocab.detokenize(&e.keyword).expect("trie ids come from the vocabulary"))
            .collect())
    }
}

pub struct Bm25System<'a> {
    pub index: &'a Bm25Index,
}

impl RetrievalSystem for Bm25System<'_> {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<String>, DecodeError> {
        Ok(self.index.query(query, k).into_iter().map(|(kw, _)| kw).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub id: usize,
    pub query: String,
    pub scenario: Option<String>,
    pub retrieved: Vec<String>,
    pub recall: Vec<f64>,
    pub average_precision: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub ks: Vec<usize>,
    pub query_count: usize,
    /// Mean Recall@K, aligned with `ks`.
    pub recall: Vec<f64>,
    pub map: Vec<f64>,
    pub ap_normalization: String,
    /// Mean Recall@K per scenario label.
    pub recall_by_scenario: BTreeMap<String, Vec<f64>>,
    pub rows: Vec<QueryRow>,
}

impl MetricsReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.recall[i])
    }

    pub fn map_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.map[i])
    }

    /// Per-query retrieved lists, in dataset order.
    pub fn retrieved(&self) -> Vec<Vec<String>> {
        self.rows.iter().map(|r| r.retrieved.clone()).collect()
    }
}

fn check_ks(ks: &[usize]) -> Result<usize, EvalError> {
    if ks.is_empty() {
        return Err(EvalError::NoCutoffs);
    }
    if ks.contains(&0) {
        return Err(EvalError::ZeroCutoff);
    }
    Ok(*ks.iter().max().unwrap())
}

/// Ids of records with at least one golden keyword rejected by `in_library`.
pub fn missing_goldens(dataset: &[QueryRecord], in_library: impl Fn(&str) -> bool) -> Vec<usize> {
    dataset.iter().filter(|r| r.golden.iter().any(|g| !in_library(g))).map(|r| r.id).collect()
}

/// Score precomputed ranked lists (one per record) at each cutoff.
pub fn evaluate_lists(
    label: &str,
    dataset: &[QueryRecord],
    lists: Vec<Vec<String>>,
    ks: &[usize],
) -> Result<MetricsReport, EvalError> {
    check_ks(ks)?;
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    assert_eq!(dataset.len(), lists.len(), "one ranked list per record");
    let mut rows = Vec::with_capacity(dataset.len());
    for (rec, retrieved) in dataset.iter().zip(lists) {
        let mut recall = Vec::with_capacity(ks.len());
        let mut ap = Vec::with_capacity(ks.len());
        for &k in ks {
            recall.push(recall_at_k(&retrieved, &rec.golden, k)?);
            ap.push(average_precision_at_k(&retrieved, &rec.golden, k)?);
        }
        rows.push(QueryRow {
            id: rec.id,
            query: rec.query.clone(),
            scenario: rec.scenario.clone(),
            retrieved,
            recall,
            average_precision: ap,
        });
    }
    let mean = |f: &dyn Fn(&QueryRow) -> &Vec<f64>, rows: &[&QueryRow]| -> Vec<f64> {
        (0..ks.len()).map(|i| rows.iter().map(|r| f(r)[i]).sum::<f64>() / rows.len() as f64).collect()
    };
    let all: Vec<&QueryRow> = rows.iter().collect();
    let recall = mean(&|r| &r.recall, &all);
    let map = mean(&|r| &r.average_precision, &all);
    let mut groups: BTreeMap<String, Vec<&QueryRow>> = BTreeMap::new();
    for r in &rows {
        if let Some(s) = &r.scenario {
            groups.entry(s.clone()).or_default().push(r);
        }
    }
    let recall_by_scenario = groups.into_iter().map(|(s, rs)| (s, mean(&|r| &r.recall, &rs))).collect();
    Ok(MetricsReport {
        label: label.to_string(),
        ks: ks.to_vec(),
        query_count: rows.len(),
        recall,
        map,
        ap_normalization: AP_NORMALIZATION.to_string(),
        recall_by_scenario,
        rows,
    })
}

/// Run `system` once per query at the largest cutoff (in parallel) and score
/// every cutoff from that ranking. Fails before running anything if a golden
/// keyword is rejected by `in_library`.
pub fn evaluate(
    label: &str,
    dataset: &[QueryRecord],
    system: &dyn RetrievalSystem,
    ks: &[usize],
    in_library: impl Fn(&str) -> bool,
) -> Result<MetricsReport, EvalError> {
    let kmax = check_ks(ks)?;
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let missing = missing_goldens(dataset, in_library);
    if !missing.is_empty() {
        return Err(EvalError::GoldenNotInLibrary(missing));
    }
    let lists: Vec<Vec<String>> = dataset
        .par_iter()
        .map(|r| system.retrieve(&r.query, kmax).map_err(|source| EvalError::Decode { id: r.id, source }))
        .collect::<Result<_, _>>()?;
    evaluate_lists(label, dataset, lists, ks)
}

/// Round-robin merge of several reports' rankings, rescored. The merged
/// list keeps every distinct item, so at K >= the combined length it contains
/// each constituent list.
pub fn merge_reports(label: &str, dataset: &[QueryRecord], reports: &[&MetricsReport], ks: &[usize]) -> Result<MetricsReport, EvalError> {
    check_ks(ks)?;
    let lists = (0..dataset.len())
        .map(|i| {
            let per: Vec<Vec<String>> = reports.iter().map(|r| r.rows[i].retrieved.clone()).collect();
            merge_ranked(&per, usize::MAX)
        })
        .collect();
    evaluate_lists(label, dataset, lists, ks)
}

/// Fixed-width table: one row per report, Recall@K columns (percent) then
/// MAP@K columns when `with_map` is set.
pub fn render_table(reports: &[&MetricsReport], with_map: bool) -> String {
    let Some(first) = reports.first() else { return String::new() };
    let width = reports.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$}", "Model");
    for k in &first.ks {
        out.push_str(&format!(" {:>8}", format!("R@{k}")));
    }
    if with_map {
        for k in &first.ks {
            out.push_str(&format!(" {:>8}", format!("MAP@{k}")));
        }
    }
    out.push('\n');
    for r in reports {
        out.push_str(&format!("{:<width$}", r.label));
        for v in &r.recall {
            out.push_str(&format!(" {:>8.2}", v * 100.0));
        }
        if with_map {
            for v in &r.map {
                out.push_str(&format!(" {:>8.4}", v));
            }
        }
        out.push('\n');
    }
    out
}
